use std::io::Write;
use std::path::Path;

use oqw_core::classify::{self, walk_case, WindowPoint};
use oqw_core::format::{parse_sited, JsonMatrix, StateFile};
use oqw_core::passage::{self, PassageOptions};
use oqw_core::semigroup::{self, BlockGenerator};
use oqw_core::trajectory::{self, QuerySpec, SimOptions};
use oqw_core::{fixtures, BlockState, ErrorClass, Occupation, Query, WalkModel};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::*;
use crate::run::{emit, emit_json, read_text, sha256_hex, CliError, CliResult, LoadedModel, Logger, RunConfig};

pub struct Context {
    pub seed: u64,
    pub tol: f64,
    pub log: Logger,
}

fn window_points(values: &[(i64, f64)]) -> Vec<WindowPoint> {
    let mut out: Vec<WindowPoint> = Vec::with_capacity(values.len());
    for &(window, value) in values {
        let increment = out.last().map(|p| value - p.value);
        out.push(WindowPoint { window, value, increment });
    }
    out
}

fn matrix_json(m: &oqw_core::linalg::CMat) -> Value {
    serde_json::to_value(JsonMatrix::from_matrix(m)).expect("matrices serialize")
}

pub fn validate(ctx: &Context, args: &ValidateArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let doc = match args.window {
        Some(n) => loaded.doc.with_window(n)?,
        None => loaded.doc.clone(),
    };
    let model = doc.build()?;
    let run = RunConfig::new("validate", ctx.seed)
        .with_model(&loaded)
        .window(args.window.as_slice(), &loaded)
        .tolerance("model", model.tolerance())?
        .output(&args.out);
    let report = oqw_core::validate(&model);
    let body = json!({
        "passed": report.passed(),
        "vertices": model.len(),
        "total_dim": model.total_dim(),
        "leaky": model.is_leaky(),
        "checks": report.checks,
    });
    emit_json(args.out.as_deref(), &run, body)?;
    let failures = report.failures().count();
    ctx.log.info("validation finished", json!({ "checks": report.checks.len(), "failures": failures }));
    if failures > 0 {
        return Err(CliError::new(ErrorClass::Validation, format!("{failures} check(s) failed")));
    }
    Ok(())
}

pub fn evolve(ctx: &Context, args: &EvolveArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let model = loaded.build(args.window)?;
    let mu = match (&args.state, &args.start) {
        (Some(path), _) => StateFile::from_json(&read_text(path)?)?.to_state(&model)?,
        (None, Some(start)) => BlockState::sited(&model, &parse_sited(&model, start)?),
        (None, None) => unreachable!("clap requires --state or --start"),
    };
    let run = RunConfig::new("evolve", ctx.seed)
        .with_model(&loaded)
        .window(args.window.as_slice(), &loaded)
        .tolerance("model", model.tolerance())?
        .output(&args.out)
        .output(&args.report_out);
    if !(args.t >= 0.0 && args.t.is_finite()) {
        return Err(oqw_core::WalkError::NegativeTime(args.t).into());
    }
    let gen = BlockGenerator::new(&model);
    let state = semigroup::evolve_with(&gen, &model, &mu, args.t)?;
    let position = semigroup::position_distribution(&state);

    if let Some(ReportFormat::Csv) = args.report {
        let steps = args.steps.max(1);
        let mut csv = csv::Writer::from_writer(run.csv_preamble().into_bytes());
        csv.write_record(["t", "vertex", "probability"]).map_err(csv_error)?;
        for k in 0..=steps {
            let t = args.t * k as f64 / steps as f64;
            let law = semigroup::position_distribution(&semigroup::evolve_with(&gen, &model, &mu, t)?);
            for (i, p) in law.iter().enumerate() {
                csv.write_record([t.to_string(), model.id(i).to_string(), p.to_string()]).map_err(csv_error)?;
            }
        }
        let bytes = csv.into_inner().map_err(|e| csv_error(e.into_error().into()))?;
        emit(args.report_out.as_deref(), &bytes)?;
    }

    let doc = StateFile::from_state(&model, &state);
    let mut body = serde_json::to_value(&doc).expect("states serialize");
    body["t"] = json!(args.t);
    body["total_trace"] = json!(state.total_trace());
    body["position"] = position
        .iter()
        .enumerate()
        .map(|(i, p)| (model.id(i).to_string(), json!(p)))
        .collect::<serde_json::Map<_, _>>()
        .into();
    if args.out.is_some() || args.report.is_none() {
        emit_json(args.out.as_deref(), &run, body)?;
    }
    ctx.log.info("evolved", json!({ "t": args.t, "total_trace": state.total_trace() }));
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::new(ErrorClass::Parse, format!("csv: {e}"))
}

fn load_queries(path: Option<&Path>, horizon: f64) -> CliResult<Vec<QuerySpec>> {
    match path {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::new(ErrorClass::Parse, format!("{}: {e}", p.display()))),
        None if horizon.is_finite() => Ok(vec![QuerySpec::Position { time: horizon }]),
        None => Err(CliError::precondition("an infinite horizon needs an explicit --queries file")),
    }
}

const DUMP_CHUNK: usize = 4096;

pub fn simulate(ctx: &Context, args: &SimulateArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let model = loaded.build(args.window)?;
    let init = parse_sited(&model, &args.start)?;
    let specs = load_queries(args.queries.as_deref(), args.horizon)?;
    let queries: Vec<Query> = specs.iter().map(|q| q.resolve(&model)).collect::<Result<_, _>>()?;
    let run = RunConfig::new("simulate", ctx.seed)
        .with_model(&loaded)
        .window(args.window.as_slice(), &loaded)
        .tolerance("model", model.tolerance())?
        .output(&args.out)
        .output(&args.dump);
    ctx.log.info("simulating", json!({ "trajectories": args.n, "horizon": args.horizon, "seed": ctx.seed }));
    let reports = trajectory::estimate(&model, &init, args.horizon, args.n, ctx.seed, &queries)?;

    let mut preamble = run.csv_preamble();
    preamble.push_str(&format!("# start: {}\n# horizon: {}\n# trajectories: {}\n", args.start, args.horizon, args.n));
    for (k, q) in specs.iter().enumerate() {
        preamble.push_str(&format!("# query {k}: {}\n", serde_json::to_string(q).expect("queries serialize")));
    }
    let mut csv = csv::Writer::from_writer(preamble.into_bytes());
    csv.write_record(["query_id", "t", "estimate", "stderr", "ci_lo", "ci_hi", "n", "label"]).map_err(csv_error)?;
    for r in &reports {
        csv.write_record([
            r.query_id.to_string(),
            r.t.to_string(),
            r.estimate.to_string(),
            r.stderr.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.n.to_string(),
            r.label.clone(),
        ])
        .map_err(csv_error)?;
    }
    let bytes = csv.into_inner().map_err(|e| csv_error(e.into_error().into()))?;
    emit(args.out.as_deref(), &bytes)?;

    if let Some(path) = &args.dump {
        write_dump(&model, &init, args.horizon, args.n, ctx.seed, &run, path)?;
    }
    ctx.log.info("simulation finished", json!({ "rows": reports.len() }));
    Ok(())
}

/// Full trajectories `0..n`, regenerated from their streams and written in
/// index order.
fn write_dump(
    model: &WalkModel,
    init: &oqw_core::SitedState,
    horizon: f64,
    n: usize,
    seed: u64,
    run: &RunConfig,
    path: &Path,
) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::new(ErrorClass::Parse, format!("{}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| CliError::new(ErrorClass::Parse, format!("{}: {e}", path.display()));
    out.write_all(run.csv_preamble().as_bytes()).map_err(io)?;
    out.write_all(b"# columns: trajectory, t, from, to, then re and im of the post-jump state in column-major order\n")
        .map_err(io)?;
    let horizon = if horizon.is_finite() { horizon } else { f64::INFINITY };
    for chunk_start in (0..n).step_by(DUMP_CHUNK) {
        let chunk_end = (chunk_start + DUMP_CHUNK).min(n);
        let lines: Vec<String> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|k| {
                let record = trajectory::simulate_with(
                    model,
                    init,
                    horizon,
                    &mut trajectory::rng_for(seed, k as u64),
                    &SimOptions::default(),
                )?;
                Ok(record.dump(model, k))
            })
            .collect::<oqw_core::Result<_>>()?;
        for l in lines {
            out.write_all(l.as_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

struct PassageRun {
    window: Option<i64>,
    model: WalkModel,
    i: usize,
    j: usize,
    rho: oqw_core::linalg::CMat,
}

fn passage_runs(loaded: &LoadedModel, args: &PassageArgs) -> CliResult<Vec<PassageRun>> {
    loaded
        .windows(&args.window)?
        .into_iter()
        .map(|window| {
            let model = loaded.build(window)?;
            let start = parse_sited(&model, &args.from)?;
            let j = model.resolve(&args.to)?;
            Ok(PassageRun { window, i: start.vertex, j, rho: start.rho, model })
        })
        .collect()
}

fn passage_config(ctx: &Context, command: &'static str, loaded: &LoadedModel, args: &PassageArgs) -> CliResult<RunConfig> {
    RunConfig::new(command, ctx.seed)
        .with_model(loaded)
        .window(&args.window, loaded)
        .tolerance("series", ctx.tol)?
        .tolerance("stability_margin", passage::STABILITY_MARGIN)
        .map(|r| r.output(&args.out))
}

pub fn first_passage(ctx: &Context, args: &PassageArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let run = passage_config(ctx, "first-passage", &loaded, args)?;
    let opts = PassageOptions { tol: ctx.tol, max_iter: args.max_iter };
    let mut study = Vec::new();
    let mut last = None;
    for p in passage_runs(&loaded, args)? {
        let kernel = passage::jump_kernel(&p.model)?;
        let map = passage::first_passage_with(&kernel, p.i, p.j, opts)?;
        let reach = oqw_core::reach_probability(&map.map, &p.rho);
        if let Some(w) = p.window {
            study.push((w, reach.value));
        }
        ctx.log.info("first passage", json!({ "window": p.window, "reach": reach.value }));
        if reach.clamped > ctx.tol {
            ctx.log.warn("reach probability clamped into [0, 1]", json!({ "clamped": reach.clamped }));
        }
        last = Some((p, map, reach));
    }
    let (p, map, reach) = last.expect("at least one window");
    let state = map.map.apply(&p.rho);
    let cert = map.map.certificate();
    let body = json!({
        "from": p.model.id(p.i),
        "to": p.model.id(p.j),
        "initial_state": matrix_json(&p.rho),
        "window": p.window,
        "reach_probability": reach.value,
        "clamped": reach.clamped,
        "arrival_state": matrix_json(&state),
        "certificate": cert,
        "diagnostics": map.diagnostics,
        "window_study": window_points(&study),
    });
    emit_json(args.out.as_deref(), &run, body)
}

pub fn occupation(ctx: &Context, args: &PassageArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let run = passage_config(ctx, "occupation", &loaded, args)?;
    let opts = PassageOptions { tol: ctx.tol, max_iter: args.max_iter };
    let mut study = Vec::new();
    let mut last = None;
    for p in passage_runs(&loaded, args)? {
        let kernel = passage::jump_kernel(&p.model)?;
        let label = p.model.id(p.j).to_string();
        let occ = passage::expected_occupation_with(&kernel, p.i, p.j, &p.rho, opts, || label)?;
        if let Some(w) = p.window {
            study.push((w, occ.value()));
        }
        ctx.log.info("occupation", json!({ "window": p.window, "value": occ.value() }));
        last = Some((p, occ));
    }
    let (p, occ) = last.expect("at least one window");
    let body = json!({
        "from": p.model.id(p.i),
        "to": p.model.id(p.j),
        "initial_state": matrix_json(&p.rho),
        "window": p.window,
        "occupation": occ,
        "finite": matches!(occ, Occupation::Finite(_)),
        "window_study": window_points(&study),
    });
    emit_json(args.out.as_deref(), &run, body)
}

pub fn classify(ctx: &Context, args: &ClassifyArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let run = RunConfig::new("classify", ctx.seed)
        .with_model(&loaded)
        .window(&args.window, &loaded)
        .tolerance("eps_spec", args.eps)?
        .tolerance("series", passage::DEFAULT_TOL)?
        .tolerance("rank", classify::RANK_TOL)?
        .output(&args.out);
    let mut lambdas = Vec::new();
    let mut m_maxes = Vec::new();
    let mut cases = Vec::new();
    let mut last = None;
    for window in loaded.windows(&args.window)? {
        let model = loaded.build(window)?;
        let j = match &args.vertex {
            Some(v) => model.resolve(v)?,
            None => 0,
        };
        let verdict = oqw_core::check_irreducible(&model);
        if !verdict.irreducible {
            let body = json!({ "window": window, "irreducibility": verdict.to_json() });
            emit_json(args.out.as_deref(), &run, body)?;
            return Err(oqw_core::WalkError::Reducible.into());
        }
        let kernel = passage::jump_kernel(&model)?;
        let report = classify::classify_with(&model, &kernel, j, args.eps, verdict.algebra_dim)?;
        ctx.log.info(
            "classified",
            json!({ "window": window, "case": report.case, "lambda": report.lambda, "m_max": report.m_max() }),
        );
        if let Some(w) = window {
            lambdas.push((w, report.lambda));
            m_maxes.push((w, report.m_max()));
            cases.push(json!({ "window": w, "case": report.case }));
        }
        let all = if args.all {
            let reports: Vec<_> = (0..model.len())
                .into_par_iter()
                .map(|k| classify::classify_with(&model, &kernel, k, args.eps, verdict.algebra_dim))
                .collect::<oqw_core::Result<_>>()?;
            Some(json!({
                "walk_case": walk_case(&reports),
                "vertices": reports.iter().map(|r| json!({
                    "vertex": r.base_vertex,
                    "case": r.case,
                    "lambda": r.lambda,
                    "m_max": r.m_max(),
                })).collect::<Vec<_>>(),
            }))
        } else {
            None
        };
        last = Some((window, verdict, report, all));
    }
    let (window, verdict, report, all) = last.expect("at least one window");
    let body = json!({
        "window": window,
        "case": report.case,
        "irreducibility": verdict.to_json(),
        "report": report.to_json(),
        "all_vertices": all,
        "window_study": {
            "lambda": window_points(&lambdas),
            "m_max": window_points(&m_maxes),
            "case": cases,
        },
    });
    emit_json(args.out.as_deref(), &run, body)
}

pub fn irreducible(ctx: &Context, args: &IrreducibleArgs) -> CliResult<()> {
    let loaded = LoadedModel::load(&args.model.model)?;
    let model = loaded.build(args.window)?;
    let run = RunConfig::new("irreducible", ctx.seed)
        .with_model(&loaded)
        .window(args.window.as_slice(), &loaded)
        .tolerance("rank", classify::RANK_TOL)?
        .tolerance("witness", classify::WITNESS_TOL)?
        .output(&args.out);
    let verdict = if args.discrete {
        oqw_core::check_discrete_irreducible(&model)
    } else {
        oqw_core::check_irreducible(&model)
    };
    ctx.log.info(
        if verdict.irreducible { "irreducible" } else { "reducible" },
        json!({ "algebra_dim": verdict.algebra_dim, "full_dim": verdict.total_dim * verdict.total_dim }),
    );
    let mut body = verdict.to_json();
    body["map"] = json!(if args.discrete { "jump" } else { "semigroup" });
    emit_json(args.out.as_deref(), &run, body)
}

pub fn fixtures(ctx: &Context, args: &FixturesArgs) -> CliResult<()> {
    let doc = fixtures::by_name(&args.name, args.window).ok_or_else(|| {
        CliError::precondition(format!("unknown fixture `{}`; known: {}", args.name, fixtures::NAMES.join(", ")))
    })?;
    let canonical = doc.to_json();
    let mut run = RunConfig::new("fixtures", ctx.seed);
    run.model_sha256 = Some(sha256_hex(canonical.as_bytes()));
    run.windows = doc.window().map(|(_, hi)| vec![hi]).unwrap_or_default();
    let run = run.tolerance("model", doc.build()?.tolerance())?.output(&args.out);
    let body = serde_json::to_value(&doc).expect("model documents serialize");
    emit_json(args.out.as_deref(), &run, body)
}
