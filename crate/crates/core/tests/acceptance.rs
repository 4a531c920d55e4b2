//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line on stderr.
//!
//! 1. Trichotomy of the three lattice fixtures.
//! 2. Sure return from `e₂e₂*` in the transient quantum fixture, and a Monte
//!    Carlo check of the non-sure return from `e₁e₁*`.
//! 3. Irreducibility split of the rotating two-site walk.
//! 4. Gambler's-ruin closed forms and the Gamma(2, 1) first-return law.
//! 5. Trajectory law against the semigroup.
//! 6. Dyson expansion against the semigroup.
//! 7. First-jump survival law.
//! 8. Structural invariants and trichotomy exclusivity on random walks.
//!
//! Run: cargo test -p oqw-core --test acceptance -- --nocapture

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use oqw_core::classify::{self, classify_with, walk_case};
use oqw_core::linalg::{self, c, CMat};
use oqw_core::passage::{self, PassageOptions};
use oqw_core::random::{self, WalkShape};
use oqw_core::semigroup::{dyson_partial, position_distribution};
use oqw_core::stats;
use oqw_core::trajectory::{rng_for, simulate_with, SimOptions};
use oqw_core::{
    check_discrete_irreducible, check_irreducible, classify_trichotomy, estimate, evolve, fixtures, BlockState,
    Query, SitedState, TrichotomyCase, WalkModel,
};

const WINDOW: i64 = 30;
const KS_LEVEL: f64 = 1e-3;

fn line(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

fn verdict(n: u32, pass: bool, detail: String) {
    line(n, pass, &detail);
    assert!(pass, "criterion {n}: {detail}");
}

#[test]
fn criterion_1_fixture_trichotomy() {
    let clock = Instant::now();
    let classical = fixtures::ex3_4_1();
    let r1 = classify_trichotomy(&classical, 0, 1e-8).unwrap();

    let biased = fixtures::ex3_4_2(WINDOW);
    let r2 = classify_trichotomy(&biased, biased.resolve("0").unwrap(), 1e-8).unwrap();

    let quantum = fixtures::ex3_4_3(WINDOW);
    let r3 = classify_trichotomy(&quantum, quantum.resolve("1").unwrap(), 1e-8).unwrap();
    let e2 = linalg::diag(&[0.0, 1.0]);
    let projector_error = (r3.m_top_projector() - &e2).norm();

    let pass = r1.case == TrichotomyCase::Recurrent
        && (r1.lambda - 1.0).abs() <= 1e-8
        && r2.case == TrichotomyCase::TransientUniform
        && (r2.lambda - 0.5).abs() <= 1e-6
        && r3.case == TrichotomyCase::TransientQuantum
        && (r3.m_max() - 1.0).abs() <= 1e-6
        && projector_error <= 1e-6
        && clock.elapsed().as_secs_f64() < 10.0;
    verdict(
        1,
        pass,
        format!(
            "ex3.4.1 {:?} lambda={:.10}; ex3.4.2 {:?} lambda={:.10}; ex3.4.3 {:?} max eig M={:.10} |P-e2e2*|={:.1e} ({:.2}s)",
            r1.case,
            r1.lambda,
            r2.case,
            r2.lambda,
            r3.case,
            r3.m_max(),
            projector_error,
            clock.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_sure_return_from_a_non_faithful_state() {
    let clock = Instant::now();
    let model = fixtures::ex3_4_3(WINDOW);
    let one = model.resolve("1").unwrap();
    let map = passage::first_passage_map(&model, one, one, 1e-10, 1_000_000).unwrap().map;
    let sure = oqw_core::reach_probability(&map, &linalg::diag(&[0.0, 1.0])).value;
    let partial = oqw_core::reach_probability(&map, &linalg::diag(&[1.0, 0.0])).value;

    let init = SitedState::basis(&model, one, 0);
    let query = [Query::FirstPassage { target: one, times: vec![f64::INFINITY] }];
    let mc = &estimate(&model, &init, f64::INFINITY, 100_000, 2024, &query).unwrap()[0];
    let z = (mc.estimate - partial) / mc.stderr;

    let pass = (sure - 1.0).abs() <= 1e-6 && partial < 1.0 - 1e-3 && z.abs() <= 3.0 && clock.elapsed().as_secs() < 120;
    verdict(
        2,
        pass,
        format!(
            "Tr P11(e2e2*)={sure:.10}; Tr P11(e1e1*)={partial:.6}, MC {:.5} +/- {:.5} (z={z:.2}, n={}) ({:.1}s)",
            mc.estimate,
            mc.stderr,
            mc.n,
            clock.elapsed().as_secs_f64()
        ),
    );
}

/// Spans `(1, i)|1⟩` and `(1, -i)|2⟩`.
fn rotating_plane() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let i = Complex64::i();
    let mut v = linalg::zeros(4, 2);
    v[(0, 0)] = c(s);
    v[(1, 0)] = i * s;
    v[(2, 1)] = c(s);
    v[(3, 1)] = -i * s;
    v
}

/// The criterion asks for an irreducible semigroup. Both `G` and the swap
/// jumps leave `span{(1, i)|1⟩, (1, -i)|2⟩}` invariant over complex spaces,
/// so the semigroup is reducible and the criterion cannot be met. This test
/// reports the outcome and checks the verified facts; the literal claim is
/// kept in the ignored test below.
#[test]
fn criterion_3_irreducibility_split() {
    let clock = Instant::now();
    let model = fixtures::ex2_6();
    let continuous = check_irreducible(&model);
    let discrete = check_discrete_irreducible(&model);
    let plane_leak = classify::invariance_residual(&classify::global_generators(&model, true), &rotating_plane());

    let claimed = continuous.irreducible && !discrete.irreducible;
    line(
        3,
        claimed,
        &format!(
            "semigroup irreducible={} (algebra dim {} of {}), jump map irreducible={} (dim {}); \
             invariant plane leak {:.1e}, witness residual {:.1e} ({:.3}s)",
            continuous.irreducible,
            continuous.algebra_dim,
            continuous.total_dim.pow(2),
            discrete.irreducible,
            discrete.algebra_dim,
            plane_leak,
            continuous.witness_residual.unwrap_or(f64::NAN),
            clock.elapsed().as_secs_f64()
        ),
    );
    assert!(!discrete.irreducible);
    assert!(plane_leak < 1e-12);
    assert!(!continuous.irreducible && continuous.witness_residual.unwrap() < 1e-10);
    assert!(clock.elapsed().as_secs_f64() < 1.0);
}

#[test]
#[ignore = "the semigroup of the rotating fixture is reducible; see criterion_3_irreducibility_split"]
fn criterion_3_claimed_split() {
    let model = fixtures::ex2_6();
    assert!(check_irreducible(&model).irreducible);
    assert!(!check_discrete_irreducible(&model).irreducible);
}

fn gamma2_cdf(t: f64) -> f64 {
    1.0 - (-t).exp() * (1.0 + t)
}

#[test]
fn criterion_4_classical_closed_forms() {
    let clock = Instant::now();
    let biased = fixtures::ex3_4_2(WINDOW);
    let zero = biased.resolve("0").unwrap();
    let one = linalg::identity(1);
    let occupation = oqw_core::expected_occupation(&biased, zero, zero, &one, 1e-10).unwrap().value();
    let map = passage::first_passage_map(&biased, zero, zero, 1e-10, 1_000_000).unwrap().map;
    let ret = oqw_core::reach_probability(&map, &one).value;

    let classical = fixtures::ex3_4_1();
    let init = SitedState::basis(&classical, 0, 0);
    let opts = SimOptions { stop_at: Some(0), ..Default::default() };
    let n = 100_000;
    let times: Vec<f64> = (0..n as u64)
        .map(|k| {
            let rec = simulate_with(&classical, &init, f64::INFINITY, &mut rng_for(77, k), &opts).unwrap();
            rec.first_arrival(0).unwrap_or(f64::INFINITY)
        })
        .collect();
    let d = stats::ks_statistic(&times, gamma2_cdf);
    let p = stats::ks_p_value(d, n);

    let pass = (occupation - 2.0).abs() <= 1e-6
        && (ret - 0.5).abs() <= 1e-6
        && p > KS_LEVEL
        && clock.elapsed().as_secs() < 120;
    verdict(
        4,
        pass,
        format!(
            "E0(n0)={occupation:.10}, P0(tau0<inf)={ret:.10}; first return KS D={d:.5} p={p:.3} over {n} ({:.1}s)",
            clock.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_5_trajectory_law_matches_semigroup() {
    let clock = Instant::now();
    let times = [0.5, 1.0, 2.0];
    let n = 100_000;
    let quantum = fixtures::ex3_4_3(WINDOW);
    let cases: Vec<(&str, WalkModel, SitedState)> = vec![
        ("ex2.6", fixtures::ex2_6(), SitedState::basis(&fixtures::ex2_6(), 0, 0)),
        ("ex3.4.3", quantum.clone(), SitedState::mixed(&quantum, quantum.resolve("1").unwrap())),
    ];
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    let mut pass = true;
    for (seed, (name, model, init)) in cases.iter().enumerate() {
        let queries: Vec<Query> = times.iter().map(|&t| Query::Position { time: t }).collect();
        let reports = estimate(model, init, 2.0, n, 500 + seed as u64, &queries).unwrap();
        let mu = BlockState::sited(model, init);
        for (q, &t) in times.iter().enumerate() {
            let exact = position_distribution(&evolve(model, &mu, t).unwrap());
            let empirical: Vec<f64> = reports.iter().filter(|r| r.query_id == q).map(|r| r.estimate).collect();
            let tv = stats::total_variation(&empirical, &exact);
            let bound = stats::multinomial_tv_bound(&exact, n, 3.0);
            pass &= tv <= bound;
            worst = worst.max(tv / bound);
            details.push(format!("{name}@{t}: tv={tv:.4}/{bound:.4}"));
        }
    }
    pass &= clock.elapsed().as_secs() < 180;
    verdict(
        5,
        pass,
        format!("{}; worst ratio {worst:.2} ({:.1}s)", details.join(", "), clock.elapsed().as_secs_f64()),
    );
}

#[test]
fn criterion_6_dyson_oracle() {
    let clock = Instant::now();
    let models = [
        ("ex2.6", fixtures::ex2_6()),
        ("ex3.4.1", fixtures::ex3_4_1()),
        ("ex3.4.2", fixtures::ex3_4_2(3)),
        ("ex3.4.3", fixtures::ex3_4_3(4)),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (k, (name, model)) in models.iter().enumerate() {
        let t = 1.0 / model.rate_constant();
        let mu = random::block_state(&mut rng_for(600 + k as u64, 0), model);
        let dyson = dyson_partial(model, &mu, t, 6, 6).unwrap();
        let exact = evolve(model, &mu, t).unwrap();
        let err = dyson.state.trace_distance(&exact);
        pass &= err <= dyson.remainder_bound + 1e-6;
        details.push(format!("{name}: t={t:.3} err={err:.2e} bound={:.2e}", dyson.remainder_bound));
    }
    pass &= clock.elapsed().as_secs() < 60;
    verdict(6, pass, format!("{} ({:.1}s)", details.join(", "), clock.elapsed().as_secs_f64()));
}

fn probe_state(d: usize) -> CMat {
    if d == 1 {
        return linalg::identity(1);
    }
    let mut v = oqw_core::linalg::CVec::zeros(d);
    v[0] = c(1.0);
    v[1] = Complex64::new(0.5, 0.5);
    linalg::pure_state(&(&v / c(v.norm())))
}

#[test]
fn criterion_7_first_jump_survival() {
    let clock = Instant::now();
    let models = [
        ("ex2.6", fixtures::ex2_6()),
        ("ex3.4.1", fixtures::ex3_4_1()),
        ("ex3.4.2", fixtures::ex3_4_2(3)),
        ("ex3.4.3", fixtures::ex3_4_3(3)),
    ];
    let n = 20_000;
    let opts = SimOptions { stop_after: Some(1), ..Default::default() };
    let mut min_p: f64 = 1.0;
    let mut checked = 0;
    for (name, model) in &models {
        for i in 0..model.len() {
            let rho = probe_state(model.dim(i));
            let init = SitedState::new(model, i, rho.clone()).unwrap();
            let samples: Vec<f64> = (0..n as u64)
                .map(|k| {
                    let rec = simulate_with(model, &init, f64::INFINITY, &mut rng_for(700 + i as u64, k), &opts).unwrap();
                    rec.events.first().map(|e| e.time).or(rec.escaped).unwrap_or(f64::INFINITY)
                })
                .collect();
            let g = model.effective(i);
            let cdf = |t: f64| 1.0 - linalg::trace_re(&linalg::sandwich(&linalg::exp_scaled(g, t), &rho));
            let p = stats::ks_p_value(stats::ks_statistic(&samples, cdf), n);
            if p <= KS_LEVEL {
                line(7, false, &format!("{name} vertex {}: p={p:.2e}", model.id(i)));
            }
            min_p = min_p.min(p);
            checked += 1;
        }
    }
    let pass = min_p > KS_LEVEL && clock.elapsed().as_secs() < 60;
    verdict(
        7,
        pass,
        format!(
            "{checked} fixture vertices, {n} first jumps each, smallest KS p={min_p:.3} ({:.1}s)",
            clock.elapsed().as_secs_f64()
        ),
    );
}

fn random_models(count: usize, seed: u64) -> Vec<WalkModel> {
    (0..count as u64)
        .map(|k| {
            let mut rng = rng_for(seed, k);
            let shape = WalkShape {
                vertices: 2 + (k as usize % 5),
                max_dim: 1 + (k as usize / 5) % 3,
                leak_probability: if k % 2 == 0 { 0.0 } else { 0.3 },
                ..Default::default()
            };
            random::walk(&mut rng, &shape)
        })
        .collect()
}

#[derive(Default)]
struct Invariants {
    zero_sum: f64,
    choi_min: f64,
    monotone_violation: f64,
    partial_max: f64,
    lyapunov: f64,
}

fn structural(model: &WalkModel, inv: &mut Invariants, seed: u64) {
    for i in 0..model.len() {
        inv.zero_sum = inv.zero_sum.max(model.zero_sum_defect(i).norm());
        let g = model.effective(i);
        let x = random::density_matrix(&mut rng_for(seed, i as u64), model.dim(i));
        let y = passage::dwell_integral(g, &x).unwrap();
        inv.lyapunov = inv.lyapunov.max(passage::lyapunov_residual(g, &x, &y));
    }
    let kernel = passage::jump_kernel(model).unwrap();
    for i in 0..model.len() {
        for j in 0..model.len() {
            let map = passage::first_passage_with(&kernel, i, j, PassageOptions::default()).unwrap().map;
            inv.choi_min = inv.choi_min.min(map.certificate().choi_min_eigenvalue);
            let rho = random::density_matrix(&mut rng_for(seed + 1, (i * 64 + j) as u64), model.dim(i));
            let sums = passage::partial_sum_traces(&kernel, i, j, &rho, 40);
            for w in sums.windows(2) {
                inv.monotone_violation = inv.monotone_violation.max(w[0] - w[1]);
            }
            inv.partial_max = inv.partial_max.max(sums.last().copied().unwrap_or(0.0));
        }
    }
}

#[test]
fn criterion_8_structural_invariants() {
    let clock = Instant::now();
    let eps = 1e-8;
    let mut inv = Invariants::default();
    let fixture_models =
        [fixtures::ex2_6(), fixtures::ex3_4_1(), fixtures::ex3_4_2(4), fixtures::ex3_4_3(4)];
    for (k, m) in fixture_models.iter().enumerate() {
        structural(m, &mut inv, 800 + k as u64);
    }

    let models = random_models(200, 8080);
    let mut irreducible = 0;
    let mut exclusive_failures = Vec::new();
    let mut counts = [0usize; 3];
    let mut scalar_checked = 0;
    let mut scalar_quantum = 0;
    for (k, m) in models.iter().enumerate() {
        assert!(oqw_core::validate(m).passed());
        if k % 4 == 0 {
            structural(m, &mut inv, 900 + k as u64);
        }
        let verdict = check_irreducible(m);
        if !verdict.irreducible {
            continue;
        }
        irreducible += 1;
        let kernel = passage::jump_kernel(m).unwrap();
        let reports: Vec<_> =
            (0..m.len()).map(|j| classify_with(m, &kernel, j, eps, verdict.algebra_dim).unwrap()).collect();
        let recurrent: Vec<bool> = reports.iter().map(|r| r.case.is_recurrent()).collect();
        let case = walk_case(&reports).unwrap();
        counts[match case {
            TrichotomyCase::Recurrent => 0,
            TrichotomyCase::TransientUniform => 1,
            TrichotomyCase::TransientQuantum => 2,
        }] += 1;
        let consistent = reports.iter().all(|r| match r.case {
            TrichotomyCase::Recurrent => r.lambda >= 1.0 - eps,
            TrichotomyCase::TransientQuantum => r.lambda < 1.0 - eps && r.m_max() >= 1.0 - eps,
            TrichotomyCase::TransientUniform => r.lambda < 1.0 - eps && r.m_max() < 1.0 - eps,
        });
        let agree = recurrent.iter().all(|&x| x == recurrent[0]);
        let leak_matches = recurrent[0] != m.is_leaky();
        if !(consistent && agree && leak_matches) {
            exclusive_failures.push(k);
        }
        if m.dims().iter().all(|&d| d == 1) {
            scalar_checked += 1;
            scalar_quantum += reports.iter().filter(|r| r.case == TrichotomyCase::TransientQuantum).count();
        }
    }
    for k in 0..100u64 {
        let m = random::scalar_walk(&mut rng_for(8181, k), 2 + (k as usize % 5));
        let leaky = if k % 2 == 1 { with_leak(&m, k) } else { m };
        let kernel = passage::jump_kernel(&leaky).unwrap();
        for j in 0..leaky.len() {
            let r = classify_with(&leaky, &kernel, j, eps, 0).unwrap();
            scalar_quantum += usize::from(r.case == TrichotomyCase::TransientQuantum);
        }
        scalar_checked += 1;
    }

    let pass = inv.zero_sum <= 1e-10
        && inv.choi_min >= -1e-9
        && inv.monotone_violation <= 1e-12
        && inv.partial_max <= 1.0 + 1e-9
        && inv.lyapunov <= 1e-10
        && irreducible >= 150
        && exclusive_failures.is_empty()
        && scalar_quantum == 0
        && clock.elapsed().as_secs() < 300;
    verdict(
        8,
        pass,
        format!(
            "zero-sum {:.1e}, Choi min {:.1e}, partial sums drop {:.1e} max {:.6}, Lyapunov {:.1e}; \
             {irreducible}/200 irreducible random walks (recurrent {}, uniform {}, quantum {}), \
             inconsistent {:?}; {scalar_checked} scalar walks, {scalar_quantum} quantum verdicts ({:.1}s)",
            inv.zero_sum,
            inv.choi_min,
            inv.monotone_violation,
            inv.partial_max,
            inv.lyapunov,
            counts[0],
            counts[1],
            counts[2],
            exclusive_failures,
            clock.elapsed().as_secs_f64()
        ),
    );
}

/// The same chain with a loss channel at vertex 0.
fn with_leak(model: &WalkModel, k: u64) -> WalkModel {
    let mut spec = model.to_spec();
    let rate = 0.1 + 0.05 * (k % 7) as f64;
    spec.leaks.insert(model.id(0).clone(), linalg::identity(1) * c(rate));
    spec.effective.clear();
    oqw_core::build_walk(&spec).unwrap()
}
