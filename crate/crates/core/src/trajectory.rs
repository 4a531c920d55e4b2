//! Quantum-trajectory sampling of the position/internal-state process.
//!
//! Between jumps the internal state at vertex `i` follows
//! `η_t = e^{tG_i} ρ e^{tG_i†} / s(t)` with survival `s(t) = Tr(e^{tG_i} ρ e^{tG_i†})`.
//! A jump time is drawn by inverting `s`, then the destination `j` is chosen
//! with probability proportional to `Tr(R_i^j η R_i^j†)` and the state is
//! collapsed to `R_i^j η R_i^j† / Tr(·)`. On leaky models the leak operator
//! competes as an extra destination that ends the trajectory.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalkError};
use crate::linalg::{self, c, CMat};
use crate::model::{SitedState, VertexId, WalkModel};
use crate::stats::{self, Interval};

/// Normalized dwell state and survival.
#[derive(Debug, Clone)]
pub struct Dwell {
    pub eta: CMat,
    pub survival: f64,
}

/// Survival below which the dwell state is considered fully decayed.
pub const DECAYED: f64 = 1e-300;

pub fn dwell_evolution(g: &CMat, rho: &CMat, t: f64) -> Result<Dwell> {
    if t < 0.0 || !t.is_finite() {
        return Err(WalkError::NegativeTime(t));
    }
    if g.nrows() == 1 {
        let s = (2.0 * g[(0, 0)].re * t).exp() * rho[(0, 0)].re;
        if s < DECAYED {
            return Err(WalkError::Decayed(s));
        }
        return Ok(Dwell { eta: rho / c(rho[(0, 0)].re), survival: s });
    }
    let e = linalg::exp_scaled(g, t);
    let unnorm = linalg::sandwich(&e, rho);
    let s = linalg::trace_re(&unnorm);
    if !(s >= DECAYED) {
        return Err(WalkError::Decayed(s));
    }
    Ok(Dwell { eta: linalg::hermitian_part(&(unnorm / c(s))), survival: s })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpTime {
    At(f64),
    NoJump,
}

/// Relative threshold under which `(G + G†)` is treated as a multiple of
/// the identity, giving the exact law `s(t) = e^{-γt}`.
const SCALAR_DISSIPATION_TOL: f64 = 1e-14;
const PLATEAU: f64 = 1e-14;
const ROOT_TOL: f64 = 1e-12;
const MAX_TIME: f64 = 1e15;

/// Returns `γ` if `-(G + G†) = γ Id`.
fn scalar_dissipation(g: &CMat) -> Option<f64> {
    let d = g.nrows();
    let diss = -(g + g.adjoint());
    let gamma = diss[(0, 0)].re;
    let scale = linalg::op_norm(&diss).max(1.0);
    let mut off = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { c(gamma) } else { c(0.0) };
            off = off.max((diss[(i, j)] - target).norm());
        }
    }
    (off <= SCALAR_DISSIPATION_TOL * scale).then_some(gamma)
}

/// Solves `s(t*) = u` for the first jump time, or reports that the survival
/// never drops to `u`.
pub fn sample_jump_time(g: &CMat, rho: &CMat, u: f64) -> JumpTime {
    assert!(u > 0.0 && u < 1.0, "uniform draw must lie in (0, 1)");
    if let Some(gamma) = scalar_dissipation(g) {
        // s(t) = Tr(ρ) e^{-γt}
        if gamma <= 0.0 {
            return JumpTime::NoJump;
        }
        let t = -u.ln() / gamma;
        return JumpTime::At(t);
    }
    let diss = g + g.adjoint();
    let scale = linalg::op_norm(&diss);
    if scale == 0.0 {
        return JumpTime::NoJump;
    }
    // (s(t), s'(t))
    let eval = |t: f64| -> (f64, f64) {
        let e = linalg::exp_scaled(g, t);
        let x = linalg::sandwich(&e, rho);
        (linalg::trace_re(&x), linalg::trace_re(&(&diss * &x)))
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / scale;
    loop {
        let (s, ds) = eval(hi);
        if s <= u {
            break;
        }
        if ds.abs() < PLATEAU * s.max(f64::MIN_POSITIVE) || hi > MAX_TIME {
            return JumpTime::NoJump;
        }
        lo = hi;
        hi *= 2.0;
    }
    // safeguarded Newton on f(t) = s(t) - u, f decreasing
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (s, ds) = eval(t);
        let f = s - u;
        if f.abs() <= ROOT_TOL {
            return JumpTime::At(t);
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = if ds < 0.0 { t - f / ds } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return JumpTime::At(t);
        }
    }
    JumpTime::At(t)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Destination {
    Vertex { to: usize, rho: CMat },
    /// The walker left through a dropped boundary jump.
    Escape,
}

/// Picks the destination of a jump from vertex `i` with pre-jump state `eta`.
pub fn sample_destination(model: &WalkModel, i: usize, eta: &CMat, u: f64) -> Result<Destination> {
    let mut rates: Vec<(usize, f64)> = Vec::new();
    let mut total = 0.0;
    for jp in model.outgoing(i) {
        let r = jump_rate(&jp.op, eta);
        total += r;
        rates.push((jp.to, r));
    }
    let leak = model.leak(i).map_or(0.0, |k| linalg::trace_re(&(k * eta)).max(0.0));
    let all = total + leak;
    if !(all > 0.0) {
        return Err(WalkError::ZeroRate(model.id(i).to_string()));
    }
    let mut target = u * all;
    for (to, r) in rates {
        if target < r {
            let op = model.jump(i, to).expect("rate came from an existing jump");
            let post = linalg::sandwich(op, eta);
            let tr = linalg::trace_re(&post);
            return Ok(Destination::Vertex { to, rho: linalg::hermitian_part(&(post / c(tr))) });
        }
        target -= r;
    }
    if leak > 0.0 {
        Ok(Destination::Escape)
    } else {
        // rounding put the draw past the last positive rate
        let (to, _) = model
            .outgoing(i)
            .map(|jp| (jp.to, jump_rate(&jp.op, eta)))
            .filter(|(_, r)| *r > 0.0)
            .last()
            .expect("total rate is positive");
        let op = model.jump(i, to).unwrap();
        let post = linalg::sandwich(op, eta);
        let tr = linalg::trace_re(&post);
        Ok(Destination::Vertex { to, rho: linalg::hermitian_part(&(post / c(tr))) })
    }
}

fn jump_rate(r: &CMat, eta: &CMat) -> f64 {
    if r.nrows() == 1 && r.ncols() == 1 {
        return r[(0, 0)].norm_sqr() * eta[(0, 0)].re;
    }
    linalg::trace_re(&linalg::sandwich(r, eta)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    pub rho: CMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub initial: SitedState,
    pub events: Vec<JumpEvent>,
    pub horizon: f64,
    /// No further jump happens in this realization.
    pub absorbed: bool,
    /// Time at which the walker left a truncated model, if it did.
    pub escaped: Option<f64>,
}

impl TrajectoryRecord {
    /// Vertex occupied at time `t` (`None` after an escape).
    pub fn vertex_at(&self, t: f64) -> Option<usize> {
        if self.escaped.is_some_and(|te| t >= te) {
            return None;
        }
        let k = self.events.partition_point(|e| e.time <= t);
        Some(if k == 0 { self.initial.vertex } else { self.events[k - 1].to })
    }

    /// First time the walker jumps into `j`.
    pub fn first_arrival(&self, j: usize) -> Option<f64> {
        self.events.iter().find(|e| e.to == j).map(|e| e.time)
    }

    /// Time spent at `j` during `[0, min(horizon, end)]`, from exact event times.
    pub fn occupation(&self, j: usize) -> f64 {
        let end = self.escaped.unwrap_or(self.horizon).min(self.horizon);
        let mut total = 0.0;
        let mut start = 0.0;
        let mut at = self.initial.vertex;
        for e in &self.events {
            if at == j {
                total += e.time - start;
            }
            start = e.time;
            at = e.to;
        }
        if at == j && end.is_finite() {
            total += end - start;
        } else if at == j {
            return f64::INFINITY;
        }
        total
    }

    /// Number of sojourns at `j` that start before the horizon, the initial one
    /// included.
    pub fn visits(&self, j: usize) -> usize {
        usize::from(self.initial.vertex == j) + self.events.iter().filter(|e| e.to == j).count()
    }

    /// Checks the record invariants.
    pub fn check(&self, model: &WalkModel) -> Result<()> {
        let mut prev_t = 0.0;
        let mut prev_v = self.initial.vertex;
        for e in &self.events {
            if !(e.time > prev_t || (prev_t == 0.0 && e.time > 0.0)) || e.time >= self.horizon {
                return Err(WalkError::InvalidPath(format!("event time {} out of order", e.time)));
            }
            if e.from != prev_v || e.to == e.from {
                return Err(WalkError::InvalidPath(format!("event {}->{} breaks continuity", e.from, e.to)));
            }
            if e.rho.nrows() != model.dim(e.to) {
                return Err(WalkError::InvalidPath("post-jump state has the wrong dimension".into()));
            }
            crate::model::check_density_matrix(&e.rho)?;
            prev_t = e.time;
            prev_v = e.to;
        }
        Ok(())
    }

    /// One line per event: `t, from, to, re/im entries of the post-jump state`.
    pub fn dump(&self, model: &WalkModel, trajectory: usize) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = write!(out, "{},{},{},{}", trajectory, e.time, model.id(e.from), model.id(e.to));
            for z in e.rho.iter() {
                let _ = write!(out, ",{},{}", z.re, z.im);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Jump-count circuit breaker.
    pub max_jumps: u64,
    /// Stop as soon as the walker jumps into this vertex.
    pub stop_at: Option<usize>,
    /// Stop after this many jumps.
    pub stop_after: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { max_jumps: 10_000_000, stop_at: None, stop_after: None }
    }
}

/// Deterministic generator for trajectory `stream` under `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

pub fn simulate(model: &WalkModel, init: &SitedState, horizon: f64, seed: u64, stream: u64) -> Result<TrajectoryRecord> {
    simulate_with(model, init, horizon, &mut rng_for(seed, stream), &SimOptions::default())
}

pub fn simulate_with<R: Rng>(
    model: &WalkModel,
    init: &SitedState,
    horizon: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<TrajectoryRecord> {
    if !(horizon > 0.0) {
        return Err(WalkError::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let mut record =
        TrajectoryRecord { initial: init.clone(), events: Vec::new(), horizon, absorbed: false, escaped: None };
    let mut at = init.vertex;
    let mut rho = init.rho.clone();
    let mut now = 0.0;
    loop {
        let g = model.effective(at);
        let wait = match sample_jump_time(g, &rho, open_uniform(rng)) {
            JumpTime::NoJump => {
                record.absorbed = true;
                break;
            }
            JumpTime::At(w) => w,
        };
        if now + wait >= horizon {
            break;
        }
        now += wait;
        let eta = dwell_evolution(g, &rho, wait)?.eta;
        match sample_destination(model, at, &eta, rng.random())? {
            Destination::Escape => {
                record.escaped = Some(now);
                break;
            }
            Destination::Vertex { to, rho: post } => {
                record.events.push(JumpEvent { time: now, from: at, to, rho: post.clone() });
                if record.events.len() as u64 > opts.max_jumps {
                    return Err(WalkError::CircuitBreaker(opts.max_jumps));
                }
                at = to;
                rho = post;
                if opts.stop_at == Some(to) || opts.stop_after.is_some_and(|n| record.events.len() >= n) {
                    break;
                }
            }
        }
    }
    Ok(record)
}

/// A Monte Carlo query, with vertices given by index.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// `P(τ_j ≤ t)` for each `t` of the grid (`t` may be infinite).
    FirstPassage { target: usize, times: Vec<f64> },
    /// `E ∫_0^horizon 1{X_t = j} dt`
    Occupation { target: usize },
    /// Expected number of sojourns at `j` before the horizon.
    Visits { target: usize },
    /// `P(X_t = i)` for every vertex `i`.
    Position { time: f64 },
}

/// Query description with vertex labels, as read from a query file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuerySpec {
    FirstPassage { target: VertexId, times: Vec<f64> },
    Occupation { target: VertexId },
    Visits { target: VertexId },
    Position { time: f64 },
}

impl QuerySpec {
    pub fn resolve(&self, model: &WalkModel) -> Result<Query> {
        Ok(match self {
            QuerySpec::FirstPassage { target, times } => {
                Query::FirstPassage { target: model.index_of(target)?, times: times.clone() }
            }
            QuerySpec::Occupation { target } => Query::Occupation { target: model.index_of(target)? },
            QuerySpec::Visits { target } => Query::Visits { target: model.index_of(target)? },
            QuerySpec::Position { time } => Query::Position { time: *time },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub query_id: usize,
    pub label: String,
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

impl EstimateReport {
    fn new(query_id: usize, label: String, t: f64, iv: Interval) -> Self {
        EstimateReport { query_id, label, t, estimate: iv.estimate, stderr: iv.stderr, ci_lo: iv.lo, ci_hi: iv.hi, n: iv.n }
    }
}

/// Per-trajectory values, one slot per scalar statistic.
fn summarize(record: &TrajectoryRecord, queries: &[Query], model_len: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for q in queries {
        match q {
            Query::FirstPassage { target, times } => {
                let tau = record.first_arrival(*target);
                for &t in times {
                    out.push(if tau.is_some_and(|x| x <= t) { 1.0 } else { 0.0 });
                }
            }
            Query::Occupation { target } => out.push(record.occupation(*target)),
            Query::Visits { target } => out.push(record.visits(*target) as f64),
            Query::Position { time } => {
                let v = record.vertex_at(*time);
                for i in 0..model_len {
                    out.push(if v == Some(i) { 1.0 } else { 0.0 });
                }
            }
        }
    }
    out
}

/// Monte Carlo estimates from `n_traj` independent trajectories. Trajectory
/// `k` uses stream `k` of `seed`, so results do not depend on scheduling.
pub fn estimate(
    model: &WalkModel,
    init: &SitedState,
    horizon: f64,
    n_traj: usize,
    seed: u64,
    queries: &[Query],
) -> Result<Vec<EstimateReport>> {
    if n_traj == 0 {
        return Err(WalkError::InvalidArgument("n_traj must be at least 1".into()));
    }
    for q in queries {
        match q {
            Query::Position { time } if *time > horizon || *time < 0.0 => {
                return Err(WalkError::InvalidArgument(format!("position time {time} outside [0, horizon]")));
            }
            Query::FirstPassage { times, .. } if times.iter().any(|t| *t > horizon) => {
                return Err(WalkError::InvalidArgument("first-passage grid extends past the horizon".into()));
            }
            _ => {}
        }
    }
    let stop_at = match queries {
        [] => None,
        qs => {
            let targets: Vec<usize> = qs
                .iter()
                .filter_map(|q| if let Query::FirstPassage { target, .. } = q { Some(*target) } else { None })
                .collect();
            (targets.len() == qs.len() && targets.iter().all(|t| *t == targets[0])).then(|| targets[0])
        }
    };
    let opts = SimOptions { stop_at, ..Default::default() };
    let n = model.len();
    let rows: Vec<Vec<f64>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|k| {
            let record = simulate_with(model, init, horizon, &mut rng_for(seed, k), &opts)?;
            Ok(summarize(&record, queries, n))
        })
        .collect::<Result<_>>()?;

    let column = |slot: usize| -> Vec<f64> { rows.iter().map(|r| r[slot]).collect() };
    let mut reports = Vec::new();
    let mut slot = 0;
    for (qid, q) in queries.iter().enumerate() {
        match q {
            Query::FirstPassage { target, times } => {
                for &t in times {
                    let hits = column(slot).iter().filter(|x| **x > 0.5).count();
                    reports.push(EstimateReport::new(
                        qid,
                        format!("P(tau_{} <= t)", model.id(*target)),
                        t,
                        stats::proportion(hits, n_traj),
                    ));
                    slot += 1;
                }
            }
            Query::Occupation { target } => {
                reports.push(EstimateReport::new(
                    qid,
                    format!("occupation({})", model.id(*target)),
                    horizon,
                    stats::mean(&column(slot)),
                ));
                slot += 1;
            }
            Query::Visits { target } => {
                reports.push(EstimateReport::new(
                    qid,
                    format!("visits({})", model.id(*target)),
                    horizon,
                    stats::mean(&column(slot)),
                ));
                slot += 1;
            }
            Query::Position { time } => {
                for i in 0..n {
                    let hits = column(slot).iter().filter(|x| **x > 0.5).count();
                    reports.push(EstimateReport::new(
                        qid,
                        format!("P(X_t = {})", model.id(i)),
                        *time,
                        stats::proportion(hits, n_traj),
                    ));
                    slot += 1;
                }
            }
        }
    }
    Ok(reports)
}
