//! First-passage maps and expected occupation times by exact linear algebra.
//!
//! A sojourn at vertex `k` followed by a jump to `l` acts on the arrival
//! state as `J_{k→l}(X) = R_k^l 𝒟_k(X) R_k^l†`, where the dwell integral
//! `𝒟_k(X) = ∫_0^∞ e^{sG_k} X e^{sG_k†} ds` solves a Lyapunov equation.
//! Paths that avoid a taboo vertex `j` until their final jump are summed by
//! inverting `Id - Φ_j`, with `Φ_j` the one-step kernel restricted to the
//! vertices other than `j`.

use serde::Serialize;

use crate::error::{Result, WalkError};
use crate::linalg::{self, c, CMat, CVec};
use crate::model::WalkModel;
use crate::superop::SuperOp;

/// Spectral abscissa below which an effective operator counts as escaping.
pub const STABILITY_MARGIN: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Consecutive small increments required before a series is declared converged.
pub const SERIES_PATIENCE: usize = 10;
/// Largest taboo space handled by a dense eigenvalue solve without trying
/// power iteration first.
const DENSE_RADIUS_LIMIT: usize = 256;

/// A path `i_0 → i_1 → … → i_n` with increasing jump times `t_1 < … < t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPath {
    pub vertices: Vec<usize>,
    pub times: Vec<f64>,
}

impl TimedPath {
    pub fn start(vertex: usize) -> Self {
        TimedPath { vertices: vec![vertex], times: Vec::new() }
    }

    pub fn new(vertices: Vec<usize>, times: Vec<f64>) -> Self {
        TimedPath { vertices, times }
    }

    pub fn jumps(&self) -> usize {
        self.times.len()
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().expect("path has a start vertex")
    }
}

/// `R(ξ) = R_{i_{n-1}}^{i_n} e^{(t_n - t_{n-1})G_{i_{n-1}}} ⋯ R_{i_0}^{i_1} e^{t_1 G_{i_0}}`.
pub fn path_operator(model: &WalkModel, xi: &TimedPath) -> Result<CMat> {
    if xi.vertices.is_empty() || xi.vertices.len() != xi.times.len() + 1 {
        return Err(WalkError::InvalidPath("a path with n jumps needs n + 1 vertices".into()));
    }
    let mut prev_t = 0.0;
    let mut op = linalg::identity(model.dim(xi.vertices[0]));
    for (k, &t) in xi.times.iter().enumerate() {
        if !(t >= prev_t) {
            return Err(WalkError::InvalidPath(format!("jump times must increase, got {t} after {prev_t}")));
        }
        let (from, to) = (xi.vertices[k], xi.vertices[k + 1]);
        let r = model.jump(from, to).ok_or_else(|| WalkError::MissingJump {
            from: model.id(from).to_string(),
            to: model.id(to).to_string(),
        })?;
        op = r * linalg::exp_scaled(model.effective(from), t - prev_t) * op;
        prev_t = t;
    }
    Ok(op)
}

/// `T_t(ξ) = e^{(t - t_n)G_{i_n}} R(ξ)` for `t ≥ t_n`.
pub fn path_propagator(model: &WalkModel, xi: &TimedPath, t: f64) -> Result<CMat> {
    let last = xi.times.last().copied().unwrap_or(0.0);
    if t < last {
        return Err(WalkError::InvalidPath(format!("time {t} precedes the last jump at {last}")));
    }
    Ok(linalg::exp_scaled(model.effective(xi.end()), t - last) * path_operator(model, xi)?)
}

/// Vectorized dwell map `vec X ↦ vec 𝒟(X)`, i.e. `-(I⊗G + Ḡ⊗I)^{-1}`.
fn dwell_superop(g: &CMat, vertex: &str) -> Result<CMat> {
    let d = g.nrows();
    let (abscissa, eigenvalue) = if d == 1 { (g[(0, 0)].re, g[(0, 0)]) } else { linalg::spectral_abscissa(g) };
    if !(abscissa < -STABILITY_MARGIN) {
        return Err(WalkError::NonEscaping { vertex: vertex.to_string(), eigenvalue });
    }
    if d == 1 {
        return Ok(linalg::real_matrix(1, 1, &[-1.0 / (2.0 * g[(0, 0)].re)]));
    }
    let id = linalg::identity(d);
    let lyap = linalg::kron(&id, g) + linalg::kron(&g.conjugate(), &id);
    let inv = lyap.try_inverse().ok_or_else(|| WalkError::NonEscaping { vertex: vertex.to_string(), eigenvalue })?;
    Ok(-inv)
}

/// `‖GY + YG† + X‖` measured in operator norm, relative to `1 + ‖X‖`.
pub fn lyapunov_residual(g: &CMat, x: &CMat, y: &CMat) -> f64 {
    linalg::op_norm(&(g * y + y * g.adjoint() + x)) / (1.0 + linalg::op_norm(x))
}

/// `𝒟(X) = ∫_0^∞ e^{sG} X e^{sG†} ds`, the solution of `GY + YG† = -X`.
pub fn dwell_integral(g: &CMat, x: &CMat) -> Result<CMat> {
    let d = g.nrows();
    if x.shape() != (d, d) {
        return Err(WalkError::DimensionMismatch { what: "dwell argument".into(), expected: (d, d), found: x.shape() });
    }
    let sup = dwell_superop(g, "<operator>")?;
    let mut y = linalg::unvectorize(&(&sup * linalg::vectorize(x)), d, d);
    // one step of iterative refinement
    let r = g * &y + &y * g.adjoint() + x;
    y += linalg::unvectorize(&(&sup * linalg::vectorize(&r)), d, d);
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct KernelJump {
    pub from: usize,
    pub to: usize,
    pub map: SuperOp,
}

/// All one-step dwell-then-jump maps `J_{k→l}` of a model.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    dims: Vec<usize>,
    dwell: Vec<Option<SuperOp>>,
    jumps: Vec<KernelJump>,
}

/// Builds `J_{k→l}` for every jump. Vertices without outgoing jumps get a
/// dwell map only when they are escaping.
pub fn jump_kernel(model: &WalkModel) -> Result<JumpKernel> {
    let n = model.len();
    let mut dwell = Vec::with_capacity(n);
    for k in 0..n {
        let d = model.dim(k);
        let has_jumps = model.outgoing(k).next().is_some();
        match dwell_superop(model.effective(k), model.id(k).as_str()) {
            Ok(m) => dwell.push(Some(SuperOp::from_matrix(d, d, m))),
            Err(e) if has_jumps => return Err(e),
            Err(_) => dwell.push(None),
        }
    }
    let jumps = model
        .jumps()
        .iter()
        .map(|jp| KernelJump {
            from: jp.from,
            to: jp.to,
            map: SuperOp::sandwich(&jp.op, &jp.op).compose(dwell[jp.from].as_ref().expect("checked above")),
        })
        .collect();
    Ok(JumpKernel { dims: model.dims(), dwell, jumps })
}

impl JumpKernel {
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dim(&self, k: usize) -> usize {
        self.dims[k]
    }

    /// `𝒟_k`, absent for non-escaping vertices without outgoing jumps.
    pub fn dwell(&self, k: usize) -> Option<&SuperOp> {
        self.dwell[k].as_ref()
    }

    pub fn jumps(&self) -> &[KernelJump] {
        &self.jumps
    }

    pub fn get(&self, from: usize, to: usize) -> Option<&SuperOp> {
        self.jumps.iter().find(|j| j.from == from && j.to == to).map(|j| &j.map)
    }

    /// Probability that a walker arriving at `k` in state `rho` ever jumps.
    pub fn jump_probability(&self, k: usize, rho: &CMat) -> f64 {
        self.jumps.iter().filter(|j| j.from == k).map(|j| linalg::trace_re(&j.map.apply(rho))).sum()
    }

    fn require_dwell(&self, k: usize, model_label: impl FnOnce() -> String) -> Result<&SuperOp> {
        self.dwell[k].as_ref().ok_or_else(|| WalkError::NonEscaping {
            vertex: model_label(),
            eigenvalue: num_complex::Complex64::new(0.0, 0.0),
        })
    }
}

/// One dwell-then-jump step on `⊕_{k≠j}`, together with the entry map into `j`.
#[derive(Debug, Clone)]
pub struct TabooKernel {
    taboo: usize,
    dims: Vec<usize>,
    /// Vectorized offset of each vertex block; `None` for the taboo vertex.
    offsets: Vec<Option<usize>>,
    size: usize,
    step: CMat,
    entry: CMat,
}

impl TabooKernel {
    pub fn new(kernel: &JumpKernel, taboo: usize) -> Self {
        let n = kernel.len();
        let mut offsets = vec![None; n];
        let mut size = 0;
        for k in (0..n).filter(|&k| k != taboo) {
            offsets[k] = Some(size);
            size += kernel.dim(k) * kernel.dim(k);
        }
        let dj = kernel.dim(taboo);
        let mut step = linalg::zeros(size, size);
        let mut entry = linalg::zeros(dj * dj, size);
        for jp in kernel.jumps() {
            let Some(src) = offsets[jp.from] else { continue };
            let m = jp.map.matrix();
            match offsets[jp.to] {
                Some(dst) => step.view_mut((dst, src), m.shape()).copy_from(m),
                None => entry.view_mut((0, src), m.shape()).copy_from(m),
            }
        }
        TabooKernel { taboo, dims: kernel.dims.clone(), offsets, size, step, entry }
    }

    pub fn taboo(&self) -> usize {
        self.taboo
    }

    /// Dimension of the vectorized space `⊕_{k≠j} vec(𝔥_k ⊗ 𝔥_k*)`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Vectorized `Φ_j`.
    pub fn step(&self) -> &CMat {
        &self.step
    }

    /// Vectorized `J_{→j}` from the taboo space into `j`.
    pub fn entry(&self) -> &CMat {
        &self.entry
    }

    /// `(vertex, vectorized offset)` of every non-taboo block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        self.offsets.iter().enumerate().filter_map(|(k, o)| o.map(|o| (k, o))).collect()
    }

    /// Initial vector for walks started at `i` in arbitrary state: the
    /// embedding of block `i` if `i ≠ j`, else the first jump out of `j`.
    fn start(&self, kernel: &JumpKernel, i: usize) -> CMat {
        let di = self.dims[i];
        let mut start = linalg::zeros(self.size, di * di);
        match self.offsets[i] {
            Some(o) => start.view_mut((o, 0), (di * di, di * di)).fill_with_identity(),
            None => {
                for jp in kernel.jumps().iter().filter(|jp| jp.from == i) {
                    let o = self.offsets[jp.to].expect("no self-loops");
                    start.view_mut((o, 0), jp.map.matrix().shape()).copy_from(jp.map.matrix());
                }
            }
        }
        start
    }

    /// Trace functional on the taboo space.
    fn trace_row(&self) -> CMat {
        let mut row = linalg::zeros(1, self.size);
        for (k, o) in self.blocks() {
            let d = self.dims[k];
            for p in 0..d {
                row[(0, o + p + p * d)] = c(1.0);
            }
        }
        row
    }

    /// Spectral radius of `Φ_j`.
    pub fn spectral_radius(&self) -> f64 {
        if self.size == 0 {
            return 0.0;
        }
        if self.size > DENSE_RADIUS_LIMIT {
            let faithful = self.trace_row().adjoint();
            if let Some(r) = cone_power_radius(&self.step, &faithful, &self.trace_row(), 1e-10, 200_000) {
                return r;
            }
        }
        linalg::spectral_radius_dense(&self.step)
    }
}

/// Perron root of a cone-preserving map by power iteration on the shifted
/// map `(Id + Φ)/2`, which removes peripheral rotation. Starts from a
/// faithful vector and measures growth with a positive functional.
pub fn cone_power_radius(step: &CMat, faithful: &CMat, functional: &CMat, tol: f64, max_iter: usize) -> Option<f64> {
    let mut x: CMat = faithful.clone();
    let norm = |v: &CMat| (functional * v)[(0, 0)].re;
    let n0 = norm(&x);
    if !(n0 > 0.0) {
        return None;
    }
    x /= c(n0);
    let mut prev = f64::NAN;
    for _ in 0..max_iter {
        let y = (&x + step * &x) * c(0.5);
        let growth = norm(&y);
        if !(growth > 0.0) {
            return Some(0.0);
        }
        x = y / c(growth);
        if (growth - prev).abs() < tol {
            return Some((2.0 * growth - 1.0).max(0.0));
        }
        prev = growth;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Direct,
    Series,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageDiagnostics {
    pub method: SolveMethod,
    pub taboo_radius: f64,
    pub iterations: usize,
    pub last_increment: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct PassageMap {
    pub from: usize,
    pub to: usize,
    pub map: SuperOp,
    pub diagnostics: PassageDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PassageOptions {
    fn default() -> Self {
        PassageOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Hermitian probes spanning the `d × d` matrices: `E_aa`, `(E_ab + E_ba)/2`
/// and `i(E_ab - E_ba)/2`.
fn hermitian_probes(d: usize) -> Vec<CVec> {
    let mut probes = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in a..d {
            let mut m = linalg::zeros(d, d);
            if a == b {
                m[(a, a)] = c(1.0);
                probes.push(linalg::vectorize(&m));
            } else {
                m[(a, b)] = c(0.5);
                m[(b, a)] = c(0.5);
                probes.push(linalg::vectorize(&m));
                let mut s = linalg::zeros(d, d);
                s[(a, b)] = num_complex::Complex64::new(0.0, 0.5);
                s[(b, a)] = num_complex::Complex64::new(0.0, -0.5);
                probes.push(linalg::vectorize(&s));
            }
        }
    }
    probes
}

fn trace_row(d: usize) -> CMat {
    let mut row = linalg::zeros(1, d * d);
    for p in 0..d {
        row[(0, p + p * d)] = c(1.0);
    }
    row
}

/// `𝔓_{i,j}` for the walk model, with default dwell margins.
pub fn first_passage_map(model: &WalkModel, i: usize, j: usize, tol: f64, max_iter: usize) -> Result<PassageMap> {
    let kernel = jump_kernel(model)?;
    first_passage_with(&kernel, i, j, PassageOptions { tol, max_iter })
}

/// `𝔓_{i,j} = J_{→j} ∘ (Id - Φ_j)^{-1} ∘ start_i`, summing all paths from `i`
/// with at least one jump whose first visit to `j` is their last vertex.
pub fn first_passage_with(kernel: &JumpKernel, i: usize, j: usize, opts: PassageOptions) -> Result<PassageMap> {
    if i >= kernel.len() || j >= kernel.len() {
        return Err(WalkError::InvalidArgument(format!("vertex index out of range ({i}, {j})")));
    }
    if !(opts.tol > 0.0) {
        return Err(WalkError::InvalidArgument("tolerance must be positive".into()));
    }
    let taboo = TabooKernel::new(kernel, j);
    first_passage_taboo(kernel, &taboo, i, opts)
}

pub fn first_passage_taboo(kernel: &JumpKernel, taboo: &TabooKernel, i: usize, opts: PassageOptions) -> Result<PassageMap> {
    let j = taboo.taboo();
    let (di, dj) = (kernel.dim(i), kernel.dim(j));
    let start = taboo.start(kernel, i);
    let radius = taboo.spectral_radius();
    let mut diagnostics =
        PassageDiagnostics { method: SolveMethod::Direct, taboo_radius: radius, iterations: 0, last_increment: 0.0, tol: opts.tol };
    let matrix = if taboo.size() == 0 {
        linalg::zeros(dj * dj, di * di)
    } else if radius < 1.0 - opts.tol {
        let lhs = linalg::identity(taboo.size()) - taboo.step();
        let solved = lhs.lu().solve(&start).ok_or_else(|| WalkError::NotConverged {
            what: "taboo resolvent".into(),
            iterations: 0,
            last_increment: f64::NAN,
        })?;
        taboo.entry() * solved
    } else {
        diagnostics.method = SolveMethod::Series;
        let probes = hermitian_probes(di);
        let tr = trace_row(dj);
        let mut v = start;
        let mut acc = taboo.entry() * &v;
        let mut calm = 0;
        let mut iterations = 0;
        let mut last = f64::INFINITY;
        while calm < SERIES_PATIENCE {
            if iterations >= opts.max_iter {
                return Err(WalkError::NotConverged {
                    what: format!("first-passage series into vertex {j}"),
                    iterations,
                    last_increment: last,
                });
            }
            v = taboo.step() * v;
            let inc = taboo.entry() * &v;
            let traces = &tr * &inc;
            last = probes.iter().map(|p| (&traces * p)[(0, 0)].norm()).fold(0.0, f64::max);
            acc += inc;
            iterations += 1;
            calm = if last < opts.tol { calm + 1 } else { 0 };
        }
        diagnostics.iterations = iterations;
        diagnostics.last_increment = last;
        acc
    };
    Ok(PassageMap { from: i, to: j, map: SuperOp::from_matrix(di, dj, matrix), diagnostics })
}

/// `𝔓_{i,j}` restricted to paths with at most `max_jumps` jumps.
pub fn truncated_passage(kernel: &JumpKernel, i: usize, j: usize, max_jumps: usize) -> SuperOp {
    let taboo = TabooKernel::new(kernel, j);
    let (di, dj) = (kernel.dim(i), kernel.dim(j));
    // a start from j already contains the first jump
    let first = if i == j { 2 } else { 1 };
    let mut acc = linalg::zeros(dj * dj, di * di);
    if max_jumps >= first && taboo.size() > 0 {
        let mut v = taboo.start(kernel, i);
        acc += taboo.entry() * &v;
        for _ in first..max_jumps {
            v = taboo.step() * v;
            acc += taboo.entry() * &v;
        }
    }
    SuperOp::from_matrix(di, dj, acc)
}

/// Traces of the partial sums `Σ_{m<k} J_{→j} Φ_j^m start_i(ρ)` for `k = 1..=terms`.
pub fn partial_sum_traces(kernel: &JumpKernel, i: usize, j: usize, rho: &CMat, terms: usize) -> Vec<f64> {
    let taboo = TabooKernel::new(kernel, j);
    if taboo.size() == 0 {
        return vec![0.0; terms];
    }
    let mut v: CVec = taboo.start(kernel, i) * linalg::vectorize(rho);
    let tr_j = trace_row(kernel.dim(j));
    let mut total = 0.0;
    let mut out = Vec::with_capacity(terms);
    for _ in 0..terms {
        total += (&tr_j * (taboo.entry() * &v))[(0, 0)].re;
        out.push(total);
        v = taboo.step() * v;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reach {
    pub value: f64,
    /// Amount removed by clamping the raw trace into `[0, 1]`.
    pub clamped: f64,
}

/// `Tr 𝔓_{i,j}(ρ)` clamped to `[0, 1]`.
pub fn reach_probability(map: &SuperOp, rho: &CMat) -> Reach {
    let raw = linalg::trace_re(&map.apply(rho));
    let value = raw.clamp(0.0, 1.0);
    Reach { value, clamped: (raw - value).abs() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Occupation {
    Finite(f64),
    Infinite,
}

impl Occupation {
    pub fn value(&self) -> f64 {
        match self {
            Occupation::Finite(x) => *x,
            Occupation::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Occupation::Finite(_))
    }
}

/// `E_{i,ρ}(n_j)`: dwell-weighted sum over the visits to `j`,
/// `[i = j] Tr 𝒟_j(ρ) + Tr 𝒟_j((Id - 𝔓_{j,j})^{-1} σ)` with `σ = 𝔓_{i,j}(ρ)`.
pub fn expected_occupation(model: &WalkModel, i: usize, j: usize, rho: &CMat, tol: f64) -> Result<Occupation> {
    let kernel = jump_kernel(model)?;
    expected_occupation_with(&kernel, i, j, rho, PassageOptions { tol, ..Default::default() }, || {
        model.id(j).to_string()
    })
}

pub fn expected_occupation_with(
    kernel: &JumpKernel,
    i: usize,
    j: usize,
    rho: &CMat,
    opts: PassageOptions,
    label: impl FnOnce() -> String,
) -> Result<Occupation> {
    let di = kernel.dim(i);
    if rho.shape() != (di, di) {
        return Err(WalkError::DimensionMismatch { what: "initial state".into(), expected: (di, di), found: rho.shape() });
    }
    let dwell = kernel.require_dwell(j, label)?.clone();
    let taboo = TabooKernel::new(kernel, j);
    let pjj = first_passage_taboo(kernel, &taboo, j, opts)?.map;
    let sigma = if i == j { pjj.apply(rho) } else { first_passage_taboo(kernel, &taboo, i, opts)?.map.apply(rho) };
    let initial = if i == j { linalg::trace_re(&dwell.apply(rho)) } else { 0.0 };
    let lambda = pjj.spectral_radius();
    if lambda >= 1.0 - opts.tol {
        return Ok(if linalg::trace_re(&sigma) > opts.tol { Occupation::Infinite } else { Occupation::Finite(initial) });
    }
    let dj = kernel.dim(j);
    let lhs = linalg::identity(dj * dj) - pjj.matrix();
    let visits = lhs.lu().solve(&linalg::vectorize(&sigma)).ok_or_else(|| WalkError::NotConverged {
        what: "return resolvent".into(),
        iterations: 0,
        last_increment: f64::NAN,
    })?;
    let later = linalg::trace_re(&dwell.apply(&linalg::unvectorize(&visits, dj, dj)));
    Ok(Occupation::Finite((initial + later).max(0.0)))
}
