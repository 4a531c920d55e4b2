//! Walk models: vertices with finite-dimensional internal spaces, block
//! Hamiltonians, jump operators between vertices, and the derived effective
//! operators `G_i = -i H_i - ½ Σ_j R_i^j† R_i^j`.
//!
//! A model may also carry a per-vertex *leak* operator `K_i ≥ 0`, the sum of
//! `R†R` over jumps that were dropped because their target lies outside a
//! truncation window. The zero-sum identity then reads
//! `G_i + G_i† + Σ_j R_i^j† R_i^j + K_i = 0`; mass carried by `K_i` escapes
//! the model.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalkError};
use crate::linalg::{self, c, CMat};

/// Default structural tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Vertex label. Integer labels from model files are stored in decimal form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId(pub String);

impl VertexId {
    pub fn new(label: impl Into<String>) -> Self {
        VertexId(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId(s.to_string())
    }
}

impl From<i64> for VertexId {
    fn from(n: i64) -> Self {
        VertexId(n.to_string())
    }
}

impl Serialize for VertexId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.parse::<i64>() {
            Ok(n) if n.to_string() == self.0 => s.serialize_i64(n),
            _ => s.serialize_str(&self.0),
        }
    }
}

impl<'de> Deserialize<'de> for VertexId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Int(n) => VertexId(n.to_string()),
            Raw::Str(s) => VertexId(s),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexSpace {
    pub id: VertexId,
    pub dim: usize,
}

/// A jump operator `R_from^to`, a `d_to × d_from` matrix.
#[derive(Debug, Clone)]
pub struct Jump {
    pub from: usize,
    pub to: usize,
    pub op: CMat,
}

/// Raw model description, prior to validation and completion.
///
/// For each vertex either the Hamiltonian, the effective operator, or both
/// may be given. A missing Hamiltonian with a missing effective operator means
/// `H_i = 0`.
#[derive(Debug, Clone, Default)]
pub struct WalkSpec {
    pub vertices: Vec<VertexSpace>,
    pub hamiltonians: BTreeMap<VertexId, CMat>,
    pub effective: BTreeMap<VertexId, CMat>,
    pub jumps: Vec<(VertexId, VertexId, CMat)>,
    pub leaks: BTreeMap<VertexId, CMat>,
    pub tolerance: Option<f64>,
}

/// An immutable, completed walk model.
#[derive(Debug, Clone)]
pub struct WalkModel {
    vertices: Vec<VertexSpace>,
    index: HashMap<VertexId, usize>,
    hamiltonians: Vec<CMat>,
    effective: Vec<CMat>,
    jumps: Vec<Jump>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    leaks: Vec<Option<CMat>>,
    tolerance: f64,
}

fn check_shape(what: impl Into<String>, m: &CMat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(WalkError::DimensionMismatch {
            what: what.into(),
            expected: (rows, cols),
            found: (m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Builds a model from its raw description, completing `G_i` from `H_i` or
/// recovering `H_i = i(G_i + ½ Σ_j R_i^j† R_i^j + ½ K_i)` from `G_i`.
pub fn build_walk(spec: &WalkSpec) -> Result<WalkModel> {
    let tolerance = spec.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    if !(tolerance > 0.0) {
        return Err(WalkError::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    let mut index = HashMap::new();
    for (k, v) in spec.vertices.iter().enumerate() {
        if v.dim == 0 {
            return Err(WalkError::EmptySpace(v.id.to_string()));
        }
        if index.insert(v.id.clone(), k).is_some() {
            return Err(WalkError::DuplicateVertex(v.id.to_string()));
        }
    }
    let lookup = |id: &VertexId| -> Result<usize> {
        index.get(id).copied().ok_or_else(|| WalkError::UnknownVertex(id.to_string()))
    };
    let n = spec.vertices.len();
    let dims: Vec<usize> = spec.vertices.iter().map(|v| v.dim).collect();

    let mut jumps: Vec<Jump> = Vec::with_capacity(spec.jumps.len());
    for (from, to, op) in &spec.jumps {
        let (i, j) = (lookup(from)?, lookup(to)?);
        if i == j {
            return Err(WalkError::SelfLoop(from.to_string()));
        }
        check_shape(format!("jump operator {from}->{to}"), op, dims[j], dims[i])?;
        if let Some(existing) = jumps.iter_mut().find(|jp| jp.from == i && jp.to == j) {
            return Err(WalkError::InvalidArgument(format!(
                "duplicate jump {}->{} ({}x{})",
                from,
                to,
                existing.op.nrows(),
                existing.op.ncols()
            )));
        }
        jumps.push(Jump { from: i, to: j, op: op.clone() });
    }
    jumps.sort_by_key(|jp| (jp.from, jp.to));

    let mut leaks: Vec<Option<CMat>> = vec![None; n];
    for (id, k) in &spec.leaks {
        let i = lookup(id)?;
        check_shape(format!("leak operator at {id}"), k, dims[i], dims[i])?;
        leaks[i] = Some(k.clone());
    }

    let mut outgoing = vec![Vec::new(); n];
    let mut incoming = vec![Vec::new(); n];
    for (k, jp) in jumps.iter().enumerate() {
        outgoing[jp.from].push(k);
        incoming[jp.to].push(k);
    }

    let mut hamiltonians = Vec::with_capacity(n);
    let mut effective = Vec::with_capacity(n);
    for (i, v) in spec.vertices.iter().enumerate() {
        let d = v.dim;
        let mut loss = linalg::zeros(d, d);
        for &k in &outgoing[i] {
            let r = &jumps[k].op;
            loss += r.adjoint() * r;
        }
        if let Some(kmat) = &leaks[i] {
            loss += kmat;
        }
        let h = spec.hamiltonians.get(&v.id);
        let g = spec.effective.get(&v.id);
        if let Some(h) = h {
            check_shape(format!("Hamiltonian at {}", v.id), h, d, d)?;
        }
        if let Some(g) = g {
            check_shape(format!("effective operator at {}", v.id), g, d, d)?;
        }
        let (h, g) = match (h, g) {
            (Some(h), Some(g)) => (h.clone(), g.clone()),
            (Some(h), None) => {
                let g = h * Complex64::new(0.0, -1.0) - &loss * c(0.5);
                (h.clone(), g)
            }
            (None, Some(g)) => {
                let recovered = (g + &loss * c(0.5)) * Complex64::new(0.0, 1.0);
                let residual = linalg::op_norm(&(&recovered - recovered.adjoint()));
                if residual > tolerance * (1.0 + linalg::op_norm(&recovered)) {
                    return Err(WalkError::NonHermitian { vertex: v.id.to_string(), residual });
                }
                (linalg::hermitian_part(&recovered), g.clone())
            }
            (None, None) => (linalg::zeros(d, d), &loss * c(-0.5)),
        };
        hamiltonians.push(h);
        effective.push(g);
    }

    Ok(WalkModel {
        vertices: spec.vertices.clone(),
        index,
        hamiltonians,
        effective,
        jumps,
        outgoing,
        incoming,
        leaks,
        tolerance,
    })
}

impl WalkModel {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[VertexSpace] {
        &self.vertices
    }

    pub fn dim(&self, i: usize) -> usize {
        self.vertices[i].dim
    }

    pub fn dims(&self) -> Vec<usize> {
        self.vertices.iter().map(|v| v.dim).collect()
    }

    /// Total dimension `Σ_i d_i` of the global space.
    pub fn total_dim(&self) -> usize {
        self.vertices.iter().map(|v| v.dim).sum()
    }

    pub fn id(&self, i: usize) -> &VertexId {
        &self.vertices[i].id
    }

    pub fn index_of(&self, id: &VertexId) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| WalkError::UnknownVertex(id.to_string()))
    }

    /// Resolves a label given as text.
    pub fn resolve(&self, label: &str) -> Result<usize> {
        self.index_of(&VertexId::new(label.trim()))
    }

    pub fn hamiltonian(&self, i: usize) -> &CMat {
        &self.hamiltonians[i]
    }

    pub fn effective(&self, i: usize) -> &CMat {
        &self.effective[i]
    }

    pub fn leak(&self, i: usize) -> Option<&CMat> {
        self.leaks[i].as_ref()
    }

    pub fn is_leaky(&self) -> bool {
        self.leaks.iter().any(|k| k.is_some())
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn outgoing(&self, i: usize) -> impl Iterator<Item = &Jump> + '_ {
        self.outgoing[i].iter().map(move |&k| &self.jumps[k])
    }

    pub fn incoming(&self, i: usize) -> impl Iterator<Item = &Jump> + '_ {
        self.incoming[i].iter().map(move |&k| &self.jumps[k])
    }

    pub fn jump(&self, from: usize, to: usize) -> Option<&CMat> {
        self.outgoing[from].iter().map(|&k| &self.jumps[k]).find(|jp| jp.to == to).map(|jp| &jp.op)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// `Σ_{i≠j} ‖R_i^j R_i^j†‖`, the global jump-rate constant.
    pub fn rate_constant(&self) -> f64 {
        self.jumps.iter().map(|jp| linalg::op_norm(&jp.op).powi(2)).sum()
    }

    /// `max_i Σ_j ‖R_i^j R_i^j†‖`, the largest per-vertex jump intensity bound.
    pub fn max_vertex_rate(&self) -> f64 {
        (0..self.len())
            .map(|i| self.outgoing(i).map(|jp| linalg::op_norm(&jp.op).powi(2)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `G_i + G_i† + Σ_j R_i^j† R_i^j + K_i`, which vanishes for a valid model.
    pub fn zero_sum_defect(&self, i: usize) -> CMat {
        let g = &self.effective[i];
        let mut m = g + g.adjoint();
        for jp in self.outgoing(i) {
            m += jp.op.adjoint() * &jp.op;
        }
        if let Some(k) = &self.leaks[i] {
            m += k;
        }
        m
    }

    /// Reconstructs a raw description from which this model can be rebuilt.
    pub fn to_spec(&self) -> WalkSpec {
        let mut spec = WalkSpec {
            vertices: self.vertices.clone(),
            tolerance: Some(self.tolerance),
            ..Default::default()
        };
        for (i, v) in self.vertices.iter().enumerate() {
            spec.hamiltonians.insert(v.id.clone(), self.hamiltonians[i].clone());
            spec.effective.insert(v.id.clone(), self.effective[i].clone());
            if let Some(k) = &self.leaks[i] {
                spec.leaks.insert(v.id.clone(), k.clone());
            }
        }
        for jp in &self.jumps {
            spec.jumps.push((self.id(jp.from).clone(), self.id(jp.to).clone(), jp.op.clone()));
        }
        spec
    }
}

/// One named invariant check with its numeric residual.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub vertex: Option<String>,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn find(&self, name: &str, vertex: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name && c.vertex.as_deref() == Some(vertex))
    }
}

/// Checks the structural invariants of a model. Never fails; failures are
/// carried in the report.
pub fn validate(model: &WalkModel) -> ValidationReport {
    let tol = model.tolerance();
    let mut checks = Vec::new();
    for i in 0..model.len() {
        let id = model.id(i).to_string();
        let h = model.hamiltonian(i);
        let hn = linalg::op_norm(h);
        let herm = linalg::op_norm(&(h - h.adjoint()));
        let herm_threshold = 1e-12 * (1.0 + hn);
        checks.push(Check {
            name: "hamiltonian_hermitian".into(),
            vertex: Some(id.clone()),
            residual: herm,
            threshold: herm_threshold,
            passed: herm <= herm_threshold,
        });

        // G_i = -iH_i - ½ΣR†R - ½K_i
        let mut expected = h * Complex64::new(0.0, -1.0);
        for jp in model.outgoing(i) {
            expected -= jp.op.adjoint() * &jp.op * c(0.5);
        }
        if let Some(k) = model.leak(i) {
            expected -= k * c(0.5);
        }
        // The Hermitian part of (G - expected) is what the zero-sum check
        // measures; the anti-Hermitian part is a Hamiltonian mismatch.
        let delta = model.effective(i) - &expected;
        let mismatch = linalg::op_norm(&((&delta - delta.adjoint()) * c(0.5)));
        checks.push(Check {
            name: "effective_matches_hamiltonian".into(),
            vertex: Some(id.clone()),
            residual: mismatch,
            threshold: tol * (1.0 + hn),
            passed: mismatch <= tol * (1.0 + hn),
        });

        let defect = linalg::op_norm(&model.zero_sum_defect(i));
        checks.push(Check {
            name: "zero_sum".into(),
            vertex: Some(id.clone()),
            residual: defect,
            threshold: tol,
            passed: defect <= tol,
        });

        if let Some(k) = model.leak(i) {
            let min = linalg::min_eigenvalue(k);
            checks.push(Check {
                name: "leak_positive".into(),
                vertex: Some(id.clone()),
                residual: (-min).max(0.0),
                threshold: tol,
                passed: min >= -tol && linalg::hermiticity_residual(k) <= tol,
            });
        }
    }
    let self_loops = model.jumps().iter().filter(|jp| jp.from == jp.to).count();
    checks.push(Check {
        name: "no_self_loops".into(),
        vertex: None,
        residual: self_loops as f64,
        threshold: 0.0,
        passed: self_loops == 0,
    });
    ValidationReport { checks }
}

/// Embeds a continuous-time Markov chain with rate matrix `q` (rows summing
/// to zero) as a walk with one-dimensional internal spaces and
/// `R_i^j = sqrt(q_ij)`. Vertices are labelled `0..n`.
pub fn classical_embed(q: &[Vec<f64>]) -> Result<WalkModel> {
    let n = q.len();
    let scale = q.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut spec = WalkSpec::default();
    for i in 0..n {
        if q[i].len() != n {
            return Err(WalkError::InvalidGenerator(format!("row {i} has {} entries, expected {n}", q[i].len())));
        }
        spec.vertices.push(VertexSpace { id: VertexId::from(i as i64), dim: 1 });
    }
    for (i, row) in q.iter().enumerate() {
        let mut sum = 0.0;
        for (j, &rate) in row.iter().enumerate() {
            if !rate.is_finite() {
                return Err(WalkError::InvalidGenerator(format!("non-finite entry at ({i},{j})")));
            }
            sum += rate;
            if i == j {
                continue;
            }
            if rate < 0.0 {
                return Err(WalkError::InvalidGenerator(format!("negative off-diagonal rate {rate} at ({i},{j})")));
            }
            if rate > 0.0 {
                spec.jumps.push((
                    VertexId::from(i as i64),
                    VertexId::from(j as i64),
                    linalg::real_matrix(1, 1, &[rate.sqrt()]),
                ));
            }
        }
        if sum.abs() > DEFAULT_TOLERANCE * (1.0 + scale) {
            return Err(WalkError::InvalidGenerator(format!("row {i} sums to {sum}, not 0")));
        }
    }
    build_walk(&spec)
}

/// Reads the rate matrix back from a scalar model: `q_ij = |R_i^j|²`.
pub fn classical_rates(model: &WalkModel) -> Option<Vec<Vec<f64>>> {
    if model.vertices().iter().any(|v| v.dim != 1) {
        return None;
    }
    let n = model.len();
    let mut q = vec![vec![0.0; n]; n];
    for jp in model.jumps() {
        let r = jp.op[(0, 0)].norm_sqr();
        q[jp.from][jp.to] = r;
        q[jp.from][jp.from] -= r;
    }
    Some(q)
}

/// A block-diagonal state: one positive matrix per vertex, total trace one.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    blocks: Vec<CMat>,
}

/// Tolerance for state positivity and normalization.
pub const STATE_TOLERANCE: f64 = 1e-10;

impl BlockState {
    /// Validated constructor.
    pub fn new(model: &WalkModel, blocks: Vec<CMat>) -> Result<Self> {
        let state = Self::from_blocks(model, blocks)?;
        state.check_density()?;
        Ok(state)
    }

    /// Shape-checked constructor that allows sub-normalized or signed blocks
    /// (derivatives, leaky evolutions, partial sums).
    pub fn from_blocks(model: &WalkModel, blocks: Vec<CMat>) -> Result<Self> {
        if blocks.len() != model.len() {
            return Err(WalkError::InvalidState(format!(
                "{} blocks for {} vertices",
                blocks.len(),
                model.len()
            )));
        }
        for (i, b) in blocks.iter().enumerate() {
            check_shape(format!("state block at {}", model.id(i)), b, model.dim(i), model.dim(i))?;
        }
        Ok(BlockState { blocks })
    }

    pub fn zeros(model: &WalkModel) -> Self {
        BlockState { blocks: model.dims().into_iter().map(|d| linalg::zeros(d, d)).collect() }
    }

    /// `ρ ⊗ |i⟩⟨i|`.
    pub fn sited(model: &WalkModel, state: &SitedState) -> Self {
        let mut s = Self::zeros(model);
        s.blocks[state.vertex] = state.rho.clone();
        s
    }

    /// Maximally mixed state within each vertex, uniform over vertices.
    pub fn uniform(model: &WalkModel) -> Self {
        let n = model.len() as f64;
        BlockState {
            blocks: model
                .dims()
                .into_iter()
                .map(|d| linalg::identity(d) * c(1.0 / (n * d as f64)))
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &CMat {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<CMat> {
        self.blocks
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(linalg::trace_re).sum()
    }

    pub fn min_block_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(linalg::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    /// Sum of trace norms of the blocks differences.
    pub fn trace_distance(&self, other: &BlockState) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::trace_norm_hermitian(&(a - b)))
            .sum()
    }

    fn check_density(&self) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            let herm = linalg::hermiticity_residual(b);
            if herm > STATE_TOLERANCE * (1.0 + b.norm()) {
                return Err(WalkError::InvalidState(format!("block {i} is not Hermitian ({herm:.3e})")));
            }
            let min = linalg::min_eigenvalue(b);
            if min < -STATE_TOLERANCE {
                return Err(WalkError::InvalidState(format!("block {i} has eigenvalue {min:.3e}")));
            }
        }
        let tr = self.total_trace();
        if (tr - 1.0).abs() > STATE_TOLERANCE {
            return Err(WalkError::InvalidState(format!("total trace {tr}")));
        }
        Ok(())
    }
}

/// A walker located at one vertex with a density matrix on its space.
#[derive(Debug, Clone, PartialEq)]
pub struct SitedState {
    pub vertex: usize,
    pub rho: CMat,
}

impl SitedState {
    pub fn new(model: &WalkModel, vertex: usize, rho: CMat) -> Result<Self> {
        if vertex >= model.len() {
            return Err(WalkError::InvalidState(format!("vertex index {vertex} out of range")));
        }
        check_shape("sited density matrix", &rho, model.dim(vertex), model.dim(vertex))?;
        check_density_matrix(&rho)?;
        Ok(SitedState { vertex, rho })
    }

    /// Maximally mixed state at `vertex`.
    pub fn mixed(model: &WalkModel, vertex: usize) -> Self {
        let d = model.dim(vertex);
        SitedState { vertex, rho: linalg::identity(d) * c(1.0 / d as f64) }
    }

    /// Pure basis state `e_k e_k†` at `vertex`.
    pub fn basis(model: &WalkModel, vertex: usize, k: usize) -> Self {
        let d = model.dim(vertex);
        let mut rho = linalg::zeros(d, d);
        rho[(k, k)] = c(1.0);
        SitedState { vertex, rho }
    }
}

pub fn check_density_matrix(rho: &CMat) -> Result<()> {
    if rho.nrows() != rho.ncols() {
        return Err(WalkError::InvalidState("density matrix is not square".into()));
    }
    let herm = linalg::hermiticity_residual(rho);
    if herm > STATE_TOLERANCE * (1.0 + rho.norm()) {
        return Err(WalkError::InvalidState(format!("density matrix not Hermitian ({herm:.3e})")));
    }
    let min = linalg::min_eigenvalue(rho);
    if min < -STATE_TOLERANCE {
        return Err(WalkError::InvalidState(format!("density matrix has eigenvalue {min:.3e}")));
    }
    let tr = linalg::trace_re(rho);
    if (tr - 1.0).abs() > STATE_TOLERANCE {
        return Err(WalkError::InvalidState(format!("density matrix has trace {tr}")));
    }
    Ok(())
}
