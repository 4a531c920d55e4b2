//! Irreducibility and the recurrence/transience trichotomy.
//!
//! The walk is irreducible when the operators `G = ⊕ G_i` and
//! `S_i^j = R_i^j ⊗ |j⟩⟨i|` on `⊕ 𝔥_i` have no common nontrivial invariant
//! subspace, i.e. when the algebra they generate is all of `M_D`. Every
//! product containing at least one `S` has a single nonzero block, so the
//! algebra splits into per-block-pair spaces `W_{k,i}` plus the polynomials
//! in `G`, and its dimension is computed without forming `D × D` words.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Result, WalkError};
use crate::format::JsonMatrix;
use crate::linalg::{self, c, CMat, CVec};
use crate::model::{VertexId, WalkModel};
use crate::passage::{self, JumpKernel, PassageDiagnostics, PassageOptions};
use crate::superop::SuperOp;
use crate::trajectory::rng_for;

/// Relative threshold of the Gram–Schmidt rank decisions.
pub const RANK_TOL: f64 = 1e-9;
/// Invariance tolerance of a reducibility witness.
pub const WITNESS_TOL: f64 = 1e-10;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct IrreducibilityVerdict {
    pub irreducible: bool,
    pub algebra_dim: usize,
    /// `D = Σ_i d_i`.
    pub total_dim: usize,
    /// Orthonormal columns spanning a common invariant subspace; empty when
    /// the walk is irreducible.
    pub witness: CMat,
    /// `max ‖(Id - P) X P‖` over the generators, for the witness projector `P`.
    pub witness_residual: Option<f64>,
}

impl IrreducibilityVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "irreducible": self.irreducible,
            "algebra_dim": self.algebra_dim,
            "total_dim": self.total_dim,
            "full_dim": self.total_dim * self.total_dim,
            "witness": JsonMatrix::from_matrix(&self.witness),
            "witness_residual": self.witness_residual,
        })
    }
}

/// The generators of the walk algebra in block form.
struct Generators<'a> {
    model: &'a WalkModel,
    offsets: Vec<usize>,
    total: usize,
    with_effective: bool,
}

impl<'a> Generators<'a> {
    fn new(model: &'a WalkModel, with_effective: bool) -> Self {
        let mut offsets = Vec::with_capacity(model.len());
        let mut total = 0;
        for i in 0..model.len() {
            offsets.push(total);
            total += model.dim(i);
        }
        Generators { model, offsets, total, with_effective }
    }

    fn global(&self) -> Vec<CMat> {
        let mut out = Vec::new();
        if self.with_effective {
            let mut g = linalg::zeros(self.total, self.total);
            for i in 0..self.model.len() {
                let (o, d) = (self.offsets[i], self.model.dim(i));
                g.view_mut((o, o), (d, d)).copy_from(self.model.effective(i));
            }
            out.push(g);
        }
        for jp in self.model.jumps() {
            let mut s = linalg::zeros(self.total, self.total);
            s.view_mut((self.offsets[jp.to], self.offsets[jp.from]), jp.op.shape()).copy_from(&jp.op);
            out.push(s);
        }
        out
    }

    /// Orthonormal basis of `C[G_i] = span{Id, G_i, G_i², …}` (or `span{Id}`).
    fn polynomial_basis(&self, i: usize) -> Vec<CVec> {
        let d = self.model.dim(i);
        let mut basis = Vec::new();
        linalg::try_extend_basis(&mut basis, &linalg::vectorize(&linalg::identity(d)), RANK_TOL);
        if self.with_effective {
            let g = self.model.effective(i);
            loop {
                let last = linalg::unvectorize(basis.last().unwrap(), d, d);
                if !linalg::try_extend_basis(&mut basis, &linalg::vectorize(&(g * last)), RANK_TOL) {
                    break;
                }
            }
        }
        basis
    }

    /// `W_{k,i}` for every `k`: the span of all words with at least one jump
    /// that map block `i` into block `k`.
    fn closure_from(&self, i: usize) -> Vec<Vec<CVec>> {
        let model = self.model;
        let n = model.len();
        let mut spaces: Vec<Vec<CVec>> = vec![Vec::new(); n];
        let mut queue: Vec<(usize, CVec)> = Vec::new();
        let di = model.dim(i);
        let push = |spaces: &mut Vec<Vec<CVec>>, queue: &mut Vec<(usize, CVec)>, k: usize, x: &CMat| {
            if linalg::try_extend_basis(&mut spaces[k], &linalg::vectorize(x), RANK_TOL) {
                queue.push((k, spaces[k].last().unwrap().clone()));
            }
        };
        for y in self.polynomial_basis(i) {
            let y = linalg::unvectorize(&y, di, di);
            for jp in model.outgoing(i) {
                push(&mut spaces, &mut queue, jp.to, &(&jp.op * &y));
            }
        }
        while let Some((k, v)) = queue.pop() {
            let x = linalg::unvectorize(&v, model.dim(k), di);
            if self.with_effective {
                push(&mut spaces, &mut queue, k, &(model.effective(k) * &x));
            }
            for jp in model.outgoing(k) {
                push(&mut spaces, &mut queue, jp.to, &(&jp.op * &x));
            }
        }
        spaces
    }

    fn verdict(&self) -> IrreducibilityVerdict {
        let n = self.model.len();
        let closures: Vec<Vec<Vec<CVec>>> = (0..n).into_par_iter().map(|i| self.closure_from(i)).collect();
        let words: usize = closures.iter().map(|row| row.iter().map(Vec::len).sum::<usize>()).sum();

        // C[G] ∩ U lives in the block-diagonal part ⊕ W_{i,i}
        let diag_len: usize = (0..n).map(|i| self.model.dim(i).pow(2)).sum();
        let embed = |i: usize, v: &CVec| -> CVec {
            let mut out = CVec::zeros(diag_len);
            let o: usize = (0..i).map(|k| self.model.dim(k).pow(2)).sum();
            out.rows_mut(o, v.len()).copy_from(v);
            out
        };
        let poly = self.global_polynomial_basis(diag_len);
        let mut diag_words: Vec<CVec> = Vec::new();
        for (i, row) in closures.iter().enumerate() {
            for v in &row[i] {
                linalg::try_extend_basis(&mut diag_words, &embed(i, v), RANK_TOL);
            }
        }
        let mut sum = diag_words.clone();
        for p in &poly {
            linalg::try_extend_basis(&mut sum, p, RANK_TOL);
        }
        let intersection = poly.len() + diag_words.len() - sum.len();
        let algebra_dim = words + poly.len() - intersection;

        let full = self.total * self.total;
        if algebra_dim >= full {
            return IrreducibilityVerdict {
                irreducible: true,
                algebra_dim,
                total_dim: self.total,
                witness: linalg::zeros(self.total, 0),
                witness_residual: None,
            };
        }
        let witness = self.find_witness(&closures, &poly);
        let residual = invariance_residual(&self.global(), &witness);
        IrreducibilityVerdict {
            irreducible: false,
            algebra_dim,
            total_dim: self.total,
            witness,
            witness_residual: Some(residual),
        }
    }

    /// Arnoldi basis of the polynomials in `G` as vectors of stacked diagonal blocks.
    fn global_polynomial_basis(&self, diag_len: usize) -> Vec<CVec> {
        let n = self.model.len();
        let split = |v: &CVec| -> Vec<CMat> {
            let mut o = 0;
            (0..n)
                .map(|i| {
                    let d = self.model.dim(i);
                    let m = linalg::unvectorize(&v.rows(o, d * d).into_owned(), d, d);
                    o += d * d;
                    m
                })
                .collect()
        };
        let join = |blocks: &[CMat]| -> CVec {
            let mut out = CVec::zeros(diag_len);
            let mut o = 0;
            for b in blocks {
                out.rows_mut(o, b.len()).copy_from(&linalg::vectorize(b));
                o += b.len();
            }
            out
        };
        let ids: Vec<CMat> = (0..n).map(|i| linalg::identity(self.model.dim(i))).collect();
        let mut basis = Vec::new();
        linalg::try_extend_basis(&mut basis, &join(&ids), RANK_TOL);
        if self.with_effective {
            loop {
                let last = split(basis.last().unwrap());
                let next: Vec<CMat> = last.iter().enumerate().map(|(i, b)| self.model.effective(i) * b).collect();
                if !linalg::try_extend_basis(&mut basis, &join(&next), RANK_TOL) {
                    break;
                }
            }
        }
        basis
    }

    /// Orbit `A v` of a global vector under the algebra.
    fn orbit(&self, closures: &[Vec<Vec<CVec>>], poly: &[CVec], v: &CVec) -> Vec<CVec> {
        let n = self.model.len();
        let mut basis = Vec::new();
        let part = |i: usize| v.rows(self.offsets[i], self.model.dim(i)).into_owned();
        // polynomials in G act blockwise
        let mut o = 0;
        for p in poly {
            let mut out = CVec::zeros(self.total);
            o = 0;
            for i in 0..n {
                let d = self.model.dim(i);
                let block = linalg::unvectorize(&p.rows(o, d * d).into_owned(), d, d);
                out.rows_mut(self.offsets[i], d).copy_from(&(block * part(i)));
                o += d * d;
            }
            linalg::try_extend_basis(&mut basis, &out, RANK_TOL);
        }
        let _ = o;
        for (i, row) in closures.iter().enumerate() {
            let vi = part(i);
            if vi.norm() == 0.0 {
                continue;
            }
            for (k, space) in row.iter().enumerate() {
                let dk = self.model.dim(k);
                for w in space {
                    let x = linalg::unvectorize(w, dk, self.model.dim(i));
                    let mut out = CVec::zeros(self.total);
                    out.rows_mut(self.offsets[k], dk).copy_from(&(x * &vi));
                    linalg::try_extend_basis(&mut basis, &out, RANK_TOL);
                }
            }
        }
        basis
    }

    /// A proper orbit `A v`. Each invariant subspace contains eigenvectors of
    /// every algebra element, so eigenvectors of random elements are tried
    /// first; basis vectors cover degenerate spectra.
    fn find_witness(&self, closures: &[Vec<Vec<CVec>>], poly: &[CVec]) -> CMat {
        let mut candidates: Vec<CVec> = Vec::new();
        let mut rng = rng_for(0x5eed, 0);
        for _ in 0..3 {
            let a = self.random_element(closures, poly, &mut rng);
            candidates.extend(eigenvectors(&a));
        }
        for k in 0..self.total {
            let mut e = CVec::zeros(self.total);
            e[k] = c(1.0);
            candidates.push(e);
        }
        for v in &candidates {
            let orbit = self.orbit(closures, poly, v);
            if !orbit.is_empty() && orbit.len() < self.total {
                return columns(&orbit, self.total);
            }
        }
        // Invariant subspaces of the adjoint algebra have invariant complements.
        let adjoint = self.adjoint_witness(&mut rng);
        adjoint.unwrap_or_else(|| linalg::zeros(self.total, 0))
    }

    fn random_element<R: Rng>(&self, closures: &[Vec<Vec<CVec>>], poly: &[CVec], rng: &mut R) -> CMat {
        let n = self.model.len();
        let mut a = linalg::zeros(self.total, self.total);
        let mut coef = || num_complex::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        for p in poly {
            let z = coef();
            let mut o = 0;
            for i in 0..n {
                let d = self.model.dim(i);
                let block = linalg::unvectorize(&p.rows(o, d * d).into_owned(), d, d);
                let mut view = a.view_mut((self.offsets[i], self.offsets[i]), (d, d));
                view += block * z;
                o += d * d;
            }
        }
        for (i, row) in closures.iter().enumerate() {
            for (k, space) in row.iter().enumerate() {
                for w in space {
                    let z = coef();
                    let x = linalg::unvectorize(w, self.model.dim(k), self.model.dim(i));
                    let mut view = a.view_mut((self.offsets[k], self.offsets[i]), x.shape());
                    view += x * z;
                }
            }
        }
        a
    }

    /// Witness from the orbit of an eigenvector of a random element of the
    /// adjoint algebra, generated densely from the adjoint generators.
    fn adjoint_witness<R: Rng>(&self, rng: &mut R) -> Option<CMat> {
        let gens: Vec<CMat> = self.global().iter().map(|g| g.adjoint()).collect();
        let d = self.total;
        let mut words: Vec<CVec> = Vec::new();
        let mut queue = vec![linalg::identity(d)];
        linalg::try_extend_basis(&mut words, &linalg::vectorize(&queue[0]), RANK_TOL);
        while let Some(x) = queue.pop() {
            for g in &gens {
                let y = g * &x;
                if linalg::try_extend_basis(&mut words, &linalg::vectorize(&y), RANK_TOL) {
                    queue.push(linalg::unvectorize(words.last().unwrap(), d, d));
                }
            }
        }
        let mut a = linalg::zeros(d, d);
        for w in &words {
            let z = num_complex::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            a += linalg::unvectorize(w, d, d) * z;
        }
        for v in eigenvectors(&a) {
            let mut orbit = Vec::new();
            for w in &words {
                linalg::try_extend_basis(&mut orbit, &(linalg::unvectorize(w, d, d) * &v), RANK_TOL);
            }
            if orbit.len() < d {
                // orthogonal complement of an adjoint-invariant subspace
                let mut full = orbit.clone();
                let mut complement = Vec::new();
                for k in 0..d {
                    let mut e = CVec::zeros(d);
                    e[k] = c(1.0);
                    if linalg::try_extend_basis(&mut full, &e, RANK_TOL) {
                        complement.push(full.last().unwrap().clone());
                    }
                }
                return Some(columns(&complement, d));
            }
        }
        None
    }
}

fn columns(vs: &[CVec], rows: usize) -> CMat {
    let mut m = linalg::zeros(rows, vs.len());
    for (k, v) in vs.iter().enumerate() {
        m.set_column(k, v);
    }
    m
}

/// Unit eigenvectors of a general matrix, one per computed eigenvalue.
fn eigenvectors(a: &CMat) -> Vec<CVec> {
    let n = a.nrows();
    let scale = linalg::op_norm(a).max(1.0);
    linalg::eigenvalues(a)
        .into_iter()
        .filter_map(|z| {
            let shifted = a - linalg::identity(n) * z;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t?;
            let (k, smin) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (k, s)| if *s < acc.1 { (k, *s) } else { acc });
            (smin <= 1e-6 * scale).then(|| vt.row(k).adjoint())
        })
        .collect()
}

/// `max_X ‖(Id - P) X P‖ / (1 + ‖X‖)` for the projector onto the columns of `basis`.
pub fn invariance_residual(generators: &[CMat], basis: &CMat) -> f64 {
    if basis.ncols() == 0 {
        return 0.0;
    }
    let p = basis * basis.adjoint();
    let q = linalg::identity(p.nrows()) - &p;
    generators
        .iter()
        .map(|x| linalg::op_norm(&(&q * x * &p)) / (1.0 + linalg::op_norm(x)))
        .fold(0.0, f64::max)
}

/// Irreducibility of the continuous-time walk, from the algebra generated by
/// `G` and the `S_i^j`.
pub fn check_irreducible(model: &WalkModel) -> IrreducibilityVerdict {
    Generators::new(model, true).verdict()
}

/// Irreducibility of the discrete jump map `Φ(μ) = Σ S_i^j μ S_i^j†`, from
/// the algebra generated by the `S_i^j` alone.
pub fn check_discrete_irreducible(model: &WalkModel) -> IrreducibilityVerdict {
    Generators::new(model, false).verdict()
}

/// The generators used by [`check_irreducible`], as `D × D` matrices.
pub fn global_generators(model: &WalkModel, with_effective: bool) -> Vec<CMat> {
    Generators::new(model, with_effective).global()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrichotomyCase {
    /// Sure return from every state; infinite expected occupation.
    Recurrent,
    /// Transient, with return probability bounded away from one.
    TransientUniform,
    /// Transient, with sure return from some non-faithful states.
    TransientQuantum,
}

#[derive(Debug, Clone)]
pub struct ClassificationReport {
    pub case: TrichotomyCase,
    pub base_vertex: VertexId,
    /// Spectral radius of `𝔓_{j,j}`.
    pub lambda: f64,
    /// Density matrix with `𝔓_{j,j}(ρ') = λρ'`.
    pub perron_state: CMat,
    pub perron_min_eig: f64,
    pub perron_residual: f64,
    /// `M = 𝔓_{j,j}*(Id)`: `Tr(ρM)` is the return probability from `ρ`.
    pub m: CMat,
    /// Eigenvalues of `M`, ascending.
    pub m_spectrum: Vec<f64>,
    /// Unit eigenvectors of `M` in the columns, matching `m_spectrum`.
    pub m_eigenvectors: CMat,
    /// Projector onto the eigenspace of `M` at eigenvalues `≥ 1 - eps`.
    pub sure_return_projector: CMat,
    pub eps_spec: f64,
    pub algebra_dim: usize,
    pub diagnostics: PassageDiagnostics,
    pub map: SuperOp,
}

impl ClassificationReport {
    pub fn m_max(&self) -> f64 {
        self.m_spectrum.last().copied().unwrap_or(0.0)
    }

    pub fn m_min(&self) -> f64 {
        self.m_spectrum.first().copied().unwrap_or(0.0)
    }

    /// `|v⟩⟨v|` for the top eigenvector `v` of `M`.
    pub fn m_top_projector(&self) -> CMat {
        let v = self.m_eigenvectors.column(self.m_eigenvectors.ncols() - 1).into_owned();
        &v * v.adjoint()
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "case": self.case,
            "base_vertex": self.base_vertex,
            "lambda": self.lambda,
            "perron_state": JsonMatrix::from_matrix(&self.perron_state),
            "perron_min_eig": self.perron_min_eig,
            "perron_residual": self.perron_residual,
            "m": JsonMatrix::from_matrix(&self.m),
            "m_spectrum": self.m_spectrum,
            "m_eigenvectors": JsonMatrix::from_matrix(&self.m_eigenvectors),
            "m_top_projector": JsonMatrix::from_matrix(&self.m_top_projector()),
            "sure_return_projector": JsonMatrix::from_matrix(&self.sure_return_projector),
            "passage_map": JsonMatrix::from_matrix(self.map.matrix()),
            "passage_spectrum": complex_pairs(&linalg::eigenvalues(self.map.matrix())),
            "algebra_dim": self.algebra_dim,
            "diagnostics": self.diagnostics,
            "tolerances": { "eps_spec": self.eps_spec, "series_tol": self.diagnostics.tol },
        })
    }
}

fn complex_pairs(zs: &[num_complex::Complex64]) -> Vec<[f64; 2]> {
    zs.iter().map(|z| [z.re, z.im]).collect()
}

/// `𝔓*(Id)` from the vectorized map: `M_{ba} = Tr 𝔓(E_ab)`.
pub fn adjoint_identity(map: &SuperOp) -> CMat {
    linalg::hermitian_part(&map.apply_adjoint(&linalg::identity(map.target_dim())))
}

/// Perron eigenpair of a CP endomorphism: spectral radius from the dense
/// spectrum, eigenmatrix by shifted power iteration from the maximally
/// mixed state, with a null-space fallback.
pub fn perron_pair(map: &SuperOp) -> (f64, CMat, f64) {
    let d = map.source_dim();
    let m = map.matrix();
    let lambda = linalg::spectral_radius_dense(m);
    let residual = |rho: &CMat| linalg::op_norm(&(map.apply(rho) - rho * c(lambda)));
    let mut x = linalg::identity(d) / c(d as f64);
    for _ in 0..100_000 {
        let y = (&x + map.apply(&x)) * c(0.5);
        let tr = linalg::trace_re(&y);
        if !(tr > 0.0) {
            break;
        }
        let y = linalg::hermitian_part(&(y / c(tr)));
        let delta = (&y - &x).norm();
        x = y;
        if delta < 1e-14 {
            break;
        }
    }
    let r = residual(&x);
    if r <= 1e-9 {
        return (lambda, x, r);
    }
    let shifted = m - linalg::identity(d * d) * c(lambda);
    if let Some(vt) = shifted.svd(false, true).v_t {
        let k = vt.nrows() - 1;
        let svd = (m - linalg::identity(d * d) * c(lambda)).svd(false, false);
        let kmin = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((k, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc })
            .0;
        let v = vt.row(kmin).adjoint();
        let mut rho = linalg::unvectorize(&v, d, d);
        // remove the arbitrary phase so the eigenmatrix is Hermitian with positive trace
        let tr = rho.trace();
        if tr.norm() > 0.0 {
            rho /= tr;
        }
        let rho = linalg::hermitian_part(&rho);
        let rr = residual(&rho);
        if rr < r {
            return (lambda, rho, rr);
        }
    }
    (lambda, x, r)
}

/// Trichotomy class of an irreducible walk, decided at base vertex `j`.
pub fn classify_trichotomy(model: &WalkModel, j: usize, eps_spec: f64) -> Result<ClassificationReport> {
    let verdict = check_irreducible(model);
    if !verdict.irreducible {
        return Err(WalkError::Reducible);
    }
    let kernel = passage::jump_kernel(model)?;
    classify_with(model, &kernel, j, eps_spec, verdict.algebra_dim)
}

/// Classification at `j` for a model already known to be irreducible.
pub fn classify_with(
    model: &WalkModel,
    kernel: &JumpKernel,
    j: usize,
    eps_spec: f64,
    algebra_dim: usize,
) -> Result<ClassificationReport> {
    if !(eps_spec > 0.0 && eps_spec < 1.0) {
        return Err(WalkError::InvalidArgument(format!("eps_spec must lie in (0, 1), got {eps_spec}")));
    }
    if kernel.dwell(j).is_none() {
        return Err(WalkError::NonEscaping {
            vertex: model.id(j).to_string(),
            eigenvalue: linalg::spectral_abscissa(model.effective(j)).1,
        });
    }
    let passage = passage::first_passage_with(kernel, j, j, PassageOptions::default())?;
    let (lambda, perron_state, perron_residual) = perron_pair(&passage.map);
    let m = adjoint_identity(&passage.map);
    let (m_spectrum, m_eigenvectors) = linalg::hermitian_eigen(&m);
    let d = model.dim(j);
    let mut sure_return_projector = linalg::zeros(d, d);
    for (k, &ev) in m_spectrum.iter().enumerate() {
        if ev >= 1.0 - eps_spec {
            let v = m_eigenvectors.column(k).into_owned();
            sure_return_projector += &v * v.adjoint();
        }
    }
    let m_max = m_spectrum.last().copied().unwrap_or(0.0);
    let case = if lambda >= 1.0 - eps_spec {
        TrichotomyCase::Recurrent
    } else if m_max >= 1.0 - eps_spec {
        TrichotomyCase::TransientQuantum
    } else {
        TrichotomyCase::TransientUniform
    };
    Ok(ClassificationReport {
        case,
        base_vertex: model.id(j).clone(),
        lambda,
        perron_min_eig: linalg::min_eigenvalue(&perron_state),
        perron_state,
        perron_residual,
        m,
        m_spectrum,
        m_eigenvectors,
        sure_return_projector,
        eps_spec,
        algebra_dim,
        diagnostics: passage.diagnostics,
        map: passage.map,
    })
}

/// Classifications at every vertex; recurrence must agree across them.
pub fn classify_all(model: &WalkModel, eps_spec: f64) -> Result<Vec<ClassificationReport>> {
    let verdict = check_irreducible(model);
    if !verdict.irreducible {
        return Err(WalkError::Reducible);
    }
    let kernel = passage::jump_kernel(model)?;
    (0..model.len()).into_par_iter().map(|j| classify_with(model, &kernel, j, eps_spec, verdict.algebra_dim)).collect()
}

impl TrichotomyCase {
    pub fn is_recurrent(self) -> bool {
        self == TrichotomyCase::Recurrent
    }
}

/// Case of the whole walk from per-vertex reports. Recurrence is a property
/// of the walk, while sure return from some state needs to happen at only
/// one vertex.
pub fn walk_case(reports: &[ClassificationReport]) -> Option<TrichotomyCase> {
    let first = reports.first()?;
    Some(if first.case.is_recurrent() {
        TrichotomyCase::Recurrent
    } else if reports.iter().any(|r| r.case == TrichotomyCase::TransientQuantum) {
        TrichotomyCase::TransientQuantum
    } else {
        TrichotomyCase::TransientUniform
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnExtremes {
    pub min: f64,
    pub max: f64,
    pub argmin: CMat,
    pub argmax: CMat,
}

/// Smallest and largest return probability to `i` over initial states at
/// `i`, attained at the extreme eigenvectors of `M = 𝔓_{i,i}*(Id)`.
pub fn return_probability_extremes(model: &WalkModel, i: usize) -> Result<ReturnExtremes> {
    if !check_irreducible(model).irreducible {
        return Err(WalkError::Reducible);
    }
    let kernel = passage::jump_kernel(model)?;
    let map = passage::first_passage_with(&kernel, i, i, PassageOptions::default())?.map;
    let (values, vectors) = linalg::hermitian_eigen(&adjoint_identity(&map));
    let pure = |k: usize| linalg::pure_state(&vectors.column(k).into_owned());
    let last = values.len() - 1;
    Ok(ReturnExtremes { min: values[0], max: values[last], argmin: pure(0), argmax: pure(last) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowPoint {
    pub window: i64,
    pub value: f64,
    /// Change from the previous window of the study.
    pub increment: Option<f64>,
}

/// Evaluates `f` on growing truncation windows.
pub fn window_study(windows: &[i64], f: impl Fn(i64) -> Result<f64>) -> Result<Vec<WindowPoint>> {
    let mut out: Vec<WindowPoint> = Vec::with_capacity(windows.len());
    for &w in windows {
        let value = f(w)?;
        let increment = out.last().map(|p| value - p.value);
        out.push(WindowPoint { window: w, value, increment });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{build_walk, classical_embed, VertexSpace, WalkSpec};
    use crate::random;

    /// `span{(1, i)|1⟩, (1, -i)|2⟩}`: `G_k` acts on `(1, ±i)` by the scalar
    /// `-1/2 ± i` and the swap maps `(1, i)` to `i(1, -i)`.
    fn example_2_6_invariant_plane() -> CMat {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let i = num_complex::Complex64::i();
        let mut v = linalg::zeros(4, 2);
        v[(0, 0)] = c(s);
        v[(1, 0)] = i * s;
        v[(2, 1)] = c(s);
        v[(3, 1)] = -i * s;
        v
    }

    #[test]
    fn example_2_6_is_reducible_over_complex_spaces() {
        let m = fixtures::ex2_6();
        let plane = example_2_6_invariant_plane();
        assert!(invariance_residual(&global_generators(&m, true), &plane) < 1e-15);
        let cont = check_irreducible(&m);
        assert!(!cont.irreducible);
        assert_eq!(cont.algebra_dim, 8);
        assert_eq!(cont.witness.ncols(), 2);
        assert!(cont.witness_residual.unwrap() <= WITNESS_TOL);
        let disc = check_discrete_irreducible(&m);
        assert!(!disc.irreducible);
        assert_eq!(disc.algebra_dim, 4);
        assert!(disc.witness.ncols() > 0 && disc.witness.ncols() < 4);
        assert!(disc.witness_residual.unwrap() <= WITNESS_TOL);
    }

    #[test]
    fn scalar_and_quantum_fixtures_are_irreducible() {
        let two = fixtures::ex3_4_1();
        assert!(check_irreducible(&two).irreducible);
        assert!(check_discrete_irreducible(&two).irreducible);
        let q = fixtures::ex3_4_3(30);
        let v = check_irreducible(&q);
        assert!(v.irreducible);
        assert_eq!(v.algebra_dim, 32 * 32);
    }

    fn two_copies() -> WalkModel {
        let mut spec = WalkSpec::default();
        for k in 0..4 {
            spec.vertices.push(VertexSpace { id: VertexId::from(k), dim: 1 });
            spec.effective.insert(VertexId::from(k), linalg::real_matrix(1, 1, &[-0.5]));
        }
        let one = linalg::real_matrix(1, 1, &[1.0]);
        for (a, b) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            spec.jumps.push((VertexId::from(a), VertexId::from(b), one.clone()));
        }
        build_walk(&spec).unwrap()
    }

    #[test]
    fn disconnected_copies_are_reducible() {
        let m = two_copies();
        let v = check_irreducible(&m);
        assert!(!v.irreducible);
        assert_eq!(v.algebra_dim, 8);
        assert_eq!(v.witness.ncols(), 2);
        assert!(v.witness_residual.unwrap() <= WITNESS_TOL);
        // the witness spans one copy: its support is {0,1} or {2,3}
        let p = &v.witness * v.witness.adjoint();
        let first = p[(0, 0)].re + p[(1, 1)].re;
        let second = p[(2, 2)].re + p[(3, 3)].re;
        assert!((first - 2.0).abs() < 1e-9 || (second - 2.0).abs() < 1e-9);
        assert!(matches!(classify_trichotomy(&m, 0, DEFAULT_EPS), Err(WalkError::Reducible)));
    }

    #[test]
    fn jumpless_walk_is_discretely_reducible() {
        let m = classical_embed(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let v = check_discrete_irreducible(&m);
        assert!(!v.irreducible);
        assert!(v.witness_residual.unwrap() <= WITNESS_TOL);
    }

    #[test]
    fn adjoint_fallback_finds_a_witness() {
        // single vertex, G upper triangular: e1 spans the only invariant line
        let mut spec = WalkSpec::default();
        spec.vertices.push(VertexSpace { id: VertexId::from(0), dim: 2 });
        spec.effective.insert(VertexId::from(0), linalg::real_matrix(2, 2, &[-1.0, 1.0, 0.0, -1.0]));
        spec.tolerance = Some(10.0);
        let m = build_walk(&spec).unwrap();
        let v = check_irreducible(&m);
        assert!(!v.irreducible && v.witness.ncols() == 1);
        assert!(v.witness_residual.unwrap() <= WITNESS_TOL);
        assert!((v.witness[(0, 0)].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixture_trichotomy() {
        let r1 = classify_trichotomy(&fixtures::ex3_4_1(), 0, DEFAULT_EPS).unwrap();
        assert_eq!(r1.case, TrichotomyCase::Recurrent);
        assert!((r1.lambda - 1.0).abs() < 1e-10);
        assert!(r1.perron_min_eig > 0.0);

        let w = fixtures::ex3_4_2(30);
        let r2 = classify_trichotomy(&w, w.resolve("0").unwrap(), DEFAULT_EPS).unwrap();
        assert_eq!(r2.case, TrichotomyCase::TransientUniform);
        assert!((r2.lambda - 0.5).abs() < 1e-6);
        assert!((r2.m_max() - 0.5).abs() < 1e-6);

        let q = fixtures::ex3_4_3(30);
        let r3 = classify_trichotomy(&q, q.resolve("1").unwrap(), DEFAULT_EPS).unwrap();
        assert_eq!(r3.case, TrichotomyCase::TransientQuantum);
        assert!(r3.lambda < 1.0 - 1e-3);
        assert!((r3.m_max() - 1.0).abs() < 1e-6);
        assert!((r3.m_top_projector() - linalg::diag(&[0.0, 1.0])).norm() < 1e-6);
        // diagonal action [[1/6, 4/5], [1/6, 1/5]] has Perron root (11 + √481)/60
        let expected = (11.0 + 481f64.sqrt()) / 60.0;
        assert!((r3.lambda - expected).abs() < 1e-6, "{}", r3.lambda);
        assert!(r3.perron_residual < 1e-9);
    }

    #[test]
    fn return_extremes() {
        let e = return_probability_extremes(&fixtures::ex3_4_1(), 0).unwrap();
        assert!((e.min - 1.0).abs() < 1e-10 && (e.max - 1.0).abs() < 1e-10);
        let w = fixtures::ex3_4_2(30);
        let e = return_probability_extremes(&w, w.resolve("0").unwrap()).unwrap();
        assert!((e.min - 0.5).abs() < 1e-6 && (e.max - 0.5).abs() < 1e-6);
        let q = fixtures::ex3_4_3(30);
        let e = return_probability_extremes(&q, q.resolve("1").unwrap()).unwrap();
        assert!((e.min - 1.0 / 3.0).abs() < 1e-6 && (e.max - 1.0).abs() < 1e-6);
        assert!((e.argmin[(0, 0)].re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn base_vertex_independence_on_fixtures() {
        let expected = [TrichotomyCase::Recurrent, TrichotomyCase::TransientUniform, TrichotomyCase::TransientQuantum];
        for (m, case) in [fixtures::ex3_4_1(), fixtures::ex3_4_2(8), fixtures::ex3_4_3(12)].iter().zip(expected) {
            let reports = classify_all(m, DEFAULT_EPS).unwrap();
            assert!(reports.windows(2).all(|w| w[0].case.is_recurrent() == w[1].case.is_recurrent()));
            assert_eq!(walk_case(&reports), Some(case));
        }
        // only the two-dimensional site sees sure return
        let q = fixtures::ex3_4_3(12);
        let reports = classify_all(&q, DEFAULT_EPS).unwrap();
        for (j, r) in reports.iter().enumerate() {
            let quantum = r.case == TrichotomyCase::TransientQuantum;
            assert_eq!(quantum, q.dim(j) == 2, "vertex {}", q.id(j));
        }
    }

    #[test]
    fn recurrent_perron_state_is_faithful() {
        let mut rng = rng_for(5, 0);
        let m = random::walk(&mut rng, &random::WalkShape { vertices: 3, max_dim: 3, ..Default::default() });
        let reports = classify_all(&m, DEFAULT_EPS).unwrap();
        for r in reports {
            assert_eq!(r.case, TrichotomyCase::Recurrent);
            assert!(r.perron_min_eig > 1e-9);
            assert!(r.perron_residual < 1e-9);
        }
    }

    /// Classical return probability from the embedded jump chain:
    /// `h = P_{·j} + P_{·,¬j} h` for hitting `j`, then one step from `j`.
    fn classical_return(q: &[Vec<f64>], j: usize) -> f64 {
        let n = q.len();
        let rate = |i: usize| -> f64 { (0..n).filter(|&k| k != i).map(|k| q[i][k]).sum() };
        let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let m = others.len();
        let mut a = nalgebra::DMatrix::<f64>::identity(m, m);
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        for (r, &i) in others.iter().enumerate() {
            let qi = rate(i);
            if qi == 0.0 {
                continue;
            }
            b[r] = q[i][j] / qi;
            for (s, &k) in others.iter().enumerate() {
                if k != i {
                    a[(r, s)] -= q[i][k] / qi;
                }
            }
        }
        let h = a.lu().solve(&b).unwrap();
        let qj = rate(j);
        others.iter().enumerate().map(|(r, &k)| q[j][k] / qj * h[r]).sum()
    }

    #[test]
    fn scalar_models_follow_classical_recurrence() {
        let mut rng = rng_for(77, 0);
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let m = random::walk(
                &mut rng,
                &random::WalkShape { vertices: n, max_dim: 1, hamiltonian_scale: 0.0, leak_probability: 0.3, ..Default::default() },
            );
            let q = crate::model::classical_rates(&m);
            let report = classify_trichotomy(&m, 0, DEFAULT_EPS).unwrap();
            assert_ne!(report.case, TrichotomyCase::TransientQuantum);
            if !m.is_leaky() {
                let q = q.expect("conservative scalar model has classical rates");
                let f = classical_return(&q, 0);
                assert!((report.lambda - f).abs() < 1e-9);
                assert_eq!(report.case, TrichotomyCase::Recurrent);
            }
        }
    }

    #[test]
    fn window_study_reports_increments() {
        let pts = window_study(&[5, 10], |w| {
            let m = fixtures::ex3_4_2(w);
            let z = m.resolve("0")?;
            Ok(classify_trichotomy(&m, z, DEFAULT_EPS)?.lambda)
        })
        .unwrap();
        assert_eq!(pts[0].increment, None);
        assert!(pts[1].increment.unwrap() >= 0.0);
        assert!((pts[1].value - 0.5).abs() < 1e-4);
    }
}
