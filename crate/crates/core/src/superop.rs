//! Linear maps between matrix spaces in column-stacked vectorized form.

use serde::Serialize;

use crate::linalg::{self, c, CMat, CVec};

/// A linear map `X ↦ 𝒯(X)` from `source × source` to `target × target`
/// matrices, stored as the `target² × source²` matrix acting on `vec X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOp {
    source: usize,
    target: usize,
    matrix: CMat,
    kraus: Option<Vec<CMat>>,
}

/// Positivity and trace diagnostics of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub choi_min_eigenvalue: f64,
    /// Largest eigenvalue of `𝒯*(Id)`; at most one for trace-nonincreasing maps.
    pub adjoint_identity_max: f64,
}

impl Certificate {
    pub fn completely_positive(&self, tol: f64) -> bool {
        self.choi_min_eigenvalue >= -tol
    }

    pub fn trace_nonincreasing(&self, tol: f64) -> bool {
        self.adjoint_identity_max <= 1.0 + tol
    }
}

impl SuperOp {
    pub fn from_matrix(source: usize, target: usize, matrix: CMat) -> Self {
        assert_eq!(matrix.shape(), (target * target, source * source), "superoperator shape");
        SuperOp { source, target, matrix, kraus: None }
    }

    pub fn zero(source: usize, target: usize) -> Self {
        Self::from_matrix(source, target, linalg::zeros(target * target, source * source))
    }

    pub fn identity(d: usize) -> Self {
        Self::from_matrix(d, d, linalg::identity(d * d))
    }

    /// `X ↦ Σ_k A_k X A_k†`.
    pub fn from_kraus(ops: &[CMat]) -> Self {
        assert!(!ops.is_empty(), "at least one Kraus operator");
        let (target, source) = ops[0].shape();
        let mut m = linalg::zeros(target * target, source * source);
        for a in ops {
            assert_eq!(a.shape(), (target, source), "Kraus operators must share a shape");
            m += linalg::kron(&a.conjugate(), a);
        }
        SuperOp { source, target, matrix: m, kraus: Some(ops.to_vec()) }
    }

    /// `X ↦ A X B†`.
    pub fn sandwich(a: &CMat, b: &CMat) -> Self {
        Self::from_matrix(a.ncols(), a.nrows(), linalg::kron(&b.conjugate(), a))
    }

    pub fn source_dim(&self) -> usize {
        self.source
    }

    pub fn target_dim(&self) -> usize {
        self.target
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn kraus(&self) -> Option<&[CMat]> {
        self.kraus.as_deref()
    }

    pub fn apply(&self, x: &CMat) -> CMat {
        assert_eq!(x.shape(), (self.source, self.source), "argument shape");
        let v: CVec = &self.matrix * linalg::vectorize(x);
        linalg::unvectorize(&v, self.target, self.target)
    }

    /// Heisenberg-picture map, `Tr(Y† 𝒯(X)) = Tr(𝒯*(Y)† X)`.
    pub fn adjoint(&self) -> SuperOp {
        Self::from_matrix(self.target, self.source, self.matrix.adjoint())
    }

    pub fn apply_adjoint(&self, y: &CMat) -> CMat {
        assert_eq!(y.shape(), (self.target, self.target), "argument shape");
        let v: CVec = self.matrix.adjoint() * linalg::vectorize(y);
        linalg::unvectorize(&v, self.source, self.source)
    }

    /// `self ∘ first`.
    pub fn compose(&self, first: &SuperOp) -> SuperOp {
        assert_eq!(first.target, self.source, "composition shape");
        Self::from_matrix(first.source, self.target, &self.matrix * &first.matrix)
    }

    pub fn add(&self, other: &SuperOp) -> SuperOp {
        assert_eq!((self.source, self.target), (other.source, other.target));
        Self::from_matrix(self.source, self.target, &self.matrix + &other.matrix)
    }

    pub fn scale(&self, s: f64) -> SuperOp {
        Self::from_matrix(self.source, self.target, &self.matrix * c(s))
    }

    /// `Σ_{ab} E_ab ⊗ 𝒯(E_ab)`, positive semidefinite iff the map is CP.
    pub fn choi(&self) -> CMat {
        let (s, t) = (self.source, self.target);
        let mut choi = linalg::zeros(s * t, s * t);
        for a in 0..s {
            for b in 0..s {
                let col = self.matrix.column(a + b * s);
                for p in 0..t {
                    for q in 0..t {
                        choi[(a * t + p, b * t + q)] = col[p + q * t];
                    }
                }
            }
        }
        choi
    }

    pub fn certificate(&self) -> Certificate {
        let choi = linalg::hermitian_part(&self.choi());
        let adj = linalg::hermitian_part(&self.apply_adjoint(&linalg::identity(self.target)));
        Certificate {
            choi_min_eigenvalue: linalg::min_eigenvalue(&choi),
            adjoint_identity_max: linalg::max_eigenvalue(&adj),
        }
    }

    /// Spectral radius of the map as an operator on the source space.
    pub fn spectral_radius(&self) -> f64 {
        assert_eq!(self.source, self.target, "spectral radius needs an endomorphism");
        linalg::spectral_radius_dense(&self.matrix)
    }
}
