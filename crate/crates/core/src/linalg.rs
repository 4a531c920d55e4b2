//! Dense complex linear algebra helpers shared by every module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Vectorization is column
//! stacking, which is nalgebra's native storage order, so that
//! `vec(A X B†) = (conj(B) ⊗ A) vec(X)` holds project-wide.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

#[inline]
pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real part of the trace.
pub fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

/// `A X A†`.
pub fn sandwich(a: &CMat, x: &CMat) -> CMat {
    a * x * a.adjoint()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5)
}

/// Frobenius norm of `m - m†`.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Column-stacked vectorization.
pub fn vectorize(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "vector length does not match shape");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(m: &CMat) -> CMat {
    if m.is_empty() {
        return m.clone();
    }
    m.clone().exp()
}

/// `e^{tG}` for a scalar time.
pub fn exp_scaled(g: &CMat, t: f64) -> CMat {
    expm(&(g * c(t)))
}

/// Eigenvalues of a general complex matrix via its Schur form.
///
/// Francis iterations can stall on spectra symmetric under `λ ↦ -λ` (walks
/// on bipartite graphs), so a capped attempt is retried on shifted copies
/// `A + σ‖A‖ Id`.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let shifts = [
        Complex64::new(0.0, 0.0),
        Complex64::new(0.1234, 0.0),
        Complex64::new(-0.3137, 0.2113),
        Complex64::new(0.0, 0.5771),
        Complex64::new(0.7043, -0.1618),
    ];
    for shift in shifts {
        let sigma = shift * scale;
        let a = m + identity(n) * sigma;
        if let Some(schur) = a.try_schur(f64::EPSILON, 100 * n.max(10)) {
            let (_, t) = schur.unpack();
            return t.diagonal().iter().map(|z| z - sigma).collect();
        }
    }
    panic!("Schur iteration failed to converge on a {n}x{n} matrix for every shift");
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(m: &CMat) -> (f64, Complex64) {
    eigenvalues(m)
        .into_iter()
        .map(|z| (z.re, z))
        .fold((f64::NEG_INFINITY, Complex64::new(f64::NEG_INFINITY, 0.0)), |acc, x| {
            if x.0 > acc.0 {
                x
            } else {
                acc
            }
        })
}

/// Largest modulus of the spectrum.
pub fn spectral_radius_dense(m: &CMat) -> f64 {
    eigenvalues(m).into_iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending,
/// eigenvectors in the matching columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.first().cloned().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigen(m).0.last().cloned().unwrap_or(0.0)
}

/// Density matrix `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
pub fn pure_state(psi: &CVec) -> CMat {
    let n = psi.norm_squared();
    psi * psi.adjoint() / c(n)
}

pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = zeros(n, n);
    for (k, v) in values.iter().enumerate() {
        m[(k, k)] = c(*v);
    }
    m
}

/// Real matrix from row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMat {
    assert_eq!(entries.len(), rows * cols);
    CMat::from_row_iterator(rows, cols, entries.iter().map(|x| c(*x)))
}

/// Modified Gram–Schmidt step: orthogonalize `v` against the orthonormal
/// vectors in `basis` (twice, for stability) and return the residual.
pub fn orthogonalize(basis: &[CVec], v: &CVec) -> CVec {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let proj = q.dotc(&r);
            r.axpy(-proj, q, c(1.0));
        }
    }
    r
}

/// Grows `basis` with `v` if it is independent at relative tolerance `tol`.
pub fn try_extend_basis(basis: &mut Vec<CVec>, v: &CVec, tol: f64) -> bool {
    let scale = v.norm();
    if scale == 0.0 {
        return false;
    }
    let r = orthogonalize(basis, v);
    let rn = r.norm();
    if rn > tol * scale {
        basis.push(r / c(rn));
        true
    } else {
        false
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one quadrature node required");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[k] = 0.5 * (1.0 - x);
        nodes[n - 1 - k] = 0.5 * (1.0 + x);
        weights[k] = 0.5 * w;
        weights[n - 1 - k] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Trace norm of a Hermitian matrix (sum of absolute eigenvalues).
pub fn trace_norm_hermitian(m: &CMat) -> f64 {
    hermitian_eigen(m).0.iter().map(|x| x.abs()).sum()
}
