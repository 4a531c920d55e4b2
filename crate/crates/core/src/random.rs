//! Random models and states for property tests and fuzzing.

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{self, c, CMat};
use crate::model::{build_walk, BlockState, VertexId, VertexSpace, WalkModel, WalkSpec};

#[derive(Debug, Clone)]
pub struct WalkShape {
    pub vertices: usize,
    pub max_dim: usize,
    /// Probability of each extra directed edge beyond the spanning cycle.
    pub edge_probability: f64,
    /// Scale of the Hamiltonian entries.
    pub hamiltonian_scale: f64,
    /// Probability that a vertex also leaks out of the graph.
    pub leak_probability: f64,
}

impl Default for WalkShape {
    fn default() -> Self {
        WalkShape { vertices: 3, max_dim: 2, edge_probability: 0.4, hamiltonian_scale: 1.0, leak_probability: 0.0 }
    }
}

pub fn complex_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
    })
}

pub fn hermitian<R: Rng>(rng: &mut R, d: usize, scale: f64) -> CMat {
    linalg::hermitian_part(&complex_matrix(rng, d, d, scale))
}

pub fn density_matrix<R: Rng>(rng: &mut R, d: usize) -> CMat {
    let a = complex_matrix(rng, d, d, 1.0);
    let rho = &a * a.adjoint();
    let tr = linalg::trace_re(&rho);
    rho / c(tr)
}

pub fn block_state<R: Rng>(rng: &mut R, model: &WalkModel) -> BlockState {
    let weights: Vec<f64> = (0..model.len()).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let blocks = (0..model.len())
        .map(|i| density_matrix(rng, model.dim(i)) * c(weights[i] / total))
        .collect();
    BlockState::new(model, blocks).expect("random state is valid")
}

/// A random conservative walk whose graph contains the cycle
/// `0 → 1 → … → n-1 → 0`, so it is strongly connected.
pub fn walk<R: Rng>(rng: &mut R, shape: &WalkShape) -> WalkModel {
    let n = shape.vertices.max(1);
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(1..=shape.max_dim.max(1))).collect();
    let mut spec = WalkSpec::default();
    for (i, &d) in dims.iter().enumerate() {
        spec.vertices.push(VertexSpace { id: VertexId::from(i as i64), dim: d });
        spec.hamiltonians.insert(VertexId::from(i as i64), hermitian(rng, d, shape.hamiltonian_scale));
    }
    for (i, &d) in dims.iter().enumerate() {
        if rng.random_bool(shape.leak_probability.clamp(0.0, 1.0)) {
            let scale = rng.random_range(0.1..0.6);
            let a = complex_matrix(rng, d, d, scale);
            spec.leaks.insert(VertexId::from(i as i64), a.adjoint() * a);
        }
    }
    if n > 1 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let on_cycle = j == (i + 1) % n;
                if on_cycle || rng.random_bool(shape.edge_probability) {
                    let scale = rng.random_range(0.3..1.0);
                    spec.jumps.push((
                        VertexId::from(i as i64),
                        VertexId::from(j as i64),
                        complex_matrix(rng, dims[j], dims[i], scale),
                    ));
                }
            }
        }
    }
    build_walk(&spec).expect("random walk is valid")
}

/// A random classical chain (all spaces one-dimensional) on a strongly
/// connected graph.
pub fn scalar_walk<R: Rng>(rng: &mut R, vertices: usize) -> WalkModel {
    walk(rng, &WalkShape { vertices, max_dim: 1, hamiltonian_scale: 0.0, ..Default::default() })
}
