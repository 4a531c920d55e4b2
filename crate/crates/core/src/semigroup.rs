//! The Lindbladian restricted to block-diagonal states, its exponential, and
//! the truncated path-sum (Dyson) expansion used as an independent oracle.

use crate::error::{Result, WalkError};
use crate::linalg::{self, c, CMat, CVec};
use crate::model::{BlockState, WalkModel};

/// Vectorized generator on the block-diagonal sector. Block `i` occupies
/// rows `offset(i)..offset(i) + d_i²` of the state vector.
#[derive(Debug, Clone)]
pub struct BlockGenerator {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    matrix: CMat,
}

impl BlockGenerator {
    pub fn new(model: &WalkModel) -> Self {
        let dims = model.dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for d in &dims {
            offsets.push(total);
            total += d * d;
        }
        let mut matrix = linalg::zeros(total, total);
        for i in 0..model.len() {
            let d = dims[i];
            let g = model.effective(i);
            let id = linalg::identity(d);
            let drift = linalg::kron(&id, g) + linalg::kron(&g.conjugate(), &id);
            matrix.view_mut((offsets[i], offsets[i]), (d * d, d * d)).copy_from(&drift);
        }
        for jp in model.jumps() {
            let (di, dj) = (dims[jp.from], dims[jp.to]);
            let block = linalg::kron(&jp.op.conjugate(), &jp.op);
            let mut view = matrix.view_mut((offsets[jp.to], offsets[jp.from]), (dj * dj, di * di));
            view += block;
        }
        BlockGenerator { dims, offsets, matrix }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_vector(&self, state: &BlockState) -> CVec {
        let mut v = CVec::zeros(self.size());
        for (i, b) in state.blocks().iter().enumerate() {
            let d = self.dims[i];
            v.rows_mut(self.offsets[i], d * d).copy_from(&linalg::vectorize(b));
        }
        v
    }

    pub fn to_blocks(&self, v: &CVec) -> Vec<CMat> {
        self.dims
            .iter()
            .zip(&self.offsets)
            .map(|(&d, &off)| linalg::unvectorize(&v.rows(off, d * d).into_owned(), d, d))
            .collect()
    }

    /// `vec(Id)` for every block, the left null vector of a conservative
    /// generator.
    pub fn trace_functional(&self) -> CVec {
        let mut v = CVec::zeros(self.size());
        for (&d, &off) in self.dims.iter().zip(&self.offsets) {
            for k in 0..d {
                v[off + k * d + k] = c(1.0);
            }
        }
        v
    }

    /// `e^{tℒ}` as a matrix on the vectorized sector.
    pub fn propagator(&self, t: f64) -> Result<CMat> {
        if t < 0.0 || !t.is_finite() {
            return Err(WalkError::NegativeTime(t));
        }
        Ok(linalg::exp_scaled(&self.matrix, t))
    }
}

/// `ℒ(μ)` block by block: `G_i ρ(i) + ρ(i) G_i† + Σ_j R_j^i ρ(j) R_j^i†`.
pub fn lindblad_apply(model: &WalkModel, mu: &BlockState) -> BlockState {
    let blocks = (0..model.len())
        .map(|i| {
            let g = model.effective(i);
            let rho = mu.block(i);
            let mut out = g * rho + rho * g.adjoint();
            for jp in model.incoming(i) {
                out += linalg::sandwich(&jp.op, mu.block(jp.from));
            }
            out
        })
        .collect();
    BlockState::from_blocks(model, blocks).expect("shapes follow the model")
}

/// `e^{tℒ}(μ)`. On leaky models the result has total trace below one; the
/// deficit is the mass that escaped.
pub fn evolve(model: &WalkModel, mu: &BlockState, t: f64) -> Result<BlockState> {
    if t < 0.0 || !t.is_finite() {
        return Err(WalkError::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(mu.clone());
    }
    let gen = BlockGenerator::new(model);
    evolve_with(&gen, model, mu, t)
}

/// Same as [`evolve`] with a prebuilt generator.
pub fn evolve_with(gen: &BlockGenerator, model: &WalkModel, mu: &BlockState, t: f64) -> Result<BlockState> {
    if t == 0.0 {
        return Ok(mu.clone());
    }
    let v = gen.propagator(t)? * gen.to_vector(mu);
    let blocks = gen.to_blocks(&v).iter().map(linalg::hermitian_part).collect();
    BlockState::from_blocks(model, blocks)
}

/// Position law: entry `i` is `Tr ρ(i)`.
pub fn position_distribution(mu: &BlockState) -> Vec<f64> {
    mu.blocks().iter().map(linalg::trace_re).collect()
}

/// Upper bound on the path enumeration work of [`dyson_partial`].
pub const DYSON_BUDGET: u128 = 400_000_000;

#[derive(Debug, Clone)]
pub struct DysonExpansion {
    pub state: BlockState,
    /// `Σ_{n > n_max} (Ct)^n / n!`
    pub remainder_bound: f64,
    pub evaluations: u128,
}

/// Tail `Σ_{n > n_max} x^n / n!` of the exponential series.
pub fn exponential_tail(x: f64, n_max: usize) -> f64 {
    let mut term = 1.0;
    for n in 1..=n_max {
        term *= x / n as f64;
    }
    let mut sum = 0.0;
    let mut n = n_max + 1;
    loop {
        term *= x / n as f64;
        sum += term;
        if term <= 1e-18 * sum || term == 0.0 || n > n_max + 10_000 {
            break;
        }
        n += 1;
    }
    sum
}

/// Sums the contributions `T_t(ξ) ρ(i_0) T_t(ξ)†` of all paths with at most
/// `n_max` jumps. The ordered jump times are parametrized sequentially,
/// `t_{k+1} = t_k + (t - t_k) x_{k+1}` with `x ∈ [0,1]^n`, and integrated by
/// tensor Gauss–Legendre quadrature with `quad_points` nodes per axis.
pub fn dyson_partial(
    model: &WalkModel,
    mu: &BlockState,
    t: f64,
    n_max: usize,
    quad_points: usize,
) -> Result<DysonExpansion> {
    if t < 0.0 || !t.is_finite() {
        return Err(WalkError::NegativeTime(t));
    }
    if quad_points == 0 {
        return Err(WalkError::InvalidArgument("quad_points must be at least 1".into()));
    }
    let starts: Vec<usize> = (0..model.len()).filter(|&i| mu.block(i).norm() > 0.0).collect();

    // paths[k][v]: number of k-jump paths from the support ending at v
    let mut needed: u128 = 0;
    let mut count: Vec<u128> = vec![0; model.len()];
    for &i in &starts {
        count[i] = 1;
    }
    let q = quad_points as u128;
    let mut weight: u128 = 1;
    for k in 0..=n_max {
        let total: u128 = count.iter().sum();
        needed = needed.saturating_add(total.saturating_mul(weight));
        if needed > DYSON_BUDGET {
            return Err(WalkError::BudgetExceeded { what: format!("Dyson expansion to {n_max} jumps"), needed, limit: DYSON_BUDGET });
        }
        if k == n_max {
            break;
        }
        let mut next = vec![0u128; model.len()];
        for jp in model.jumps() {
            next[jp.to] = next[jp.to].saturating_add(count[jp.from]);
        }
        count = next;
        weight = weight.saturating_mul(q);
    }

    let (nodes, weights) = linalg::gauss_legendre(quad_points);
    let mut acc: Vec<CMat> = model.dims().into_iter().map(|d| linalg::zeros(d, d)).collect();
    let ctx = DysonCtx { model, t, n_max, nodes: &nodes, weights: &weights };
    for &i in &starts {
        ctx.descend(0, i, 0.0, 1.0, mu.block(i).clone(), &mut acc);
    }
    let acc = acc.iter().map(linalg::hermitian_part).collect();
    Ok(DysonExpansion {
        state: BlockState::from_blocks(model, acc)?,
        remainder_bound: exponential_tail(model.rate_constant() * t, n_max),
        evaluations: needed,
    })
}

struct DysonCtx<'a> {
    model: &'a WalkModel,
    t: f64,
    n_max: usize,
    nodes: &'a [f64],
    weights: &'a [f64],
}

impl DysonCtx<'_> {
    /// `x` is the unnormalized state just after the `depth`-th jump, taken at
    /// time `t_prev` while sitting at `vertex`.
    fn descend(&self, depth: usize, vertex: usize, t_prev: f64, weight: f64, x: CMat, acc: &mut [CMat]) {
        let g = self.model.effective(vertex);
        let span = self.t - t_prev;
        let free = linalg::exp_scaled(g, span);
        acc[vertex] += linalg::sandwich(&free, &x) * c(weight);
        if depth == self.n_max || self.model.outgoing(vertex).next().is_none() {
            return;
        }
        for (&node, &w) in self.nodes.iter().zip(self.weights) {
            let dt = span * node;
            let e = linalg::exp_scaled(g, dt);
            let y = linalg::sandwich(&e, &x);
            let wt = weight * span * w;
            for jp in self.model.outgoing(vertex) {
                self.descend(depth + 1, jp.to, t_prev + dt, wt, linalg::sandwich(&jp.op, &y), acc);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::SitedState;
    use crate::random;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_blocks(model: &WalkModel, p: &[f64]) -> BlockState {
        BlockState::new(model, p.iter().map(|x| linalg::real_matrix(1, 1, &[*x])).collect()).unwrap()
    }

    #[test]
    fn two_state_derivative() {
        let m = fixtures::ex3_4_1();
        let d = lindblad_apply(&m, &scalar_blocks(&m, &[1.0, 0.0]));
        assert!((d.block(0)[(0, 0)] - c(-1.0)).norm() < 1e-15);
        assert!((d.block(1)[(0, 0)] - c(1.0)).norm() < 1e-15);
        let stationary = lindblad_apply(&m, &scalar_blocks(&m, &[0.5, 0.5]));
        assert!(stationary.total_trace().abs() < 1e-15);
        assert!(stationary.blocks().iter().all(|b| b.norm() < 1e-15));
    }

    #[test]
    fn derivative_is_traceless() {
        let m = fixtures::ex2_6();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let mu = random::block_state(&mut rng, &m);
            assert!(lindblad_apply(&m, &mu).total_trace().abs() < 1e-12);
        }
    }

    #[test]
    fn generator_has_trace_functional_as_left_null_vector() {
        let m = fixtures::ex2_6();
        let gen = BlockGenerator::new(&m);
        let left = gen.trace_functional().transpose() * gen.matrix();
        assert!(left.norm() < 1e-12);
    }

    #[test]
    fn vectorized_generator_matches_direct_application() {
        let m = fixtures::ex3_4_3(4);
        let gen = BlockGenerator::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mu = random::block_state(&mut rng, &m);
        let direct = lindblad_apply(&m, &mu);
        let via = gen.to_blocks(&(gen.matrix() * gen.to_vector(&mu)));
        for (a, b) in direct.blocks().iter().zip(&via) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn two_state_closed_form() {
        let m = fixtures::ex3_4_1();
        let mu = scalar_blocks(&m, &[1.0, 0.0]);
        let out = evolve(&m, &mu, 1.0).unwrap();
        let p = position_distribution(&out);
        let expected = 0.5 * (1.0 + (-2.0f64).exp());
        assert!((p[0] - expected).abs() < 1e-13);
        assert!((p[0] - 0.567_667_6).abs() < 1e-7);
        assert!((p[1] - 0.43233).abs() < 1e-5);
    }

    #[test]
    fn zero_time_is_identity_and_negative_time_errors() {
        let m = fixtures::ex2_6();
        let mu = BlockState::uniform(&m);
        assert_eq!(evolve(&m, &mu, 0.0).unwrap(), mu);
        assert!(matches!(evolve(&m, &mu, -1.0), Err(WalkError::NegativeTime(_))));
    }

    #[test]
    fn position_law_examples() {
        let m = fixtures::ex3_4_3(5);
        let s = SitedState::basis(&m, 1, 1);
        let p = position_distribution(&BlockState::sited(&m, &s));
        assert_eq!(p[1], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
        let four = crate::model::classical_embed(&[
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![0.0, -1.0, 1.0, 0.0],
            vec![0.0, 0.0, -1.0, 1.0],
            vec![1.0, 0.0, 0.0, -1.0],
        ])
        .unwrap();
        let p = position_distribution(&BlockState::uniform(&four));
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn random_model_evolution_is_a_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random::walk(&mut rng, &random::WalkShape { vertices: 3, max_dim: 3, ..Default::default() });
        let mu = random::block_state(&mut rng, &m);
        let out = evolve(&m, &mu, 0.7).unwrap();
        assert!((out.total_trace() - 1.0).abs() < 1e-10);
        assert!(out.min_block_eigenvalue() > -1e-10);
    }

    #[test]
    fn zero_jump_dyson_term() {
        let m = fixtures::ex2_6();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = random::block_state(&mut rng, &m);
        let out = dyson_partial(&m, &mu, 0.4, 0, 4).unwrap();
        for i in 0..2 {
            let e = linalg::exp_scaled(m.effective(i), 0.4);
            let expected = linalg::sandwich(&e, mu.block(i));
            assert!((out.state.block(i) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn dyson_matches_evolution_on_two_state_chain() {
        let m = fixtures::ex3_4_1();
        let mu = scalar_blocks(&m, &[1.0, 0.0]);
        let dy = dyson_partial(&m, &mu, 0.1, 6, 16).unwrap();
        let ev = evolve(&m, &mu, 0.1).unwrap();
        assert!(dy.state.trace_distance(&ev) < 1e-8, "{}", dy.state.trace_distance(&ev));
    }

    #[test]
    fn dyson_trace_within_remainder_on_rotating_fixture() {
        let m = fixtures::ex2_6();
        assert!((m.rate_constant() - 2.0).abs() < 1e-12);
        let mu = BlockState::uniform(&m);
        let dy = dyson_partial(&m, &mu, 0.2, 5, 8).unwrap();
        let expected_tail = (0.4f64).exp() - (0..=5).map(|n| 0.4f64.powi(n) / (1..=n).product::<i32>().max(1) as f64).sum::<f64>();
        assert!((dy.remainder_bound - expected_tail).abs() < 1e-15);
        let tr = dy.state.total_trace();
        assert!(tr <= 1.0 + 1e-12 && tr >= 1.0 - dy.remainder_bound, "trace {tr}");
    }

    #[test]
    fn dyson_budget_is_enforced() {
        let m = fixtures::ex3_4_2(10);
        let mu = BlockState::sited(&m, &SitedState::mixed(&m, 10));
        assert!(matches!(dyson_partial(&m, &mu, 0.1, 12, 20), Err(WalkError::BudgetExceeded { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn semigroup_law(seed in any::<u64>(), t in 0.0f64..1.0, s in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random::walk(&mut rng, &random::WalkShape { vertices: 3, max_dim: 2, ..Default::default() });
            let mu = random::block_state(&mut rng, &m);
            let joint = evolve(&m, &mu, t + s).unwrap();
            let split = evolve(&m, &evolve(&m, &mu, s).unwrap(), t).unwrap();
            prop_assert!(joint.trace_distance(&split) < 1e-8);
            prop_assert!((joint.total_trace() - 1.0).abs() < 1e-10);
            prop_assert!(joint.min_block_eigenvalue() > -1e-9);
        }

        #[test]
        fn classical_consistency(seed in any::<u64>(), t in 0.0f64..2.0) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..5);
            let mut q = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i != j && rng.random_bool(0.7) {
                        q[i][j] = rng.random_range(0.1..2.0);
                    }
                }
                q[i][i] = -q[i].iter().sum::<f64>();
            }
            let m = crate::model::classical_embed(&q).unwrap();
            let qm = linalg::CMat::from_fn(n, n, |i, j| c(q[i][j]));
            let row0 = linalg::exp_scaled(&qm, t);
            let mu = BlockState::sited(&m, &SitedState::mixed(&m, 0));
            let p = position_distribution(&evolve(&m, &mu, t).unwrap());
            for j in 0..n {
                prop_assert!((p[j] - row0[(0, j)].re).abs() < 1e-9);
            }
        }

        #[test]
        fn dyson_consistency(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random::walk(&mut rng, &random::WalkShape { vertices: 3, max_dim: 2, ..Default::default() });
            let mu = random::block_state(&mut rng, &m);
            let t = 1.0 / m.rate_constant().max(1.0);
            let dy = dyson_partial(&m, &mu, t, 5, 6).unwrap();
            let ev = evolve(&m, &mu, t).unwrap();
            prop_assert!(dy.state.trace_distance(&ev) <= dy.remainder_bound + 1e-6);
        }
    }
}
