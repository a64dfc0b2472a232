use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hmpc::model::LtiModel;
use hmpc::qp::QpProblem;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn vector(rng: &mut impl Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(-scale..scale))
}

/// Strictly convex QP with a known interior point, so it is always feasible.
pub fn strictly_convex_qp(rng: &mut impl Rng, d: usize, c: usize) -> QpProblem {
    let m = matrix(rng, d, d, 1.0);
    let h = m.transpose() * &m + DMatrix::identity(d, d) * 0.1;
    let h = (&h + h.transpose()) * 0.5;
    let f = vector(rng, d, 3.0);
    let g_mat = matrix(rng, c, d, 1.0);
    let interior = vector(rng, d, 0.5);
    let margin = DVector::from_fn(c, |_, _| rng.random_range(0.0..1.0));
    let g_vec = &g_mat * &interior + margin;
    QpProblem::new(h, f, g_mat, g_vec).unwrap()
}

/// Box-constrained strictly convex QP (`lo ≤ z ≤ hi`, all `2d` rows).
pub fn box_qp(rng: &mut impl Rng, d: usize) -> QpProblem {
    let m = matrix(rng, d, d, 1.0);
    let h = m.transpose() * &m + DMatrix::identity(d, d) * 0.1;
    let h = (&h + h.transpose()) * 0.5;
    let f = vector(rng, d, 3.0);
    let mut g_mat = DMatrix::zeros(2 * d, d);
    let mut g_vec = DVector::zeros(2 * d);
    for i in 0..d {
        g_mat[(i, i)] = 1.0;
        g_mat[(d + i, i)] = -1.0;
        g_vec[i] = rng.random_range(0.1..1.0);
        g_vec[d + i] = rng.random_range(0.1..1.0);
    }
    QpProblem::new(h, f, g_mat, g_vec).unwrap()
}

/// Random model with entries of moderate size; `A` is scaled toward a
/// spectral radius near one so powers stay bounded.
pub fn lti_model(rng: &mut impl Rng, n: usize, m: usize, h: usize) -> LtiModel {
    let a = matrix(rng, n, n, 1.0);
    let norm = a.norm().max(1e-3);
    let a = a * (rng.random_range(0.5..1.05) * (n as f64).sqrt() / norm);
    let slow_mask = (0..n).map(|_| rng.random_bool(0.5)).collect();
    LtiModel::new(
        a,
        matrix(rng, n, m, 1.0),
        matrix(rng, n, h, 1.0),
        rng.random_range(0.1..2.0),
        slow_mask,
    )
    .unwrap()
}
