//! Reference solvers that share no code with the library's solver paths.

use nalgebra::{DMatrix, DVector};

use hmpc::qp::QpProblem;

pub struct OracleSolution {
    pub z: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub objective: f64,
}

/// Enumerates every active subset of at most `d` rows, solves the
/// equality-constrained KKT system for each and keeps the feasible KKT point
/// with the lowest objective. Only meant for small strictly convex problems.
pub fn active_set_enumeration(problem: &QpProblem) -> Option<OracleSolution> {
    let d = problem.f.len();
    let c = problem.g_vec.len();
    assert!(c <= 20, "enumeration oracle is exponential in the row count");
    let mut best: Option<OracleSolution> = None;
    for mask in 0u32..(1u32 << c) {
        let rows: Vec<usize> = (0..c).filter(|i| mask & (1 << i) != 0).collect();
        if rows.len() > d {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::zeros(d + k, d + k);
        let mut rhs = DVector::zeros(d + k);
        kkt.view_mut((0, 0), (d, d)).copy_from(&problem.h);
        for (a, &r) in rows.iter().enumerate() {
            for j in 0..d {
                kkt[(d + a, j)] = problem.g_mat[(r, j)];
                kkt[(j, d + a)] = problem.g_mat[(r, j)];
            }
            rhs[d + a] = problem.g_vec[r];
        }
        for j in 0..d {
            rhs[j] = -problem.f[j];
        }
        let lu = kkt.lu();
        if lu.determinant().abs() < 1e-12 {
            continue;
        }
        let Some(sol) = lu.solve(&rhs) else { continue };
        let z = sol.rows(0, d).into_owned();
        let lambda_active = sol.rows(d, k).into_owned();
        if lambda_active.iter().any(|&l| l < -1e-9) {
            continue;
        }
        let slack = &problem.g_mat * &z - &problem.g_vec;
        if slack.iter().any(|&s| s > 1e-9) {
            continue;
        }
        let mut multipliers = DVector::zeros(c);
        for (a, &r) in rows.iter().enumerate() {
            multipliers[r] = lambda_active[a].max(0.0);
        }
        let objective = 0.5 * z.dot(&(&problem.h * &z)) + problem.f.dot(&z);
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(OracleSolution {
                z,
                multipliers,
                objective,
            });
        }
    }
    best
}

/// Minimizer of a one-dimensional strictly convex quadratic `a·u² + b·u`
/// clipped to `[lo, hi]`.
pub fn scalar_clipped_minimizer(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    (-b / (2.0 * a)).clamp(lo, hi)
}
