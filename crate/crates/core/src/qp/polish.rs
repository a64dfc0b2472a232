use nalgebra::{Cholesky, DMatrix, DVector};

use super::scaling::Scaling;
use super::{QpProblem, QpSettings, QpSolution, QpStatus};

const POLISH_DELTA: f64 = 1e-9;

/// Solves the KKT system of `problem` with the rows flagged in `active` held
/// at equality and all other rows dropped, working on the scaled problem.
///
/// Active rows with a single nonzero fix their variable outright; the
/// remaining active rows enter a regularized saddle-point system that is
/// solved through its Schur complement and then refined against the
/// unregularized system. Multipliers of fixed variables are recovered from
/// stationarity and may come out negative when the guess was wrong. Returns
/// `(x, y)`, or `None` when a factorization fails.
pub(crate) fn polish(
    problem: &QpProblem,
    x_guess: &DVector<f64>,
    active: &[bool],
    refine_iters: usize,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = problem.n_vars();
    let m = problem.n_constraints();

    let mut fixed: Vec<Option<(usize, f64)>> = vec![None; d];
    let mut general = Vec::new();
    for i in (0..m).filter(|&i| active[i]) {
        let row = problem.g_mat.row(i);
        let mut nonzeros = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
        match (nonzeros.next(), nonzeros.next()) {
            (Some((j, &coef)), None) => {
                if fixed[j].is_none() {
                    fixed[j] = Some((i, coef));
                }
            }
            (Some(_), Some(_)) => general.push(i),
            // an all-zero active row carries no information
            _ => {}
        }
    }

    let free: Vec<usize> = (0..d).filter(|&j| fixed[j].is_none()).collect();
    let mut x = x_guess.clone();
    for (j, slot) in fixed.iter().enumerate() {
        if let Some((i, coef)) = slot {
            x[j] = problem.g_vec[*i] / coef;
        }
    }

    let mut y_general = DVector::zeros(general.len());
    if !free.is_empty() {
        let fixed_part = {
            let mut v = x.clone();
            for &j in &free {
                v[j] = 0.0;
            }
            v
        };
        let h_ff = problem.h.select_rows(free.iter()).select_columns(free.iter());
        let hx_fixed = &problem.h * &fixed_part;
        let f_red = DVector::from_iterator(free.len(), free.iter().map(|&j| problem.f[j] + hx_fixed[j]));
        let a_red = problem.g_mat.select_rows(general.iter()).select_columns(free.iter());
        let gx_fixed = &problem.g_mat * &fixed_part;
        let b_red = DVector::from_iterator(general.len(), general.iter().map(|&i| problem.g_vec[i] - gx_fixed[i]));

        let x_start = DVector::from_iterator(free.len(), free.iter().map(|&j| x_guess[j]));
        let (x_free, y_gen) = solve_saddle(&h_ff, &f_red, &a_red, &b_red, &x_start, refine_iters)?;
        for (k, &j) in free.iter().enumerate() {
            x[j] = x_free[k];
        }
        y_general = y_gen;
    }

    let mut y = DVector::zeros(m);
    for (k, &i) in general.iter().enumerate() {
        y[i] = y_general[k];
    }
    let grad = &problem.h * &x + &problem.f + problem.g_mat.tr_mul(&y);
    for (j, slot) in fixed.iter().enumerate() {
        if let Some((i, coef)) = slot {
            y[*i] = -grad[j] / coef;
        }
    }
    Some((x, y))
}

/// `[H Aᵀ; A 0]·[x; y] = [−f; b]` via a δ-regularized Schur complement with
/// iterative refinement. The regularization is proximal around `x_start`, so
/// directions the system leaves undetermined keep their starting values.
fn solve_saddle(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x_start: &DVector<f64>,
    refine_iters: usize,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    let k = a.nrows();
    let mut m = h.clone();
    for i in 0..n {
        m[(i, i)] += POLISH_DELTA;
    }
    let m_chol = Cholesky::new(m)?;
    let minv_at = m_chol.solve(&a.transpose());
    let mut schur = a * &minv_at;
    for i in 0..k {
        schur[(i, i)] += POLISH_DELTA;
    }
    let s_chol = if k > 0 { Some(Cholesky::new(schur)?) } else { None };

    let reg_solve = |r1: &DVector<f64>, r2: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let minv_r1 = m_chol.solve(r1);
        let y = match &s_chol {
            Some(s) => s.solve(&(a * &minv_r1 - r2)),
            None => DVector::zeros(0),
        };
        let x = &minv_r1 - &minv_at * &y;
        (x, y)
    };

    let rhs1 = -f;
    let (mut x, mut y) = reg_solve(&(&rhs1 + x_start * POLISH_DELTA), b);
    for _ in 0..refine_iters {
        let t1 = &rhs1 - (h * &x + a.tr_mul(&y));
        let t2 = b - a * &x;
        if t1.amax().max(t2.amax()) < 1e-14 {
            break;
        }
        let (dx, dy) = reg_solve(&t1, &t2);
        x += dx;
        y += dy;
    }
    Some((x, y))
}

/// Polishes on `active`, then corrects the guess a few times: active rows
/// with negative multipliers are released and violated rows are added.
/// Slack values near the resolution of the outer iteration make the first
/// guess unreliable in soft-constrained problems. Returns a solution only if
/// it meets every tolerance in `settings`.
pub(crate) fn polish_solution(
    original: &QpProblem,
    scaled: &QpProblem,
    scaling: &Scaling,
    x_guess: &DVector<f64>,
    active: &[bool],
    settings: &QpSettings,
    iterations: usize,
) -> Option<QpSolution> {
    let s = settings;
    let mut active = active.to_vec();
    for _ in 0..=s.polish_corrections {
        let (x_bar, y_bar) = polish(scaled, x_guess, &active, s.polish_refine_iters)?;
        let z = scaling.unscale_primal(&x_bar);
        let raw = scaling.unscale_dual(&y_bar);
        let residual = &original.g_mat * &z - &original.g_vec;
        let mut changed = false;
        for i in 0..active.len() {
            if active[i] && raw[i] < -s.dual_tol {
                active[i] = false;
                changed = true;
            } else if !active[i] && residual[i] > s.primal_tol {
                active[i] = true;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        let multipliers = raw.map(|v| v.max(0.0));
        let primal_residual = original.primal_residual(&z);
        let dual_residual = original.dual_residual(&z, &multipliers);
        let comp = original.complementarity(&z, &multipliers);
        if primal_residual <= s.primal_tol && dual_residual <= s.dual_tol && comp <= s.dual_tol {
            return Some(QpSolution {
                objective: original.objective(&z),
                z,
                multipliers,
                primal_residual,
                dual_residual,
                iterations,
                status: QpStatus::Optimal,
                polished: true,
                diagnostic: None,
            });
        }
        return None;
    }
    None
}
