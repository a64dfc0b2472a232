use nalgebra::{Cholesky, DMatrix, DVector};

use super::presolve::Presolved;
use super::scaling::{equilibrate, Scaling};
use super::{admm, ipm, QpMethod, QpProblem, QpSettings, QpSolution, QpStatus};

/// Solves `problem`. Never panics on bad input: shape, symmetry and
/// definiteness problems come back as [`QpStatus::NumericalFailure`].
pub fn solve(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    if let Err(diag) = validate(problem, settings) {
        return failure(problem, 0, diag);
    }
    let Some(pre) = Presolved::new(problem) else {
        return solve_checked(problem, settings);
    };
    let reduced = if pre.reduced.n_vars() == 0 {
        let empty = DVector::zeros(0);
        candidate(&pre.reduced, &Scaling::identity(0, 0), &empty, &empty, 0)
    } else {
        let mut inner = settings.clone();
        inner.initial = settings.initial.as_ref().map(|z| pre.restrict(z));
        solve_checked(&pre.reduced, &inner)
    };
    pre.restore(problem, reduced)
}

fn solve_checked(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    let (scaled, scaling) = if settings.scaling_iters > 0 {
        equilibrate(problem, settings.scaling_iters)
    } else {
        (problem.clone(), Scaling::identity(problem.n_vars(), problem.n_constraints()))
    };
    match settings.method {
        QpMethod::InteriorPoint => ipm::run(problem, &scaled, &scaling, settings),
        QpMethod::Admm => admm::run(problem, &scaled, &scaling, settings),
    }
}

fn validate(problem: &QpProblem, settings: &QpSettings) -> Result<(), String> {
    let d = problem.n_vars();
    if problem.h.nrows() != d || problem.h.ncols() != d {
        return Err("H does not match the length of f".into());
    }
    if problem.g_mat.ncols() != d || problem.g_mat.nrows() != problem.g_vec.len() {
        return Err("G and g have inconsistent shapes".into());
    }
    if let Some(z0) = &settings.initial {
        if z0.len() != d {
            return Err(format!("initial iterate has length {}, expected {d}", z0.len()));
        }
    }
    let all_finite = problem.h.iter().chain(problem.f.iter()).chain(problem.g_mat.iter()).all(|v| v.is_finite())
        && problem.g_vec.iter().all(|v| !v.is_nan() && *v != f64::NEG_INFINITY);
    if !all_finite {
        return Err("problem data contains non-finite entries".into());
    }
    let h_norm = problem.h.amax().max(1.0);
    let asym = (&problem.h - problem.h.transpose()).amax();
    if asym > 1e-12 * h_norm {
        return Err(format!("H is not symmetric (max asymmetry {asym:.3e})"));
    }
    // Variables without off-diagonal coupling only need a nonnegative
    // diagonal; a shifted Cholesky on the rest succeeds iff λ_min > −shift.
    let shift = 1e-9 * problem.h.diagonal().amax().max(1.0);
    let coupled: Vec<usize> = (0..d)
        .filter(|&j| (0..d).any(|k| k != j && problem.h[(k, j)] != 0.0))
        .collect();
    if (0..d).any(|j| problem.h[(j, j)] < -shift) {
        return Err("H is not positive semidefinite".into());
    }
    let block = problem.h.select_rows(coupled.iter()).select_columns(coupled.iter());
    let shifted = block + DMatrix::identity(coupled.len(), coupled.len()) * shift;
    if Cholesky::new(shifted).is_none() {
        return Err("H is not positive semidefinite".into());
    }
    Ok(())
}

pub(crate) fn failure(problem: &QpProblem, iterations: usize, diagnostic: String) -> QpSolution {
    QpSolution {
        z: DVector::zeros(problem.n_vars()),
        multipliers: DVector::zeros(problem.n_constraints()),
        objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        iterations,
        status: QpStatus::NumericalFailure,
        polished: false,
        diagnostic: Some(diagnostic),
    }
}

/// Unpolished candidate built from scaled iterates.
pub(crate) fn candidate(
    original: &QpProblem,
    scaling: &Scaling,
    x_bar: &DVector<f64>,
    y_bar: &DVector<f64>,
    iterations: usize,
) -> QpSolution {
    let z = scaling.unscale_primal(x_bar);
    let multipliers = scaling.unscale_dual(y_bar);
    QpSolution {
        objective: original.objective(&z),
        primal_residual: original.primal_residual(&z),
        dual_residual: original.dual_residual(&z, &multipliers),
        z,
        multipliers,
        iterations,
        status: QpStatus::Optimal,
        polished: false,
        diagnostic: None,
    }
}

impl QpSolution {
    pub(crate) fn meets(&self, problem: &QpProblem, settings: &QpSettings) -> bool {
        self.primal_residual <= settings.primal_tol
            && self.dual_residual <= settings.dual_tol
            && problem.complementarity(&self.z, &self.multipliers) <= settings.dual_tol
    }
}
