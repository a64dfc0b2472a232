//! Dense convex quadratic programs.
//!
//! Problems have the form `minimize ½zᵀHz + fᵀz subject to G·z ≤ g` with `H`
//! symmetric positive semidefinite. [`solve`] equilibrates the problem, runs
//! an interior-point or operator-splitting (ADMM) iteration on the scaled copy
//! and, once the active set is identifiable, polishes the iterate by solving
//! the equality-constrained KKT system on that set. The returned multipliers
//! certify optimality.

mod admm;
mod ipm;
mod polish;
mod presolve;
mod scaling;
mod solve;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use solve::solve;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>, g_mat: DMatrix<f64>, g_vec: DVector<f64>) -> Result<Self> {
        let d = f.len();
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::dims("H", format!("{d}x{d}"), format!("{}x{}", h.nrows(), h.ncols())));
        }
        if g_mat.ncols() != d {
            return Err(Error::dims("G", format!("{d} columns"), g_mat.ncols()));
        }
        if g_mat.nrows() != g_vec.len() {
            return Err(Error::dims("g", g_mat.nrows(), g_vec.len()));
        }
        Ok(Self { h, f, g_mat, g_vec })
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.g_vec.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }

    /// `max(0, max_i (G·z − g)_i)`.
    pub fn primal_residual(&self, z: &DVector<f64>) -> f64 {
        (&self.g_mat * z - &self.g_vec)
            .iter()
            .fold(0.0_f64, |acc, &r| acc.max(r))
    }

    /// `‖H·z + f + Gᵀ·λ‖∞`.
    pub fn dual_residual(&self, z: &DVector<f64>, multipliers: &DVector<f64>) -> f64 {
        (&self.h * z + &self.f + self.g_mat.tr_mul(multipliers)).amax()
    }

    /// Largest `|λ_i·(G·z − g)_i|`.
    pub fn complementarity(&self, z: &DVector<f64>, multipliers: &DVector<f64>) -> f64 {
        (&self.g_mat * z - &self.g_vec)
            .iter()
            .zip(multipliers.iter())
            .fold(0.0_f64, |acc, (r, l)| acc.max((r * l).abs()))
    }

    /// Problem with only the listed constraint rows kept.
    pub fn with_rows(&self, rows: &[usize]) -> Self {
        let g_mat = self.g_mat.select_rows(rows.iter());
        let g_vec = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.g_vec[r]));
        Self {
            h: self.h.clone(),
            f: self.f.clone(),
            g_mat,
            g_vec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Nonnegative inequality multipliers.
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub polished: bool,
    pub diagnostic: Option<String>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    /// Turns anything but an optimal solve into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            QpStatus::Optimal => Ok(self),
            status => Err(Error::Solver {
                status,
                iterations: self.iterations,
                detail: self
                    .diagnostic
                    .clone()
                    .unwrap_or_else(|| format!("primal {:.3e}, dual {:.3e}", self.primal_residual, self.dual_residual)),
            }),
        }
    }
}

/// Outer iteration used before polishing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpMethod {
    /// Primal-dual interior point; robust on badly conditioned problems.
    #[default]
    InteriorPoint,
    /// Operator splitting with residual-balanced penalty.
    Admm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub method: QpMethod,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    /// Proximal regularization on the primal update.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Iterations between penalty rebalancing checks.
    pub adaptive_rho_interval: usize,
    /// Residual-check cadence.
    pub check_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
    pub polish_refine_iters: usize,
    /// Active-set corrections tried per polish attempt.
    pub polish_corrections: usize,
    /// Optional starting primal iterate.
    pub initial: Option<DVector<f64>>,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            method: QpMethod::default(),
            primal_tol: 1e-6,
            dual_tol: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adaptive_rho_interval: 25,
            check_interval: 5,
            scaling_iters: 10,
            polish: true,
            polish_refine_iters: 5,
            polish_corrections: 10,
            initial: None,
        }
    }
}
