use nalgebra::{Cholesky, DVector, Dyn};

use super::polish::polish_solution;
use super::scaling::Scaling;
use super::solve::failure;
use super::{QpProblem, QpSettings, QpSolution, QpStatus};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
/// Refactor only when the balanced penalty moves by more than this factor.
const RHO_REFACTOR_RATIO: f64 = 5.0;
const INFEASIBILITY_TOL: f64 = 1e-5;
/// Relative scaled residual at which the first polish is attempted; each
/// failed attempt tightens it tenfold.
const POLISH_TRIGGER: f64 = 1e-3;

/// ADMM on the equilibrated problem `scaled`. Residuals and the returned
/// solution refer to `original`.
pub(crate) fn run(original: &QpProblem, scaled: &QpProblem, scaling: &Scaling, settings: &QpSettings) -> QpSolution {
    match Admm::new(scaled, scaling, settings) {
        Ok(mut admm) => admm.run(original),
        Err(diag) => failure(original, 0, diag),
    }
}

struct Admm<'a> {
    scaled: &'a QpProblem,
    scaling: &'a Scaling,
    settings: &'a QpSettings,
    rho: f64,
    factor: Cholesky<f64, Dyn>,
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

impl<'a> Admm<'a> {
    fn new(scaled: &'a QpProblem, scaling: &'a Scaling, settings: &'a QpSettings) -> Result<Self, String> {
        let d = scaled.n_vars();
        let rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
        let factor = factorize(scaled, settings.sigma, rho)?;
        let x = match &settings.initial {
            Some(z0) if z0.len() == d => scaling.scale_primal(z0),
            Some(z0) => return Err(format!("initial iterate has length {}, expected {d}", z0.len())),
            None => DVector::zeros(d),
        };
        let z = (&scaled.g_mat * &x).zip_map(&scaled.g_vec, f64::min);
        let y = DVector::zeros(scaled.n_constraints());
        Ok(Self {
            scaled,
            scaling,
            settings,
            rho,
            factor,
            x,
            z,
            y,
        })
    }

    fn iterate(&mut self) {
        let p = self.scaled;
        let s = self.settings;
        let rhs = &self.x * s.sigma - &p.f + p.g_mat.tr_mul(&(&self.z * self.rho - &self.y));
        let x_tilde = self.factor.solve(&rhs);
        let z_tilde = &p.g_mat * &x_tilde;
        self.x = &x_tilde * s.alpha + &self.x * (1.0 - s.alpha);
        let z_relaxed = &z_tilde * s.alpha + &self.z * (1.0 - s.alpha);
        let z_next = (&z_relaxed + &self.y / self.rho).zip_map(&p.g_vec, f64::min);
        self.y += (&z_relaxed - &z_next) * self.rho;
        self.z = z_next;
    }

    fn run(&mut self, original: &QpProblem) -> QpSolution {
        let s = self.settings;
        let check_every = s.check_interval.max(1);
        let mut last_active: Option<Vec<bool>> = None;
        let mut polished_signature: Option<Vec<bool>> = None;
        let mut polish_at = POLISH_TRIGGER;
        let mut y_prev = self.y.clone();
        let mut x_prev = self.x.clone();
        let mut iterations = 0;

        while iterations < s.max_iter {
            let checking = (iterations + 1) % check_every == 0 || iterations + 1 == s.max_iter;
            if checking {
                y_prev.copy_from(&self.y);
                x_prev.copy_from(&self.x);
            }
            self.iterate();
            iterations += 1;

            if s.adaptive_rho_interval > 0 && iterations % s.adaptive_rho_interval == 0 {
                if let Err(diag) = self.rebalance_rho() {
                    return failure(original, iterations, diag);
                }
            }

            if !checking {
                continue;
            }

            let candidate = self.unscaled_candidate(original, iterations);
            let converged =
                candidate.primal_residual <= s.primal_tol && candidate.dual_residual <= s.dual_tol;

            let active = self.active_set();
            let fresh = polished_signature.as_ref() != Some(&active);
            let settled = fresh && last_active.as_ref() == Some(&active);
            let accurate = self.relative_residual() <= polish_at;
            if s.polish && (converged || settled || (accurate && fresh)) {
                if accurate {
                    polish_at = (polish_at * 0.1).max(1e-12);
                }
                polished_signature = Some(active.clone());
                if let Some(sol) = polish_solution(original, self.scaled, self.scaling, &self.x, &active, s, iterations) {
                    return sol;
                }
            }
            if converged {
                return candidate;
            }
            last_active = Some(active);

            if let Some(diag) = self.detect_infeasibility(&y_prev, &x_prev) {
                return failure(original, iterations, diag);
            }
        }

        let mut best = self.unscaled_candidate(original, iterations);
        best.status = QpStatus::MaxIterations;
        best.diagnostic = Some(format!(
            "iteration cap {} reached (primal {:.3e}, dual {:.3e})",
            s.max_iter, best.primal_residual, best.dual_residual
        ));
        best
    }

    /// Larger of the relative primal and dual residuals on the scaled problem.
    fn relative_residual(&self) -> f64 {
        let p = self.scaled;
        let gx = &p.g_mat * &self.x;
        let hx = &p.h * &self.x;
        let gty = p.g_mat.tr_mul(&self.y);
        let prim = (&gx - &self.z).amax() / gx.amax().max(self.z.amax()).max(1e-12);
        let dual = (&hx + &p.f + &gty).amax() / hx.amax().max(gty.amax()).max(p.f.amax()).max(1e-12);
        prim.max(dual)
    }

    fn active_set(&self) -> Vec<bool> {
        self.z
            .iter()
            .zip(self.scaled.g_vec.iter())
            .zip(self.y.iter())
            .map(|((z, g), y)| g - z < *y)
            .collect()
    }

    fn unscaled_candidate(&self, original: &QpProblem, iterations: usize) -> QpSolution {
        let z = self.scaling.unscale_primal(&self.x);
        let multipliers = self.scaling.unscale_dual(&self.y);
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

    /// Residual balancing on the scaled problem.
    fn rebalance_rho(&mut self) -> Result<(), String> {
        let p = self.scaled;
        let gx = &p.g_mat * &self.x;
        let hx = &p.h * &self.x;
        let gty = p.g_mat.tr_mul(&self.y);
        let prim = (&gx - &self.z).amax();
        let dual = (&hx + &p.f + &gty).amax();
        let prim_norm = gx.amax().max(self.z.amax()).max(1e-12);
        let dual_norm = hx.amax().max(gty.amax()).max(p.f.amax()).max(1e-12);
        let ratio = (prim / prim_norm) / (dual / dual_norm).max(1e-30);
        if !ratio.is_finite() || ratio <= 0.0 {
            return Ok(());
        }
        let rho_new = (self.rho * ratio.sqrt()).clamp(RHO_MIN, RHO_MAX);
        if rho_new > self.rho * RHO_REFACTOR_RATIO || rho_new < self.rho / RHO_REFACTOR_RATIO {
            self.factor = factorize(p, self.settings.sigma, rho_new)?;
            self.rho = rho_new;
        }
        Ok(())
    }

    /// Farkas-type certificates from the change in iterates since the last check.
    fn detect_infeasibility(&self, y_prev: &DVector<f64>, x_prev: &DVector<f64>) -> Option<String> {
        let p = self.scaled;
        let sc = self.scaling;

        let dy = sc.unscale_dual(&(&self.y - y_prev)) * sc.c;
        let dy_norm = dy.amax();
        if dy_norm > 1e-12 {
            let gt_dy = p.g_mat.tr_mul(&(&self.y - y_prev)).component_div(&sc.d);
            let g_orig = p.g_vec.component_div(&sc.e);
            let support: f64 = g_orig
                .iter()
                .zip(dy.iter())
                .filter(|(g, _)| g.is_finite())
                .map(|(g, d)| g * d.max(0.0))
                .sum();
            let nonneg = dy.iter().all(|&v| v >= -INFEASIBILITY_TOL * dy_norm);
            if nonneg
                && gt_dy.amax() <= INFEASIBILITY_TOL * dy_norm
                && support < -INFEASIBILITY_TOL * dy_norm
            {
                return Some("problem is primal infeasible".into());
            }
        }

        let dx_bar = &self.x - x_prev;
        let dx = sc.unscale_primal(&dx_bar);
        let dx_norm = dx.amax();
        if dx_norm > 1e-12 {
            let h_dx = (&p.h * &dx_bar).component_div(&sc.d) / sc.c;
            let f_dx = p.f.dot(&dx_bar) / sc.c;
            let g_dx = (&p.g_mat * &dx_bar).component_div(&sc.e);
            if h_dx.amax() <= INFEASIBILITY_TOL * dx_norm
                && f_dx < -INFEASIBILITY_TOL * dx_norm
                && g_dx.iter().all(|&v| v <= INFEASIBILITY_TOL * dx_norm)
            {
                return Some("problem is unbounded below".into());
            }
        }
        None
    }
}

fn factorize(p: &QpProblem, sigma: f64, rho: f64) -> Result<Cholesky<f64, Dyn>, String> {
    let d = p.n_vars();
    let mut k = p.g_mat.tr_mul(&p.g_mat) * rho;
    k += &p.h;
    for i in 0..d {
        k[(i, i)] += sigma;
    }
    Cholesky::new(k).ok_or_else(|| "ADMM system matrix is not positive definite".to_string())
}
