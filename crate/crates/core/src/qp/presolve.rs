//! Removes variables pinned by single-variable rows with coinciding upper
//! and lower bounds. Interior-point iterates cannot stay strictly inside an
//! empty interior, so such variables are substituted out before solving.

use nalgebra::DVector;

use super::{QpProblem, QpSolution, QpStatus};

/// Relative width below which a bound pair counts as an equality.
const PIN_TOL: f64 = 1e-12;

pub(crate) struct Presolved {
    pub reduced: QpProblem,
    free: Vec<usize>,
    /// Value of every variable, meaningful on pinned ones.
    pinned_value: DVector<f64>,
    pinned: Vec<bool>,
    kept_rows: Vec<usize>,
}

impl Presolved {
    /// `None` when nothing is pinned, or when a row left without free
    /// variables is violated (the full solve reports that properly).
    pub fn new(p: &QpProblem) -> Option<Self> {
        let n = p.n_vars();
        let m = p.n_constraints();
        let mut upper = vec![f64::INFINITY; n];
        let mut lower = vec![f64::NEG_INFINITY; n];
        for i in 0..m {
            let row = p.g_mat.row(i);
            let mut nz = row.iter().enumerate().filter(|(_, &v)| v != 0.0);
            let (Some((j, &c)), None) = (nz.next(), nz.next()) else {
                continue;
            };
            let bound = p.g_vec[i] / c;
            if c > 0.0 {
                upper[j] = upper[j].min(bound);
            } else {
                lower[j] = lower[j].max(bound);
            }
        }
        let pinned: Vec<bool> = (0..n)
            .map(|j| upper[j].is_finite() && (upper[j] - lower[j]).abs() <= PIN_TOL * upper[j].abs().max(1.0))
            .collect();
        if !pinned.contains(&true) {
            return None;
        }
        let pinned_value = DVector::from_fn(n, |j, _| if pinned[j] { upper[j] } else { 0.0 });
        let free: Vec<usize> = (0..n).filter(|&j| !pinned[j]).collect();

        let offset = &p.g_mat * &pinned_value;
        let mut kept_rows = Vec::new();
        for i in 0..m {
            if free.iter().any(|&j| p.g_mat[(i, j)] != 0.0) {
                kept_rows.push(i);
            } else if offset[i] - p.g_vec[i] > PIN_TOL * p.g_vec[i].abs().max(1.0) {
                return None;
            }
        }
        let h = p.h.select_rows(free.iter()).select_columns(free.iter());
        let grad = &p.h * &pinned_value + &p.f;
        let f = DVector::from_iterator(free.len(), free.iter().map(|&j| grad[j]));
        let g_mat = p.g_mat.select_rows(kept_rows.iter()).select_columns(free.iter());
        let g_vec = DVector::from_iterator(kept_rows.len(), kept_rows.iter().map(|&i| p.g_vec[i] - offset[i]));
        Some(Self {
            reduced: QpProblem { h, f, g_mat, g_vec },
            free,
            pinned_value,
            pinned,
            kept_rows,
        })
    }

    pub fn restrict(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&j| z[j]))
    }

    /// Lifts a reduced solution back. Each pinned variable's stationarity
    /// residual is absorbed by the one of its bound rows with the right sign.
    pub fn restore(&self, p: &QpProblem, reduced: QpSolution) -> QpSolution {
        if reduced.status == QpStatus::NumericalFailure {
            return QpSolution {
                z: DVector::zeros(p.n_vars()),
                multipliers: DVector::zeros(p.n_constraints()),
                ..reduced
            };
        }
        let mut z = self.pinned_value.clone();
        for (k, &j) in self.free.iter().enumerate() {
            z[j] = reduced.z[k];
        }
        let mut y = DVector::zeros(p.n_constraints());
        for (k, &i) in self.kept_rows.iter().enumerate() {
            y[i] = reduced.multipliers[k];
        }
        let residual = &p.h * &z + &p.f + p.g_mat.tr_mul(&y);
        for j in (0..p.n_vars()).filter(|&j| self.pinned[j]) {
            let r = residual[j];
            if r == 0.0 {
                continue;
            }
            // c·y = −r needs a row whose coefficient has the sign of −r.
            let row = (0..p.n_constraints()).find(|&i| {
                let c = p.g_mat[(i, j)];
                c * r < 0.0 && p.g_mat.row(i).iter().enumerate().all(|(k, &v)| k == j || v == 0.0)
            });
            if let Some(i) = row {
                y[i] = -r / p.g_mat[(i, j)];
            }
        }
        QpSolution {
            objective: p.objective(&z),
            primal_residual: p.primal_residual(&z),
            dual_residual: p.dual_residual(&z, &y),
            z,
            multipliers: y,
            ..reduced
        }
    }
}
