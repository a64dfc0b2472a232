use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CscMatrix;

use super::QpProblem;

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;

/// Ruiz equilibration of the KKT matrix plus a scalar cost scaling.
///
/// The scaled problem is `H̄ = c·D·H·D`, `f̄ = c·D·f`, `Ḡ = E·G·D`, `ḡ = E·g`;
/// primal iterates map back as `z = D·z̄` and multipliers as `λ = E·ȳ / c`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    pub c: f64,
}

impl Scaling {
    pub fn identity(n: usize, m: usize) -> Self {
        Self {
            d: DVector::from_element(n, 1.0),
            e: DVector::from_element(m, 1.0),
            c: 1.0,
        }
    }

    pub fn unscale_primal(&self, z_bar: &DVector<f64>) -> DVector<f64> {
        z_bar.component_mul(&self.d)
    }

    pub fn scale_primal(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_div(&self.d)
    }

    pub fn unscale_dual(&self, y_bar: &DVector<f64>) -> DVector<f64> {
        y_bar.component_mul(&self.e) / self.c
    }
}

fn clamp_norm(v: f64) -> f64 {
    if v < MIN_SCALING {
        1.0
    } else {
        v.min(MAX_SCALING)
    }
}

/// Returns the scaled problem together with the applied scaling. The Ruiz
/// sweeps run on compressed copies; the dense matrices are scaled once.
pub(crate) fn equilibrate(problem: &QpProblem, iters: usize) -> (QpProblem, Scaling) {
    let n = problem.n_vars();
    let m = problem.n_constraints();
    let mut scaling = Scaling::identity(n, m);
    let mut h = CscMatrix::from(&problem.h);
    let mut g = CscMatrix::from(&problem.g_mat);
    let mut f = problem.f.clone();

    for _ in 0..iters {
        let h_col = column_max(&h);
        let g_col = column_max(&g);
        let d_step = DVector::from_fn(n, |j, _| 1.0 / clamp_norm(h_col[j].max(g_col[j])).sqrt());
        let mut row_max = DVector::zeros(m);
        for (i, _, v) in g.triplet_iter() {
            row_max[i] = f64::max(row_max[i], v.abs());
        }
        let e_step = row_max.map(|v| 1.0 / clamp_norm(v).sqrt());
        scale_sparse(&mut h, &d_step, &d_step, 1.0);
        scale_sparse(&mut g, &e_step, &d_step, 1.0);
        f.component_mul_assign(&d_step);
        scaling.d.component_mul_assign(&d_step);
        scaling.e.component_mul_assign(&e_step);

        let mean_col = if n > 0 { column_max(&h).sum() / n as f64 } else { 0.0 };
        let c_step = 1.0 / clamp_norm(mean_col.max(f.amax()));
        scale_sparse(&mut h, &DVector::from_element(n, 1.0), &DVector::from_element(n, 1.0), c_step);
        f *= c_step;
        scaling.c *= c_step;
    }

    let mut h_dense = problem.h.clone();
    apply_diag(&mut h_dense, &scaling.d, &scaling.d, scaling.c);
    let mut g_dense = problem.g_mat.clone();
    apply_diag(&mut g_dense, &scaling.e, &scaling.d, 1.0);
    let g_vec = problem.g_vec.component_mul(&scaling.e);
    (
        QpProblem {
            h: h_dense,
            f,
            g_mat: g_dense,
            g_vec,
        },
        scaling,
    )
}

fn column_max(mat: &CscMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        mat.ncols(),
        mat.col_iter().map(|col| col.values().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))),
    )
}

fn scale_sparse(mat: &mut CscMatrix<f64>, left: &DVector<f64>, right: &DVector<f64>, factor: f64) {
    for (j, mut col) in mat.col_iter_mut().enumerate() {
        let (rows, values) = col.rows_and_values_mut();
        for (i, v) in rows.iter().zip(values.iter_mut()) {
            *v *= left[*i] * right[j] * factor;
        }
    }
}

fn apply_diag(mat: &mut DMatrix<f64>, left: &DVector<f64>, right: &DVector<f64>, factor: f64) {
    for (j, mut col) in mat.column_iter_mut().enumerate() {
        col.component_mul_assign(left);
        col *= right[j] * factor;
    }
}
