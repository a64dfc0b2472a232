//! Mehrotra predictor-corrector interior-point method for dense QPs.
//!
//! The Newton system `(H + GᵀWG)·Δz = r` is reduced before factorization:
//! rows with a single nonzero only add to the diagonal, a variable that is
//! uncoupled in `H` and appears in at most one dense row (a slack, in a
//! soft-constrained MPC) is eliminated exactly by reweighting that row, and
//! dense rows that agree up to sign (upper and lower bounds of one output)
//! share one rank-one term. Products with `G` and `H` use compressed rows.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CsrMatrix;

use super::polish::polish_solution;
use super::scaling::Scaling;
use super::solve::{candidate, failure};
use super::{QpProblem, QpSettings, QpSolution, QpStatus};

/// Hard cap on interior-point iterations; the method either converges well
/// inside this or is stuck.
const IPM_MAX_ITER: usize = 200;
const STEP_FRACTION: f64 = 0.99;
const REGULARIZATION: f64 = 1e-13;
/// Scaled complementarity below which a polish is attempted.
const POLISH_MU: f64 = 1e-7;
const DIVERGENCE: f64 = 1e8;
const CERTIFICATE_TOL: f64 = 1e-6;

fn csr_mul(a: &CsrMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.nrows(),
        a.row_iter()
            .map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, x)| x * v[j]).sum()),
    )
}

fn csr_tr_mul(a: &CsrMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.ncols());
    for (i, row) in a.row_iter().enumerate() {
        let yi = y[i];
        if yi != 0.0 {
            for (&j, x) in row.col_indices().iter().zip(row.values()) {
                out[j] += x * yi;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum RowKind {
    Single(usize, f64),
    Dense,
}

/// Row and variable classification of the scaled problem.
struct Structure {
    /// Rows with finite bounds, as indices into the problem.
    rows: Vec<usize>,
    g: CsrMatrix<f64>,
    h: CsrMatrix<f64>,
    b: DVector<f64>,
    kind: Vec<RowKind>,
    /// Dense rows as indices into `rows`.
    dense: Vec<usize>,
    /// For each dense row: its eliminated variable and coefficient, if any.
    dense_sep: Vec<Option<(usize, f64)>>,
    /// For each variable: the dense row it was eliminated through.
    sep_row: Vec<Option<Option<usize>>>,
    core: Vec<usize>,
    /// Position of each variable in `core`.
    core_pos: Vec<Option<usize>>,
    /// Dense rows agreeing on their core columns up to sign share a group;
    /// entry `k` is `(group, sign)` of dense row `k`.
    dense_group: Vec<(usize, f64)>,
    /// One sign-normalized representative core row per group, transposed
    /// (core × groups).
    dense_core_t: DMatrix<f64>,
}

impl Structure {
    fn new(p: &QpProblem) -> Self {
        let n = p.n_vars();
        let rows: Vec<usize> = (0..p.n_constraints()).filter(|&i| p.g_vec[i].is_finite()).collect();
        let g = CsrMatrix::from(&p.g_mat.select_rows(rows.iter()));
        let h = CsrMatrix::from(&p.h);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| p.g_vec[i]));

        let mut kind = Vec::with_capacity(rows.len());
        let mut dense = Vec::new();
        let mut row_count = vec![0usize; n];
        let mut dense_count = vec![0usize; n];
        let mut home: Vec<Option<usize>> = vec![None; n];
        for (r, row) in g.row_iter().enumerate() {
            for &j in row.col_indices() {
                row_count[j] += 1;
            }
            if row.nnz() == 1 {
                kind.push(RowKind::Single(row.col_indices()[0], row.values()[0]));
            } else {
                for &j in row.col_indices() {
                    dense_count[j] += 1;
                    home[j].get_or_insert(dense.len());
                }
                kind.push(RowKind::Dense);
                dense.push(r);
            }
        }

        let mut coupled = vec![false; n];
        for (i, j, _) in h.triplet_iter() {
            if i != j {
                coupled[i] = true;
                coupled[j] = true;
            }
        }
        let mut dense_sep: Vec<Option<(usize, f64)>> = vec![None; dense.len()];
        let mut sep_row: Vec<Option<Option<usize>>> = vec![None; n];
        for j in 0..n {
            let anchored = p.h[(j, j)] > 0.0 || row_count[j] > 0;
            if coupled[j] || !anchored || dense_count[j] > 1 {
                continue;
            }
            match home[j] {
                Some(k) if dense_sep[k].is_none() => {
                    let row = g.row(dense[k]);
                    let pos = row.col_indices().iter().position(|&c| c == j).expect("home row holds the variable");
                    dense_sep[k] = Some((j, row.values()[pos]));
                    sep_row[j] = Some(Some(k));
                }
                Some(_) => {}
                None => sep_row[j] = Some(None),
            }
        }
        let core: Vec<usize> = (0..n).filter(|&j| sep_row[j].is_none()).collect();
        let mut core_pos = vec![None; n];
        for (k, &j) in core.iter().enumerate() {
            core_pos[j] = Some(k);
        }

        let mut groups: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        let mut reps: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut dense_group = Vec::with_capacity(dense.len());
        for &r in &dense {
            let row = g.row(r);
            let entries: Vec<(usize, f64)> = row
                .col_indices()
                .iter()
                .zip(row.values())
                .filter_map(|(&j, &v)| core_pos[j].map(|c| (c, v)))
                .collect();
            let sign = entries.first().map_or(1.0, |e| e.1.signum());
            // `+ 0.0` folds −0.0 into 0.0 so mirrored rows hash alike
            let key = entries.iter().map(|&(c, v)| (c, (v * sign + 0.0).to_bits())).collect();
            let next = reps.len();
            let group = *groups.entry(key).or_insert(next);
            if group == next {
                reps.push(entries.iter().map(|&(c, v)| (c, v * sign)).collect());
            }
            dense_group.push((group, sign));
        }
        let mut dense_core_t = DMatrix::zeros(core.len(), reps.len());
        for (k, rep) in reps.iter().enumerate() {
            for &(c, v) in rep {
                dense_core_t[(c, k)] = v;
            }
        }
        Self {
            rows,
            g,
            h,
            b,
            kind,
            dense,
            dense_sep,
            sep_row,
            core,
            core_pos,
            dense_group,
            dense_core_t,
        }
    }
}

/// Factorized Newton matrix `H + GᵀWG` for one weight vector.
struct Newton<'a> {
    st: &'a Structure,
    w: DVector<f64>,
    /// Diagonal of `K` on eliminated variables.
    d_sep: DVector<f64>,
    schur: Cholesky<f64, Dyn>,
}

impl<'a> Newton<'a> {
    fn new(p: &QpProblem, st: &'a Structure, w: DVector<f64>) -> Option<Self> {
        let n = p.n_vars();
        let mut d_sep = DVector::zeros(n);
        let mut core_diag = DVector::<f64>::zeros(st.core.len());
        for j in 0..n {
            if st.sep_row[j].is_some() {
                d_sep[j] = p.h[(j, j)];
            }
        }
        for (r, kind) in st.kind.iter().enumerate() {
            if let RowKind::Single(j, c) = *kind {
                match st.core_pos[j] {
                    Some(k) => core_diag[k] += w[r] * c * c,
                    None => d_sep[j] += w[r] * c * c,
                }
            }
        }
        for (k, &r) in st.dense.iter().enumerate() {
            if let Some((j, c)) = st.dense_sep[k] {
                d_sep[j] += w[r] * c * c;
            }
        }
        let mut group_w = vec![0.0; st.dense_core_t.ncols()];
        for (k, &r) in st.dense.iter().enumerate() {
            let mut wk = w[r];
            if let Some((j, c)) = st.dense_sep[k] {
                let wc = w[r] * c;
                wk = (wk - wc * wc / d_sep[j]).max(0.0);
            }
            group_w[st.dense_group[k].0] += wk;
        }
        let mut scaled_t = st.dense_core_t.clone();
        for (k, wk) in group_w.iter().enumerate() {
            scaled_t.column_mut(k).scale_mut(wk.sqrt());
        }
        let mut s = p.h.select_rows(st.core.iter()).select_columns(st.core.iter());
        if scaled_t.ncols() > 0 && !st.core.is_empty() {
            s.gemm(1.0, &scaled_t, &scaled_t.transpose(), 1.0);
        }
        for k in 0..st.core.len() {
            s[(k, k)] += core_diag[k];
        }
        let scale = s.diagonal().amax().max(1.0);
        let mut reg = REGULARIZATION * scale;
        let schur = loop {
            let mut m = s.clone();
            for k in 0..st.core.len() {
                m[(k, k)] += reg;
            }
            if let Some(chol) = Cholesky::new(m) {
                break chol;
            }
            reg *= 100.0;
            if reg > 1e-4 * scale {
                return None;
            }
        };
        Some(Self { st, w, d_sep, schur })
    }

    fn apply_k(&self, v: &DVector<f64>) -> DVector<f64> {
        let gv = csr_mul(&self.st.g, v);
        csr_mul(&self.st.h, v) + csr_tr_mul(&self.st.g, &gv.component_mul(&self.w))
    }

    fn solve_reduced(&self, r: &DVector<f64>) -> DVector<f64> {
        let st = self.st;
        let mut coef = DVector::zeros(st.dense_core_t.ncols());
        for (k, &row) in st.dense.iter().enumerate() {
            if let Some((j, c)) = st.dense_sep[k] {
                let (group, sign) = st.dense_group[k];
                coef[group] += sign * self.w[row] * c * r[j] / self.d_sep[j];
            }
        }
        let mut r_core = DVector::from_iterator(st.core.len(), st.core.iter().map(|&j| r[j]));
        if coef.len() > 0 {
            r_core -= &st.dense_core_t * &coef;
        }
        let dz_core = self.schur.solve(&r_core);
        let g_core = st.dense_core_t.tr_mul(&dz_core);
        let mut dz = DVector::zeros(r.len());
        for (k, &j) in st.core.iter().enumerate() {
            dz[j] = dz_core[k];
        }
        for j in 0..r.len() {
            match st.sep_row[j] {
                Some(Some(k)) => {
                    let (_, c) = st.dense_sep[k].expect("eliminated variable has a home row");
                    let (group, sign) = st.dense_group[k];
                    dz[j] = (r[j] - self.w[st.dense[k]] * c * sign * g_core[group]) / self.d_sep[j];
                }
                Some(None) => dz[j] = r[j] / self.d_sep[j],
                None => {}
            }
        }
        dz
    }

    /// Solve with one step of iterative refinement against the exact `K`.
    fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut dz = self.solve_reduced(r);
        let residual = r - self.apply_k(&dz);
        dz += self.solve_reduced(&residual);
        dz
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn run(original: &QpProblem, p: &QpProblem, scaling: &Scaling, settings: &QpSettings) -> QpSolution {
    let st = Structure::new(p);
    let m = st.rows.len();
    let cap = settings.max_iter.min(IPM_MAX_ITER);
    let e = DVector::from_iterator(m, st.rows.iter().map(|&i| scaling.e[i]));
    let b_norm = st.b.amax().max(1.0);
    let f_norm = p.f.amax().max(1.0);

    let mut z = match &settings.initial {
        Some(z0) => scaling.scale_primal(z0),
        None => DVector::zeros(p.n_vars()),
    };
    let mut s = (&st.b - csr_mul(&st.g, &z)).map(|v| v.max(1.0));
    let mut lambda = DVector::from_element(m, 1.0);
    let mut last_polished: Option<Vec<bool>> = None;

    let full_dual = |lambda: &DVector<f64>| {
        let mut y = DVector::zeros(p.n_constraints());
        for (k, &i) in st.rows.iter().enumerate() {
            y[i] = lambda[k];
        }
        y
    };

    for iterations in 0..=cap {
        let gz = csr_mul(&st.g, &z);
        let r_d = csr_mul(&st.h, &z) + &p.f + csr_tr_mul(&st.g, &lambda);
        let r_p = &gz + &s - &st.b;
        let mu = if m > 0 { s.dot(&lambda) / m as f64 } else { 0.0 };

        // Unscaled criteria from scaled quantities: row i of G·z − g is
        // divided by e_i, stationarity by c·d_j, complementarity by c.
        let excess = &gz - &st.b;
        let prim = excess.component_div(&e).iter().fold(0.0_f64, |a, &v| a.max(v));
        let dual = r_d.component_div(&scaling.d).amax() / scaling.c;
        let comp = excess.component_mul(&lambda).amax() / scaling.c;
        let mut met = None;
        if prim <= settings.primal_tol && dual <= settings.dual_tol && comp <= settings.dual_tol {
            let cand = candidate(original, scaling, &z, &full_dual(&lambda), iterations);
            if cand.meets(original, settings) {
                met = Some(cand);
            }
        }
        let identifiable = mu <= POLISH_MU && r_p.amax() <= 1e-6 * b_norm && r_d.amax() <= 1e-6 * f_norm;
        if settings.polish && (met.is_some() || identifiable) {
            let mut active = vec![false; p.n_constraints()];
            for (k, &i) in st.rows.iter().enumerate() {
                active[i] = s[k] < lambda[k];
            }
            if last_polished.as_ref() != Some(&active) {
                if let Some(sol) = polish_solution(original, p, scaling, &z, &active, settings, iterations) {
                    return sol;
                }
                last_polished = Some(active);
            }
        }
        if let Some(cand) = met {
            return cand;
        }
        if let Some(diag) = certificate(&st, &p.f, &z, &lambda) {
            return failure(original, iterations, diag);
        }
        if iterations == cap {
            break;
        }

        let w = lambda.component_div(&s);
        let Some(newton) = Newton::new(p, &st, w.clone()) else {
            return failure(original, iterations, "interior-point system is singular".into());
        };
        let step = |r_c: &DVector<f64>| {
            let rhs = -&r_d - csr_tr_mul(&st.g, &(w.component_mul(&r_p) - r_c.component_div(&s)));
            let dz = newton.solve(&rhs);
            let ds = -&r_p - csr_mul(&st.g, &dz);
            let dl = -(r_c + lambda.component_mul(&ds)).component_div(&s);
            (dz, ds, dl)
        };

        let rc_aff = s.component_mul(&lambda);
        let (_, ds_aff, dl_aff) = step(&rc_aff);
        let alpha_aff = max_step(&s, &ds_aff).min(max_step(&lambda, &dl_aff)).min(1.0);
        let sigma = if m > 0 {
            let mu_aff = (&s + &ds_aff * alpha_aff).dot(&(&lambda + &dl_aff * alpha_aff)) / m as f64;
            (mu_aff / mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let rc = rc_aff + ds_aff.component_mul(&dl_aff) - DVector::from_element(m, sigma * mu);
        let (dz, ds, dl) = step(&rc);
        let alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&lambda, &dl))).min(1.0);
        if !(alpha > 1e-14) || !dz.iter().all(|v| v.is_finite()) {
            return failure(original, iterations + 1, "interior-point step collapsed".into());
        }
        z += dz * alpha;
        s += ds * alpha;
        lambda += dl * alpha;
    }

    let mut best = candidate(original, scaling, &z, &full_dual(&lambda), cap);
    best.status = QpStatus::MaxIterations;
    best.diagnostic = Some(format!(
        "iteration cap {cap} reached (primal {:.3e}, dual {:.3e})",
        best.primal_residual, best.dual_residual
    ));
    best
}

/// Farkas-type certificates once iterates diverge.
fn certificate(st: &Structure, f: &DVector<f64>, z: &DVector<f64>, lambda: &DVector<f64>) -> Option<String> {
    let l_norm = lambda.amax();
    if l_norm > DIVERGENCE {
        let l_hat = lambda / l_norm;
        if csr_tr_mul(&st.g, &l_hat).amax() <= CERTIFICATE_TOL && st.b.dot(&l_hat) < -CERTIFICATE_TOL {
            return Some("problem is primal infeasible".into());
        }
    }
    let z_norm = z.amax();
    if z_norm > DIVERGENCE {
        let z_hat = z / z_norm;
        if csr_mul(&st.h, &z_hat).amax() <= CERTIFICATE_TOL
            && f.dot(&z_hat) < -CERTIFICATE_TOL
            && csr_mul(&st.g, &z_hat).iter().all(|&v| v <= CERTIFICATE_TOL)
        {
            return Some("problem is unbounded below".into());
        }
    }
    None
}
