//! Discrete LTI plants and polyhedral constraint sets.
//!
//! A plant advances as `x⁺ = A·x + B1·u + B2·û`, where `u` is the manipulated
//! input and `û` a measured, non-adjustable demand. Each state carries a
//! fast/slow label used by the constraint-tightening machinery.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    a: DMatrix<f64>,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    sample_period: f64,
    slow_mask: Vec<bool>,
}

impl LtiModel {
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        sample_period: f64,
        slow_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("A", format!("{n}x{n}"), format!("{}x{}", n, a.ncols())));
        }
        if b1.nrows() != n {
            return Err(Error::dims("B1", format!("{n} rows"), b1.nrows()));
        }
        if b2.nrows() != n {
            return Err(Error::dims("B2", format!("{n} rows"), b2.nrows()));
        }
        if slow_mask.len() != n {
            return Err(Error::dims("slow_mask", n, slow_mask.len()));
        }
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample period must be positive and finite, got {sample_period}"
            )));
        }
        Ok(Self {
            a,
            b1,
            b2,
            sample_period,
            slow_mask,
        })
    }

    /// The four-state vehicle model: position, speed, stored energy and
    /// thermal index (slow), driven by acceleration, deceleration and
    /// thermal-management power, loaded by an external power demand.
    pub fn vehicle() -> Self {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 1.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        #[rustfmt::skip]
        let b1 = DMatrix::from_row_slice(4, 3, &[
            1.0,  1.0,  0.0,
            1.0, -1.0,  0.0,
           -0.8,  0.8, -0.15,
            1.0,  1.0, -0.85,
        ]);
        let b2 = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, -0.25, 1.0]);
        Self::new(a, b1, b2, 1.0, vec![false, false, false, true])
            .expect("vehicle model dimensions are consistent")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b1(&self) -> &DMatrix<f64> {
        &self.b1
    }

    pub fn b2(&self) -> &DMatrix<f64> {
        &self.b2
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn slow_mask(&self) -> &[bool] {
        &self.slow_mask
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b1.ncols()
    }

    pub fn n_demands(&self) -> usize {
        self.b2.ncols()
    }

    /// Indices of the states labeled slow, in state order.
    pub fn slow_indices(&self) -> Vec<usize> {
        self.slow_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &slow)| slow.then_some(i))
            .collect()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, u_hat: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n_states() {
            return Err(Error::dims("x", self.n_states(), x.len()));
        }
        if u.len() != self.n_inputs() {
            return Err(Error::dims("u", self.n_inputs(), u.len()));
        }
        if u_hat.len() != self.n_demands() {
            return Err(Error::dims("u_hat", self.n_demands(), u_hat.len()));
        }
        Ok(&self.a * x + &self.b1 * u + &self.b2 * u_hat)
    }

    /// Model sampled every `nu` steps with inputs held constant over each
    /// block: `A^nu` and `Σ_{j<nu} A^j·B` for both input matrices.
    pub fn downsample(&self, nu: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidArgument("downsampling factor must be >= 1".into()));
        }
        let n = self.n_states();
        let mut power = DMatrix::<f64>::identity(n, n);
        let mut b1_sum = DMatrix::<f64>::zeros(n, self.n_inputs());
        let mut b2_sum = DMatrix::<f64>::zeros(n, self.n_demands());
        for _ in 0..nu {
            b1_sum += &power * &self.b1;
            b2_sum += &power * &self.b2;
            power = &power * &self.a;
        }
        Ok(Self {
            a: power,
            b1: b1_sum,
            b2: b2_sum,
            sample_period: self.sample_period * nu as f64,
            slow_mask: self.slow_mask.clone(),
        })
    }
}

/// Result of a membership query against a [`PolyhedralSet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// `max(0, max_i (P·x − q)_i)`.
    pub violation: f64,
}

/// `{x | P·x ≤ q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralSet {
    p: DMatrix<f64>,
    q: DVector<f64>,
}

impl PolyhedralSet {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if p.nrows() != q.len() {
            return Err(Error::dims("q", p.nrows(), q.len()));
        }
        Ok(Self { p, q })
    }

    /// Box `lower ≤ x ≤ upper`. Rows are ordered as all upper bounds
    /// (`+e_i`) followed by all lower bounds (`−e_i`).
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dims("lower", upper.len(), lower.len()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::InvalidArgument(format!(
                "box bound {i} is empty: lower {} > upper {}",
                lower[i], upper[i]
            )));
        }
        let dim = lower.len();
        let mut p = DMatrix::zeros(2 * dim, dim);
        let mut q = DVector::zeros(2 * dim);
        for i in 0..dim {
            p[(i, i)] = 1.0;
            q[i] = upper[i];
            p[(dim + i, i)] = -1.0;
            q[dim + i] = -lower[i];
        }
        Ok(Self { p, q })
    }

    /// Vehicle state bounds `[-1, -20, 0, 0] ≤ x ≤ [100, 20, 100, 30]`.
    pub fn vehicle_states() -> Self {
        Self::from_box(&[-1.0, -20.0, 0.0, 0.0], &[100.0, 20.0, 100.0, 30.0]).expect("valid box")
    }

    /// Vehicle input bounds `-1 ≤ u ≤ 1`.
    pub fn vehicle_inputs() -> Self {
        Self::from_box(&[-1.0; 3], &[1.0; 3]).expect("valid box")
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn n_rows(&self) -> usize {
        self.p.nrows()
    }

    pub fn dim(&self) -> usize {
        self.p.ncols()
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<Membership> {
        if x.len() != self.dim() {
            return Err(Error::dims("x", self.dim(), x.len()));
        }
        let excess = &self.p * x - &self.q;
        let violation = excess.iter().fold(0.0_f64, |acc, &e| acc.max(e));
        Ok(Membership {
            inside: violation == 0.0,
            violation,
        })
    }

    /// Same halfspaces with bounds `q − offset`.
    pub fn tightened(&self, offset: &DVector<f64>) -> Result<Self> {
        if offset.len() != self.n_rows() {
            return Err(Error::dims("offset", self.n_rows(), offset.len()));
        }
        Ok(Self {
            p: self.p.clone(),
            q: &self.q - offset,
        })
    }

    /// The single state a row bounds, when the row has exactly one nonzero.
    pub fn row_axis(&self, row: usize) -> Option<usize> {
        let mut axis = None;
        for (j, &v) in self.p.row(row).iter().enumerate() {
            if v != 0.0 {
                if axis.is_some() {
                    return None;
                }
                axis = Some(j);
            }
        }
        axis
    }

    /// Rows whose nonzero coefficients all sit on the given coordinates.
    pub fn rows_on(&self, coords: &[usize]) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&r| {
                let row = self.p.row(r);
                row.iter().any(|&v| v != 0.0)
                    && row
                        .iter()
                        .enumerate()
                        .all(|(j, &v)| v == 0.0 || coords.contains(&j))
            })
            .collect()
    }

    /// Rows whose coefficients are all supported on slow states.
    pub fn slow_rows(&self, slow_mask: &[bool]) -> Vec<bool> {
        (0..self.n_rows())
            .map(|r| {
                let row = self.p.row(r);
                row.iter().any(|&v| v != 0.0)
                    && row
                        .iter()
                        .zip(slow_mask)
                        .all(|(&v, &slow)| v == 0.0 || slow)
            })
            .collect()
    }
}
