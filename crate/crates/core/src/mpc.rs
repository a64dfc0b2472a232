//! Finite-horizon MPC problems condensed into dense QPs.
//!
//! The decision vector stacks the input sequence `u_0 … u_{N−1}` followed by
//! one nonnegative slack per softened state row per predicted step
//! (`s_1 … s_N`). Predicted states are eliminated through the dynamics, so
//! every `x_j` is an affine function of the decisions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LtiModel, PolyhedralSet};
use crate::qp::{QpProblem, QpSolution};

/// Stage cost `‖E·x + F·u − r_j‖²_Λ`, summed over `j = 0..=N`; the terminal
/// stage drops the input term.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTrackingCost {
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub lambda: DMatrix<f64>,
    /// Desired outputs per stage. Shorter sequences hold their last entry;
    /// an empty sequence means a zero reference.
    pub reference: Vec<DVector<f64>>,
}

impl QuadraticTrackingCost {
    pub fn new(e: DMatrix<f64>, f: DMatrix<f64>, lambda: DMatrix<f64>) -> Result<Self> {
        let n_r = e.nrows();
        if f.nrows() != n_r {
            return Err(Error::dims("F", format!("{n_r} rows"), f.nrows()));
        }
        if lambda.nrows() != n_r || lambda.ncols() != n_r {
            return Err(Error::dims(
                "Lambda",
                format!("{n_r}x{n_r}"),
                format!("{}x{}", lambda.nrows(), lambda.ncols()),
            ));
        }
        if (&lambda - lambda.transpose()).amax() > 1e-12 * lambda.amax().max(1.0) {
            return Err(Error::InvalidArgument("Lambda must be symmetric".into()));
        }
        if nalgebra::Cholesky::new(&lambda + DMatrix::identity(n_r, n_r) * 1e-12).is_none() {
            return Err(Error::InvalidArgument("Lambda must be positive semidefinite".into()));
        }
        Ok(Self {
            e,
            f,
            lambda,
            reference: Vec::new(),
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.e.nrows()
    }

    pub fn with_reference(mut self, reference: Vec<DVector<f64>>) -> Self {
        self.reference = reference;
        self
    }

    pub fn reference_at(&self, j: usize) -> DVector<f64> {
        match self.reference.get(j).or_else(|| self.reference.last()) {
            Some(r) => r.clone(),
            None => DVector::zeros(self.n_outputs()),
        }
    }

    /// `‖E·x + F·u − r‖²_Λ`; `u = None` omits the input term.
    pub fn stage(&self, x: &DVector<f64>, u: Option<&DVector<f64>>, reference: &DVector<f64>) -> f64 {
        let mut r = &self.e * x - reference;
        if let Some(u) = u {
            r += &self.f * u;
        }
        r.dot(&(&self.lambda * &r))
    }
}

/// Optional quadratic penalty `(x_N − target)ᵀ·W·(x_N − target)` on the
/// terminal predicted state, on top of the terminal stage cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCost {
    pub weight: DMatrix<f64>,
    pub target: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSpec {
    pub model: LtiModel,
    pub horizon: usize,
    pub cost: QuadraticTrackingCost,
    pub state_set: PolyhedralSet,
    pub input_set: PolyhedralSet,
    /// Rows of `state_set` turned into `P·x ≤ q + s`, `s ≥ 0`.
    pub soft_rows: Vec<usize>,
    pub slack_weight: f64,
    pub terminal: Option<TerminalCost>,
}

impl MpcSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.n_states();
        let m = self.model.n_inputs();
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if self.cost.e.ncols() != n {
            return Err(Error::dims("E", format!("{n} columns"), self.cost.e.ncols()));
        }
        if self.cost.f.ncols() != m {
            return Err(Error::dims("F", format!("{m} columns"), self.cost.f.ncols()));
        }
        if let Some(bad) = self.cost.reference.iter().find(|r| r.len() != self.cost.n_outputs()) {
            return Err(Error::dims("reference", self.cost.n_outputs(), bad.len()));
        }
        if self.state_set.dim() != n {
            return Err(Error::dims("state_set", n, self.state_set.dim()));
        }
        if self.input_set.dim() != m {
            return Err(Error::dims("input_set", m, self.input_set.dim()));
        }
        if let Some(&row) = self.soft_rows.iter().find(|&&r| r >= self.state_set.n_rows()) {
            return Err(Error::InvalidArgument(format!(
                "soft row {row} out of range for {} state constraints",
                self.state_set.n_rows()
            )));
        }
        if !self.soft_rows.is_empty() && !(self.slack_weight > 0.0) {
            return Err(Error::InvalidArgument("slack weight must be positive when rows are softened".into()));
        }
        if let Some(t) = &self.terminal {
            if t.weight.nrows() != n || t.weight.ncols() != n || t.target.len() != n {
                return Err(Error::dims("terminal", format!("{n}x{n} weight, {n} target"), "other"));
            }
        }
        Ok(())
    }

    pub fn n_slacks(&self) -> usize {
        self.soft_rows.len() * self.horizon
    }

    pub fn n_decisions(&self) -> usize {
        self.model.n_inputs() * self.horizon + self.n_slacks()
    }

    /// Stage costs summed over `j = 0..=N` for a state sequence `x_0 … x_N`
    /// and input sequence `u_0 … u_{N−1}`, plus the optional terminal penalty.
    /// Slack penalties are not included.
    pub fn evaluate_cost(&self, states: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<f64> {
        if states.len() != self.horizon + 1 {
            return Err(Error::dims("states", self.horizon + 1, states.len()));
        }
        if inputs.len() != self.horizon {
            return Err(Error::dims("inputs", self.horizon, inputs.len()));
        }
        let mut total = 0.0;
        for (j, x) in states.iter().enumerate() {
            let reference = self.cost.reference_at(j);
            total += self.cost.stage(x, inputs.get(j), &reference);
        }
        if let Some(t) = &self.terminal {
            let dx = &states[self.horizon] - &t.target;
            total += dx.dot(&(&t.weight * &dx));
        }
        Ok(total)
    }

    /// Builds the condensed QP for initial state `x0` and a demand preview of
    /// exactly `horizon` entries.
    pub fn condense(&self, x0: &DVector<f64>, demand_preview: &[DVector<f64>]) -> Result<CondensedMpc> {
        self.validate()?;
        let model = &self.model;
        let (n, m, n_h) = (model.n_states(), model.n_inputs(), model.n_demands());
        let horizon = self.horizon;
        if x0.len() != n {
            return Err(Error::dims("x0", n, x0.len()));
        }
        if demand_preview.len() != horizon {
            return Err(Error::InvalidArgument(format!(
                "demand preview has {} entries, horizon is {horizon}",
                demand_preview.len()
            )));
        }
        if let Some(bad) = demand_preview.iter().find(|d| d.len() != n_h) {
            return Err(Error::dims("demand_preview", n_h, bad.len()));
        }

        let n_u = m * horizon;
        let n_soft = self.soft_rows.len();
        let d = self.n_decisions();

        // x_j = offsets[j] + gains[j]·z
        let mut offsets = Vec::with_capacity(horizon + 1);
        let mut gains = Vec::with_capacity(horizon + 1);
        offsets.push(x0.clone());
        gains.push(DMatrix::zeros(n, d));
        for j in 0..horizon {
            let mut gain = model.a() * &gains[j];
            let mut block = gain.view_mut((0, j * m), (n, m));
            block += model.b1();
            let offset = model.a() * &offsets[j] + model.b2() * &demand_preview[j];
            gains.push(gain);
            offsets.push(offset);
        }

        // Cost: stack residuals r_j = C_j·z + c_j weighted by Λ.
        let n_r = self.cost.n_outputs();
        let rows = n_r * (horizon + 1);
        let mut c_all = DMatrix::zeros(rows, d);
        let mut c_off = DVector::zeros(rows);
        for j in 0..=horizon {
            let mut block = &self.cost.e * &gains[j];
            let off = &self.cost.e * &offsets[j] - self.cost.reference_at(j);
            if j < horizon {
                let mut input_part = block.view_mut((0, j * m), (n_r, m));
                input_part += &self.cost.f;
            }
            c_all.view_mut((j * n_r, 0), (n_r, d)).copy_from(&block);
            c_off.rows_mut(j * n_r, n_r).copy_from(&off);
        }
        let mut weighted = c_all.clone();
        let mut weighted_off = c_off.clone();
        for j in 0..=horizon {
            let blk = &self.cost.lambda * c_all.view((j * n_r, 0), (n_r, d));
            weighted.view_mut((j * n_r, 0), (n_r, d)).copy_from(&blk);
            let off = &self.cost.lambda * c_off.rows(j * n_r, n_r);
            weighted_off.rows_mut(j * n_r, n_r).copy_from(&off);
        }
        let mut h = c_all.tr_mul(&weighted) * 2.0;
        let mut f = c_all.tr_mul(&weighted_off) * 2.0;
        let mut constant = c_off.dot(&weighted_off);

        if let Some(t) = &self.terminal {
            let gain = &gains[horizon];
            let off = &offsets[horizon] - &t.target;
            let wg = &t.weight * gain;
            h += gain.tr_mul(&wg) * 2.0;
            f += gain.tr_mul(&(&t.weight * &off)) * 2.0;
            constant += off.dot(&(&t.weight * &off));
        }
        for k in 0..self.n_slacks() {
            h[(n_u + k, n_u + k)] += 2.0 * self.slack_weight;
        }
        let h = (&h + h.transpose()) * 0.5;

        // Constraints: inputs at 0..N−1, states at 1..=N, slacks nonnegative.
        let pu = self.input_set.p();
        let qu = self.input_set.q();
        let px = self.state_set.p();
        let qx = self.state_set.q();
        let (n_qu, n_qx) = (pu.nrows(), px.nrows());
        let n_rows = horizon * (n_qu + n_qx) + self.n_slacks();
        let mut g_mat = DMatrix::zeros(n_rows, d);
        let mut g_vec = DVector::zeros(n_rows);
        let mut row = 0;
        for j in 0..horizon {
            g_mat.view_mut((row, j * m), (n_qu, m)).copy_from(pu);
            g_vec.rows_mut(row, n_qu).copy_from(qu);
            row += n_qu;
        }
        for j in 1..=horizon {
            let block = px * &gains[j];
            let bound = qx - px * &offsets[j];
            g_mat.view_mut((row, 0), (n_qx, d)).copy_from(&block);
            g_vec.rows_mut(row, n_qx).copy_from(&bound);
            for (k, &soft) in self.soft_rows.iter().enumerate() {
                g_mat[(row + soft, n_u + (j - 1) * n_soft + k)] = -1.0;
            }
            row += n_qx;
        }
        for k in 0..self.n_slacks() {
            g_mat[(row, n_u + k)] = -1.0;
            row += 1;
        }

        Ok(CondensedMpc {
            problem: QpProblem::new(h, f, g_mat, g_vec)?,
            constant,
            decoder: Decoder {
                offsets,
                gains,
                n_inputs: m,
                n_soft,
                horizon,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct CondensedMpc {
    pub problem: QpProblem,
    /// Cost terms independent of the decisions, so that
    /// `½zᵀHz + fᵀz + constant` equals the full MPC objective.
    pub constant: f64,
    pub decoder: Decoder,
}

/// Maps a decision vector back to inputs, predicted states and slacks.
#[derive(Debug, Clone)]
pub struct Decoder {
    offsets: Vec<DVector<f64>>,
    gains: Vec<DMatrix<f64>>,
    n_inputs: usize,
    n_soft: usize,
    horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcTrajectory {
    /// `u_0 … u_{N−1}`.
    pub inputs: Vec<DVector<f64>>,
    /// `x_0 … x_N`.
    pub states: Vec<DVector<f64>>,
    /// Per predicted step `1..=N`, one entry per softened row.
    pub slacks: Vec<DVector<f64>>,
}

impl Decoder {
    pub fn decode_vector(&self, z: &DVector<f64>) -> MpcTrajectory {
        let m = self.n_inputs;
        let n_u = m * self.horizon;
        let inputs = (0..self.horizon).map(|j| z.rows(j * m, m).into_owned()).collect();
        let states = self.offsets.iter().zip(&self.gains).map(|(o, g)| o + g * z).collect();
        let slacks = (0..self.horizon)
            .map(|j| z.rows(n_u + j * self.n_soft, self.n_soft).into_owned())
            .collect();
        MpcTrajectory { inputs, states, slacks }
    }

    pub fn decode(&self, solution: &QpSolution) -> MpcTrajectory {
        self.decode_vector(&solution.z)
    }
}
