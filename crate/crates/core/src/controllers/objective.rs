use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LtiModel;
use crate::mpc::QuadraticTrackingCost;

/// Piecewise-linear function of time through `(time, value)` breakpoints,
/// constant before the first and after the last breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    breakpoints: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidArgument("piecewise-linear reference needs a breakpoint".into()));
        }
        if breakpoints.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidArgument("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("breakpoint times must be strictly increasing".into()));
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, value)],
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn at(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0].0 {
            return bp[0].1;
        }
        for w in bp.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        bp[bp.len() - 1].1
    }
}

/// A state that should follow a desired trajectory with a given weight.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedState {
    pub index: usize,
    pub weight: f64,
    pub desired: PiecewiseLinear,
}

/// Diagonal tracking objective: weighted inputs (reference zero), weighted
/// states following desired trajectories, and optionally every slow state
/// following a scheduled plan.
///
/// For the vehicle this yields `λ1·u1² + λ2·u2² + λ3·(x1 − x1_d)²`, plus
/// `λ4·(x4 − x4*)²` at the piloting layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingObjective {
    pub input_weights: Vec<f64>,
    pub tracked: Vec<TrackedState>,
}

/// Row layout of a [`QuadraticTrackingCost`] built from a
/// [`TrackingObjective`].
#[derive(Debug, Clone, PartialEq)]
pub struct CostLayout {
    pub cost: QuadraticTrackingCost,
    /// Cost rows carrying the slow-state references, in slow-state order.
    pub slow_rows: Vec<usize>,
}

impl TrackingObjective {
    pub fn validate(&self, model: &LtiModel) -> Result<()> {
        if self.input_weights.len() != model.n_inputs() {
            return Err(Error::dims("input_weights", model.n_inputs(), self.input_weights.len()));
        }
        if self.input_weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidArgument("input weights must be nonnegative".into()));
        }
        for t in &self.tracked {
            if t.index >= model.n_states() {
                return Err(Error::InvalidArgument(format!("tracked state {} out of range", t.index)));
            }
            if !(t.weight >= 0.0) {
                return Err(Error::InvalidArgument("tracking weights must be nonnegative".into()));
            }
        }
        Ok(())
    }

    /// Cost rows: every input, every tracked state, then (when
    /// `slow_weight` is given) every slow state.
    pub fn layout(&self, model: &LtiModel, slow_weight: Option<f64>) -> Result<CostLayout> {
        self.validate(model)?;
        let n = model.n_states();
        let m = model.n_inputs();
        let slow = model.slow_indices();
        let n_slow_rows = if slow_weight.is_some() { slow.len() } else { 0 };
        let n_r = m + self.tracked.len() + n_slow_rows;
        let mut e = DMatrix::zeros(n_r, n);
        let mut f = DMatrix::zeros(n_r, m);
        let mut lambda = DMatrix::zeros(n_r, n_r);
        for (i, &w) in self.input_weights.iter().enumerate() {
            f[(i, i)] = 1.0;
            lambda[(i, i)] = w;
        }
        for (k, t) in self.tracked.iter().enumerate() {
            e[(m + k, t.index)] = 1.0;
            lambda[(m + k, m + k)] = t.weight;
        }
        let mut slow_rows = Vec::with_capacity(n_slow_rows);
        if let Some(w) = slow_weight {
            if !(w >= 0.0) {
                return Err(Error::InvalidArgument("slow tracking weight must be nonnegative".into()));
            }
            for (k, &idx) in slow.iter().enumerate() {
                let row = m + self.tracked.len() + k;
                e[(row, idx)] = 1.0;
                lambda[(row, row)] = w;
                slow_rows.push(row);
            }
        }
        Ok(CostLayout {
            cost: QuadraticTrackingCost::new(e, f, lambda)?,
            slow_rows,
        })
    }

    /// Reference vector at time `t` (seconds) for the layout built by
    /// [`Self::layout`]; `slow` fills the slow-state rows when present.
    pub fn reference(&self, layout: &CostLayout, t: f64, slow: Option<&DVector<f64>>) -> DVector<f64> {
        let m = self.input_weights.len();
        let mut r = DVector::zeros(layout.cost.n_outputs());
        for (k, tracked) in self.tracked.iter().enumerate() {
            r[m + k] = tracked.desired.at(t);
        }
        if let Some(slow) = slow {
            for (k, &row) in layout.slow_rows.iter().enumerate() {
                r[row] = slow[k];
            }
        }
        r
    }
}
