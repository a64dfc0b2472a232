use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LtiModel, PolyhedralSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TighteningSource {
    None,
    Robust,
    Passive,
}

/// Per-row amounts `q̄ ≥ 0` subtracted from the state bounds at the
/// scheduling layer. Rows that touch a fast state are always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TighteningState {
    qbar: DVector<f64>,
    source: TighteningSource,
}

impl TighteningState {
    pub fn zero(n_rows: usize) -> Self {
        Self {
            qbar: DVector::zeros(n_rows),
            source: TighteningSource::None,
        }
    }

    pub fn qbar(&self) -> &DVector<f64> {
        &self.qbar
    }

    pub fn source(&self) -> TighteningSource {
        self.source
    }

    pub fn is_zero(&self) -> bool {
        self.qbar.iter().all(|&v| v == 0.0)
    }

    /// `{x | P·x ≤ q − q̄}`.
    pub fn apply(&self, set: &PolyhedralSet) -> Result<PolyhedralSet> {
        set.tightened(&self.qbar)
    }
}

/// Positive part of each slow row's excess `(P·x − q)`, zero on fast rows.
fn slow_row_excess(set: &PolyhedralSet, x: &DVector<f64>, slow_rows: &[bool]) -> DVector<f64> {
    let excess = set.p() * x - set.q();
    DVector::from_iterator(
        set.n_rows(),
        excess.iter().zip(slow_rows).map(|(&e, &slow)| if slow && e > 0.0 { e } else { 0.0 }),
    )
}

/// Propagates the piloting plan through the fine model under the accurate
/// preview and keeps, per state-constraint row, the largest predicted
/// violation over `x(k+1) … x(k+H_p)`. Keeping the per-row maximum is the
/// intersection of the per-step tightened sets for parallel halfspaces.
pub fn predict_violation(
    model: &LtiModel,
    x0: &DVector<f64>,
    planned_inputs: &[DVector<f64>],
    accurate_preview: &[DVector<f64>],
    state_set: &PolyhedralSet,
    slow_mask: &[bool],
) -> Result<TighteningState> {
    if planned_inputs.len() != accurate_preview.len() {
        return Err(Error::dims("accurate_preview", planned_inputs.len(), accurate_preview.len()));
    }
    if slow_mask.len() != state_set.dim() {
        return Err(Error::dims("slow_mask", state_set.dim(), slow_mask.len()));
    }
    let slow_rows = state_set.slow_rows(slow_mask);
    let mut qbar = DVector::zeros(state_set.n_rows());
    let mut x = x0.clone();
    for (u, d) in planned_inputs.iter().zip(accurate_preview) {
        x = model.step(&x, u, d)?;
        qbar = qbar.sup(&slow_row_excess(state_set, &x, &slow_rows));
    }
    Ok(TighteningState {
        qbar,
        source: TighteningSource::Robust,
    })
}

/// Tightening from the measured state only.
pub fn passive_tightening(
    x_measured: &DVector<f64>,
    state_set: &PolyhedralSet,
    slow_mask: &[bool],
) -> Result<TighteningState> {
    if x_measured.len() != state_set.dim() {
        return Err(Error::dims("x_measured", state_set.dim(), x_measured.len()));
    }
    if slow_mask.len() != state_set.dim() {
        return Err(Error::dims("slow_mask", state_set.dim(), slow_mask.len()));
    }
    let slow_rows = state_set.slow_rows(slow_mask);
    Ok(TighteningState {
        qbar: slow_row_excess(state_set, x_measured, &slow_rows),
        source: TighteningSource::Passive,
    })
}
