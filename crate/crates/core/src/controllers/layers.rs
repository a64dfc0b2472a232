//! Single solves of each controller layer.

use nalgebra::DVector;

use super::tightening::TighteningState;
use crate::error::{Error, Result};
use crate::mpc::{MpcSpec, MpcTrajectory};
use crate::qp::{self, QpSettings, QpSolution};

#[derive(Debug, Clone)]
pub struct LayerSolution {
    pub trajectory: MpcTrajectory,
    pub qp: QpSolution,
}

impl LayerSolution {
    /// `u(k|k)`, the only input that reaches the plant.
    pub fn first_input(&self) -> &DVector<f64> {
        &self.trajectory.inputs[0]
    }

    /// Slacks on the first constrained predicted state, one per soft row.
    pub fn first_slacks(&self) -> &DVector<f64> {
        &self.trajectory.slacks[0]
    }
}

fn solve_spec(spec: &MpcSpec, x0: &DVector<f64>, preview: &[DVector<f64>], settings: &QpSettings) -> Result<LayerSolution> {
    let condensed = spec.condense(x0, preview)?;
    let solution = qp::solve(&condensed.problem, settings).into_result()?;
    Ok(LayerSolution {
        trajectory: condensed.decoder.decode(&solution),
        qp: solution,
    })
}

/// Single-layer MPC at the fine rate.
pub fn solve_smpc(
    spec: &MpcSpec,
    x0: &DVector<f64>,
    preview: &[DVector<f64>],
    settings: &QpSettings,
) -> Result<LayerSolution> {
    solve_spec(spec, x0, preview, settings)
}

/// Scheduling MPC on the downsampled model with its state set replaced by
/// `{x | P·x ≤ q − q̄}`.
pub fn solve_scheduling(
    spec_coarse: &MpcSpec,
    x0: &DVector<f64>,
    approx_preview: &[DVector<f64>],
    tightening: &TighteningState,
    settings: &QpSettings,
) -> Result<LayerSolution> {
    if tightening.qbar().len() != spec_coarse.state_set.n_rows() {
        return Err(Error::dims("tightening", spec_coarse.state_set.n_rows(), tightening.qbar().len()));
    }
    if tightening.is_zero() {
        return solve_spec(spec_coarse, x0, approx_preview, settings);
    }
    let mut spec = spec_coarse.clone();
    spec.state_set = tightening.apply(&spec_coarse.state_set)?;
    solve_spec(&spec, x0, approx_preview, settings)
}

/// Fine-rate MPC whose cost also tracks scheduled slow states.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotingSpec {
    /// Its cost reference already carries the non-slow targets.
    pub mpc: MpcSpec,
    /// Cost rows holding slow-state references, in slow-state order.
    pub slow_rows: Vec<usize>,
}

/// Piloting solve; `slow_reference[j]` is the scheduled slow state for the
/// predicted state `x(k+j+1)`. The stage-0 term is constant and reuses the
/// first entry.
pub fn solve_piloting(
    spec_fine: &PilotingSpec,
    x0: &DVector<f64>,
    accurate_preview: &[DVector<f64>],
    slow_reference: &[DVector<f64>],
    settings: &QpSettings,
) -> Result<LayerSolution> {
    let horizon = spec_fine.mpc.horizon;
    if slow_reference.len() != horizon {
        return Err(Error::InvalidArgument(format!(
            "slow reference has {} entries, horizon is {horizon}",
            slow_reference.len()
        )));
    }
    if let Some(bad) = slow_reference.iter().find(|r| r.len() != spec_fine.slow_rows.len()) {
        return Err(Error::dims("slow_reference", spec_fine.slow_rows.len(), bad.len()));
    }
    let mut spec = spec_fine.mpc.clone();
    let reference = (0..=horizon)
        .map(|j| {
            let mut r = spec_fine.mpc.cost.reference_at(j);
            let slow = &slow_reference[j.saturating_sub(1)];
            for (k, &row) in spec_fine.slow_rows.iter().enumerate() {
                r[row] = slow[k];
            }
            r
        })
        .collect();
    spec.cost.reference = reference;
    solve_spec(&spec, x0, accurate_preview, settings)
}
