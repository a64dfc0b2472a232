use nalgebra::DVector;

use super::layers::solve_smpc;
use super::objective::CostLayout;
use super::{ControlStep, Controller, ControllerSettings, ControllerVariant, PreviewSource, TighteningState, TrackingObjective};
use crate::error::{Error, Result};
use crate::mpc::MpcSpec;
use crate::preview::DemandScenario;
use crate::qp::QpSettings;

/// Centralized MPC over horizon `N` at the fine rate.
#[derive(Debug, Clone)]
pub struct SingleLayerController {
    spec: MpcSpec,
    layout: CostLayout,
    objective: TrackingObjective,
    preview: PreviewSource,
    qp: QpSettings,
    clock: usize,
}

impl SingleLayerController {
    pub fn new(settings: &ControllerSettings) -> Result<Self> {
        settings.validate()?;
        let layout = settings.objective.layout(&settings.model, None)?;
        let spec = MpcSpec {
            model: settings.model.clone(),
            horizon: settings.horizon_smpc,
            cost: layout.cost.clone(),
            state_set: settings.state_set.clone(),
            input_set: settings.input_set.clone(),
            soft_rows: settings.soft_rows.clone(),
            slack_weight: settings.slack_weight,
            terminal: settings.terminal.clone(),
        };
        spec.validate()?;
        Ok(Self {
            spec,
            layout,
            objective: settings.objective.clone(),
            preview: settings.smpc_preview,
            qp: settings.qp.clone(),
            clock: 0,
        })
    }

    pub fn spec(&self) -> &MpcSpec {
        &self.spec
    }
}

impl Controller for SingleLayerController {
    fn variant(&self) -> ControllerVariant {
        ControllerVariant::Smpc
    }

    fn control(&mut self, k: usize, x: &DVector<f64>, scenario: &DemandScenario) -> Result<ControlStep> {
        if k != self.clock {
            return Err(Error::InvalidArgument(format!("controller expected step {}, got {k}", self.clock)));
        }
        let horizon = self.spec.horizon;
        let period = self.spec.model.sample_period();
        self.spec.cost.reference = (0..=horizon)
            .map(|j| self.objective.reference(&self.layout, (k + j) as f64 * period, None))
            .collect();
        let preview = match self.preview {
            PreviewSource::Actual => scenario.accurate_preview(k, horizon),
            PreviewSource::Approximate => scenario.approximate_fine_preview(k, horizon),
        };
        let solution = solve_smpc(&self.spec, x, &preview, &self.qp)?;
        self.clock += 1;
        Ok(ControlStep {
            input: solution.first_input().clone(),
            scheduling_solved: false,
            tightening: TighteningState::zero(self.spec.state_set.n_rows()),
            slacks: solution.first_slacks().clone(),
            qp_iterations: solution.qp.iterations,
        })
    }
}
