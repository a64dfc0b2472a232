use nalgebra::DVector;

use super::layers::{solve_piloting, solve_scheduling, LayerSolution, PilotingSpec};
use super::objective::CostLayout;
use super::plan::{extract_slow_plan, SlowStatePlan};
use super::tightening::{passive_tightening, predict_violation, TighteningSource, TighteningState};
use super::{ControlStep, Controller, ControllerSettings, ControllerVariant, TrackingObjective};
use crate::error::{Error, Result};
use crate::model::PolyhedralSet;
use crate::mpc::MpcSpec;
use crate::preview::DemandScenario;
use crate::qp::QpSettings;

/// Two-layer MPC. Every `nu` fine steps the scheduling layer re-plans on the
/// downsampled model; every fine step the piloting layer tracks that plan
/// and its first input is applied.
#[derive(Debug, Clone)]
pub struct HierarchicalController {
    source: TighteningSource,
    objective: TrackingObjective,
    scheduling: MpcSpec,
    scheduling_layout: CostLayout,
    piloting: PilotingSpec,
    piloting_layout: CostLayout,
    state_set: PolyhedralSet,
    slow_mask: Vec<bool>,
    nu: usize,
    qp: QpSettings,
    clock: usize,
    plan: Option<SlowStatePlan>,
    /// Tightening used by the most recent scheduling solve.
    active: TighteningState,
    /// Violation prediction from the most recent piloting solve.
    predicted: TighteningState,
}

impl HierarchicalController {
    pub fn new(settings: &ControllerSettings, source: TighteningSource) -> Result<Self> {
        settings.validate()?;
        let fine = settings.model.clone();
        let coarse = fine.downsample(settings.nu)?;
        let scheduling_layout = settings.objective.layout(&coarse, None)?;
        let piloting_layout = settings.objective.layout(&fine, Some(settings.slow_weight))?;
        if piloting_layout.slow_rows.is_empty() {
            return Err(Error::InvalidArgument("two-layer control needs at least one slow state".into()));
        }
        let scheduling = MpcSpec {
            model: coarse,
            horizon: settings.horizon_scheduling,
            cost: scheduling_layout.cost.clone(),
            state_set: settings.state_set.clone(),
            input_set: settings.input_set.clone(),
            soft_rows: settings.soft_rows.clone(),
            slack_weight: settings.slack_weight,
            terminal: settings.terminal.clone(),
        };
        scheduling.validate()?;
        let piloting = PilotingSpec {
            mpc: MpcSpec {
                model: fine.clone(),
                horizon: settings.horizon_piloting,
                cost: piloting_layout.cost.clone(),
                state_set: settings.state_set.clone(),
                input_set: settings.input_set.clone(),
                soft_rows: settings.soft_rows.clone(),
                slack_weight: settings.slack_weight,
                terminal: settings.terminal.clone(),
            },
            slow_rows: piloting_layout.slow_rows.clone(),
        };
        piloting.mpc.validate()?;
        let n_q = settings.state_set.n_rows();
        Ok(Self {
            source,
            objective: settings.objective.clone(),
            scheduling,
            scheduling_layout,
            piloting,
            piloting_layout,
            state_set: settings.state_set.clone(),
            slow_mask: fine.slow_mask().to_vec(),
            nu: settings.nu,
            qp: settings.qp.clone(),
            clock: 0,
            plan: None,
            active: TighteningState::zero(n_q),
            predicted: TighteningState::zero(n_q),
        })
    }

    pub fn source(&self) -> TighteningSource {
        self.source
    }

    pub fn plan(&self) -> Option<&SlowStatePlan> {
        self.plan.as_ref()
    }

    /// Tightening the next scheduling solve would use if it ran now.
    fn next_tightening(&self, x: &DVector<f64>) -> Result<TighteningState> {
        match self.source {
            TighteningSource::None => Ok(TighteningState::zero(self.state_set.n_rows())),
            TighteningSource::Passive => passive_tightening(x, &self.state_set, &self.slow_mask),
            TighteningSource::Robust => Ok(self.predicted.clone()),
        }
    }

    fn schedule(&mut self, k: usize, x: &DVector<f64>, scenario: &DemandScenario) -> Result<LayerSolution> {
        let tightening = self.next_tightening(x)?;
        let horizon = self.scheduling.horizon;
        let period = self.piloting.mpc.model.sample_period();
        self.scheduling.cost.reference = (0..=horizon)
            .map(|j| {
                let t = (k + j * self.nu) as f64 * period;
                self.objective.reference(&self.scheduling_layout, t, None)
            })
            .collect();
        let preview = scenario.approximate_preview(k / self.nu, horizon, self.nu);
        let solution = solve_scheduling(&self.scheduling, x, &preview, &tightening, &self.qp)?;
        self.plan = Some(extract_slow_plan(&solution.trajectory.states, &self.slow_mask, self.nu, k)?);
        self.active = tightening;
        Ok(solution)
    }

    fn pilot(&mut self, k: usize, x: &DVector<f64>, scenario: &DemandScenario) -> Result<LayerSolution> {
        let horizon = self.piloting.mpc.horizon;
        let period = self.piloting.mpc.model.sample_period();
        self.piloting.mpc.cost.reference = (0..=horizon)
            .map(|j| self.objective.reference(&self.piloting_layout, (k + j) as f64 * period, None))
            .collect();
        let plan = self.plan.as_ref().expect("a scheduling solve precedes every piloting solve");
        let slow_reference = plan.expand(k + 1, horizon);
        let preview = scenario.accurate_preview(k, horizon);
        let solution = solve_piloting(&self.piloting, x, &preview, &slow_reference, &self.qp)?;
        if self.source == TighteningSource::Robust {
            self.predicted = predict_violation(
                &self.piloting.mpc.model,
                x,
                &solution.trajectory.inputs,
                &preview,
                &self.state_set,
                &self.slow_mask,
            )?;
        }
        Ok(solution)
    }
}

impl Controller for HierarchicalController {
    fn variant(&self) -> ControllerVariant {
        match self.source {
            TighteningSource::None => ControllerVariant::Hmpc,
            TighteningSource::Passive => ControllerVariant::HmpcPassive,
            TighteningSource::Robust => ControllerVariant::HmpcRobust,
        }
    }

    fn control(&mut self, k: usize, x: &DVector<f64>, scenario: &DemandScenario) -> Result<ControlStep> {
        if k != self.clock {
            return Err(Error::InvalidArgument(format!("controller expected step {}, got {k}", self.clock)));
        }
        let mut qp_iterations = 0;
        let scheduling_solved = k % self.nu == 0;
        if scheduling_solved {
            qp_iterations += self.schedule(k, x, scenario)?.qp.iterations;
        }
        let piloting = self.pilot(k, x, scenario)?;
        qp_iterations += piloting.qp.iterations;
        self.clock += 1;
        Ok(ControlStep {
            input: piloting.first_input().clone(),
            scheduling_solved,
            tightening: self.active.clone(),
            slacks: piloting.first_slacks().clone(),
            qp_iterations,
        })
    }
}
