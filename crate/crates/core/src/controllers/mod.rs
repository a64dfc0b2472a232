//! Single-layer and two-layer (scheduling + piloting) MPC controllers.
//!
//! The two-layer controller plans slow-state trajectories at a coarse rate
//! from an approximate demand forecast and tracks them at the fine rate with
//! an accurate short preview. Its robust variant propagates the piloting plan
//! to predict slow-state violations and tightens the next scheduling solve by
//! those amounts; the passive variant tightens only after a violation has
//! been measured.

mod hierarchical;
mod layers;
mod objective;
mod plan;
mod single;
mod tightening;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LtiModel, PolyhedralSet};
use crate::mpc::TerminalCost;
use crate::preview::DemandScenario;
use crate::qp::QpSettings;

pub use hierarchical::HierarchicalController;
pub use layers::{solve_piloting, solve_scheduling, solve_smpc, LayerSolution, PilotingSpec};
pub use objective::{CostLayout, PiecewiseLinear, TrackedState, TrackingObjective};
pub use plan::{extract_slow_plan, SlowStatePlan};
pub use single::SingleLayerController;
pub use tightening::{passive_tightening, predict_violation, TighteningSource, TighteningState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerVariant {
    #[serde(rename = "smpc")]
    Smpc,
    #[serde(rename = "hmpc")]
    Hmpc,
    #[serde(rename = "hmpc-passive")]
    HmpcPassive,
    #[serde(rename = "hmpc-robust")]
    HmpcRobust,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 4] = [Self::Smpc, Self::Hmpc, Self::HmpcPassive, Self::HmpcRobust];

    pub fn id(self) -> &'static str {
        match self {
            Self::Smpc => "smpc",
            Self::Hmpc => "hmpc",
            Self::HmpcPassive => "hmpc-passive",
            Self::HmpcRobust => "hmpc-robust",
        }
    }

    /// Tightening source used at the scheduling layer; `None` for S-MPC.
    pub fn tightening(self) -> Option<TighteningSource> {
        match self {
            Self::Smpc => None,
            Self::Hmpc => Some(TighteningSource::None),
            Self::HmpcPassive => Some(TighteningSource::Passive),
            Self::HmpcRobust => Some(TighteningSource::Robust),
        }
    }
}

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ControllerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.id() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown controller `{s}` (expected smpc, hmpc, hmpc-passive or hmpc-robust)")))
    }
}

/// Which demand series the single-layer controller previews.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreviewSource {
    #[default]
    Actual,
    Approximate,
}

/// Everything needed to build any controller variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub model: LtiModel,
    pub state_set: PolyhedralSet,
    pub input_set: PolyhedralSet,
    pub soft_rows: Vec<usize>,
    pub slack_weight: f64,
    pub objective: TrackingObjective,
    /// Weight on slow-state plan tracking at the piloting layer.
    pub slow_weight: f64,
    pub horizon_smpc: usize,
    pub horizon_scheduling: usize,
    pub horizon_piloting: usize,
    /// Fine steps per scheduling step.
    pub nu: usize,
    pub smpc_preview: PreviewSource,
    pub terminal: Option<TerminalCost>,
    pub qp: QpSettings,
}

/// Default λ1 = λ2 = 0.1 on acceleration and deceleration effort.
pub const DEFAULT_INPUT_WEIGHT: f64 = 0.1;
/// Default λ3 on position tracking.
pub const DEFAULT_POSITION_WEIGHT: f64 = 1.0;
/// Default λ4 on slow-state plan tracking.
pub const DEFAULT_SLOW_WEIGHT: f64 = 10.0;
pub const DEFAULT_SLACK_WEIGHT: f64 = 1e6;

impl ControllerSettings {
    /// Vehicle defaults: 1 s fine period, 5 s scheduling period, horizons
    /// `N = 100`, `H_s = 20`, `H_p = 20`, slack weight 1e6 on the position
    /// rows and the thermal upper bound.
    pub fn vehicle(position_reference: PiecewiseLinear) -> Self {
        Self {
            model: LtiModel::vehicle(),
            state_set: PolyhedralSet::vehicle_states(),
            input_set: PolyhedralSet::vehicle_inputs(),
            soft_rows: vec![0, 3, 4],
            slack_weight: DEFAULT_SLACK_WEIGHT,
            objective: TrackingObjective {
                input_weights: vec![DEFAULT_INPUT_WEIGHT, DEFAULT_INPUT_WEIGHT, 0.0],
                tracked: vec![TrackedState {
                    index: 0,
                    weight: DEFAULT_POSITION_WEIGHT,
                    desired: position_reference,
                }],
            },
            slow_weight: DEFAULT_SLOW_WEIGHT,
            horizon_smpc: 100,
            horizon_scheduling: 20,
            horizon_piloting: 20,
            nu: 5,
            smpc_preview: PreviewSource::Actual,
            terminal: None,
            qp: QpSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n_states();
        if self.state_set.dim() != n {
            return Err(Error::dims("state_set", n, self.state_set.dim()));
        }
        if self.input_set.dim() != self.model.n_inputs() {
            return Err(Error::dims("input_set", self.model.n_inputs(), self.input_set.dim()));
        }
        if self.nu == 0 {
            return Err(Error::InvalidArgument("nu must be >= 1".into()));
        }
        for (name, h) in [
            ("horizon_smpc", self.horizon_smpc),
            ("horizon_scheduling", self.horizon_scheduling),
            ("horizon_piloting", self.horizon_piloting),
        ] {
            if h == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !(self.slow_weight >= 0.0) {
            return Err(Error::InvalidArgument("slow weight must be nonnegative".into()));
        }
        self.objective.validate(&self.model)
    }

    pub fn build(&self, variant: ControllerVariant) -> Result<Box<dyn Controller + Send>> {
        Ok(match variant.tightening() {
            None => Box::new(SingleLayerController::new(self)?),
            Some(source) => Box::new(HierarchicalController::new(self, source)?),
        })
    }
}

/// Output of one fine control step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStep {
    pub input: DVector<f64>,
    pub scheduling_solved: bool,
    /// Tightening in force at the scheduling layer after this step.
    pub tightening: TighteningState,
    /// Slacks of the applied layer on its first predicted state, per soft row.
    pub slacks: DVector<f64>,
    pub qp_iterations: usize,
}

/// A receding-horizon feedback law queried once per fine step.
pub trait Controller {
    fn variant(&self) -> ControllerVariant;

    /// Input for fine step `k` given the measured state `x`. Steps must be
    /// requested in order starting from 0.
    fn control(&mut self, k: usize, x: &DVector<f64>, scenario: &DemandScenario) -> Result<ControlStep>;
}
