//! TOML experiment configuration. Every block and key is optional; missing
//! values fall back to the vehicle case study.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controllers::{
    ControllerSettings, ControllerVariant, PiecewiseLinear, PreviewSource, TrackedState, TrackingObjective,
    DEFAULT_INPUT_WEIGHT, DEFAULT_POSITION_WEIGHT, DEFAULT_SLACK_WEIGHT, DEFAULT_SLOW_WEIGHT,
};
use crate::error::{Error, Result};
use crate::model::{LtiModel, PolyhedralSet};
use crate::preview::{read_series_csv, DemandScenario};
use crate::qp::{QpMethod, QpSettings};
use crate::sim::MetricSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentBlock,
    pub model: ModelBlock,
    pub bounds: BoundsBlock,
    pub weights: WeightsBlock,
    pub horizons: HorizonsBlock,
    pub reference: ReferenceBlock,
    pub scenario: ScenarioBlock,
    pub metrics: MetricsBlock,
    pub solver: SolverBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub x0: Vec<f64>,
    /// Fine steps to simulate; defaults to the scenario length.
    pub duration: Option<usize>,
    pub controllers: Vec<ControllerVariant>,
    pub output: PathBuf,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            x0: vec![0.0, 0.0, 100.0, 25.0],
            duration: None,
            controllers: ControllerVariant::ALL.to_vec(),
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub a: Vec<Vec<f64>>,
    pub b1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
    pub sample_period: f64,
    pub slow_mask: Vec<bool>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Default for ModelBlock {
    fn default() -> Self {
        let m = LtiModel::vehicle();
        Self {
            a: rows(m.a()),
            b1: rows(m.b1()),
            b2: rows(m.b2()),
            sample_period: m.sample_period(),
            slow_mask: m.slow_mask().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsBlock {
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    /// Per state: soften its upper bound with a penalized slack.
    pub soft_upper: Vec<bool>,
    pub soft_lower: Vec<bool>,
}

impl Default for BoundsBlock {
    fn default() -> Self {
        Self {
            state_lower: vec![-1.0, -20.0, 0.0, 0.0],
            state_upper: vec![100.0, 20.0, 100.0, 30.0],
            input_lower: vec![-1.0; 3],
            input_upper: vec![1.0; 3],
            soft_upper: vec![true, false, false, true],
            soft_lower: vec![true, false, false, false],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsBlock {
    /// Quadratic input weights (λ1, λ2 and the thermal-power input).
    pub input: Vec<f64>,
    /// λ3 on reference tracking.
    pub tracking: f64,
    /// λ4 on slow-state plan tracking at the piloting layer.
    pub slow: f64,
    pub slack: f64,
}

impl Default for WeightsBlock {
    fn default() -> Self {
        Self {
            input: vec![DEFAULT_INPUT_WEIGHT, DEFAULT_INPUT_WEIGHT, 0.0],
            tracking: DEFAULT_POSITION_WEIGHT,
            slow: DEFAULT_SLOW_WEIGHT,
            slack: DEFAULT_SLACK_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonsBlock {
    pub smpc: usize,
    pub scheduling: usize,
    pub piloting: usize,
    pub nu: usize,
}

impl Default for HorizonsBlock {
    fn default() -> Self {
        Self {
            smpc: 100,
            scheduling: 20,
            piloting: 20,
            nu: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceBlock {
    /// Index of the tracked state.
    pub state: usize,
    /// `[time, value]` pairs, linear in between, held outside.
    pub breakpoints: Vec<[f64; 2]>,
}

impl Default for ReferenceBlock {
    fn default() -> Self {
        Self {
            state: 0,
            breakpoints: vec![[0.0, 0.0], [100.0, 50.0]],
        }
    }
}

/// Inline series or `step,value` CSV files; with neither, the shipped
/// fixture scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioBlock {
    pub actual: Option<Vec<f64>>,
    pub approximate: Option<Vec<f64>>,
    pub actual_csv: Option<PathBuf>,
    pub approximate_csv: Option<PathBuf>,
    /// Series previewed by the single-layer controller.
    pub smpc_preview: PreviewSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsBlock {
    /// State whose upper bound counts as the thermal limit.
    pub thermal_state: usize,
    pub energy_state: usize,
}

impl Default for MetricsBlock {
    fn default() -> Self {
        Self {
            thermal_state: 3,
            energy_state: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub method: QpMethod,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = QpSettings::default();
        Self {
            method: s.method,
            primal_tol: s.primal_tol,
            dual_tol: s.dual_tol,
            max_iter: s.max_iter,
            polish: s.polish,
        }
    }
}

/// A validated configuration turned into runnable pieces.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub settings: ControllerSettings,
    pub scenario: DemandScenario,
    pub x0: DVector<f64>,
    pub duration: usize,
    pub controllers: Vec<ControllerVariant>,
    pub output: PathBuf,
    pub metrics: MetricSpec,
}

fn matrix(field: &str, data: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = data.first().map_or(0, Vec::len);
    if data.is_empty() || cols == 0 {
        return Err(Error::config(field, "matrix must be nonempty"));
    }
    if let Some(i) = data.iter().position(|r| r.len() != cols) {
        return Err(Error::config(field, format!("row {i} has {} entries, expected {cols}", data[i].len())));
    }
    Ok(DMatrix::from_row_iterator(data.len(), cols, data.iter().flatten().copied()))
}

fn positive(field: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::config(field, "must be >= 1"));
    }
    Ok(())
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::config(field, format!("must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

fn length(field: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::config(field, format!("has {got} entries, expected {expected}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => format!("line {}", text[..span.start].matches('\n').count() + 1),
                None => "config".into(),
            };
            Error::config(location, e.message().to_string())
        })
    }

    /// Reads and validates a config file. Relative scenario paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<(Self, Experiment)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let experiment = config.build(base)?;
        Ok((config, experiment))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validates every block and assembles the experiment.
    pub fn build(&self, base: &Path) -> Result<Experiment> {
        let m = &self.model;
        let model = LtiModel::new(
            matrix("model.a", &m.a)?,
            matrix("model.b1", &m.b1)?,
            matrix("model.b2", &m.b2)?,
            m.sample_period,
            m.slow_mask.clone(),
        )
        .map_err(|e| Error::config("model", e.to_string()))?;
        let (n, n_u) = (model.n_states(), model.n_inputs());

        let b = &self.bounds;
        length("bounds.state_lower", b.state_lower.len(), n)?;
        length("bounds.state_upper", b.state_upper.len(), n)?;
        length("bounds.input_lower", b.input_lower.len(), n_u)?;
        length("bounds.input_upper", b.input_upper.len(), n_u)?;
        length("bounds.soft_upper", b.soft_upper.len(), n)?;
        length("bounds.soft_lower", b.soft_lower.len(), n)?;
        let state_set =
            PolyhedralSet::from_box(&b.state_lower, &b.state_upper).map_err(|e| Error::config("bounds.state", e.to_string()))?;
        let input_set =
            PolyhedralSet::from_box(&b.input_lower, &b.input_upper).map_err(|e| Error::config("bounds.input", e.to_string()))?;
        let soft_rows: Vec<usize> = (0..n)
            .filter(|&i| b.soft_upper[i])
            .chain((0..n).filter(|&i| b.soft_lower[i]).map(|i| n + i))
            .collect();

        let w = &self.weights;
        length("weights.input", w.input.len(), n_u)?;
        for (i, &v) in w.input.iter().enumerate() {
            nonnegative(&format!("weights.input[{i}]"), v)?;
        }
        nonnegative("weights.tracking", w.tracking)?;
        nonnegative("weights.slow", w.slow)?;
        nonnegative("weights.slack", w.slack)?;
        if !soft_rows.is_empty() && w.slack <= 0.0 {
            return Err(Error::config("weights.slack", "must be positive when bounds are softened"));
        }

        let h = &self.horizons;
        positive("horizons.smpc", h.smpc)?;
        positive("horizons.scheduling", h.scheduling)?;
        positive("horizons.piloting", h.piloting)?;
        positive("horizons.nu", h.nu)?;

        let r = &self.reference;
        if r.state >= n {
            return Err(Error::config("reference.state", format!("{} out of range for {n} states", r.state)));
        }
        let reference = PiecewiseLinear::new(r.breakpoints.iter().map(|p| (p[0], p[1])).collect())
            .map_err(|e| Error::config("reference.breakpoints", e.to_string()))?;

        let scenario = self.scenario_series(base)?;
        if scenario.n_demands() != model.n_demands() {
            return Err(Error::config(
                "scenario",
                format!("series are scalar but the model has {} demand inputs", model.n_demands()),
            ));
        }

        let e = &self.experiment;
        length("experiment.x0", e.x0.len(), n)?;
        if e.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("experiment.x0", "entries must be finite"));
        }
        let duration = e.duration.unwrap_or(scenario.duration_steps());
        positive("experiment.duration", duration)?;
        if duration > scenario.duration_steps() {
            return Err(Error::config(
                "experiment.duration",
                format!("{duration} exceeds scenario length {}", scenario.duration_steps()),
            ));
        }
        if e.controllers.is_empty() {
            return Err(Error::config("experiment.controllers", "list is empty"));
        }

        let met = &self.metrics;
        if met.thermal_state >= n {
            return Err(Error::config("metrics.thermal_state", "out of range"));
        }
        if met.energy_state >= n {
            return Err(Error::config("metrics.energy_state", "out of range"));
        }

        let s = &self.solver;
        if !(s.primal_tol > 0.0) || !(s.dual_tol > 0.0) {
            return Err(Error::config("solver", "tolerances must be positive"));
        }
        positive("solver.max_iter", s.max_iter)?;

        let settings = ControllerSettings {
            model: model.clone(),
            state_set,
            input_set,
            soft_rows,
            slack_weight: w.slack,
            objective: TrackingObjective {
                input_weights: w.input.clone(),
                tracked: vec![TrackedState {
                    index: r.state,
                    weight: w.tracking,
                    desired: reference.clone(),
                }],
            },
            slow_weight: w.slow,
            horizon_smpc: h.smpc,
            horizon_scheduling: h.scheduling,
            horizon_piloting: h.piloting,
            nu: h.nu,
            smpc_preview: self.scenario.smpc_preview,
            terminal: None,
            qp: QpSettings {
                method: s.method,
                primal_tol: s.primal_tol,
                dual_tol: s.dual_tol,
                max_iter: s.max_iter,
                polish: s.polish,
                ..QpSettings::default()
            },
        };
        settings.validate().map_err(|e| Error::config("config", e.to_string()))?;

        let metrics = MetricSpec {
            thermal_axis: met.thermal_state,
            thermal_upper: b.state_upper[met.thermal_state],
            position_axis: r.state,
            position_lower: b.state_lower[r.state],
            position_upper: b.state_upper[r.state],
            position_reference: reference,
            energy_axis: met.energy_state,
            sample_period: model.sample_period(),
        };
        Ok(Experiment {
            settings,
            scenario,
            x0: DVector::from_vec(e.x0.clone()),
            duration,
            controllers: e.controllers.clone(),
            output: e.output.clone(),
            metrics,
        })
    }

    fn scenario_series(&self, base: &Path) -> Result<DemandScenario> {
        let sc = &self.scenario;
        let series = |field: &str, inline: &Option<Vec<f64>>, csv: &Option<PathBuf>| -> Result<Option<Vec<f64>>> {
            match (inline, csv) {
                (Some(_), Some(_)) => Err(Error::config(
                    format!("scenario.{field}"),
                    format!("give either `{field}` or `{field}_csv`, not both"),
                )),
                (Some(v), None) => Ok(Some(v.clone())),
                (None, Some(p)) => {
                    let path = base.join(p);
                    if !path.is_file() {
                        return Err(Error::config(
                            format!("scenario.{field}_csv"),
                            format!("file {} does not exist", path.display()),
                        ));
                    }
                    read_series_csv(&path)
                        .map(Some)
                        .map_err(|e| Error::config(format!("scenario.{field}_csv"), e.to_string()))
                }
                (None, None) => Ok(None),
            }
        };
        let actual = series("actual", &sc.actual, &sc.actual_csv)?;
        let approximate = series("approximate", &sc.approximate, &sc.approximate_csv)?;
        match (actual, approximate) {
            (None, None) => Ok(DemandScenario::fixture()),
            (Some(a), Some(p)) => {
                let duration = a.len().min(p.len());
                DemandScenario::from_scalars(&a, &p, duration).map_err(|e| Error::config("scenario", e.to_string()))
            }
            _ => Err(Error::config("scenario", "actual and approximate series must be given together")),
        }
    }
}
