//! Closed-loop simulation: a controller drives the true plant, which always
//! sees the actual demand. Controller predictions never feed back into the
//! plant state.

mod trace_csv;
mod metrics;

use nalgebra::DVector;

use crate::controllers::{Controller, ControllerSettings, ControllerVariant};
use crate::error::{Error, Result};
use crate::model::{LtiModel, PolyhedralSet};
use crate::preview::DemandScenario;

pub use trace_csv::{read_trace, read_trace_file, write_trace, write_trace_file};
pub use metrics::{compute_metrics, MetricSpec, Metrics};

/// Column layout of a trace. Bound columns report the effective upper bound
/// of each slow state; slack columns the applied layer's slack per state
/// axis that has softened rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLayout {
    pub n_states: usize,
    pub n_inputs: usize,
    pub n_demands: usize,
    pub bound_axes: Vec<usize>,
    pub slack_axes: Vec<usize>,
}

/// Row-level mapping from a state set to a [`TraceLayout`].
#[derive(Debug, Clone)]
struct Probe {
    layout: TraceLayout,
    /// `(row, coefficient)` of the upper-bound row for each bound axis.
    bound_rows: Vec<(usize, f64)>,
    /// For each slack axis, positions in the soft-row list on that axis.
    slack_groups: Vec<Vec<usize>>,
}

impl Probe {
    fn new(model: &LtiModel, state_set: &PolyhedralSet, soft_rows: &[usize]) -> Self {
        let mut bound_axes = Vec::new();
        let mut bound_rows = Vec::new();
        for axis in model.slow_indices() {
            let upper = (0..state_set.n_rows()).find(|&r| state_set.row_axis(r) == Some(axis) && state_set.p()[(r, axis)] > 0.0);
            if let Some(r) = upper {
                bound_axes.push(axis);
                bound_rows.push((r, state_set.p()[(r, axis)]));
            }
        }
        let mut slack_axes: Vec<usize> = soft_rows.iter().filter_map(|&r| state_set.row_axis(r)).collect();
        slack_axes.sort_unstable();
        slack_axes.dedup();
        let slack_groups = slack_axes
            .iter()
            .map(|&axis| {
                soft_rows
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| state_set.row_axis(r) == Some(axis))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        Self {
            layout: TraceLayout {
                n_states: model.n_states(),
                n_inputs: model.n_inputs(),
                n_demands: model.n_demands(),
                bound_axes,
                slack_axes,
            },
            bound_rows,
            slack_groups,
        }
    }

    fn bounds(&self, state_set: &PolyhedralSet, qbar: &DVector<f64>) -> Vec<f64> {
        self.bound_rows
            .iter()
            .map(|&(r, coef)| (state_set.q()[r] - qbar[r]) / coef)
            .collect()
    }

    fn slacks(&self, slacks: &DVector<f64>) -> Vec<f64> {
        self.slack_groups
            .iter()
            .map(|group| group.iter().map(|&k| slacks[k]).fold(0.0, |a, v| if v > a { v } else { a }))
            .collect()
    }
}

/// One fine step. The final record of a trace carries the terminal state
/// only, with no input or demand.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub state: DVector<f64>,
    pub input: Option<DVector<f64>>,
    pub demand: Option<DVector<f64>>,
    pub bounds_eff: Vec<f64>,
    pub slacks: Vec<f64>,
    pub sched_solve: bool,
    pub qp_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub layout: TraceLayout,
    pub records: Vec<TraceRecord>,
    /// Set when the controller failed; the trace stops at the failing step.
    pub failure: Option<String>,
}

impl SimTrace {
    /// Number of steps at which an input was applied.
    pub fn steps(&self) -> usize {
        self.records.iter().filter(|r| r.input.is_some()).count()
    }

    pub fn states(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.records.iter().map(|r| &r.state)
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.records.last().map(|r| &r.state)
    }

    /// Largest deviation from `record[k+1].state = step(record[k])`.
    pub fn recurrence_error(&self, model: &LtiModel) -> Result<f64> {
        let mut worst = 0.0_f64;
        for pair in self.records.windows(2) {
            let (cur, next) = (&pair[0], &pair[1]);
            let (Some(u), Some(d)) = (&cur.input, &cur.demand) else {
                return Err(Error::InvalidArgument(format!("record {} has no input", cur.step)));
            };
            let predicted = model.step(&cur.state, u, d)?;
            worst = worst.max((predicted - &next.state).amax());
        }
        Ok(worst)
    }
}

/// Builds the requested controller and runs it for `duration` fine steps.
pub fn run(
    settings: &ControllerSettings,
    variant: ControllerVariant,
    scenario: &DemandScenario,
    x0: &DVector<f64>,
    duration: usize,
) -> Result<SimTrace> {
    let mut controller = settings.build(variant)?;
    run_with(controller.as_mut(), settings, scenario, x0, duration)
}

/// Runs an existing controller against the plant described by `settings`.
pub fn run_with(
    controller: &mut dyn Controller,
    settings: &ControllerSettings,
    scenario: &DemandScenario,
    x0: &DVector<f64>,
    duration: usize,
) -> Result<SimTrace> {
    let model = &settings.model;
    if duration > scenario.duration_steps() {
        return Err(Error::InvalidArgument(format!(
            "duration {duration} exceeds scenario length {}",
            scenario.duration_steps()
        )));
    }
    if x0.len() != model.n_states() {
        return Err(Error::dims("x0", model.n_states(), x0.len()));
    }
    if scenario.n_demands() != model.n_demands() {
        return Err(Error::dims("scenario demand", model.n_demands(), scenario.n_demands()));
    }
    let probe = Probe::new(model, &settings.state_set, &settings.soft_rows);
    let period = model.sample_period();
    let mut records = Vec::with_capacity(duration + 1);
    let mut x = x0.clone();
    let mut bounds_eff = probe.bounds(&settings.state_set, &DVector::zeros(settings.state_set.n_rows()));
    let mut failure = None;

    for k in 0..duration {
        let step = match controller.control(k, &x, scenario) {
            Ok(step) => step,
            Err(e) => {
                failure = Some(format!("step {k}: {e}"));
                break;
            }
        };
        let demand = scenario.actual_at(k).clone();
        let next = model.step(&x, &step.input, &demand)?;
        bounds_eff = probe.bounds(&settings.state_set, step.tightening.qbar());
        records.push(TraceRecord {
            step: k,
            time: k as f64 * period,
            state: std::mem::replace(&mut x, next),
            input: Some(step.input),
            demand: Some(demand),
            bounds_eff: bounds_eff.clone(),
            slacks: probe.slacks(&step.slacks),
            sched_solve: step.scheduling_solved,
            qp_iters: step.qp_iterations,
        });
    }
    let last = records.len();
    records.push(TraceRecord {
        step: last,
        time: last as f64 * period,
        state: x,
        input: None,
        demand: None,
        bounds_eff,
        slacks: vec![0.0; probe.layout.slack_axes.len()],
        sched_solve: false,
        qp_iters: 0,
    });
    Ok(SimTrace {
        layout: probe.layout,
        records,
        failure,
    })
}
