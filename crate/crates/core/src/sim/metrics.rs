use serde::{Deserialize, Serialize};

use super::SimTrace;
use crate::controllers::PiecewiseLinear;
use crate::error::{Error, Result};

/// Which trace columns the metrics read.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpec {
    pub thermal_axis: usize,
    pub thermal_upper: f64,
    pub position_axis: usize,
    pub position_lower: f64,
    pub position_upper: f64,
    pub position_reference: PiecewiseLinear,
    pub energy_axis: usize,
    pub sample_period: f64,
}

impl MetricSpec {
    /// Vehicle columns: x4 ≤ 30, −1 ≤ x1 ≤ 100, energy in x3.
    pub fn vehicle(position_reference: PiecewiseLinear) -> Self {
        Self {
            thermal_axis: 3,
            thermal_upper: 30.0,
            position_axis: 0,
            position_lower: -1.0,
            position_upper: 100.0,
            position_reference,
            energy_axis: 2,
            sample_period: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `Σ max(0, x_thermal − upper)·T` over every recorded state.
    pub cumulative_violation: f64,
    pub peak_violation: f64,
    /// RMS of position minus its reference over every recorded state.
    pub position_rms: f64,
    /// Energy state drop from the first to the last recorded state.
    pub energy_consumed: f64,
    /// States with position outside its bounds.
    pub position_violations: usize,
    pub steps: usize,
    pub completed: bool,
}

pub fn compute_metrics(trace: &SimTrace, spec: &MetricSpec) -> Result<Metrics> {
    let n = trace.layout.n_states;
    for (name, axis) in [
        ("thermal_axis", spec.thermal_axis),
        ("position_axis", spec.position_axis),
        ("energy_axis", spec.energy_axis),
    ] {
        if axis >= n {
            return Err(Error::InvalidArgument(format!("{name} {axis} out of range for {n} states")));
        }
    }
    let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) else {
        return Err(Error::InvalidArgument("empty trace".into()));
    };
    let mut cumulative = 0.0;
    let mut peak = 0.0_f64;
    let mut sq = 0.0;
    let mut position_violations = 0;
    for r in &trace.records {
        let excess = (r.state[spec.thermal_axis] - spec.thermal_upper).max(0.0);
        cumulative += excess * spec.sample_period;
        peak = peak.max(excess);
        let p = r.state[spec.position_axis];
        let e = p - spec.position_reference.at(r.time);
        sq += e * e;
        if p > spec.position_upper || p < spec.position_lower {
            position_violations += 1;
        }
    }
    Ok(Metrics {
        cumulative_violation: cumulative,
        peak_violation: peak,
        position_rms: (sq / trace.records.len() as f64).sqrt(),
        energy_consumed: first.state[spec.energy_axis] - last.state[spec.energy_axis],
        position_violations,
        steps: trace.steps(),
        completed: trace.failure.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;

    use super::*;
    use crate::sim::{TraceLayout, TraceRecord};

    fn trace_of(states: &[[f64; 4]]) -> SimTrace {
        let records = states
            .iter()
            .enumerate()
            .map(|(k, s)| TraceRecord {
                step: k,
                time: k as f64,
                state: DVector::from_column_slice(s),
                input: (k + 1 < states.len()).then(|| DVector::zeros(3)),
                demand: (k + 1 < states.len()).then(|| DVector::zeros(1)),
                bounds_eff: vec![30.0],
                slacks: vec![0.0, 0.0],
                sched_solve: false,
                qp_iters: 0,
            })
            .collect();
        SimTrace {
            layout: TraceLayout {
                n_states: 4,
                n_inputs: 3,
                n_demands: 1,
                bound_axes: vec![3],
                slack_axes: vec![0, 3],
            },
            records,
            failure: None,
        }
    }

    #[test]
    fn constant_overshoot_accumulates() {
        let trace = trace_of(&[[0.0, 0.0, 50.0, 31.0]; 10]);
        let m = compute_metrics(&trace, &MetricSpec::vehicle(PiecewiseLinear::constant(0.0))).unwrap();
        assert!((m.cumulative_violation - 10.0).abs() < 1e-12);
        assert_eq!(m.peak_violation, 1.0);
        assert_eq!(m.energy_consumed, 0.0);
        assert_eq!(m.steps, 9);
    }

    #[test]
    fn position_and_energy() {
        let trace = trace_of(&[[0.0, 0.0, 80.0, 0.0], [3.0, 0.0, 70.0, 0.0], [101.0, 0.0, 65.0, 0.0]]);
        let reference = PiecewiseLinear::new(vec![(0.0, 0.0), (2.0, 4.0)]).unwrap();
        let m = compute_metrics(&trace, &MetricSpec::vehicle(reference)).unwrap();
        // errors 0, 1, 97
        assert!((m.position_rms - ((1.0 + 97.0 * 97.0) / 3.0_f64).sqrt()).abs() < 1e-12);
        assert_eq!(m.energy_consumed, 15.0);
        assert_eq!(m.position_violations, 1);
        assert_eq!(m.cumulative_violation, 0.0);
    }
}
