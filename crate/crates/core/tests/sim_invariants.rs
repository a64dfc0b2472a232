use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::DVector;

use hmpc::controllers::{
    Controller, ControllerSettings, ControllerVariant, HierarchicalController, PiecewiseLinear, TighteningSource,
};
use hmpc::preview::DemandScenario;
use hmpc::sim::{self, compute_metrics, read_trace_file, write_trace_file, MetricSpec, SimTrace};

fn ramp() -> PiecewiseLinear {
    PiecewiseLinear::new(vec![(0.0, 0.0), (100.0, 50.0)]).unwrap()
}

fn x0() -> DVector<f64> {
    DVector::from_column_slice(&[0.0, 0.0, 100.0, 25.0])
}

/// Fixture traces, simulated once per test binary.
fn fixture_traces() -> &'static HashMap<ControllerVariant, SimTrace> {
    static TRACES: OnceLock<HashMap<ControllerVariant, SimTrace>> = OnceLock::new();
    TRACES.get_or_init(|| {
        let mut settings = ControllerSettings::vehicle(ramp());
        // A short single-layer horizon keeps this suite fast; the long one is
        // exercised by the acceptance target.
        settings.horizon_smpc = 20;
        let scenario = DemandScenario::fixture();
        std::thread::scope(|scope| {
            let handles: Vec<_> = ControllerVariant::ALL
                .into_iter()
                .map(|v| {
                    let (settings, scenario) = (&settings, &scenario);
                    scope.spawn(move || (v, sim::run(settings, v, scenario, &x0(), 120).unwrap()))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        })
    })
}

#[test]
fn plant_follows_its_recurrence() {
    let model = ControllerSettings::vehicle(ramp()).model;
    for (variant, trace) in fixture_traces() {
        assert!(trace.failure.is_none(), "{variant}: {:?}", trace.failure);
        assert!(trace.recurrence_error(&model).unwrap() <= 1e-9, "{variant}");
    }
}

#[test]
fn energy_state_changes_by_its_row_exactly() {
    for (variant, trace) in fixture_traces() {
        for pair in trace.records.windows(2) {
            let (u, d) = (pair[0].input.as_ref().unwrap(), pair[0].demand.as_ref().unwrap());
            let drop = 0.8 * (u[0] - u[1]) + 0.15 * u[2] + 0.25 * d[0];
            let actual = pair[0].state[2] - pair[1].state[2];
            assert!((actual - drop).abs() <= 1e-9, "{variant} step {}", pair[0].step);
        }
    }
}

#[test]
fn one_input_per_fine_step() {
    for (variant, trace) in fixture_traces() {
        assert_eq!(trace.records.len(), 121, "{variant}");
        assert_eq!(trace.steps(), 120);
        for (k, r) in trace.records.iter().enumerate() {
            assert_eq!(r.step, k);
            assert_eq!(r.input.is_some(), k < 120);
            assert_eq!(r.time, k as f64);
        }
        let solves = trace.records.iter().filter(|r| r.sched_solve).count();
        let expected = if *variant == ControllerVariant::Smpc { 0 } else { 24 };
        assert_eq!(solves, expected, "{variant}");
    }
}

#[test]
fn effective_bounds_never_loosen() {
    for (variant, trace) in fixture_traces() {
        for r in &trace.records {
            assert!(r.bounds_eff[0] <= 30.0, "{variant} step {}", r.step);
            if matches!(variant, ControllerVariant::Smpc | ControllerVariant::Hmpc) {
                assert_eq!(r.bounds_eff[0], 30.0);
            }
            assert!(r.slacks.iter().all(|&s| s >= 0.0));
        }
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let settings = ControllerSettings::vehicle(ramp());
    let scenario = DemandScenario::fixture();
    let again = sim::run(&settings, ControllerVariant::HmpcRobust, &scenario, &x0(), 120).unwrap();
    assert_eq!(&again, &fixture_traces()[&ControllerVariant::HmpcRobust]);
}

/// Steps a hierarchical controller on the plant and returns every
/// tightening it reported.
fn tightening_history(source: TighteningSource, scenario: &DemandScenario, steps: usize) -> Vec<DVector<f64>> {
    let settings = ControllerSettings::vehicle(ramp());
    let mut controller = HierarchicalController::new(&settings, source).unwrap();
    let mut x = x0();
    (0..steps)
        .map(|k| {
            let step = controller.control(k, &x, scenario).unwrap();
            x = settings.model.step(&x, &step.input, scenario.actual_at(k)).unwrap();
            step.tightening.qbar().clone()
        })
        .collect()
}

#[test]
fn tightening_is_confined_to_slow_rows() {
    let scenario = DemandScenario::fixture();
    for source in [TighteningSource::None, TighteningSource::Passive, TighteningSource::Robust] {
        for qbar in tightening_history(source, &scenario, 60) {
            assert_eq!(qbar.len(), 8);
            assert!(qbar.iter().all(|&q| q >= 0.0));
            for row in [0, 1, 2, 4, 5, 6] {
                assert_eq!(qbar[row], 0.0, "{source:?}");
            }
            if source == TighteningSource::None {
                assert!(qbar.iter().all(|&q| q == 0.0));
            }
        }
    }
}

#[test]
fn perfect_forecast_robust_run_is_the_baseline_run() {
    // During the fixture pulses the slack penalty trades a ~1e-8 overshoot
    // against input effort, so the pulse-free forecast series is used.
    let series: Vec<f64> = DemandScenario::fixture().approximate().iter().map(|d| d[0]).collect();
    let scenario = DemandScenario::perfect_forecast(&series).unwrap();
    let predicted = tightening_history(TighteningSource::Robust, &scenario, 120);
    assert!(predicted.iter().all(|q| q.iter().all(|&v| v == 0.0)), "no violation is predicted");

    let settings = ControllerSettings::vehicle(ramp());
    let baseline = sim::run(&settings, ControllerVariant::Hmpc, &scenario, &x0(), 120).unwrap();
    let robust = sim::run(&settings, ControllerVariant::HmpcRobust, &scenario, &x0(), 120).unwrap();
    assert_eq!(baseline, robust);
}

#[test]
fn equilibrium_stays_put() {
    let mut settings = ControllerSettings::vehicle(PiecewiseLinear::constant(0.0));
    // Without a cooling penalty the cooling input is not unique at rest.
    settings.objective.input_weights[2] = 0.1;
    settings.horizon_smpc = 20;
    let scenario = DemandScenario::from_scalars(&[0.0; 20], &[0.0; 20], 20).unwrap();
    let start = DVector::from_column_slice(&[0.0, 0.0, 50.0, 25.0]);
    let spec = MetricSpec::vehicle(PiecewiseLinear::constant(0.0));
    for variant in ControllerVariant::ALL {
        let trace = sim::run(&settings, variant, &scenario, &start, 20).unwrap();
        for x in trace.states() {
            assert!((x - &start).amax() <= 1e-6, "{variant}: {x}");
        }
        let m = compute_metrics(&trace, &spec).unwrap();
        assert_eq!(m.cumulative_violation, 0.0);
        assert!(m.position_rms <= 1e-6 && m.energy_consumed.abs() <= 1e-6, "{variant}: {m:?}");
        assert_eq!(m.position_violations, 0);
    }
}

#[test]
fn failing_controller_truncates_the_trace() {
    let mut settings = ControllerSettings::vehicle(ramp());
    settings.qp.max_iter = 1;
    let trace = sim::run(&settings, ControllerVariant::Hmpc, &DemandScenario::fixture(), &x0(), 10).unwrap();
    let failure = trace.failure.as_deref().expect("one iteration cannot converge");
    assert!(failure.starts_with("step 0"), "{failure}");
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.records[0].state, x0());
}

#[test]
fn rejects_runs_longer_than_the_scenario() {
    let settings = ControllerSettings::vehicle(ramp());
    assert!(sim::run(&settings, ControllerVariant::Hmpc, &DemandScenario::fixture(), &x0(), 121).is_err());
}

#[test]
fn traces_survive_a_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (variant, trace) in fixture_traces() {
        let path = dir.path().join(format!("{variant}.csv"));
        write_trace_file(trace, &path).unwrap();
        assert_eq!(&read_trace_file(&path).unwrap(), trace, "{variant}");
    }
}

#[test]
fn metrics_are_nonnegative_on_the_fixture() {
    let spec = MetricSpec::vehicle(ramp());
    for (variant, trace) in fixture_traces() {
        let m = compute_metrics(trace, &spec).unwrap();
        assert!(m.cumulative_violation >= 0.0 && m.peak_violation >= 0.0 && m.position_rms >= 0.0, "{variant}");
        assert!(m.completed);
        assert_eq!(m.steps, 120);
    }
}
