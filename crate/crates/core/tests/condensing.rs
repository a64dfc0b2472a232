mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use hmpc::controllers::{solve_smpc, PiecewiseLinear, TrackedState, TrackingObjective};
use hmpc::model::{LtiModel, PolyhedralSet};
use hmpc::mpc::{MpcSpec, QuadraticTrackingCost};
use hmpc::qp::{solve, QpSettings};

use common::random::{lti_model, matrix, rng, vector};

fn random_spec(rng: &mut impl Rng) -> MpcSpec {
    let n = rng.random_range(1..6);
    let m = rng.random_range(1..4);
    let h = rng.random_range(1..3);
    let model = lti_model(rng, n, m, h);
    let n_r = rng.random_range(1..5);
    let w = matrix(rng, n_r, n_r, 1.0);
    let lambda = w.transpose() * &w;
    let lambda = (&lambda + lambda.transpose()) * 0.5;
    let horizon = rng.random_range(1..13);
    let cost = QuadraticTrackingCost::new(matrix(rng, n_r, n, 1.0), matrix(rng, n_r, m, 1.0), lambda)
        .unwrap()
        .with_reference((0..=horizon).map(|_| vector(rng, n_r, 2.0)).collect());
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..-1.0)).collect();
    let upper: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    let soft_rows = (0..2 * n).filter(|_| rng.random_bool(0.3)).collect();
    MpcSpec {
        model,
        horizon,
        cost,
        state_set: PolyhedralSet::from_box(&lower, &upper).unwrap(),
        input_set: PolyhedralSet::from_box(&vec![-1.0; m], &vec![1.0; m]).unwrap(),
        soft_rows,
        slack_weight: rng.random_range(1.0..100.0),
        terminal: None,
    }
}

fn iterate(model: &LtiModel, x0: &DVector<f64>, inputs: &[DVector<f64>], demands: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut states = vec![x0.clone()];
    for (u, d) in inputs.iter().zip(demands) {
        let next = model.step(states.last().unwrap(), u, d).unwrap();
        states.push(next);
    }
    states
}

#[test]
fn decoded_states_follow_the_dynamics() {
    let mut rng = rng(21);
    for case in 0..200 {
        let spec = random_spec(&mut rng);
        let (n, m, h) = (spec.model.n_states(), spec.model.n_inputs(), spec.model.n_demands());
        let x0 = vector(&mut rng, n, 3.0);
        let demands: Vec<_> = (0..spec.horizon).map(|_| vector(&mut rng, h, 1.0)).collect();
        let condensed = spec.condense(&x0, &demands).unwrap();
        let z = vector(&mut rng, spec.n_decisions(), 1.0);
        let traj = condensed.decoder.decode_vector(&z);
        assert_eq!(traj.inputs.len(), spec.horizon);
        assert!(traj.inputs.iter().all(|u| u.len() == m));
        let reference = iterate(&spec.model, &x0, &traj.inputs, &demands);
        for (j, (a, b)) in traj.states.iter().zip(&reference).enumerate() {
            let err = (a - b).amax() / b.amax().max(1.0);
            assert!(err <= 1e-9, "case {case} stage {j}: {err:e}");
        }

        let slack_cost: f64 = traj.slacks.iter().map(|s| s.norm_squared()).sum::<f64>() * spec.slack_weight;
        let direct = spec.evaluate_cost(&traj.states, &traj.inputs).unwrap() + slack_cost;
        let condensed_value = condensed.problem.objective(&z) + condensed.constant;
        assert!(
            (direct - condensed_value).abs() <= 1e-9 * direct.abs().max(1.0),
            "case {case}: {direct} vs {condensed_value}"
        );
    }
}

#[test]
fn constraint_rows_match_the_state_and_input_sets() {
    let mut rng = rng(22);
    for case in 0..100 {
        let spec = random_spec(&mut rng);
        let x0 = vector(&mut rng, spec.model.n_states(), 1.0);
        let demands: Vec<_> = (0..spec.horizon).map(|_| vector(&mut rng, spec.model.n_demands(), 1.0)).collect();
        let condensed = spec.condense(&x0, &demands).unwrap();
        let z = vector(&mut rng, spec.n_decisions(), 1.5);
        let traj = condensed.decoder.decode_vector(&z);
        let mut direct = traj
            .inputs
            .iter()
            .map(|u| spec.input_set.contains(u).unwrap().violation)
            .fold(0.0_f64, f64::max);
        for (j, x) in traj.states.iter().enumerate().skip(1) {
            let mut q = spec.state_set.q().clone();
            for (k, &row) in spec.soft_rows.iter().enumerate() {
                q[row] += traj.slacks[j - 1][k];
            }
            let relaxed = PolyhedralSet::new(spec.state_set.p().clone(), q).unwrap();
            direct = direct.max(relaxed.contains(x).unwrap().violation);
        }
        for s in &traj.slacks {
            direct = direct.max(s.iter().fold(0.0_f64, |a, &v| a.max(-v)));
        }
        let stacked = condensed.problem.primal_residual(&z);
        assert!((stacked - direct).abs() <= 1e-9 * direct.max(1.0), "case {case}: {stacked} vs {direct}");
    }
}

/// Every corner of `[-1, 1]³` for the next vehicle state.
fn lowest_next_temperature(x0: &DVector<f64>, demand: f64) -> f64 {
    let model = LtiModel::vehicle();
    let d = DVector::from_element(1, demand);
    let mut best = f64::INFINITY;
    for corner in 0..8 {
        let u = DVector::from_fn(3, |i, _| if corner >> i & 1 == 1 { 1.0 } else { -1.0 });
        best = best.min(model.step(x0, &u, &d).unwrap()[3]);
    }
    best
}

#[test]
fn softened_bound_slack_equals_unavoidable_excess() {
    let objective = TrackingObjective {
        input_weights: vec![0.1, 0.1, 0.0],
        tracked: vec![TrackedState {
            index: 0,
            weight: 1.0,
            desired: PiecewiseLinear::constant(50.0),
        }],
    };
    let model = LtiModel::vehicle();
    let layout = objective.layout(&model, None).unwrap();
    let spec = MpcSpec {
        model,
        horizon: 1,
        cost: layout.cost,
        state_set: PolyhedralSet::vehicle_states(),
        input_set: PolyhedralSet::vehicle_inputs(),
        soft_rows: vec![0, 3, 4],
        slack_weight: 1e6,
        terminal: None,
    };
    let x0 = DVector::from_column_slice(&[50.0, 0.0, 100.0, 35.0]);
    let unavoidable = lowest_next_temperature(&x0, 1.0) - 30.0;
    assert!((unavoidable - 3.15).abs() <= 1e-12);

    let sol = solve_smpc(&spec, &x0, &[DVector::from_element(1, 1.0)], &QpSettings::default()).unwrap();
    let slacks = sol.first_slacks();
    assert!((slacks[1] - unavoidable).abs() <= 1e-4, "thermal slack {}", slacks[1]);
    assert!(slacks[0].abs() <= 1e-6 && slacks[2].abs() <= 1e-6);
    let x1 = &sol.trajectory.states[1];
    assert!((x1[3] - 30.0 - slacks[1]).abs() <= 1e-6);
}

#[test]
fn hard_rows_hold_on_the_optimum() {
    let mut rng = rng(23);
    let settings = QpSettings::default();
    for case in 0..40 {
        let mut spec = random_spec(&mut rng);
        spec.soft_rows.clear();
        // Start at the origin with a zero-input-feasible model: A = I and no demand.
        let n = spec.model.n_states();
        spec.model = LtiModel::new(
            DMatrix::identity(n, n),
            spec.model.b1().clone(),
            DMatrix::zeros(n, spec.model.n_demands()),
            1.0,
            vec![false; n],
        )
        .unwrap();
        let x0 = DVector::zeros(n);
        let demands = vec![DVector::zeros(spec.model.n_demands()); spec.horizon];
        let condensed = spec.condense(&x0, &demands).unwrap();
        let sol = solve(&condensed.problem, &settings);
        assert!(sol.is_optimal(), "case {case}: {:?}", sol.diagnostic);
        let traj = condensed.decoder.decode(&sol);
        for x in &traj.states[1..] {
            assert!(spec.state_set.contains(x).unwrap().violation <= 1e-6, "case {case}");
        }
    }
}
