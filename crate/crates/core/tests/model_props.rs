mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use hmpc::model::{LtiModel, PolyhedralSet};

use common::random::{lti_model, rng, vector};

/// Applies `nu` fine steps with `u` and `d` held and compares with one
/// coarse step.
fn block_gap(model: &LtiModel, nu: usize, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let coarse = model.downsample(nu).unwrap();
    let mut fine = x.clone();
    for _ in 0..nu {
        fine = model.step(&fine, u, d).unwrap();
    }
    let jumped = coarse.step(x, u, d).unwrap();
    (fine - &jumped).amax() / jumped.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn held_inputs_commute_with_downsampling(
        seed in any::<u64>(),
        n in 1usize..6,
        m in 1usize..4,
        h in 1usize..3,
        nu in 1usize..9,
    ) {
        let mut rng = rng(seed);
        let model = lti_model(&mut rng, n, m, h);
        let x = vector(&mut rng, n, 5.0);
        let u = vector(&mut rng, m, 1.0);
        let d = vector(&mut rng, h, 1.0);
        prop_assert!(block_gap(&model, nu, &x, &u, &d) <= 1e-10);
    }

    #[test]
    fn downsampling_composes(seed in any::<u64>(), a in 1usize..5, b in 1usize..5) {
        let mut rng = rng(seed);
        let model = lti_model(&mut rng, 3, 2, 1);
        let direct = model.downsample(a * b).unwrap();
        let nested = model.downsample(a).unwrap().downsample(b).unwrap();
        let scale = direct.a().amax().max(direct.b1().amax()).max(1.0);
        prop_assert!((direct.a() - nested.a()).amax() / scale <= 1e-10);
        prop_assert!((direct.b1() - nested.b1()).amax() / scale <= 1e-10);
        prop_assert!((direct.b2() - nested.b2()).amax() / scale <= 1e-10);
        prop_assert_eq!(direct.sample_period(), model.sample_period() * (a * b) as f64);
    }

    #[test]
    fn tightening_shrinks_the_set(offset in prop::collection::vec(0.0f64..5.0, 8), x in prop::collection::vec(-30.0f64..120.0, 4)) {
        let set = PolyhedralSet::vehicle_states();
        let tight = set.tightened(&DVector::from_vec(offset)).unwrap();
        let x = DVector::from_vec(x);
        if tight.contains(&x).unwrap().inside {
            prop_assert!(set.contains(&x).unwrap().inside);
        }
    }
}

#[test]
fn vehicle_model_five_step_matrices() {
    let coarse = LtiModel::vehicle().downsample(5).unwrap();
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 5.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ],
    );
    let b1 = DMatrix::from_row_slice(
        4,
        3,
        &[
            15.0, -5.0, 0.0, //
            5.0, -5.0, 0.0, //
            -4.0, 4.0, -0.75, //
            5.0, 5.0, -4.25,
        ],
    );
    let b2 = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, -1.25, 5.0]);
    assert!((coarse.a() - a).amax() <= 1e-12);
    assert!((coarse.b1() - b1).amax() <= 1e-12);
    assert!((coarse.b2() - b2).amax() <= 1e-12);
    assert_eq!(coarse.sample_period(), 5.0);
    assert_eq!(coarse.slow_mask(), LtiModel::vehicle().slow_mask());
}

#[test]
fn downsampling_by_one_is_identity() {
    let model = LtiModel::vehicle();
    let same = model.downsample(1).unwrap();
    assert_eq!(same.a(), model.a());
    assert_eq!(same.b1(), model.b1());
    assert_eq!(same.b2(), model.b2());
    assert!(model.downsample(0).is_err());
}

#[test]
fn vehicle_step_by_hand() {
    let model = LtiModel::vehicle();
    let x = DVector::from_column_slice(&[1.0, 2.0, 50.0, 25.0]);
    let u = DVector::from_column_slice(&[0.5, -0.5, 1.0]);
    let d = DVector::from_element(1, 1.0);
    let next = model.step(&x, &u, &d).unwrap();
    // x1 + x2 + u1 + u2, x2 + u1 − u2, x3 − 0.8u1 + 0.8u2 − 0.15u3 − 0.25d,
    // x4 + u1 + u2 − 0.85u3 + d
    let expected = DVector::from_column_slice(&[3.0, 3.0, 50.0 - 0.8 - 0.15 - 0.25, 25.15]);
    assert!((next - expected).amax() <= 1e-12);
    assert!(model.step(&x, &DVector::zeros(2), &d).is_err());
}

#[test]
fn vehicle_box_row_order() {
    let set = PolyhedralSet::vehicle_states();
    assert_eq!(set.n_rows(), 8);
    assert_eq!(set.q().as_slice(), &[100.0, 20.0, 100.0, 30.0, 1.0, 20.0, 0.0, 0.0]);
    let outside = DVector::from_column_slice(&[0.0, 0.0, 50.0, 31.0]);
    let m = set.contains(&outside).unwrap();
    assert!(!m.inside);
}
