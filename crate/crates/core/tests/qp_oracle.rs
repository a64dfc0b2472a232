mod common;

use hmpc::qp::{solve, QpSettings};

use common::oracle::active_set_enumeration;
use common::random::{box_qp, rng, strictly_convex_qp};

#[test]
fn random_box_qps_match_enumeration() {
    let mut rng = rng(11);
    for case in 0..100 {
        let p = box_qp(&mut rng, 4);
        let oracle = active_set_enumeration(&p).expect("box QP is feasible");
        let sol = solve(&p, &QpSettings::default());
        assert!(sol.is_optimal(), "case {case}: {:?}", sol.diagnostic);
        assert!((&sol.z - &oracle.z).amax() <= 1e-6, "case {case}");
    }
}

#[test]
fn random_general_qps_match_enumeration() {
    let mut rng = rng(12);
    for case in 0..150 {
        let d = 1 + case % 6;
        let c = 1 + (case * 7) % 12;
        let p = strictly_convex_qp(&mut rng, d, c);
        let oracle = active_set_enumeration(&p).expect("feasible by construction");
        let sol = solve(&p, &QpSettings::default());
        assert!(sol.is_optimal(), "case {case}: {:?}", sol.diagnostic);
        assert!((&sol.z - &oracle.z).amax() <= 1e-6, "case {case}: {} vs {}", sol.z, oracle.z);
        let rel = (sol.objective - oracle.objective).abs() / oracle.objective.abs().max(1.0);
        assert!(rel <= 1e-8, "case {case}: objective rel err {rel:e}");
        assert!(p.complementarity(&sol.z, &sol.multipliers) <= 1e-6);
    }
}

#[test]
fn dropping_rows_never_increases_the_optimum() {
    let mut rng = rng(13);
    for case in 0..60 {
        let p = strictly_convex_qp(&mut rng, 4, 8);
        let full = solve(&p, &QpSettings::default());
        assert!(full.is_optimal());
        let keep: Vec<usize> = (0..8).filter(|i| (case + i) % 3 != 0).collect();
        let relaxed_problem = p.with_rows(&keep);
        let relaxed = solve(&relaxed_problem, &QpSettings::default());
        assert!(relaxed.is_optimal());
        assert!(relaxed.objective <= full.objective + 1e-9, "case {case}");
        let oracle = active_set_enumeration(&relaxed_problem).unwrap();
        assert!((relaxed.objective - oracle.objective).abs() <= 1e-8 * oracle.objective.abs().max(1.0));
    }
}
