mod common;

use common::{enumerate_qp, random_qp};
use congestion_core::qp::{
    kkt_residuals, solve, solve_with_working_set, warm_start, QpInstance, QpSettings, QpStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_enumeration_on_random_feasible_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let settings = QpSettings::default();
    for case in 0..400 {
        let inst = random_qp(&mut rng, true);
        let oracle = enumerate_qp(&inst).expect("feasible by construction");
        let res = solve(&inst, &settings);
        assert_eq!(res.status, QpStatus::Optimal, "case {case}");
        let err = (&res.z - &oracle).amax();
        assert!(err < 1e-6 * (1.0 + oracle.amax()), "case {case}: error {err}");
    }
}

#[test]
fn infeasible_instances_are_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let settings = QpSettings::default();
    let mut seen = 0;
    for case in 0..400 {
        let inst = random_qp(&mut rng, false);
        let res = solve(&inst, &settings);
        match enumerate_qp(&inst) {
            Some(oracle) => {
                assert_eq!(res.status, QpStatus::Optimal, "case {case}");
                assert!((&res.z - &oracle).amax() < 1e-6 * (1.0 + oracle.amax()), "case {case}");
            }
            None => {
                seen += 1;
                assert_eq!(res.status, QpStatus::Infeasible, "case {case}");
            }
        }
    }
    assert!(seen > 0);
}

#[test]
fn residuals_recomputed_independently() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let inst = random_qp(&mut rng, true);
        let res = solve(&inst, &QpSettings::default());
        let r = kkt_residuals(&inst, &res.z, &res.multipliers);
        assert!(r.max() <= 1e-6);
        // Stationarity by hand, unscaled.
        let stat = &inst.hessian * &res.z + &inst.gradient + inst.constraints.tr_mul(&res.multipliers);
        assert!(stat.amax() <= 1e-6 * (1.0 + inst.gradient.amax()));
        assert!(res.multipliers.iter().all(|&l| l >= 0.0));
    }
}

#[test]
fn identical_resolve_from_own_active_set_is_quick() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = QpSettings::default();
    for _ in 0..100 {
        let inst = random_qp(&mut rng, true);
        let first = solve(&inst, &settings);
        let again = warm_start(&inst, &settings, Some(&first.z), Some(&first.multipliers));
        assert_eq!(again.status, QpStatus::Optimal);
        assert!(again.iterations <= 2, "took {}", again.iterations);
        assert!((&again.z - &first.z).amax() < 1e-9);
    }
}

#[test]
fn warm_start_after_rhs_perturbation_matches_cold() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let settings = QpSettings::default();
    for _ in 0..100 {
        let inst = random_qp(&mut rng, true);
        let first = solve(&inst, &settings);
        let mut moved = inst.clone();
        for v in moved.rhs.iter_mut() {
            *v += rng.random_range(0.0..0.05);
        }
        let cold = solve(&moved, &settings);
        let warm = warm_start(&moved, &settings, None, Some(&first.multipliers));
        assert_eq!(warm.status, QpStatus::Optimal);
        assert!((&warm.z - &cold.z).amax() < 1e-8 * (1.0 + cold.z.amax()));
    }
}

#[test]
fn arbitrary_working_set_hint_is_safe() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let settings = QpSettings::default();
    for _ in 0..100 {
        let inst = random_qp(&mut rng, true);
        let hint: Vec<usize> = (0..inst.n_rows()).filter(|_| rng.random_bool(0.5)).collect();
        let cold = solve(&inst, &settings);
        let hinted = solve_with_working_set(&inst, &settings, &hint);
        assert_eq!(hinted.status, QpStatus::Optimal);
        assert!((&hinted.z - &cold.z).amax() < 1e-7 * (1.0 + cold.z.amax()));
    }
}

#[test]
fn iteration_cap_reports_max_iterations() {
    let n = 4;
    let inst = QpInstance::new(
        DMatrix::identity(n, n),
        DVector::from_element(n, -10.0),
        DMatrix::identity(n, n),
        DVector::zeros(n),
    )
    .unwrap();
    let settings = QpSettings {
        max_iterations: 2,
        ..QpSettings::default()
    };
    assert_eq!(solve(&inst, &settings).status, QpStatus::MaxIterations);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let inst = random_qp(&mut rng, true);
        let a = solve(&inst, &QpSettings::default());
        let b = solve(&inst, &QpSettings::default());
        assert_eq!(a.z, b.z);
        assert_eq!(a.multipliers, b.multipliers);
        assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn dumped_instance_reads_back_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..20 {
        let inst = random_qp(&mut rng, true);
        let mut buf = Vec::new();
        inst.write_to(&mut buf).unwrap();
        let back = congestion_core::qp::read_instance(&buf[..]).unwrap();
        assert_eq!(back, inst);
    }
}
