mod common;

use common::*;
use proptest::prelude::*;
use zeno_core::linear_systems::{
    build_full_family, eigenvalues, fast_scaling_exponent, is_strictly_hurwitz, oscillator_limit,
    oscillator_zeno_split, slow_schur, LinearMeanSystem,
};
use zeno_core::{zeno_eliminate, CMatrix, ConditionTolerances};

#[test]
fn oracle_agrees_for_three_level_slow_spaces() {
    let mut rng = rng(31);
    for (modes, channels) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
        let coeffs = random_oscillator_model(&mut rng, 3, channels, modes);
        let limit = oscillator_limit(&coeffs).unwrap();
        for (trunc, tol) in [(5, 1e-6), (8, 1e-8)] {
            let family = build_full_family(&coeffs, trunc).unwrap();
            let split = oscillator_zeno_split(&coeffs, trunc).unwrap();
            let t = zeno_eliminate(&family, &split, &ConditionTolerances::default()).unwrap().zeno_triple;
            let mut err = max_diff(t.hamiltonian().matrix(), limit.hamiltonian().matrix());
            for i in 0..channels {
                err = err.max(max_diff(t.coupling()[i].matrix(), limit.coupling()[i].matrix()));
                for j in 0..channels {
                    err = err.max(max_diff(t.scattering(i, j).matrix(), limit.scattering(i, j).matrix()));
                }
            }
            assert!(err < tol, "m = {modes}, n = {channels}, N = {trunc}: {err:.3e}");
        }
    }
}

#[test]
fn fast_eigenvalues_grow_quadratically() {
    let mut rng = rng(32);
    for _ in 0..5 {
        let sys = random_mean_system(&mut rng, 2, 2, -0.5, -0.5);
        let p = fast_scaling_exponent(&sys, 10.0, 100.0).unwrap();
        assert!((p - 2.0).abs() < 0.05, "exponent {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn schur_complement_degenerates_to_gamma1(seed in any::<u64>(), r in 1usize..4, q in 1usize..4, zero_left in any::<bool>()) {
        let mut rng = rng(seed);
        let g1 = random_matrix(&mut rng, r, r);
        let mut g2 = random_matrix(&mut rng, r, q);
        let mut g3 = random_matrix(&mut rng, q, r);
        let g4 = random_matrix(&mut rng, q, q) - CMatrix::identity(q, q) * c(5.0, 0.0);
        if zero_left {
            g2.fill(c(0.0, 0.0));
        } else {
            g3.fill(c(0.0, 0.0));
        }
        let sys = LinearMeanSystem::new(g1.clone(), g2, g3, g4).unwrap();
        prop_assert_eq!(slow_schur(&sys).unwrap(), g1);
    }

    #[test]
    fn dissipative_implies_eigenvalue_hurwitz(seed in any::<u64>(), n in 1usize..6, shift in -3.0f64..1.0) {
        let mut rng = rng(seed);
        let a = random_matrix(&mut rng, n, n) + CMatrix::identity(n, n) * c(shift, 0.0);
        let report = is_strictly_hurwitz(&a, 0.0).unwrap();
        if report.strictly_hurwitz {
            prop_assert!(report.eigenvalue_hurwitz);
            prop_assert!(report.eigenvalue_margin <= report.numerical_range_margin + 1e-12);
        }
        let ev = eigenvalues(&a);
        prop_assert_eq!(ev.len(), n);
        let tr: num_complex::Complex64 = ev.iter().sum();
        prop_assert!((tr - a.trace()).norm() < 1e-9 * (1.0 + a.norm()));
    }
}
