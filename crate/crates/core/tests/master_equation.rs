mod common;

use std::fs;

use common::*;
use proptest::prelude::*;
use zeno_core::cli_io::parse_model;
use zeno_core::master_equation::{evolve, evolve_piecewise, DensityMatrix};
use zeno_core::{zeno_eliminate, ConditionTolerances, HilbertSpace, Operator, SlhTriple};

fn fixtures() -> Vec<(String, SlhTriple)> {
    let mut out = Vec::new();
    for name in ["kerr_qubit.model", "alkali.model", "lambda_system.model"] {
        let doc = parse_model(&fs::read_to_string(models_dir().join(name)).unwrap()).unwrap();
        let split = doc.split().unwrap();
        let zeno = zeno_eliminate(doc.family(), &split, &ConditionTolerances::default()).unwrap();
        out.push((format!("{name} (Zeno)"), zeno.zeno_triple));
        out.push((format!("{name} (k = 1)"), doc.family().instantiate(1.0).unwrap()));
    }
    out
}

#[test]
fn fixtures_preserve_trace_and_positivity() {
    let mut rng = rng(3);
    for (name, g) in fixtures() {
        let rho = random_density(&mut rng, g.space());
        let evo = evolve(&g, &rho, 1.0, 1e-3).unwrap();
        for s in &evo.states {
            assert!((s.trace().re - 1.0).abs() < 1e-8, "{name}");
            assert!(s.min_eigenvalue() > -1e-6, "{name}");
        }
    }
}

#[test]
fn qubit_decay_matches_closed_form() {
    for gamma in [0.3, 1.0, 2.5] {
        let space = HilbertSpace::flat(2).unwrap();
        let l = &Operator::ketbra(2, 0, 1).unwrap() * f64::sqrt(gamma);
        let g = SlhTriple::with_identity_scattering(vec![l], Operator::zeros(&space)).unwrap();
        let plus = DensityMatrix::pure(&space, &[c(0.5f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0)]).unwrap();
        let evo = evolve(&g, &plus, 1.0, 1e-3).unwrap();
        for (t, s) in evo.times.iter().zip(&evo.states) {
            let m = s.matrix();
            assert!((m[(1, 1)].re - 0.5 * (-gamma * t).exp()).abs() < 1e-8);
            // Coherence decays at half the rate.
            assert!((m[(0, 1)].re - 0.5 * (-gamma * t / 2.0).exp()).abs() < 1e-8);
        }
    }
}

#[test]
fn rk4_error_shrinks_sixteenfold_on_halving() {
    let gamma = 1.0;
    let space = HilbertSpace::flat(2).unwrap();
    let l = &Operator::ketbra(2, 0, 1).unwrap() * f64::sqrt(gamma);
    let g = SlhTriple::with_identity_scattering(vec![l], Operator::zeros(&space)).unwrap();
    let rho = DensityMatrix::basis_state(&space, 1).unwrap();
    let err = |dt: f64| {
        let evo = evolve(&g, &rho, 1.0, dt).unwrap();
        (evo.final_state().matrix()[(1, 1)].re - (-gamma * 1.0f64).exp()).abs()
    };
    for dt in [0.25, 0.1, 0.05] {
        let ratio = err(dt) / err(dt / 2.0);
        assert!((8.0..=32.0).contains(&ratio), "dt {dt}: ratio {ratio}");
    }
}

#[test]
fn piecewise_constant_models_concatenate() {
    let mut rng = rng(4);
    let g1 = random_slh(&mut rng, 3, 1);
    let g2 = random_slh(&mut rng, 3, 2);
    let rho = random_density(&mut rng, g1.space());
    let pieces = evolve_piecewise(&[(g1.clone(), 0.4), (g2.clone(), 0.6)], &rho, 1e-3).unwrap();
    let first = evolve(&g1, &rho, 0.4, 1e-3).unwrap();
    let second = evolve(&g2, first.final_state(), 0.6, 1e-3).unwrap();
    assert!(max_diff(pieces.final_state().matrix(), second.final_state().matrix()) < 1e-12);
    assert!((pieces.times.last().unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_models_stay_physical(seed in any::<u64>(), dim in 2usize..5, channels in 1usize..3) {
        let mut rng = rng(seed);
        let g = random_slh(&mut rng, dim, channels);
        let rho = random_density(&mut rng, g.space());
        let evo = evolve(&g, &rho, 1.0, 1e-3).unwrap();
        prop_assert!(evo.max_trace_drift() < 1e-8);
        for s in &evo.states {
            prop_assert!(s.min_eigenvalue() > -1e-6);
        }
    }

    #[test]
    fn steady_state_of_pure_decay_is_ground(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let space = HilbertSpace::flat(2).unwrap();
        let l = &Operator::ketbra(2, 0, 1).unwrap() * 2.0;
        let g = SlhTriple::with_identity_scattering(vec![l], Operator::zeros(&space)).unwrap();
        let rho = random_density(&mut rng, &space);
        let evo = evolve(&g, &rho, 8.0, 1e-2).unwrap();
        let ground = DensityMatrix::basis_state(&space, 0).unwrap();
        prop_assert!(evo.final_state().trace_distance(&ground).unwrap() < 1e-6);
    }
}
