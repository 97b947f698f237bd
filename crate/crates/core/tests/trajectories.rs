mod common;

use common::*;
use zeno_core::catalog::{kerr_family, kerr_split, KerrParams};
use zeno_core::master_equation::{evolve, DensityMatrix, EvolutionResult};
use zeno_core::trajectories::{ensemble_mean, simulate, simulate_ensemble, MeasurementRecord, Scheme, SimConfig};
use zeno_core::{zeno_eliminate, ConditionTolerances, SlhTriple};

fn zeno_kerr(kappa: [f64; 2]) -> SlhTriple {
    let p = KerrParams { kappa, ..KerrParams::default() };
    let family = kerr_family(&p).unwrap();
    zeno_eliminate(&family, &kerr_split(&p).unwrap(), &ConditionTolerances::default()).unwrap().zeno_triple
}

fn deviation(mean: &EvolutionResult, reference: &EvolutionResult) -> f64 {
    mean.states
        .iter()
        .zip(&reference.states)
        .map(|(a, b)| a.trace_distance(b).unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn ensemble_deviation_scales_as_inverse_sqrt() {
    let g = zeno_kerr([1.0, 1.0]);
    let rho0 = DensityMatrix::basis_state(g.space(), 1).unwrap();
    let (dt, t_end) = (2e-3, 1.0);
    let reference = evolve(&g, &rho0, t_end, dt).unwrap();
    for scheme in [Scheme::Homodyne, Scheme::Counting] {
        // Average over independent batches; a single pair of ensembles is too noisy.
        let batches = 12u64;
        let mean_dev = |m: usize, base: u64| {
            (0..batches)
                .map(|b| {
                    let cfg = SimConfig { dt, t_end, channel: 0, seed: base + b * 100_000, scheme };
                    let ens = simulate_ensemble(&g, &rho0, &cfg, m).unwrap();
                    deviation(&ensemble_mean(&ens).unwrap(), &reference)
                })
                .sum::<f64>()
                / batches as f64
        };
        let ratio = mean_dev(100, 1) / mean_dev(400, 7_000_000);
        assert!((1.4..=2.8).contains(&ratio), "{scheme}: ratio {ratio}");
    }
}

#[test]
fn homodyne_keeps_pure_states_pure() {
    let g = zeno_kerr([1.0, 0.0]);
    let psi = [c(0.6, 0.0), c(0.0, 0.8)];
    let rho0 = DensityMatrix::pure(g.space(), &psi).unwrap();
    let cfg = SimConfig { dt: 1e-4, t_end: 1.0, channel: 0, seed: 9, scheme: Scheme::Homodyne };
    for r in simulate_ensemble(&g, &rho0, &cfg, 4).unwrap() {
        let worst = r.states.iter().map(|s| s.purity()).fold(f64::INFINITY, f64::min);
        assert!(worst > 1.0 - 1e-4, "purity {worst}");
    }
}

#[test]
fn unmonitored_channel_mixes_the_state() {
    let g = zeno_kerr([1.0, 1.0]);
    let rho0 = DensityMatrix::basis_state(g.space(), 1).unwrap();
    let cfg = SimConfig { dt: 1e-3, t_end: 1.0, channel: 0, seed: 3, scheme: Scheme::Homodyne };
    let r = simulate(&g, &rho0, &cfg).unwrap();
    assert!(r.states.last().unwrap().purity() < 0.999);
}

#[test]
fn conditioned_trace_is_exact() {
    let mut rng = rng(5);
    let g = random_slh(&mut rng, 3, 2);
    let rho0 = random_density(&mut rng, g.space());
    for scheme in [Scheme::Homodyne, Scheme::Counting] {
        let cfg = SimConfig { dt: 1e-3, t_end: 0.5, channel: 1, seed: 5, scheme };
        let r = simulate(&g, &rho0, &cfg).unwrap();
        for s in &r.states {
            assert!((s.trace().re - 1.0).abs() < 1e-12);
            assert!(s.trace().im.abs() < 1e-12);
        }
    }
}

#[test]
fn records_depend_only_on_model_state_and_seed() {
    let g = zeno_kerr([1.0, 1.0]);
    let rho0 = DensityMatrix::maximally_mixed(g.space());
    for scheme in [Scheme::Homodyne, Scheme::Counting] {
        let cfg = SimConfig { dt: 1e-3, t_end: 1.0, channel: 0, seed: 77, scheme };
        let a = simulate(&g, &rho0, &cfg).unwrap();
        // Querying observables on one run must not perturb the other.
        let _ = a.states.iter().map(|s| s.purity()).sum::<f64>();
        let b = simulate(&g, &rho0, &cfg).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.innovations, b.innovations);
        let other = simulate(&g, &rho0, &SimConfig { seed: 78, ..cfg }).unwrap();
        if scheme == Scheme::Homodyne {
            assert_ne!(a.record, other.record);
        }
    }
}

#[test]
fn homodyne_innovations_have_unit_rate_quadratic_variation() {
    let g = zeno_kerr([1.0, 1.0]);
    let rho0 = DensityMatrix::basis_state(g.space(), 1).unwrap();
    let cfg = SimConfig { dt: 1e-3, t_end: 1.0, channel: 0, seed: 21, scheme: Scheme::Homodyne };
    let runs = simulate_ensemble(&g, &rho0, &cfg, 50).unwrap();
    let qv: f64 = runs.iter().map(|r| r.innovations.iter().map(|d| d * d).sum::<f64>()).sum::<f64>() / 50.0;
    assert!((qv - 1.0).abs() < 0.05, "quadratic variation {qv}");
    let mean: f64 = runs.iter().map(|r| r.innovations.iter().sum::<f64>()).sum::<f64>() / 50.0;
    assert!(mean.abs() < 0.5, "innovation mean {mean}");
}

#[test]
fn counting_records_jump_times_on_the_grid() {
    let g = zeno_kerr([1.0, 1.0]);
    let rho0 = DensityMatrix::basis_state(g.space(), 1).unwrap();
    let cfg = SimConfig { dt: 1e-3, t_end: 2.0, channel: 0, seed: 8, scheme: Scheme::Counting };
    let runs = simulate_ensemble(&g, &rho0, &cfg, 100).unwrap();
    let mut total = 0;
    for r in &runs {
        let MeasurementRecord::Counting { jumps, jump_times } = &r.record else { panic!("counting record") };
        assert_eq!(jumps.len(), r.times.len() - 1);
        let flagged: Vec<f64> = jumps.iter().zip(&r.times[1..]).filter(|(j, _)| **j).map(|(_, t)| *t).collect();
        assert_eq!(&flagged, jump_times);
        total += jump_times.len();
    }
    assert!(total > 0);
}
