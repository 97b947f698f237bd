//! Random model generators shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zeno_core::linear_systems::{eigenvalues, LinearMeanSystem, OscillatorModelCoeffs};
use zeno_core::master_equation::DensityMatrix;
use zeno_core::{CMatrix, HilbertSpace, Operator, SlhTriple};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    max_abs(&(a - b))
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let x = random_matrix(rng, n, n);
    (&x + x.adjoint()) * c(0.5, 0.0)
}

/// Haar-ish unitary from the QR factor of a Gaussian matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    random_matrix(rng, n, n).qr().q()
}

pub fn random_density(rng: &mut ChaCha8Rng, space: &HilbertSpace) -> DensityMatrix {
    let n = space.total_dim();
    let x = random_matrix(rng, n, n);
    let rho = &x * x.adjoint();
    let tr = rho.trace();
    DensityMatrix::new(space, rho / tr).unwrap()
}

pub fn op(space: &HilbertSpace, m: CMatrix) -> Operator {
    Operator::new(space.clone(), m).unwrap()
}

/// Random triple with an operator-valued unitary scattering matrix.
pub fn random_slh(rng: &mut ChaCha8Rng, dim: usize, channels: usize) -> SlhTriple {
    let space = HilbertSpace::flat(dim).unwrap();
    let u = random_unitary(rng, dim * channels);
    let mut s = Vec::with_capacity(channels * channels);
    for i in 0..channels {
        for j in 0..channels {
            s.push(op(&space, u.view((i * dim, j * dim), (dim, dim)).into_owned()));
        }
    }
    let l = (0..channels).map(|_| op(&space, random_matrix(rng, dim, dim) * c(0.5, 0.0))).collect();
    let h = op(&space, random_hermitian(rng, dim));
    SlhTriple::new(s, l, h).unwrap()
}

/// Oscillator model with `C_ia = γ_ia W_i` for unitary `W_i`, so that
/// `Σ_i C_iaᴴC_ib` is scalar, and `Ω` Hermitian.
pub fn random_oscillator_model(rng: &mut ChaCha8Rng, slow_dim: usize, channels: usize, modes: usize) -> OscillatorModelCoeffs {
    let space = HilbertSpace::flat(slow_dim).unwrap();
    let scatter = random_unitary(rng, slow_dim * channels);
    let mut s = Vec::new();
    for i in 0..channels {
        for j in 0..channels {
            s.push(op(&space, scatter.view((i * slow_dim, j * slow_dim), (slow_dim, slow_dim)).into_owned()));
        }
    }
    let w: Vec<CMatrix> = (0..channels).map(|_| random_unitary(rng, slow_dim)).collect();
    let mut cs = Vec::new();
    for wi in &w {
        for _ in 0..modes {
            let gamma: f64 = rng.random_range(0.5..1.5);
            cs.push(op(&space, wi * c(gamma, 0.0)));
        }
    }
    let g = (0..channels).map(|_| op(&space, random_matrix(rng, slow_dim, slow_dim) * c(0.4, 0.0))).collect();
    let omega = random_hermitian(rng, modes) * c(0.5, 0.0);
    let f = (0..modes).map(|_| op(&space, random_matrix(rng, slow_dim, slow_dim) * c(0.3, 0.0))).collect();
    let h0 = op(&space, random_hermitian(rng, slow_dim) * c(0.5, 0.0));
    OscillatorModelCoeffs::from_hamiltonian(s, cs, g, omega, f, h0).unwrap()
}

fn max_real(m: &CMatrix) -> f64 {
    eigenvalues(m).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Shifts `m` so that its rightmost eigenvalue has real part `target`.
fn place_spectrum(m: CMatrix, target: f64) -> CMatrix {
    let n = m.nrows();
    let shift = max_real(&m) - target;
    m - CMatrix::identity(n, n) * c(shift, 0.0)
}

/// Mean system whose `Γ₄` and `Γ₀` have rightmost real parts `fast_margin`
/// and `slow_margin` (negative means Hurwitz).
pub fn random_mean_system(
    rng: &mut ChaCha8Rng,
    slow: usize,
    fast: usize,
    fast_margin: f64,
    slow_margin: f64,
) -> LinearMeanSystem {
    let g4 = place_spectrum(random_matrix(rng, fast, fast), fast_margin);
    let g2 = random_matrix(rng, slow, fast) * c(0.5, 0.0);
    let g3 = random_matrix(rng, fast, slow) * c(0.5, 0.0);
    let coupling = &g2 * g4.clone().try_inverse().unwrap() * &g3;
    let g0 = place_spectrum(random_matrix(rng, slow, slow), slow_margin);
    let g1 = g0 + coupling;
    LinearMeanSystem::new(g1, g2, g3, g4).unwrap()
}
