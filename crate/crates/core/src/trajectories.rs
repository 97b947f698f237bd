//! Conditioned evolution under continuous measurement of one output channel.
//!
//! Homodyne (diffusive) and photon-counting (jump) stochastic master equations
//! in state form. Unmonitored channels act through the unconditional
//! dissipator only. Trajectory `i` of an ensemble uses seed `base_seed + i`
//! with a ChaCha8 stream, so records are reproducible bit for bit.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master_equation::{step_grid, DensityMatrix, EvolutionResult, Generator, StepDiagnostics};
use crate::operator_algebra::CMatrix;
use crate::slh_model::SlhTriple;

/// Largest accepted jump probability per step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;
/// Jump norms below this are treated as a vanishing rate.
pub const MIN_JUMP_NORM: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Homodyne,
    Counting,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Homodyne => "homodyne",
            Scheme::Counting => "counting",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "homodyne" => Ok(Scheme::Homodyne),
            "counting" => Ok(Scheme::Counting),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub channel: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn validate(&self, g: &SlhTriple) -> Result<()> {
        if !(self.dt > 0.0) || !(self.dt <= self.t_end) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt ≤ t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        check_channel(g, self.channel)
    }
}

fn check_channel(g: &SlhTriple, channel: usize) -> Result<()> {
    if channel >= g.channels() {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of range for a {}-channel model",
            g.channels()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeasurementRecord {
    /// `dY` for each step.
    Homodyne { increments: Vec<f64> },
    /// Per-step jump flags and the times at which jumps were registered.
    Counting { jumps: Vec<bool>, jump_times: Vec<f64> },
}

impl MeasurementRecord {
    pub fn scheme(&self) -> Scheme {
        match self {
            MeasurementRecord::Homodyne { .. } => Scheme::Homodyne,
            MeasurementRecord::Counting { .. } => Scheme::Counting,
        }
    }

    pub fn jump_count(&self) -> usize {
        match self {
            MeasurementRecord::Homodyne { .. } => 0,
            MeasurementRecord::Counting { jump_times, .. } => jump_times.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    /// Conditioned state at each grid time, starting with the initial state.
    pub states: Vec<DensityMatrix>,
    pub record: MeasurementRecord,
    /// Innovation increment per step.
    pub innovations: Vec<f64>,
}

/// Outcome of one homodyne step.
#[derive(Clone, Debug, PartialEq)]
pub struct HomodyneStep {
    pub rho: DensityMatrix,
    pub dy: f64,
    pub innovation: f64,
}

/// Outcome of one counting step.
#[derive(Clone, Debug, PartialEq)]
pub struct CountingStep {
    pub rho: DensityMatrix,
    pub jumped: bool,
    pub innovation: f64,
}

struct Stepper {
    gen: Generator,
    l: CMatrix,
    l_adj: CMatrix,
    l_dag_l: CMatrix,
    channel: usize,
}

impl Stepper {
    fn new(g: &SlhTriple, channel: usize) -> Result<Self> {
        check_channel(g, channel)?;
        let l = g.coupling()[channel].matrix().clone();
        let l_adj = l.adjoint();
        let l_dag_l = &l_adj * &l;
        Ok(Self { gen: Generator::new(g), l, l_adj, l_dag_l, channel })
    }

    fn homodyne(&self, rho: &CMatrix, dt: f64, dw: f64) -> (CMatrix, f64, f64) {
        let mean = (&self.l * rho).trace().re * 2.0;
        let dy = mean * dt + dw;
        let n = rho.nrows();
        let mut m = CMatrix::identity(n, n) + &self.gen.k * Complex64::new(dt, 0.0) + &self.l * Complex64::new(dy, 0.0);
        m += &self.l * &self.l * Complex64::new(0.5 * (dy * dy - dt), 0.0);
        let mut next = &m * rho * m.adjoint();
        for (j, (l, l_adj)) in self.gen.coupling.iter().zip(&self.gen.coupling_adj).enumerate() {
            if j != self.channel {
                next += l * rho * l_adj * Complex64::new(dt, 0.0);
            }
        }
        (normalize(next), dy, dw)
    }

    fn counting(&self, rho: &CMatrix, dt: f64, u: f64) -> Result<(CMatrix, bool, f64)> {
        let rate = trace_re(&(rho * &self.l_dag_l));
        let p = rate * dt;
        if p > MAX_JUMP_PROBABILITY {
            return Err(Error::JumpProbabilityTooLarge { probability: p });
        }
        if u < p {
            let jumped = &self.l * rho * &self.l_adj;
            let norm = trace_re(&jumped);
            if norm < MIN_JUMP_NORM {
                return Err(Error::ZeroJumpRate);
            }
            return Ok((normalize(jumped), true, 1.0 - p));
        }
        let monitored = &self.l * rho * &self.l_adj - rho * Complex64::new(rate, 0.0);
        let drift = self.gen.apply(rho) - monitored;
        Ok((normalize(rho + drift * Complex64::new(dt, 0.0)), false, -p))
    }
}

fn trace_re(m: &CMatrix) -> f64 {
    m.trace().re
}

/// Re-Hermitizes and rescales to unit trace.
fn normalize(m: CMatrix) -> CMatrix {
    let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = trace_re(&h);
    h * Complex64::new(1.0 / tr, 0.0)
}

fn check_state(g: &SlhTriple, rho: &DensityMatrix) -> Result<()> {
    if g.space() != rho.space() {
        return Err(Error::DimensionMismatch(format!("model on {} and state on {}", g.space(), rho.space())));
    }
    Ok(())
}

/// One step of the homodyne filter
/// `dϱ = 𝒟ϱ dt + 𝒢(ϱ) dW`, `𝒢(ϱ) = Lϱ + ϱLᴴ − tr(ϱ(L + Lᴴ))ϱ`, with record
/// `dY = tr(ϱ(L + Lᴴ))dt + dW`.
///
/// The update is the normalized completely positive map
/// `ϱ' ∝ MϱMᴴ + Σ_{j≠c} L_jϱL_jᴴ dt` with
/// `M = I + K dt + L dY + ½L²(dY² − dt)`. It agrees with the Euler step to
/// first order, keeps the state positive, and keeps a pure state pure when
/// only the measured channel couples.
pub fn homodyne_step(g: &SlhTriple, rho: &DensityMatrix, channel: usize, dt: f64, dw: f64) -> Result<HomodyneStep> {
    check_state(g, rho)?;
    let stepper = Stepper::new(g, channel)?;
    let (next, dy, innovation) = stepper.homodyne(rho.matrix(), dt, dw);
    Ok(HomodyneStep { rho: DensityMatrix::from_parts(rho.space().clone(), next), dy, innovation })
}

/// Jump with probability `tr(ϱLᴴL)dt` (when `u` falls below it), otherwise the
/// no-jump update; both are renormalized.
pub fn counting_step(g: &SlhTriple, rho: &DensityMatrix, channel: usize, dt: f64, u: f64) -> Result<CountingStep> {
    check_state(g, rho)?;
    let stepper = Stepper::new(g, channel)?;
    let (next, jumped, innovation) = stepper.counting(rho.matrix(), dt, u)?;
    Ok(CountingStep { rho: DensityMatrix::from_parts(rho.space().clone(), next), jumped, innovation })
}

pub fn simulate(g: &SlhTriple, rho0: &DensityMatrix, config: &SimConfig) -> Result<TrajectoryResult> {
    config.validate(g)?;
    check_state(g, rho0)?;
    let stepper = Stepper::new(g, config.channel)?;
    let (steps, h) = step_grid(config.t_end, config.dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let space = rho0.space().clone();

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut innovations = Vec::with_capacity(steps);
    let mut increments = Vec::new();
    let mut jumps = Vec::new();
    let mut jump_times = Vec::new();
    times.push(0.0);
    states.push(rho0.clone());
    let mut rho = rho0.matrix().clone();
    let sqrt_h = h.sqrt();

    for step in 1..=steps {
        let t = step as f64 * h;
        match config.scheme {
            Scheme::Homodyne => {
                let z: f64 = rng.sample(StandardNormal);
                let (next, dy, di) = stepper.homodyne(&rho, h, sqrt_h * z);
                rho = next;
                increments.push(dy);
                innovations.push(di);
            }
            Scheme::Counting => {
                let u: f64 = rng.random();
                let (next, jumped, di) = stepper.counting(&rho, h, u)?;
                rho = next;
                jumps.push(jumped);
                if jumped {
                    jump_times.push(t);
                }
                innovations.push(di);
            }
        }
        times.push(t);
        states.push(DensityMatrix::from_parts(space.clone(), rho.clone()));
    }

    let record = match config.scheme {
        Scheme::Homodyne => MeasurementRecord::Homodyne { increments },
        Scheme::Counting => MeasurementRecord::Counting { jumps, jump_times },
    };
    Ok(TrajectoryResult { times, states, record, innovations })
}

/// `n` trajectories with seeds `config.seed + i`, run in parallel.
pub fn simulate_ensemble(
    g: &SlhTriple,
    rho0: &DensityMatrix,
    config: &SimConfig,
    n: usize,
) -> Result<Vec<TrajectoryResult>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SimConfig { seed: config.seed.wrapping_add(i), ..*config };
            simulate(g, rho0, &cfg)
        })
        .collect()
}

/// Pointwise average of the conditioned states.
pub fn ensemble_mean(results: &[TrajectoryResult]) -> Result<EvolutionResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    for r in &results[1..] {
        if r.times != first.times {
            return Err(Error::GridMismatch(format!(
                "grids of {} and {} points differ",
                first.times.len(),
                r.times.len()
            )));
        }
        if r.states[0].space() != first.states[0].space() {
            return Err(Error::DimensionMismatch("trajectories on different spaces".into()));
        }
    }
    let weight = Complex64::new(1.0 / results.len() as f64, 0.0);
    let space = first.states[0].space().clone();
    let mut states = Vec::with_capacity(first.times.len());
    let mut diagnostics = Vec::with_capacity(first.times.len());
    for i in 0..first.times.len() {
        let mut acc = first.states[i].matrix() * weight;
        for r in &results[1..] {
            acc += r.states[i].matrix() * weight;
        }
        diagnostics.push(StepDiagnostics {
            trace_drift: (acc.trace() - 1.0).norm(),
            hermiticity_drift: 0.5 * crate::operator_algebra::max_abs(&(&acc - acc.adjoint())),
        });
        states.push(DensityMatrix::from_parts(space.clone(), acc));
    }
    Ok(EvolutionResult { times: first.times.clone(), states, diagnostics })
}
