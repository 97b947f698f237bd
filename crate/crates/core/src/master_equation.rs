//! Unconditional state evolution `dρ/dt = 𝒟ρ` with
//! `𝒟ρ = Σᵢ LᵢρLᵢᴴ − ½{LᵢᴴLᵢ, ρ} + i[ρ, H]`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator_algebra::{max_abs, CMatrix, HilbertSpace, Operator, ZenoSplit};
use crate::slh_model::{k_matrix, SlhTriple};
use crate::zeno_elimination::{zeno_eliminate, ConditionTolerances, ScaledSlhFamily};

pub const STATE_HERMITIAN_TOL: f64 = 1e-10;
pub const STATE_TRACE_TOL: f64 = 1e-10;
pub const STATE_POSITIVITY_TOL: f64 = 1e-8;
/// Integration aborts once `|tr ρ − 1|` exceeds this.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(space: &HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let op = Operator::new(space.clone(), matrix)?;
        Self::from_operator(op)
    }

    pub fn from_operator(op: Operator) -> Result<Self> {
        let herm = op.hermiticity_residual();
        if herm > STATE_HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (residual {herm:.3e})")));
        }
        let tr = op.trace();
        if (tr - 1.0).norm() > STATE_TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let space = op.space().clone();
        let rho = Self { space, matrix: op.into_matrix() };
        let min = rho.min_eigenvalue();
        if min < -STATE_POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_parts(space: HilbertSpace, matrix: CMatrix) -> Self {
        Self { space, matrix }
    }

    /// `|ψ⟩⟨ψ|` for the normalized `psi`.
    pub fn pure(space: &HilbertSpace, psi: &[Complex64]) -> Result<Self> {
        if psi.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state vector of length {} on {space}",
                psi.len()
            )));
        }
        let v = nalgebra::DVector::from_column_slice(psi);
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("state vector has zero or non-finite norm".into()));
        }
        let v = v / Complex64::new(norm, 0.0);
        Ok(Self { space: space.clone(), matrix: &v * v.adjoint() })
    }

    pub fn basis_state(space: &HilbertSpace, index: usize) -> Result<Self> {
        let n = space.total_dim();
        if index >= n {
            return Err(Error::InvalidArgument(format!("basis index {index} out of range for dimension {n}")));
        }
        let mut m = CMatrix::zeros(n, n);
        m[(index, index)] = Complex64::new(1.0, 0.0);
        Ok(Self { space: space.clone(), matrix: m })
    }

    pub fn maximally_mixed(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        let m = CMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0);
        Self { space: space.clone(), matrix: m }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn to_operator(&self) -> Operator {
        Operator::from_parts(self.space.clone(), self.matrix.clone())
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `tr(ρX)`.
    pub fn expectation(&self, x: &Operator) -> Result<Complex64> {
        if x.space() != &self.space {
            return Err(Error::DimensionMismatch(format!("observable on {} for state on {}", x.space(), self.space)));
        }
        Ok(trace_product(&self.matrix, x.matrix()))
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if other.space != self.space {
            return Err(Error::DimensionMismatch(format!("states on {} and {}", self.space, other.space)));
        }
        Ok(trace_distance_matrix(&self.matrix, &other.matrix))
    }
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigen().eigenvalues.iter().cloned().collect()
}

pub(crate) fn trace_distance_matrix(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|e| e.abs()).sum::<f64>()
}

/// `tr(AB)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Precomputed pieces of `𝒟`, reused across integration steps.
#[derive(Clone, Debug)]
pub(crate) struct Generator {
    pub(crate) coupling: Vec<CMatrix>,
    pub(crate) coupling_adj: Vec<CMatrix>,
    pub(crate) k: CMatrix,
    pub(crate) k_adj: CMatrix,
}

impl Generator {
    pub(crate) fn new(g: &SlhTriple) -> Self {
        let coupling: Vec<CMatrix> = g.coupling().iter().map(|l| l.matrix().clone()).collect();
        let coupling_adj = coupling.iter().map(|l| l.adjoint()).collect();
        let k = k_matrix(g.coupling(), g.hamiltonian());
        let k_adj = k.adjoint();
        Self { coupling, coupling_adj, k, k_adj }
    }

    pub(crate) fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = &self.k * rho + rho * &self.k_adj;
        for (l, ld) in self.coupling.iter().zip(&self.coupling_adj) {
            out += l * rho * ld;
        }
        out
    }

    /// Upper bound on the operator norm of `𝒟`.
    pub(crate) fn norm_bound(&self) -> f64 {
        let spectral = |m: &CMatrix| m.singular_values().iter().cloned().fold(0.0, f64::max);
        2.0 * spectral(&self.k) + self.coupling.iter().map(|l| spectral(l).powi(2)).sum::<f64>()
    }

    fn rk4_step(&self, rho: &CMatrix, h: f64) -> CMatrix {
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + &k1 * half));
        let k3 = self.apply(&(rho + &k2 * half));
        let k4 = self.apply(&(rho + &k3 * full));
        rho + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0)
    }
}

pub fn dissipator(g: &SlhTriple, rho: &DensityMatrix) -> Result<Operator> {
    check_state_space(g, rho)?;
    Ok(Operator::from_parts(rho.space.clone(), Generator::new(g).apply(&rho.matrix)))
}

fn check_state_space(g: &SlhTriple, rho: &DensityMatrix) -> Result<()> {
    if g.space() != rho.space() {
        return Err(Error::DimensionMismatch(format!("model on {} and state on {}", g.space(), rho.space())));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// `|tr ρ − 1|` after the step.
    pub trace_drift: f64,
    /// Anti-Hermitian part removed by re-Hermitization.
    pub hermiticity_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// One entry per recorded time; the initial entry is zero.
    pub diagnostics: Vec<StepDiagnostics>,
}

impl EvolutionResult {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("evolution records at least the initial state")
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.trace_drift).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.hermiticity_drift).fold(0.0, f64::max)
    }

    /// `tr(ρ(t)X)` along the grid.
    pub fn expectations(&self, x: &Operator) -> Result<Vec<Complex64>> {
        self.states.iter().map(|s| s.expectation(x)).collect()
    }
}

/// Number of fixed steps covering `[0, t_end]` and the step that fits exactly.
pub(crate) fn step_grid(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("end time must be non-negative, got {t_end}")));
    }
    if t_end == 0.0 {
        return Ok((0, dt));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_end / steps as f64))
}

/// RK4 from `rho0` to `t_end`, recording every step.
pub fn evolve(g: &SlhTriple, rho0: &DensityMatrix, t_end: f64, dt: f64) -> Result<EvolutionResult> {
    evolve_strided(g, rho0, t_end, dt, 1)
}

/// As [`evolve`], recording every `stride`-th step and always the last one.
pub fn evolve_strided(
    g: &SlhTriple,
    rho0: &DensityMatrix,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<EvolutionResult> {
    check_state_space(g, rho0)?;
    let mut out = EvolutionResult {
        times: vec![0.0],
        states: vec![rho0.clone()],
        diagnostics: vec![StepDiagnostics { trace_drift: 0.0, hermiticity_drift: 0.0 }],
    };
    integrate_into(&Generator::new(g), rho0, 0.0, t_end, dt, stride.max(1), &mut out)?;
    Ok(out)
}

fn integrate_into(
    gen: &Generator,
    rho0: &DensityMatrix,
    t0: f64,
    duration: f64,
    dt: f64,
    stride: usize,
    out: &mut EvolutionResult,
) -> Result<()> {
    let (steps, h) = step_grid(duration, dt)?;
    let space = rho0.space.clone();
    let mut rho = rho0.matrix.clone();
    for step in 1..=steps {
        let next = gen.rk4_step(&rho, h);
        let hermiticity_drift = 0.5 * max_abs(&(&next - next.adjoint()));
        rho = (&next + next.adjoint()) * Complex64::new(0.5, 0.0);
        let time = t0 + step as f64 * h;
        let trace_drift = (rho.trace() - 1.0).norm();
        if !(trace_drift <= TRACE_DRIFT_LIMIT) {
            return Err(Error::TraceDrift { time, drift: trace_drift });
        }
        if step % stride == 0 || step == steps {
            out.times.push(time);
            out.states.push(DensityMatrix::from_parts(space.clone(), rho.clone()));
            out.diagnostics.push(StepDiagnostics { trace_drift, hermiticity_drift });
        }
    }
    Ok(())
}

/// Piecewise-constant schedule: each `(model, duration)` segment is integrated
/// with its own generator, continuing from the previous segment's final state.
pub fn evolve_piecewise(
    segments: &[(SlhTriple, f64)],
    rho0: &DensityMatrix,
    dt: f64,
) -> Result<EvolutionResult> {
    let mut out = EvolutionResult {
        times: vec![0.0],
        states: vec![rho0.clone()],
        diagnostics: vec![StepDiagnostics { trace_drift: 0.0, hermiticity_drift: 0.0 }],
    };
    let mut t = 0.0;
    for (g, duration) in segments {
        check_state_space(g, rho0)?;
        let start = out.final_state().clone();
        integrate_into(&Generator::new(g), &start, t, *duration, dt, 1, &mut out)?;
        t += duration;
    }
    Ok(out)
}

/// Largest deviation from `d/dt tr(ρX) = tr(ρ·ℒX)` over the interior grid,
/// with the time derivative taken by central differences.
pub fn ehrenfest_residual(
    g: &SlhTriple,
    rho0: &DensityMatrix,
    x: &Operator,
    t_end: f64,
    dt: f64,
) -> Result<f64> {
    let evo = evolve(g, rho0, t_end, dt)?;
    let lx = g.lindbladian(x)?;
    let values = evo.expectations(x)?;
    let mut worst: f64 = 0.0;
    for i in 1..values.len().saturating_sub(1) {
        let h = evo.times[i + 1] - evo.times[i - 1];
        let derivative = (values[i + 1] - values[i - 1]) / h;
        let predicted = evo.states[i].expectation(&lx)?;
        worst = worst.max((derivative - predicted).norm());
    }
    Ok(worst)
}

/// One row of the convergence table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub k: f64,
    /// Trace distance between the compressed, renormalized full state and the Zeno state.
    pub distance: f64,
    /// `1 − tr(V_zᴴρV_z)` at the final time.
    pub leaked: f64,
    /// Step size actually used for the full model.
    pub dt: f64,
}

/// Step for the full model at scale `k`: the requested step, capped by the
/// inverse norm bound of the generator, which grows as `k²`.
pub fn harness_step(g: &SlhTriple, dt: f64) -> f64 {
    let bound = Generator::new(g).norm_bound();
    if bound > 0.0 {
        dt.min(1.0 / bound)
    } else {
        dt
    }
}

/// Evolves the full model for each `k` from the lifted Zeno initial state and
/// compares the compressed final state with the Zeno-model evolution.
pub fn convergence_harness(
    family: &ScaledSlhFamily,
    split: &ZenoSplit,
    rho0_z: &DensityMatrix,
    ks: &[f64],
    t_end: f64,
    dt: f64,
    tol: &ConditionTolerances,
) -> Result<Vec<ConvergencePoint>> {
    let elim = zeno_eliminate(family, split, tol)?;
    let zeno_model = &elim.zeno_triple;
    check_state_space(zeno_model, rho0_z)?;
    let reference = evolve_strided(zeno_model, rho0_z, t_end, dt, usize::MAX)?;
    let target = reference.final_state().clone();
    let zeno = split.zeno();
    let lifted = DensityMatrix::from_parts(family.space().clone(), zeno.lift(rho0_z.matrix()));

    ks.par_iter()
        .map(|&k| {
            let full = family.instantiate(k)?;
            let step = harness_step(&full, dt);
            let evo = evolve_strided(&full, &lifted, t_end, step, usize::MAX)?;
            let compressed = zeno.compress(evo.final_state().matrix());
            let kept = compressed.trace().re;
            let normalized = compressed * Complex64::new(1.0 / kept, 0.0);
            Ok(ConvergencePoint {
                k,
                distance: trace_distance_matrix(&normalized, target.matrix()),
                leaked: 1.0 - kept,
                dt: step,
            })
        })
        .collect()
}
