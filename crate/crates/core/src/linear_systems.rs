//! Oscillator fast modes and singularly perturbed linear mean dynamics.
//!
//! Models on `slow ⊗ oscillators` with
//! `L(k) = kΣ_a C_a ⊗ a_a + G ⊗ I` and
//! `K(k) = k²Σ_ab Â_ab a_a*a_b + kΣ_a (Z_a ⊗ a_a* + X_a ⊗ a_a) + R ⊗ I`
//! have the closed-form limit `Ŝ = (I + CÂ⁻¹Cᴴ)S`, `L̂ = G − CÂ⁻¹Z`,
//! `K̂ = R − XÂ⁻¹Z`. The mean system
//! `d/dt (b, z) = [[Γ₁, Γ₂], [k²Γ₃, k²Γ₄]] (b, z)` has slow eigenvalues near
//! `σ(Γ₀)`, `Γ₀ = Γ₁ − Γ₂Γ₄⁻¹Γ₃`, and fast eigenvalues near `k²σ(Γ₄)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator_algebra::{
    fock_annihilator, CMatrix, HilbertSpace, Operator, SubspaceIsometry, ZenoSplit,
};
use crate::slh_model::SlhTriple;
use crate::zeno_elimination::{ScaledSlhFamily, MAX_CONDITION};

/// Largest anti-Hermitian residual accepted for a Hamiltonian recovered from `K`.
pub const DERIVED_HAMILTONIAN_TOL: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);
const HALF: Complex64 = Complex64::new(0.5, 0.0);

/// Coefficients of an oscillator model with `n` channels and `m` oscillators.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorModelCoeffs {
    slow_space: HilbertSpace,
    channels: usize,
    modes: usize,
    /// Row-major `n × n`.
    s_slow: Vec<Operator>,
    /// Row-major `n × m`: `c[i * m + a]` couples channel `i` to oscillator `a`.
    c: Vec<Operator>,
    g: Vec<Operator>,
    a_hat: CMatrix,
    x: Vec<Operator>,
    z: Vec<Operator>,
    r: Operator,
}

impl OscillatorModelCoeffs {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s_slow: Vec<Operator>,
        c: Vec<Operator>,
        g: Vec<Operator>,
        a_hat: CMatrix,
        x: Vec<Operator>,
        z: Vec<Operator>,
        r: Operator,
    ) -> Result<Self> {
        let n = g.len();
        let m = a_hat.nrows();
        if a_hat.ncols() != m || m == 0 {
            return Err(Error::DimensionMismatch(format!("Â is {}×{}", a_hat.nrows(), a_hat.ncols())));
        }
        if s_slow.len() != n * n || c.len() != n * m || x.len() != m || z.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{n} channels and {m} oscillators need {} S, {} C, {m} X and {m} Z entries; got {}, {}, {}, {}",
                n * n,
                n * m,
                s_slow.len(),
                c.len(),
                x.len(),
                z.len()
            )));
        }
        for op in s_slow.iter().chain(&c).chain(&g).chain(&x).chain(&z) {
            op.same_space(&r)?;
        }
        if a_hat.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        // Unitarity of S is validated when the limit triple is built.
        Ok(Self { slow_space: r.space().clone(), channels: n, modes: m, s_slow, c, g, a_hat, x, z, r })
    }

    /// Coefficients generated by `S ⊗ I`, `L(k) = kΣ_a C_a ⊗ a_a + G ⊗ I` and
    /// `H(k) = k²Σ_ab Ω_ab a_a*a_b + kΣ_a (F_a ⊗ a_a* + F_aᴴ ⊗ a_a) + H₀ ⊗ I`.
    ///
    /// `ΣᵢC_iaᴴC_ib` must be a multiple of the identity for `Â` to be scalar;
    /// its value is read off the first diagonal entry.
    pub fn from_hamiltonian(
        s_slow: Vec<Operator>,
        c: Vec<Operator>,
        g: Vec<Operator>,
        omega: CMatrix,
        f: Vec<Operator>,
        h0: Operator,
    ) -> Result<Self> {
        let n = g.len();
        let m = omega.nrows();
        if c.len() != n * m || f.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{n} channels and {m} oscillators need {} C and {m} F entries",
                n * m
            )));
        }
        let dim = h0.dim();
        let mut a_hat = CMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let mut gram = CMatrix::zeros(dim, dim);
                for i in 0..n {
                    gram += c[i * m + a].matrix().adjoint() * c[i * m + b].matrix();
                }
                let scalar = gram[(0, 0)];
                let defect = crate::operator_algebra::max_abs(&(gram - CMatrix::identity(dim, dim) * scalar));
                if defect > DERIVED_HAMILTONIAN_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "Σ C_{a}ᴴ C_{b} is not a multiple of the identity (defect {defect:.3e})"
                    )));
                }
                a_hat[(a, b)] = -HALF * scalar - I * omega[(a, b)];
            }
        }
        let mut x = Vec::with_capacity(m);
        let mut z = Vec::with_capacity(m);
        for a in 0..m {
            let mut cg = CMatrix::zeros(dim, dim);
            for i in 0..n {
                cg += c[i * m + a].matrix().adjoint() * g[i].matrix();
            }
            let fa = f[a].matrix();
            z.push(Operator::new(h0.space().clone(), -&cg * HALF - fa * I)?);
            x.push(Operator::new(h0.space().clone(), -cg.adjoint() * HALF - fa.adjoint() * I)?);
        }
        let mut r = -h0.matrix() * I;
        for gi in &g {
            r -= gi.matrix().adjoint() * gi.matrix() * HALF;
        }
        let r = Operator::new(h0.space().clone(), r)?;
        Self::new(s_slow, c, g, a_hat, x, z, r)
    }

    pub fn slow_space(&self) -> &HilbertSpace {
        &self.slow_space
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn a_hat(&self) -> &CMatrix {
        &self.a_hat
    }

    pub fn c(&self, channel: usize, mode: usize) -> &Operator {
        &self.c[channel * self.modes + mode]
    }
}

fn scaled(op: &Operator, s: Complex64) -> CMatrix {
    op.matrix() * s
}

fn invert_checked(m: &CMatrix) -> Result<CMatrix> {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min == 0.0 { f64::INFINITY } else { max / min };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    m.clone().try_inverse().ok_or(Error::Singular { condition })
}

/// `i(K + ½ΣLᴴL)` given `lhl = ΣLᴴL`, rejected when its anti-Hermitian part
/// exceeds the tolerance.
fn hamiltonian_from_k(what: &str, k: &CMatrix, lhl: &CMatrix) -> Result<CMatrix> {
    let h = (k + lhl * HALF) * I;
    let residual = crate::operator_algebra::max_abs(&(&h - h.adjoint())) * 0.5;
    if residual > DERIVED_HAMILTONIAN_TOL {
        return Err(Error::NotHermitian { what: what.to_string(), residual });
    }
    Ok((&h + h.adjoint()) * HALF)
}

/// Closed-form limit on the slow space.
pub fn oscillator_limit(coeffs: &OscillatorModelCoeffs) -> Result<SlhTriple> {
    let (n, m) = (coeffs.channels, coeffs.modes);
    let inv = invert_checked(&coeffs.a_hat)?;
    let dim = coeffs.slow_space.total_dim();
    let zero = CMatrix::zeros(dim, dim);

    // (CÂ⁻¹)_ib = Σ_a C_ia (Â⁻¹)_ab
    let c_inv: Vec<CMatrix> = (0..n * m)
        .map(|idx| {
            let (i, b) = (idx / m, idx % m);
            (0..m).fold(zero.clone(), |acc, a| acc + scaled(coeffs.c(i, a), inv[(a, b)]))
        })
        .collect();

    let mut s_hat = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = zero.clone();
            for c in 0..n {
                let mut factor = if i == c { CMatrix::identity(dim, dim) } else { zero.clone() };
                for b in 0..m {
                    factor += &c_inv[i * m + b] * coeffs.c(c, b).matrix().adjoint();
                }
                acc += factor * coeffs.s_slow[c * n + j].matrix();
            }
            s_hat.push(acc);
        }
    }
    let l_hat: Vec<CMatrix> = (0..n)
        .map(|i| {
            (0..m).fold(coeffs.g[i].matrix().clone(), |acc, b| acc - &c_inv[i * m + b] * coeffs.z[b].matrix())
        })
        .collect();
    let mut k_hat = coeffs.r.matrix().clone();
    for a in 0..m {
        for b in 0..m {
            k_hat -= coeffs.x[a].matrix() * coeffs.z[b].matrix() * inv[(a, b)];
        }
    }
    let lhl = l_hat.iter().fold(zero.clone(), |acc, l| acc + l.adjoint() * l);
    let h_hat = hamiltonian_from_k("limit Hamiltonian", &k_hat, &lhl)?;
    let wrap = |x: CMatrix| Operator::from_parts(coeffs.slow_space.clone(), x);
    SlhTriple::new(
        s_hat.into_iter().map(wrap).collect(),
        l_hat.into_iter().map(wrap).collect(),
        wrap(h_hat),
    )
}

/// The same model on `slow ⊗ fock(n)^⊗m` as a scaled family.
pub fn build_full_family(coeffs: &OscillatorModelCoeffs, fock_truncation: usize) -> Result<ScaledSlhFamily> {
    if fock_truncation < 3 {
        return Err(Error::InvalidArgument(format!(
            "Fock truncation must be at least 3, got {fock_truncation}"
        )));
    }
    let (n, m) = (coeffs.channels, coeffs.modes);
    let slow = &coeffs.slow_space;
    let a1 = fock_annihilator(fock_truncation)?;
    let fock = a1.space().clone();
    let mut osc_space = fock.clone();
    for _ in 1..m {
        osc_space = osc_space.tensor(&fock);
    }
    let modes: Vec<Operator> = (0..m).map(|a| Operator::embed(&a1, a, &osc_space)).collect::<Result<_>>()?;
    let id_osc = Operator::identity(&osc_space);
    let lift = |x: &Operator| x.tensor(&id_osc);
    let space = slow.tensor(&osc_space);
    let dim = space.total_dim();
    let zero = CMatrix::zeros(dim, dim);

    let l1: Vec<CMatrix> = (0..n)
        .map(|i| (0..m).fold(zero.clone(), |acc, a| acc + coeffs.c(i, a).tensor(&modes[a]).matrix()))
        .collect();
    let l0: Vec<CMatrix> = coeffs.g.iter().map(|g| lift(g).into_matrix()).collect();

    let id_slow = Operator::identity(slow);
    let mut a = zero.clone();
    for p in 0..m {
        for q in 0..m {
            let hop = &modes[p].adjoint() * &modes[q];
            a += id_slow.tensor(&hop).matrix() * coeffs.a_hat[(p, q)];
        }
    }
    let mut mid = zero.clone();
    for p in 0..m {
        mid += coeffs.z[p].tensor(&modes[p].adjoint()).matrix();
        mid += coeffs.x[p].tensor(&modes[p]).matrix();
    }
    let r = lift(&coeffs.r).into_matrix();

    let cross = |x: &[CMatrix], y: &[CMatrix]| -> CMatrix {
        x.iter().zip(y).fold(zero.clone(), |acc, (p, q)| acc + p.adjoint() * q)
    };
    let h2 = hamiltonian_from_k("derived H2", &a, &cross(&l1, &l1))?;
    let h1 = hamiltonian_from_k("derived H1", &mid, &(cross(&l1, &l0) + cross(&l0, &l1)))?;
    let h0 = hamiltonian_from_k("derived H0", &r, &cross(&l0, &l0))?;

    let wrap = |x: CMatrix| Operator::from_parts(space.clone(), x);
    ScaledSlhFamily::new(
        coeffs.s_slow.iter().map(lift).collect(),
        l1.into_iter().map(wrap).collect(),
        l0.into_iter().map(wrap).collect(),
        wrap(h2),
        wrap(h1),
        wrap(h0),
    )
}

/// Zeno split `slow ⊗ |0…0⟩` matching [`build_full_family`].
pub fn oscillator_zeno_split(coeffs: &OscillatorModelCoeffs, fock_truncation: usize) -> Result<ZenoSplit> {
    let mut dims = coeffs.slow_space.factor_dims().to_vec();
    dims.extend(std::iter::repeat_n(fock_truncation, coeffs.modes));
    let space = HilbertSpace::new(dims)?;
    let osc_dim = fock_truncation.pow(coeffs.modes as u32);
    let idx: Vec<usize> = (0..coeffs.slow_space.total_dim()).map(|s| s * osc_dim).collect();
    Ok(ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &idx)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HurwitzReport {
    /// Largest eigenvalue of `(Â + Âᴴ)/2`.
    pub numerical_range_margin: f64,
    /// Largest real part of an eigenvalue of `Â`.
    pub eigenvalue_margin: f64,
    /// `Re⟨ψ|Âψ⟩ < 0` for all `ψ ≠ 0`.
    pub strictly_hurwitz: bool,
    pub eigenvalue_hurwitz: bool,
}

pub fn is_strictly_hurwitz(a: &CMatrix, tol: f64) -> Result<HurwitzReport> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!("{}×{} matrix is not square", a.nrows(), a.ncols())));
    }
    let sym = (a + a.adjoint()) * HALF;
    let nr = sym.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ev = eigenvalues(a).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(HurwitzReport {
        numerical_range_margin: nr,
        eigenvalue_margin: ev,
        strictly_hurwitz: nr < -tol,
        eigenvalue_hurwitz: ev < -tol,
    })
}

/// Eigenvalues from the complex Schur form.
pub fn eigenvalues(m: &CMatrix) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let (_, t) = m.clone().schur().unpack();
    t.diagonal().iter().cloned().collect()
}

/// Mean-dynamics blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMeanSystem {
    pub gamma1: CMatrix,
    pub gamma2: CMatrix,
    pub gamma3: CMatrix,
    pub gamma4: CMatrix,
}

impl LinearMeanSystem {
    pub fn new(gamma1: CMatrix, gamma2: CMatrix, gamma3: CMatrix, gamma4: CMatrix) -> Result<Self> {
        let (r, m) = (gamma1.nrows(), gamma4.nrows());
        let shapes = [
            ("Γ1", &gamma1, r, r),
            ("Γ2", &gamma2, r, m),
            ("Γ3", &gamma3, m, r),
            ("Γ4", &gamma4, m, m),
        ];
        for (name, mat, rows, cols) in shapes {
            if mat.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}×{}, expected {rows}×{cols}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if mat.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { gamma1, gamma2, gamma3, gamma4 })
    }

    pub fn slow_dim(&self) -> usize {
        self.gamma1.nrows()
    }

    pub fn fast_dim(&self) -> usize {
        self.gamma4.nrows()
    }

    /// `[[Γ₁, Γ₂], [k²Γ₃, k²Γ₄]]`.
    pub fn full_generator(&self, k: f64) -> CMatrix {
        let (r, m) = (self.slow_dim(), self.fast_dim());
        let k2 = Complex64::new(k * k, 0.0);
        let mut out = CMatrix::zeros(r + m, r + m);
        out.view_mut((0, 0), (r, r)).copy_from(&self.gamma1);
        out.view_mut((0, r), (r, m)).copy_from(&self.gamma2);
        out.view_mut((r, 0), (m, r)).copy_from(&(&self.gamma3 * k2));
        out.view_mut((r, r), (m, m)).copy_from(&(&self.gamma4 * k2));
        out
    }
}

/// `Γ₀ = Γ₁ − Γ₂Γ₄⁻¹Γ₃`.
pub fn slow_schur(sys: &LinearMeanSystem) -> Result<CMatrix> {
    let inv = invert_checked(&sys.gamma4)?;
    Ok(&sys.gamma1 - &sys.gamma2 * inv * &sys.gamma3)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    /// Eigenvalues of `Γ₀`.
    pub schur: Vec<Complex64>,
    /// Full-generator eigenvalues matched one to one with `schur`.
    pub slow: Vec<Complex64>,
    pub fast: Vec<Complex64>,
}

impl Spectrum {
    pub fn all(&self) -> impl Iterator<Item = &Complex64> {
        self.slow.iter().chain(&self.fast)
    }

    pub fn max_real_part(&self) -> f64 {
        self.all().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest distance between a slow eigenvalue and its `Γ₀` partner.
    pub fn slow_error(&self) -> f64 {
        self.slow.iter().zip(&self.schur).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// Eigenvalues of the full generator, split into the `r` closest to `σ(Γ₀)`
/// (greedy nearest matching, smallest distance first) and the rest.
pub fn full_spectrum(sys: &LinearMeanSystem, k: f64) -> Result<Spectrum> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!("scaling parameter must be positive, got {k}")));
    }
    let schur = eigenvalues(&slow_schur(sys)?);
    let mut remaining = eigenvalues(&sys.full_generator(k));
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (i, s) in schur.iter().enumerate() {
        for (j, e) in remaining.iter().enumerate() {
            pairs.push((i, j, (s - e).norm()));
        }
    }
    pairs.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut slow = vec![None; schur.len()];
    let mut taken = vec![false; remaining.len()];
    for (i, j, _) in pairs {
        if slow[i].is_none() && !taken[j] {
            slow[i] = Some(remaining[j]);
            taken[j] = true;
        }
    }
    let slow = slow.into_iter().map(|v| v.expect("full generator has at least r eigenvalues")).collect();
    let mut j = 0;
    remaining.retain(|_| {
        let keep = !taken[j];
        j += 1;
        keep
    });
    Ok(Spectrum { schur, slow, fast: remaining })
}

/// Exponent `p` in `|λ_fast| ∝ kᵖ`, from the mean fast-eigenvalue modulus at two scales.
pub fn fast_scaling_exponent(sys: &LinearMeanSystem, k1: f64, k2: f64) -> Result<f64> {
    let mean_modulus = |k: f64| -> Result<f64> {
        let s = full_spectrum(sys, k)?;
        Ok(s.fast.iter().map(|z| z.norm()).sum::<f64>() / s.fast.len().max(1) as f64)
    };
    Ok((mean_modulus(k2)? / mean_modulus(k1)?).ln() / (k2 / k1).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityRow {
    pub k: f64,
    pub max_real_part: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub gamma4: HurwitzReport,
    pub gamma0: HurwitzReport,
    /// Both `Γ₄` and `Γ₀` eigenvalue-Hurwitz.
    pub predicted_stable: bool,
    /// Stable at the largest `k` of the grid.
    pub observed_stable: bool,
    /// Smallest grid `k` from which every larger grid point is stable.
    pub k0: Option<f64>,
    pub agrees: bool,
}

/// Sweeps the grid and compares the large-`k` behavior with the prediction
/// from the Hurwitz properties of `Γ₄` and `Γ₀`.
pub fn stability_threshold(sys: &LinearMeanSystem, k_grid: &[f64]) -> Result<StabilityReport> {
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("empty k grid".into()));
    }
    let gamma0 = slow_schur(sys)?;
    let mut grid = k_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let rows = grid
        .par_iter()
        .map(|&k| {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::InvalidArgument(format!("scaling parameter must be positive, got {k}")));
            }
            let max_re = eigenvalues(&sys.full_generator(k)).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            Ok(StabilityRow { k, max_real_part: max_re, stable: max_re < 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    let gamma4 = is_strictly_hurwitz(&sys.gamma4, 0.0)?;
    let gamma0 = is_strictly_hurwitz(&gamma0, 0.0)?;
    let predicted_stable = gamma4.eigenvalue_hurwitz && gamma0.eigenvalue_hurwitz;
    let observed_stable = rows.last().map(|r| r.stable).unwrap_or(false);
    let k0 = rows
        .iter()
        .rposition(|r| !r.stable)
        .map_or(Some(rows[0].k), |last_unstable| rows.get(last_unstable + 1).map(|r| r.k));
    Ok(StabilityReport {
        rows,
        gamma4,
        gamma0,
        predicted_stable,
        observed_stable,
        k0,
        agrees: predicted_stable == observed_stable,
    })
}
