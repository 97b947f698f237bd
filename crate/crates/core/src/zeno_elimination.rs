//! Zeno limits of k-scaled SLH families.
//!
//! A family has `S(k) = S`, `L(k) = kL⁽¹⁾ + L⁽⁰⁾` and
//! `H(k) = k²H⁽²⁾ + kH⁽¹⁾ + H⁽⁰⁾`, so that
//! `K(k) = −½L(k)ᴴL(k) − iH(k) = k²A + kM + R`. Given a split of the space into
//! a Zeno subspace and its fast complement, the three zenofiability conditions
//! are checked and the limit triple `(Ŝ_zz, L̂_z, Ĥ)` is assembled:
//!
//! ```text
//! Ŝᵢⱼ = Σ_c (δᵢ_c + L⁽¹⁾ᵢ Ā⁻¹ L⁽¹⁾_cᴴ) S_cⱼ
//! L̂ᵢ  = L⁽⁰⁾ᵢ P_z − L⁽¹⁾ᵢ Ā⁻¹ M P_z
//! Ĥ   = H⁽⁰⁾_zz + Im{M_zf A_ff⁻¹ M_fz}
//! ```
//!
//! where `Ā⁻¹ = V_f A_ff⁻¹ V_fᴴ` is applied through an LU solve on the fast block.

use nalgebra::linalg::LU;
use nalgebra::Dyn;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator_algebra::{
    im_part, kernel_basis, max_abs, CMatrix, HilbertSpace, Operator, SubspaceIsometry, ZenoSplit,
    DEFAULT_KERNEL_TOL,
};
use crate::slh_model::{
    identity_scattering, screen, series_matrices, unitarity_residual, SlhTriple,
};

/// Largest acceptable condition number of `A_ff`.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionTolerances {
    pub scaling: f64,
    pub kernel: f64,
    pub decoupling: f64,
}

impl Default for ConditionTolerances {
    fn default() -> Self {
        Self { scaling: 1e-9, kernel: 1e-8, decoupling: 1e-9 }
    }
}

impl ConditionTolerances {
    /// The same threshold for all three conditions.
    pub fn uniform(tol: f64) -> Self {
        Self { scaling: tol, kernel: tol, decoupling: tol }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScaledSlhFamily {
    space: HilbertSpace,
    channels: usize,
    scattering: Vec<Operator>,
    l1: Vec<Operator>,
    l0: Vec<Operator>,
    h2: Operator,
    h1: Operator,
    h0: Operator,
    warnings: Vec<String>,
}

impl ScaledSlhFamily {
    /// `scattering` is row-major with `l1.len()²` entries.
    pub fn new(
        scattering: Vec<Operator>,
        l1: Vec<Operator>,
        l0: Vec<Operator>,
        h2: Operator,
        h1: Operator,
        h0: Operator,
    ) -> Result<Self> {
        let n = l1.len();
        if l0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} first-order and {} zeroth-order couplings",
                n,
                l0.len()
            )));
        }
        if scattering.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} scattering entries for {n} channels",
                scattering.len()
            )));
        }
        for op in scattering.iter().chain(&l1).chain(&l0).chain([&h2, &h1]) {
            op.same_space(&h0)?;
        }
        let mut warnings = Vec::new();
        if n > 0 {
            let s: Vec<CMatrix> = scattering.iter().map(|o| o.matrix().clone()).collect();
            screen("scattering matrix", unitarity_residual(&s, n), &mut warnings, |what, residual| {
                Error::NotUnitary { what, residual }
            })?;
        }
        for (name, h) in [("H2", &h2), ("H1", &h1), ("H0", &h0)] {
            screen(name, h.hermiticity_residual(), &mut warnings, |what, residual| {
                Error::NotHermitian { what, residual }
            })?;
        }
        Ok(Self {
            space: h0.space().clone(),
            channels: n,
            scattering,
            l1,
            l0,
            h2,
            h1,
            h0,
            warnings,
        })
    }

    /// Family with `S = I`.
    pub fn with_identity_scattering(
        l1: Vec<Operator>,
        l0: Vec<Operator>,
        h2: Operator,
        h1: Operator,
        h0: Operator,
    ) -> Result<Self> {
        let s = identity_scattering(h0.space(), l1.len());
        Self::new(s, l1, l0, h2, h1, h0)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scattering(&self, i: usize, j: usize) -> &Operator {
        &self.scattering[i * self.channels + j]
    }

    pub fn scattering_entries(&self) -> &[Operator] {
        &self.scattering
    }

    pub fn l1(&self) -> &[Operator] {
        &self.l1
    }

    pub fn l0(&self) -> &[Operator] {
        &self.l0
    }

    pub fn h2(&self) -> &Operator {
        &self.h2
    }

    pub fn h1(&self) -> &Operator {
        &self.h1
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The triple `(S, kL⁽¹⁾ + L⁽⁰⁾, k²H⁽²⁾ + kH⁽¹⁾ + H⁽⁰⁾)`.
    pub fn instantiate(&self, k: f64) -> Result<SlhTriple> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidArgument(format!("scaling parameter must be positive, got {k}")));
        }
        let coupling = self
            .l1
            .iter()
            .zip(&self.l0)
            .map(|(l1, l0)| &(l1 * k) + l0)
            .collect();
        let h = &(&(&self.h2 * (k * k)) + &(&self.h1 * k)) + &self.h0;
        SlhTriple::new(self.scattering.clone(), coupling, h)
    }

    pub fn expand_k(&self) -> KExpansion {
        expand_k(self)
    }

    /// Cascade of two families on a common space, `other ◁ self`, expanded
    /// order by order in `k`.
    pub fn series_product(&self, other: &ScaledSlhFamily) -> Result<ScaledSlhFamily> {
        self.h0.same_space(&other.h0)?;
        if self.channels != other.channels {
            return Err(Error::DimensionMismatch(format!(
                "series product of {} and {} channel families",
                self.channels, other.channels
            )));
        }
        let n = self.channels;
        let mats = |ops: &[Operator]| -> Vec<CMatrix> { ops.iter().map(|o| o.matrix().clone()).collect() };
        let (s1, s2) = (mats(&self.scattering), mats(&other.scattering));
        let (a1, b1) = (mats(&self.l1), mats(&self.l0));
        let (a2, b2) = (mats(&other.l1), mats(&other.l0));
        let dim = self.space.total_dim();
        let zero_h = CMatrix::zeros(dim, dim);

        // L = L₂ + S₂L₁ is linear, so each order composes separately; the
        // Hamiltonian cross term Im{L₂ᴴS₂L₁} mixes orders.
        let (s, l1, _) = series_matrices(n, (&s1, &a1), (&s2, &a2), zero_h.clone());
        let (_, l0, _) = series_matrices(n, (&s1, &b1), (&s2, &b2), zero_h.clone());
        let cross = |left: &[CMatrix], right: &[CMatrix]| -> CMatrix {
            let mut acc = zero_h.clone();
            for i in 0..n {
                for j in 0..n {
                    acc += left[i].adjoint() * &s2[i * n + j] * &right[j];
                }
            }
            acc
        };
        let h2 = self.h2.matrix() + other.h2.matrix() + im_part(&cross(&a2, &a1));
        let h1 = self.h1.matrix() + other.h1.matrix() + im_part(&(cross(&a2, &b1) + cross(&b2, &a1)));
        let h0 = self.h0.matrix() + other.h0.matrix() + im_part(&cross(&b2, &b1));
        let wrap = |m: CMatrix| Operator::from_parts(self.space.clone(), m);
        ScaledSlhFamily::new(
            s.into_iter().map(wrap).collect(),
            l1.into_iter().map(wrap).collect(),
            l0.into_iter().map(wrap).collect(),
            wrap(h2),
            wrap(h1),
            wrap(h0),
        )
    }

    /// `X ⊗ I_right` applied to every coefficient.
    pub fn tensor_identity_after(&self, right: &HilbertSpace) -> ScaledSlhFamily {
        let id = Operator::identity(right);
        self.map_operators(|op| op.tensor(&id))
    }

    /// `I_left ⊗ X` applied to every coefficient.
    pub fn tensor_identity_before(&self, left: &HilbertSpace) -> ScaledSlhFamily {
        let id = Operator::identity(left);
        self.map_operators(|op| id.tensor(op))
    }

    fn map_operators(&self, f: impl Fn(&Operator) -> Operator) -> ScaledSlhFamily {
        let h0 = f(&self.h0);
        ScaledSlhFamily {
            space: h0.space().clone(),
            channels: self.channels,
            scattering: self.scattering.iter().map(&f).collect(),
            l1: self.l1.iter().map(&f).collect(),
            l0: self.l0.iter().map(&f).collect(),
            h2: f(&self.h2),
            h1: f(&self.h1),
            h0,
            warnings: self.warnings.clone(),
        }
    }
}

/// `K(k) = k²A + kM + R`.
#[derive(Clone, Debug, PartialEq)]
pub struct KExpansion {
    pub a: Operator,
    pub m: Operator,
    pub r: Operator,
}

impl KExpansion {
    pub fn at(&self, k: f64) -> Operator {
        &(&(&self.a * (k * k)) + &(&self.m * k)) + &self.r
    }
}

pub fn expand_k(family: &ScaledSlhFamily) -> KExpansion {
    let minus_i = Complex64::new(0.0, -1.0);
    let mut a = family.h2.matrix() * minus_i;
    let mut m = family.h1.matrix() * minus_i;
    let mut r = family.h0.matrix() * minus_i;
    for (l1, l0) in family.l1.iter().zip(&family.l0) {
        let (l1, l0) = (l1.matrix(), l0.matrix());
        a -= l1.adjoint() * l1 * Complex64::new(0.5, 0.0);
        m -= (l1.adjoint() * l0 + l0.adjoint() * l1) * Complex64::new(0.5, 0.0);
        r -= l0.adjoint() * l0 * Complex64::new(0.5, 0.0);
    }
    let wrap = |x: CMatrix| Operator::from_parts(family.space.clone(), x);
    KExpansion { a: wrap(a), m: wrap(m), r: wrap(r) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub residual: f64,
    pub passed: bool,
}

fn check_split(family: &ScaledSlhFamily, split: &ZenoSplit) -> Result<()> {
    if split.space() != family.space() {
        return Err(Error::DimensionMismatch(format!(
            "split on {} for a family on {}",
            split.space(),
            family.space()
        )));
    }
    if split.zeno().dim() == 0 {
        return Err(Error::InvalidSplit("empty Zeno subspace".into()));
    }
    Ok(())
}

/// Scaling condition: `L⁽¹⁾P_z = 0`, `P_zH⁽¹⁾P_z = 0`, `P_zH⁽²⁾P_z = 0`.
///
/// The residual is the largest entry magnitude over those expressions. Only
/// the Zeno block of `H⁽¹⁾` is required to vanish; its off-diagonal blocks
/// feed the second-order corrections in `Ĥ` and `L̂`.
pub fn check_scaling(family: &ScaledSlhFamily, split: &ZenoSplit, tol: f64) -> Result<ConditionReport> {
    check_split(family, split)?;
    let pz = split.zeno().projector();
    let mut residual: f64 = 0.0;
    for l1 in &family.l1 {
        residual = residual.max(max_abs(&(l1.matrix() * &pz)));
    }
    residual = residual.max(max_abs(&(&pz * family.h1.matrix() * &pz)));
    residual = residual.max(max_abs(&(&pz * family.h2.matrix() * &pz)));
    Ok(ConditionReport { residual, passed: residual < tol })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelReport {
    /// Smallest singular value of `A_ff` (infinite when the fast space is empty).
    pub min_singular_value: f64,
    /// Spectral norm of `A V_z`.
    pub kernel_leak: f64,
    pub passed: bool,
}

/// Kernel condition: `A V_z = 0` and `A_ff` invertible.
pub fn check_kernel(expansion: &KExpansion, split: &ZenoSplit, tol: f64) -> Result<KernelReport> {
    if expansion.a.space() != split.space() {
        return Err(Error::DimensionMismatch("expansion and split on different spaces".into()));
    }
    let a = expansion.a.matrix();
    let vz = split.zeno().columns();
    let vf = split.fast().columns();
    let leak = spectral_norm(&(a * vz));
    let min_sv = if vf.ncols() == 0 {
        f64::INFINITY
    } else {
        let a_ff = vf.adjoint() * a * vf;
        a_ff.singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(KernelReport {
        min_singular_value: min_sv,
        kernel_leak: leak,
        passed: min_sv > tol && leak < tol,
    })
}

fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Full-space hat operators prior to compression onto the Zeno subspace.
#[derive(Clone, Debug, PartialEq)]
pub struct HatOperators {
    channels: usize,
    /// Row-major `Ŝᵢⱼ` on the full space.
    pub scattering: Vec<Operator>,
    /// `L̂ᵢ = (L⁽⁰⁾ᵢ − L⁽¹⁾ᵢ Ā⁻¹ M) P_z` on the full space.
    pub coupling: Vec<Operator>,
    /// `Ĥ` on the Zeno subspace, in the basis of `V_z`.
    pub hamiltonian: Operator,
}

impl HatOperators {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn scattering(&self, i: usize, j: usize) -> &Operator {
        &self.scattering[i * self.channels + j]
    }
}

struct FastSolver {
    lu: Option<LU<Complex64, Dyn, Dyn>>,
}

impl FastSolver {
    fn new(a_ff: CMatrix) -> Result<Self> {
        if a_ff.nrows() == 0 {
            return Ok(Self { lu: None });
        }
        let sv = a_ff.singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min == 0.0 { f64::INFINITY } else { max / min };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::Singular { condition });
        }
        Ok(Self { lu: Some(a_ff.lu()) })
    }

    /// `A_ff⁻¹ b`.
    fn solve(&self, b: &CMatrix) -> CMatrix {
        match &self.lu {
            Some(lu) => lu.solve(b).expect("A_ff passed the condition guard"),
            None => CMatrix::zeros(0, b.ncols()),
        }
    }
}

pub fn hat_operators(family: &ScaledSlhFamily, split: &ZenoSplit) -> Result<HatOperators> {
    check_split(family, split)?;
    let n = family.channels;
    let expansion = expand_k(family);
    let vz = split.zeno().columns();
    let vf = split.fast().columns();
    let a_ff = vf.adjoint() * expansion.a.matrix() * vf;
    let solver = FastSolver::new(a_ff)?;
    let m = expansion.m.matrix();
    let m_fz = vf.adjoint() * m * vz;
    let m_zf = vz.adjoint() * m * vf;

    // Ā⁻¹ L⁽¹⁾_cᴴ = V_f A_ff⁻¹ V_fᴴ L⁽¹⁾_cᴴ
    let inv_l1_dag: Vec<CMatrix> = family
        .l1
        .iter()
        .map(|l1| vf * solver.solve(&(vf.adjoint() * l1.matrix().adjoint())))
        .collect();
    let mut scattering = Vec::with_capacity(n * n);
    for i in 0..n {
        let l1_i = family.l1[i].matrix();
        for j in 0..n {
            let mut acc = family.scattering(i, j).matrix().clone();
            for c in 0..n {
                acc += l1_i * &inv_l1_dag[c] * family.scattering(c, j).matrix();
            }
            scattering.push(Operator::from_parts(family.space.clone(), acc));
        }
    }

    let inv_m_fz = vf * solver.solve(&m_fz);
    let pz_adj = vz.adjoint();
    let coupling = family
        .l1
        .iter()
        .zip(&family.l0)
        .map(|(l1, l0)| {
            let acting = l0.matrix() * vz - l1.matrix() * &inv_m_fz;
            Operator::from_parts(family.space.clone(), acting * &pz_adj)
        })
        .collect();

    let h0_zz = split.zeno().compress(family.h0.matrix());
    let correction = &m_zf * solver.solve(&m_fz);
    let hamiltonian = Operator::from_matrix(h0_zz + im_part(&correction))?;
    Ok(HatOperators { channels: n, scattering, coupling, hamiltonian })
}

/// Decoupling condition: `Ŝ_zf`, `Ŝ_fz` and `L̂_f` vanish.
pub fn check_decoupling(hats: &HatOperators, split: &ZenoSplit, tol: f64) -> Result<ConditionReport> {
    let vz = split.zeno().columns();
    let vf = split.fast().columns();
    let mut residual: f64 = 0.0;
    for s in &hats.scattering {
        if s.space() != split.space() {
            return Err(Error::DimensionMismatch("hat operators and split on different spaces".into()));
        }
        let s = s.matrix();
        residual = residual.max(max_abs(&(vz.adjoint() * s * vf)));
        residual = residual.max(max_abs(&(vf.adjoint() * s * vz)));
    }
    for l in &hats.coupling {
        residual = residual.max(max_abs(&(vf.adjoint() * l.matrix() * vz)));
    }
    Ok(ConditionReport { residual, passed: residual < tol })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub scaling_residual: f64,
    pub kernel_min_singular_value: f64,
    pub kernel_leak: f64,
    pub decoupling_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationResult {
    /// `(Ŝ_zz, L̂_z, Ĥ)` on the Zeno subspace, in the basis given by `V_z`.
    pub zeno_triple: SlhTriple,
    pub residuals: Residuals,
    pub split: ZenoSplit,
}

impl EliminationResult {
    /// `V_z X V_zᴴ` for a Zeno-space operator.
    pub fn lift(&self, x: &CMatrix) -> CMatrix {
        self.split.zeno().lift(x)
    }
}

/// Every condition check together with the limit triple when all pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ZenofiabilityReport {
    pub scaling: ConditionReport,
    pub kernel: KernelReport,
    pub decoupling: Option<ConditionReport>,
}

/// Runs scaling → expansion → kernel → hat operators → decoupling and returns
/// the compressed limit triple, or the first violated condition.
pub fn zeno_eliminate(
    family: &ScaledSlhFamily,
    split: &ZenoSplit,
    tol: &ConditionTolerances,
) -> Result<EliminationResult> {
    let scaling = check_scaling(family, split, tol.scaling)?;
    if !scaling.passed {
        return Err(Error::ScalingViolation { residual: scaling.residual, tolerance: tol.scaling });
    }
    let expansion = expand_k(family);
    let kernel = check_kernel(&expansion, split, tol.kernel)?;
    if !kernel.passed {
        return Err(Error::KernelViolation {
            min_singular_value: kernel.min_singular_value,
            kernel_leak: kernel.kernel_leak,
            tolerance: tol.kernel,
        });
    }
    let hats = hat_operators(family, split)?;
    let decoupling = check_decoupling(&hats, split, tol.decoupling)?;
    if !decoupling.passed {
        return Err(Error::DecouplingViolation {
            residual: decoupling.residual,
            tolerance: tol.decoupling,
        });
    }

    let zeno = split.zeno();
    let zspace = hats.hamiltonian.space().clone();
    let compress = |op: &Operator| Operator::from_parts(zspace.clone(), zeno.compress(op.matrix()));
    let triple = SlhTriple::new(
        hats.scattering.iter().map(compress).collect(),
        hats.coupling.iter().map(compress).collect(),
        hats.hamiltonian.clone(),
    )?;
    Ok(EliminationResult {
        zeno_triple: triple,
        residuals: Residuals {
            scaling_residual: scaling.residual,
            kernel_min_singular_value: kernel.min_singular_value,
            kernel_leak: kernel.kernel_leak,
            decoupling_residual: decoupling.residual,
        },
        split: split.clone(),
    })
}

/// Evaluates every condition that can be evaluated, without stopping at the
/// first failure. Later checks are skipped only when an earlier one makes them
/// meaningless (a singular `A_ff` prevents the hat operators).
pub fn zenofiability_report(
    family: &ScaledSlhFamily,
    split: &ZenoSplit,
    tol: &ConditionTolerances,
) -> Result<ZenofiabilityReport> {
    let scaling = check_scaling(family, split, tol.scaling)?;
    let kernel = check_kernel(&expand_k(family), split, tol.kernel)?;
    let decoupling = match hat_operators(family, split) {
        Ok(hats) => Some(check_decoupling(&hats, split, tol.decoupling)?),
        Err(Error::Singular { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ZenofiabilityReport { scaling, kernel, decoupling })
}

/// Split whose Zeno subspace is the numerical kernel of `A`.
pub fn find_zeno_subspace(family: &ScaledSlhFamily, tol: f64) -> Result<ZenoSplit> {
    let a = expand_k(family).a;
    let kernel: SubspaceIsometry = kernel_basis(&a, tol);
    if kernel.dim() == 0 {
        return Err(Error::TrivialKernel);
    }
    if kernel.dim() == family.space.total_dim() {
        return Err(Error::FullKernel);
    }
    Ok(ZenoSplit::from_zeno(kernel))
}

/// [`find_zeno_subspace`] with the default kernel threshold.
pub fn find_zeno_subspace_default(family: &ScaledSlhFamily) -> Result<ZenoSplit> {
    find_zeno_subspace(family, DEFAULT_KERNEL_TOL)
}
