//! Ready-made scaled families for the standard examples: a Kerr cavity frozen
//! to its lowest two Fock states, an alkali atom with an adiabatically
//! eliminated excited level, and a Λ atom in a lossy cavity.

use num_complex::Complex64;

use crate::error::Result;
use crate::operator_algebra::{
    fock_annihilator, pauli, HilbertSpace, Operator, PauliAxis, SubspaceIsometry, ZenoSplit,
};
use crate::zeno_elimination::ScaledSlhFamily;

/// Two-channel Kerr cavity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KerrParams {
    pub n_max: usize,
    pub chi0: f64,
    pub delta: f64,
    pub kappa: [f64; 2],
    /// Coherent drive entering through the first channel.
    pub alpha: Complex64,
}

impl Default for KerrParams {
    fn default() -> Self {
        Self { n_max: 6, chi0: 1.0, delta: 0.3, kappa: [1.0, 1.0], alpha: Complex64::new(0.2, 0.0) }
    }
}

/// `L_j = √κ_j a`, `H = k²χ₀a*²a² + Δa*a − i√κ₁(αa* − α*a)`.
pub fn kerr_family(p: &KerrParams) -> Result<ScaledSlhFamily> {
    let a = fock_annihilator(p.n_max)?;
    let ad = a.adjoint();
    let zero = Operator::zeros(a.space());
    let h2 = &(&(&ad * &ad) * &(&a * &a)) * p.chi0;
    let drive = &(&ad * p.alpha) - &(&a * p.alpha.conj());
    let h0 = &(&(&ad * &a) * p.delta) + &drive.scale(Complex64::new(0.0, -p.kappa[0].sqrt()));
    ScaledSlhFamily::with_identity_scattering(
        vec![zero.clone(), zero.clone()],
        vec![&a * p.kappa[0].sqrt(), &a * p.kappa[1].sqrt()],
        h2,
        zero,
        h0,
    )
}

/// Zeno subspace `span{|0⟩, |1⟩}`.
pub fn kerr_split(p: &KerrParams) -> Result<ZenoSplit> {
    let space = HilbertSpace::flat(p.n_max)?;
    Ok(ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &[0, 1])?))
}

/// Three-channel alkali atom on `level ⊗ spin`, level basis `(|g⟩, |e⟩)`:
/// `L_j = k√γ |g⟩⟨e| ⊗ σ_j`, `H = k²Δ|e⟩⟨e| ⊗ I + Σ_j I ⊗ B_jσ_j`.
pub fn alkali_family(gamma: f64, delta: f64, field: [f64; 3]) -> Result<ScaledSlhFamily> {
    let level = HilbertSpace::flat(2)?;
    let spin = HilbertSpace::flat(2)?;
    let space = level.tensor(&spin);
    let zero = Operator::zeros(&space);
    let lower = Operator::ketbra(2, 0, 1)?;
    let excited = Operator::ketbra(2, 1, 1)?;
    let id_level = Operator::identity(&level);
    let axes = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
    let l1 = axes.iter().map(|&ax| &lower.tensor(&pauli(ax)) * gamma.sqrt()).collect();
    let mut h0 = zero.clone();
    for (&ax, &b) in axes.iter().zip(&field) {
        h0 += &id_level.tensor(&(&pauli(ax) * b));
    }
    let h2 = &excited.tensor(&Operator::identity(&spin)) * delta;
    ScaledSlhFamily::with_identity_scattering(l1, vec![zero.clone(); 3], h2, zero, h0)
}

/// Zeno subspace `|g⟩ ⊗ spin`.
pub fn alkali_split() -> Result<ZenoSplit> {
    let space = HilbertSpace::new(vec![2, 2])?;
    Ok(ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &[0, 1])?))
}

/// Λ atom in a cavity on `level ⊗ fock(n_max)`, level basis `(|g1⟩, |g2⟩, |e⟩)`:
/// `L = k√γ I ⊗ a`,
/// `H = ik²g(|e⟩⟨g1| ⊗ a − |g1⟩⟨e| ⊗ a*) + ik(α|e⟩⟨g2| − α*|g2⟩⟨e|) ⊗ I`.
pub fn lambda_family(n_max: usize, gamma: f64, g: f64, alpha: Complex64) -> Result<ScaledSlhFamily> {
    let level = HilbertSpace::flat(3)?;
    let a = fock_annihilator(n_max)?;
    let mode = a.space().clone();
    let space = level.tensor(&mode);
    let zero = Operator::zeros(&space);
    let i = Complex64::new(0.0, 1.0);
    let (g1, g2, e) = (0, 1, 2);
    let emit = Operator::ketbra(3, e, g1)?.tensor(&a);
    let h2 = (&emit - &emit.adjoint()).scale(i * g);
    let pump = &Operator::ketbra(3, e, g2)? * alpha;
    let h1 = (&pump - &pump.adjoint()).scale(i).tensor(&Operator::identity(&mode));
    let l1 = &Operator::identity(&level).tensor(&a) * gamma.sqrt();
    ScaledSlhFamily::with_identity_scattering(vec![l1], vec![zero.clone()], h2, h1, zero)
}

/// Zeno subspace `span{|g1, 0⟩, |g2, 0⟩}`.
pub fn lambda_split(n_max: usize) -> Result<ZenoSplit> {
    let space = HilbertSpace::new(vec![3, n_max])?;
    let idx = [space.basis_index(&[0, 0])?, space.basis_index(&[1, 0])?];
    Ok(ZenoSplit::from_zeno(SubspaceIsometry::from_basis_indices(&space, &idx)?))
}
