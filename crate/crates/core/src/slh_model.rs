//! SLH triples, their generators, and network composition.

use log::warn;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator_algebra::{im_part, max_abs, CMatrix, HilbertSpace, Operator};

/// Residuals up to this size pass silently.
pub const VALIDATION_TOL: f64 = 1e-10;
/// Residuals between `VALIDATION_TOL` and this are accepted with a warning.
pub const VALIDATION_WARN_LIMIT: f64 = 1e-6;

/// `max_{i,k} |Σ_j S_jiᴴ S_jk − δ_ik I|` for a row-major n×n array.
pub(crate) fn unitarity_residual(s: &[CMatrix], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for k in 0..n {
            let dim = s[0].nrows();
            let mut acc = if i == k {
                -CMatrix::identity(dim, dim)
            } else {
                CMatrix::zeros(dim, dim)
            };
            for j in 0..n {
                acc += s[j * n + i].adjoint() * &s[j * n + k];
            }
            worst = worst.max(max_abs(&acc));
        }
    }
    worst
}

/// Applies the accept/warn/reject policy to a validation residual.
pub(crate) fn screen(
    what: &str,
    residual: f64,
    warnings: &mut Vec<String>,
    make_err: impl FnOnce(String, f64) -> Error,
) -> Result<()> {
    if residual > VALIDATION_WARN_LIMIT {
        return Err(make_err(what.to_string(), residual));
    }
    if residual > VALIDATION_TOL {
        let msg = format!("{what}: residual {residual:.3e} exceeds {VALIDATION_TOL:.0e}");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlhTriple {
    space: HilbertSpace,
    channels: usize,
    /// Row-major `S_ij`.
    scattering: Vec<Operator>,
    coupling: Vec<Operator>,
    hamiltonian: Operator,
    warnings: Vec<String>,
}

impl SlhTriple {
    /// `scattering` is row-major with `coupling.len()²` entries.
    pub fn new(scattering: Vec<Operator>, coupling: Vec<Operator>, hamiltonian: Operator) -> Result<Self> {
        let n = coupling.len();
        if scattering.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} scattering entries for {n} channels",
                scattering.len()
            )));
        }
        for op in scattering.iter().chain(&coupling) {
            op.same_space(&hamiltonian)?;
        }
        let mut warnings = Vec::new();
        if n > 0 {
            let s: Vec<CMatrix> = scattering.iter().map(|o| o.matrix().clone()).collect();
            screen("scattering matrix", unitarity_residual(&s, n), &mut warnings, |what, residual| {
                Error::NotUnitary { what, residual }
            })?;
        }
        screen(
            "Hamiltonian",
            hamiltonian.hermiticity_residual(),
            &mut warnings,
            |what, residual| Error::NotHermitian { what, residual },
        )?;
        Ok(Self {
            space: hamiltonian.space().clone(),
            channels: n,
            scattering,
            coupling,
            hamiltonian,
            warnings,
        })
    }

    /// Triple with `S = I`.
    pub fn with_identity_scattering(coupling: Vec<Operator>, hamiltonian: Operator) -> Result<Self> {
        let scattering = identity_scattering(hamiltonian.space(), coupling.len());
        Self::new(scattering, coupling, hamiltonian)
    }

    /// The passthrough `(I, 0, 0)` with `channels` channels.
    pub fn passthrough(space: &HilbertSpace, channels: usize) -> Self {
        Self {
            space: space.clone(),
            channels,
            scattering: identity_scattering(space, channels),
            coupling: vec![Operator::zeros(space); channels],
            hamiltonian: Operator::zeros(space),
            warnings: Vec::new(),
        }
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

    pub fn coupling(&self) -> &[Operator] {
        &self.coupling
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    /// Validation messages for residuals accepted between 1e−10 and 1e−6.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `K = −½ Σ LᵢᴴLᵢ − iH`.
    pub fn k_operator(&self) -> Operator {
        Operator::from_parts(self.space.clone(), k_matrix(&self.coupling, &self.hamiltonian))
    }

    /// Heisenberg-picture generator `ℒX`.
    pub fn lindbladian(&self, x: &Operator) -> Result<Operator> {
        x.same_space(&self.hamiltonian)?;
        Ok(Operator::from_parts(self.space.clone(), self.lindbladian_matrix(x.matrix())))
    }

    pub(crate) fn lindbladian_matrix(&self, x: &CMatrix) -> CMatrix {
        let h = self.hamiltonian.matrix();
        let mut out = (x * h - h * x) * Complex64::new(0.0, -1.0);
        for l in &self.coupling {
            let l = l.matrix();
            let ld = l.adjoint();
            // ½Lᴴ[X,L] + ½[Lᴴ,X]L = LᴴXL − ½LᴴLX − ½XLᴴL
            let ldl = &ld * l;
            out += &ld * x * l - (&ldl * x + x * &ldl) * Complex64::new(0.5, 0.0);
        }
        out
    }

    pub fn heisenberg_coeffs(&self, x: &Operator) -> Result<HeisenbergCoefficients> {
        x.same_space(&self.hamiltonian)?;
        let n = self.channels;
        let xm = x.matrix();
        let wrap = |m: CMatrix| Operator::from_parts(self.space.clone(), m);
        let mut noise_creation = Vec::with_capacity(n);
        let mut noise_annihilation = Vec::with_capacity(n);
        for i in 0..n {
            let mut m_i = CMatrix::zeros(xm.nrows(), xm.ncols());
            let mut n_i = m_i.clone();
            for j in 0..n {
                let s_ji = self.scattering(j, i).matrix();
                let l_j = self.coupling[j].matrix();
                m_i += s_ji.adjoint() * (xm * l_j - l_j * xm);
                let l_j_dag = l_j.adjoint();
                n_i += (&l_j_dag * xm - xm * &l_j_dag) * s_ji;
            }
            noise_creation.push(wrap(m_i));
            noise_annihilation.push(wrap(n_i));
        }
        let mut scattering = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                let mut acc = if i == k { -xm.clone() } else { CMatrix::zeros(xm.nrows(), xm.ncols()) };
                for j in 0..n {
                    acc += self.scattering(j, i).matrix().adjoint() * xm * self.scattering(j, k).matrix();
                }
                scattering.push(wrap(acc));
            }
        }
        Ok(HeisenbergCoefficients {
            observable: x.clone(),
            generator: wrap(self.lindbladian_matrix(xm)),
            noise_creation,
            noise_annihilation,
            scattering,
            channels: n,
        })
    }

    /// `X ⊗ I_right` applied to every operator.
    pub fn tensor_identity_after(&self, right: &HilbertSpace) -> SlhTriple {
        let id = Operator::identity(right);
        self.map_operators(|op| op.tensor(&id))
    }

    /// `I_left ⊗ X` applied to every operator.
    pub fn tensor_identity_before(&self, left: &HilbertSpace) -> SlhTriple {
        let id = Operator::identity(left);
        self.map_operators(|op| id.tensor(op))
    }

    fn map_operators(&self, f: impl Fn(&Operator) -> Operator) -> SlhTriple {
        let hamiltonian = f(&self.hamiltonian);
        SlhTriple {
            space: hamiltonian.space().clone(),
            channels: self.channels,
            scattering: self.scattering.iter().map(&f).collect(),
            coupling: self.coupling.iter().map(&f).collect(),
            hamiltonian,
            warnings: self.warnings.clone(),
        }
    }
}

pub(crate) fn identity_scattering(space: &HilbertSpace, n: usize) -> Vec<Operator> {
    let mut s = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            s.push(if i == j { Operator::identity(space) } else { Operator::zeros(space) });
        }
    }
    s
}

pub(crate) fn k_matrix(coupling: &[Operator], hamiltonian: &Operator) -> CMatrix {
    let mut k = hamiltonian.matrix() * Complex64::new(0.0, -1.0);
    for l in coupling {
        k -= l.matrix().adjoint() * l.matrix() * Complex64::new(0.5, 0.0);
    }
    k
}

/// Coefficients of `dj_t(X)` against `dt`, `dBᵢ*`, `dBᵢ` and `dΛⱼₖ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeisenbergCoefficients {
    pub observable: Operator,
    /// `ℒX`
    pub generator: Operator,
    /// `𝓜ᵢX = Σⱼ S_jiᴴ[X, Lⱼ]`
    pub noise_creation: Vec<Operator>,
    /// `𝓝ᵢX = Σₖ [Lₖᴴ, X] S_ki`
    pub noise_annihilation: Vec<Operator>,
    /// Row-major `𝓢ⱼₖX = Σₐ S_ajᴴ X S_ak − δⱼₖ X`
    pub scattering: Vec<Operator>,
    channels: usize,
}

impl HeisenbergCoefficients {
    pub fn scattering_entry(&self, j: usize, k: usize) -> &Operator {
        &self.scattering[j * self.channels + k]
    }
}

/// Parallel composition: channel lists are stacked, `S = diag(S₁, S₂)`.
pub fn concatenation(g1: &SlhTriple, g2: &SlhTriple) -> Result<SlhTriple> {
    g1.hamiltonian.same_space(&g2.hamiltonian)?;
    let (n1, n2) = (g1.channels, g2.channels);
    let n = n1 + n2;
    let zero = Operator::zeros(&g1.space);
    let mut scattering = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let entry = match (i < n1, j < n1) {
                (true, true) => g1.scattering(i, j).clone(),
                (false, false) => g2.scattering(i - n1, j - n1).clone(),
                _ => zero.clone(),
            };
            scattering.push(entry);
        }
    }
    let coupling = g1.coupling.iter().chain(&g2.coupling).cloned().collect();
    let hamiltonian = &g1.hamiltonian + &g2.hamiltonian;
    SlhTriple::new(scattering, coupling, hamiltonian)
}

/// Cascade `G₂ ◁ G₁`: the outputs of `g1` feed the inputs of `g2`.
///
/// `S = S₂S₁`, `L = L₂ + S₂L₁`, `H = H₁ + H₂ + Im{L₂ᴴ S₂ L₁}`.
pub fn series_product(g1: &SlhTriple, g2: &SlhTriple) -> Result<SlhTriple> {
    g1.hamiltonian.same_space(&g2.hamiltonian)?;
    if g1.channels != g2.channels {
        return Err(Error::DimensionMismatch(format!(
            "series product of {} and {} channel models",
            g1.channels, g2.channels
        )));
    }
    let n = g1.channels;
    let s1: Vec<CMatrix> = g1.scattering.iter().map(|o| o.matrix().clone()).collect();
    let s2: Vec<CMatrix> = g2.scattering.iter().map(|o| o.matrix().clone()).collect();
    let l1: Vec<CMatrix> = g1.coupling.iter().map(|o| o.matrix().clone()).collect();
    let l2: Vec<CMatrix> = g2.coupling.iter().map(|o| o.matrix().clone()).collect();
    let h = g1.hamiltonian.matrix() + g2.hamiltonian.matrix();
    let (s, l, h) = series_matrices(n, (&s1, &l1), (&s2, &l2), h);
    let wrap = |m: CMatrix| Operator::from_parts(g1.space.clone(), m);
    SlhTriple::new(
        s.into_iter().map(wrap).collect(),
        l.into_iter().map(wrap).collect(),
        wrap(h),
    )
}

/// Matrix-level series product. `h_sum` is `H₁ + H₂`; the cross term is added here.
pub(crate) fn series_matrices(
    n: usize,
    (s1, l1): (&[CMatrix], &[CMatrix]),
    (s2, l2): (&[CMatrix], &[CMatrix]),
    h_sum: CMatrix,
) -> (Vec<CMatrix>, Vec<CMatrix>, CMatrix) {
    let dim = h_sum.nrows();
    let zero = CMatrix::zeros(dim, dim);
    let mut s = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = zero.clone();
            for c in 0..n {
                acc += &s2[i * n + c] * &s1[c * n + j];
            }
            s.push(acc);
        }
    }
    let mut s2_l1 = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = zero.clone();
        for j in 0..n {
            acc += &s2[i * n + j] * &l1[j];
        }
        s2_l1.push(acc);
    }
    let l = (0..n).map(|i| &l2[i] + &s2_l1[i]).collect();
    let mut cross = zero;
    for i in 0..n {
        cross += l2[i].adjoint() * &s2_l1[i];
    }
    (s, l, h_sum + im_part(&cross))
}
