//! Dense operators on labelled tensor-product Hilbert spaces.
//!
//! Every system operator (scattering entries, couplings, Hamiltonians, density
//! matrices) is carried as an [`Operator`]: a square complex matrix tagged with
//! the list of tensor-factor dimensions it acts on. Subspaces are explicit
//! isometries rather than index sets, so kernels that are not aligned with the
//! canonical basis are handled the same way as aligned ones.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Default relative threshold for numerical kernels.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-10;

/// Default Fock truncation for bosonic modes.
pub const DEFAULT_FOCK_TRUNCATION: usize = 8;

const ISOMETRY_TOL: f64 = 1e-12;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    factor_dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(factor_dims: Vec<usize>) -> Result<Self> {
        if factor_dims.is_empty() {
            return Err(Error::InvalidSpace("no tensor factors".into()));
        }
        if factor_dims.contains(&0) {
            return Err(Error::InvalidSpace(format!(
                "zero-dimensional factor in {factor_dims:?}"
            )));
        }
        Ok(Self { factor_dims })
    }

    /// A single-factor space of dimension `dim`.
    pub fn flat(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn total_dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn tensor(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut factor_dims = self.factor_dims.clone();
        factor_dims.extend_from_slice(&other.factor_dims);
        HilbertSpace { factor_dims }
    }

    /// Flat index of the product basis vector with the given per-factor indices.
    pub fn basis_index(&self, indices: &[usize]) -> Result<usize> {
        if indices.len() != self.factor_dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices for {} factors",
                indices.len(),
                self.factor_dims.len()
            )));
        }
        let mut flat = 0;
        for (&i, &d) in indices.iter().zip(&self.factor_dims) {
            if i >= d {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for factor of dimension {d}"
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.factor_dims.iter().map(|d| format!("C^{d}")).collect();
        write!(f, "{}", parts.join(" ⊗ "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let n = space.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix on a space of dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { space, matrix })
    }

    /// Wrap a matrix on a single flat factor.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let space = HilbertSpace::flat(matrix.nrows())?;
        Self::new(space, matrix)
    }

    pub(crate) fn from_parts(space: HilbertSpace, matrix: CMatrix) -> Self {
        debug_assert_eq!(matrix.nrows(), space.total_dim());
        Self { space, matrix }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self::from_parts(space.clone(), CMatrix::zeros(n, n))
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let n = space.total_dim();
        Self::from_parts(space.clone(), CMatrix::identity(n, n))
    }

    /// `|i⟩⟨j|` on a single factor of dimension `dim`.
    pub fn ketbra(dim: usize, i: usize, j: usize) -> Result<Self> {
        if i >= dim || j >= dim {
            return Err(Error::InvalidArgument(format!(
                "ketbra({i},{j}) out of range for dimension {dim}"
            )));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(i, j)] = ONE;
        Self::from_matrix(m)
    }

    /// Place `local` on factor `factor` of `space`, identity elsewhere.
    pub fn embed(local: &Operator, factor: usize, space: &HilbertSpace) -> Result<Self> {
        let dims = space.factor_dims();
        if factor >= dims.len() {
            return Err(Error::InvalidArgument(format!(
                "factor {factor} out of range for {space}"
            )));
        }
        if local.dim() != dims[factor] {
            return Err(Error::DimensionMismatch(format!(
                "local operator of dimension {} on factor of dimension {}",
                local.dim(),
                dims[factor]
            )));
        }
        let left: usize = dims[..factor].iter().product();
        let right: usize = dims[factor + 1..].iter().product();
        let m = CMatrix::identity(left, left)
            .kronecker(&local.matrix)
            .kronecker(&CMatrix::identity(right, right));
        Ok(Self::from_parts(space.clone(), m))
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

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Operator {
        Self::from_parts(self.space.clone(), self.matrix.adjoint())
    }

    pub fn tensor(&self, other: &Operator) -> Operator {
        Self::from_parts(
            self.space.tensor(&other.space),
            self.matrix.kronecker(&other.matrix),
        )
    }

    pub fn scale(&self, c: Complex64) -> Operator {
        Self::from_parts(self.space.clone(), &self.matrix * c)
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// Largest entry magnitude of `X - Xᴴ`.
    pub fn hermiticity_residual(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn same_space(&self, other: &Operator) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch(format!(
                "operators on {} and {}",
                self.space, other.space
            )));
        }
        Ok(())
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `(X − Xᴴ)/(2i)`, the Hermitian "imaginary part".
pub(crate) fn im_part(m: &CMatrix) -> CMatrix {
    (m - m.adjoint()) * Complex64::new(0.0, -0.5)
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Operator> for &Operator {
            type Output = Operator;
            fn $method(self, rhs: &Operator) -> Operator {
                assert_eq!(self.space, rhs.space, "operator space mismatch");
                Operator::from_parts(self.space.clone(), &self.matrix $op &rhs.matrix)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        self.matrix += &rhs.matrix;
    }
}

impl Mul<Complex64> for &Operator {
    type Output = Operator;
    fn mul(self, c: Complex64) -> Operator {
        self.scale(c)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, c: f64) -> Operator {
        self.scale(Complex64::new(c, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale(-ONE)
    }
}

/// Truncated bosonic annihilator on `n_max` number states.
pub fn fock_annihilator(n_max: usize) -> Result<Operator> {
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!(
            "Fock truncation must be at least 2, got {n_max}"
        )));
    }
    let mut a = CMatrix::zeros(n_max, n_max);
    for n in 1..n_max {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    Operator::from_matrix(a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl FromStr for PauliAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(PauliAxis::X),
            "y" | "Y" => Ok(PauliAxis::Y),
            "z" | "Z" => Ok(PauliAxis::Z),
            other => Err(Error::InvalidArgument(format!("unknown Pauli axis '{other}'"))),
        }
    }
}

pub fn pauli(axis: PauliAxis) -> Operator {
    let entries = match axis {
        PauliAxis::X => [ZERO, ONE, ONE, ZERO],
        PauliAxis::Y => [ZERO, -I, I, ZERO],
        PauliAxis::Z => [ONE, ZERO, ZERO, -ONE],
    };
    Operator::from_parts(
        HilbertSpace { factor_dims: vec![2] },
        CMatrix::from_row_slice(2, 2, &entries),
    )
}

pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    a.tensor(b)
}

pub fn adjoint(a: &Operator) -> Operator {
    a.adjoint()
}

/// A `total_dim × d` matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceIsometry {
    space: HilbertSpace,
    columns: CMatrix,
}

impl SubspaceIsometry {
    pub fn new(space: HilbertSpace, columns: CMatrix) -> Result<Self> {
        if columns.nrows() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "isometry with {} rows on a space of dimension {}",
                columns.nrows(),
                space.total_dim()
            )));
        }
        let d = columns.ncols();
        let gram = columns.adjoint() * &columns;
        let deviation = max_abs(&(gram - CMatrix::identity(d, d)));
        if deviation >= ISOMETRY_TOL {
            return Err(Error::NotIsometry { deviation });
        }
        Ok(Self { space, columns })
    }

    /// Span of canonical basis vectors with the given flat indices.
    pub fn from_basis_indices(space: &HilbertSpace, indices: &[usize]) -> Result<Self> {
        let n = space.total_dim();
        let mut columns = CMatrix::zeros(n, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "basis index {i} out of range for dimension {n}"
                )));
            }
            if indices[..c].contains(&i) {
                return Err(Error::InvalidArgument(format!("repeated basis index {i}")));
            }
            columns[(i, c)] = ONE;
        }
        Ok(Self { space: space.clone(), columns })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    pub fn projector(&self) -> CMatrix {
        &self.columns * self.columns.adjoint()
    }

    /// `Vᴴ X V`.
    pub fn compress(&self, x: &CMatrix) -> CMatrix {
        self.columns.adjoint() * x * &self.columns
    }

    /// `V X Vᴴ`.
    pub fn lift(&self, x: &CMatrix) -> CMatrix {
        &self.columns * x * self.columns.adjoint()
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn complement(&self) -> SubspaceIsometry {
        let n = self.space.total_dim();
        let d = self.dim();
        if d == 0 {
            return Self { space: self.space.clone(), columns: CMatrix::identity(n, n) };
        }
        // Singular values of the padded Vᴴ are exactly 1 (range) or 0 (complement).
        let mut padded = CMatrix::zeros(n, n);
        padded.rows_mut(0, d).copy_from(&self.columns.adjoint());
        let svd = padded.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let picked: Vec<usize> = (0..n).filter(|&j| svd.singular_values[j] < 0.5).collect();
        let mut columns = CMatrix::zeros(n, picked.len());
        for (c, &j) in picked.iter().enumerate() {
            columns.set_column(c, &v_t.row(j).adjoint());
        }
        Self { space: self.space.clone(), columns }
    }

    pub fn tensor(&self, other: &SubspaceIsometry) -> SubspaceIsometry {
        Self {
            space: self.space.tensor(&other.space),
            columns: self.columns.kronecker(&other.columns),
        }
    }
}

/// Orthonormal basis of the numerical kernel of `a`: right singular vectors with
/// singular value below `tol · σ_max`.
pub fn kernel_basis(a: &Operator, tol: f64) -> SubspaceIsometry {
    let n = a.dim();
    let svd = a.matrix.clone().svd(false, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return SubspaceIsometry {
            space: a.space.clone(),
            columns: CMatrix::identity(n, n),
        };
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let picked: Vec<usize> = (0..n)
        .filter(|&j| svd.singular_values[j] < tol * sigma_max)
        .collect();
    let mut columns = CMatrix::zeros(n, picked.len());
    for (c, &j) in picked.iter().enumerate() {
        columns.set_column(c, &v_t.row(j).adjoint());
    }
    SubspaceIsometry { space: a.space.clone(), columns }
}

/// Principal angles between two equal-dimensional subspaces, ascending.
///
/// Computed from the sines (singular values of `(I − P₁)V₂`) so that small
/// angles keep full relative precision.
pub fn principal_angles(a: &SubspaceIsometry, b: &SubspaceIsometry) -> Result<Vec<f64>> {
    if a.space != b.space || a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "subspaces of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    let residual = &b.columns - &a.columns * (a.columns.adjoint() * &b.columns);
    let mut angles: Vec<f64> = residual
        .singular_values()
        .iter()
        .map(|s| s.min(1.0).asin())
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Orthogonal decomposition of a space into Zeno and fast subspaces.
#[derive(Clone, Debug, PartialEq)]
pub struct ZenoSplit {
    zeno: SubspaceIsometry,
    fast: SubspaceIsometry,
}

impl ZenoSplit {
    pub fn new(zeno: SubspaceIsometry, fast: SubspaceIsometry) -> Result<Self> {
        if zeno.space != fast.space {
            return Err(Error::InvalidSplit("isometries on different spaces".into()));
        }
        let n = zeno.space.total_dim();
        if zeno.dim() + fast.dim() != n {
            return Err(Error::InvalidSplit(format!(
                "dimensions {} + {} do not sum to {n}",
                zeno.dim(),
                fast.dim()
            )));
        }
        let overlap = max_abs(&(zeno.columns.adjoint() * &fast.columns));
        if overlap >= 1e-10 {
            return Err(Error::InvalidSplit(format!(
                "ranges are not orthogonal (overlap {overlap:.3e})"
            )));
        }
        Ok(Self { zeno, fast })
    }

    /// Split with the given Zeno subspace and its orthogonal complement.
    pub fn from_zeno(zeno: SubspaceIsometry) -> Self {
        let fast = zeno.complement();
        Self { zeno, fast }
    }

    pub fn zeno(&self) -> &SubspaceIsometry {
        &self.zeno
    }

    pub fn fast(&self) -> &SubspaceIsometry {
        &self.fast
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.zeno.space
    }

    /// Split on the tensor product space with Zeno subspace `Z₁ ⊗ Z₂`.
    pub fn tensor(&self, other: &ZenoSplit) -> ZenoSplit {
        Self::from_zeno(self.zeno.tensor(&other.zeno))
    }
}

/// The four blocks `X_ab = V_aᴴ X V_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Blocks {
    pub zz: CMatrix,
    pub zf: CMatrix,
    pub fz: CMatrix,
    pub ff: CMatrix,
}

impl Blocks {
    pub(crate) fn of(x: &CMatrix, split: &ZenoSplit) -> Blocks {
        let vz = split.zeno.columns();
        let vf = split.fast.columns();
        Blocks {
            zz: vz.adjoint() * x * vz,
            zf: vz.adjoint() * x * vf,
            fz: vf.adjoint() * x * vz,
            ff: vf.adjoint() * x * vf,
        }
    }

    pub fn reassemble(&self, split: &ZenoSplit) -> CMatrix {
        let vz = split.zeno.columns();
        let vf = split.fast.columns();
        vz * &self.zz * vz.adjoint()
            + vz * &self.zf * vf.adjoint()
            + vf * &self.fz * vz.adjoint()
            + vf * &self.ff * vf.adjoint()
    }
}

pub fn block_split(x: &Operator, split: &ZenoSplit) -> Result<Blocks> {
    if x.space != *split.space() {
        return Err(Error::DimensionMismatch(format!(
            "operator on {} split on {}",
            x.space,
            split.space()
        )));
    }
    Ok(Blocks::of(&x.matrix, split))
}
