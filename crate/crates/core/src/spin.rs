//! Tensor-product Hilbert spaces, operators, states and propagators.
//!
//! Dense complex matrices back everything here; the largest register in the
//! crate is 18-dimensional so there is no need for sparse storage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-10;

/// An ordered tensor product of finite-dimensional factors.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(crate::error::invalid("dims", "at least one factor required"));
        }
        if let Some(&d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::DimensionMismatch { expected: 1, got: d });
        }
        Ok(Self { dims })
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn factors(&self) -> &[usize] {
        &self.dims
    }

    pub fn factor_dim(&self, slot: usize) -> Result<usize> {
        self.dims.get(slot).copied().ok_or(Error::SlotOutOfRange {
            slot,
            factors: self.dims.len(),
        })
    }

    /// Product of the dimensions before and after `slot`.
    fn split(&self, slot: usize) -> Result<(usize, usize, usize)> {
        let d = self.factor_dim(slot)?;
        let before = self.dims[..slot].iter().product();
        let after = self.dims[slot + 1..].iter().product();
        Ok((before, d, after))
    }

    /// Concatenation of two spaces, `self` first.
    pub fn tensor(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpace { dims }
    }
}

/// A linear operator on a [`HilbertSpace`].
#[derive(Clone, Debug)]
pub struct Operator {
    space: HilbertSpace,
    mat: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, mat: CMatrix) -> Result<Self> {
        let d = space.dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mat.nrows().max(mat.ncols()),
            });
        }
        Ok(Self { space, mat })
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            mat: CMatrix::identity(d, d),
        }
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            mat: CMatrix::zeros(d, d),
        }
    }

    /// Lift a single-factor operator into the full space as `I ⊗ local ⊗ I`.
    pub fn embed(local: &CMatrix, slot: usize, space: &HilbertSpace) -> Result<Self> {
        let (before, d, after) = space.split(slot)?;
        if local.nrows() != d || local.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: local.nrows(),
            });
        }
        let mat = kron(&kron(&CMatrix::identity(before, before), local), &CMatrix::identity(after, after));
        Ok(Self {
            space: space.clone(),
            mat,
        })
    }

    /// Tensor product of one local operator per factor.
    pub fn product(locals: &[&CMatrix], space: &HilbertSpace) -> Result<Self> {
        if locals.len() != space.factors().len() {
            return Err(Error::DimensionMismatch {
                expected: space.factors().len(),
                got: locals.len(),
            });
        }
        let mut mat = CMatrix::identity(1, 1);
        for (m, &d) in locals.iter().zip(space.factors()) {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.nrows(),
                });
            }
            mat = kron(&mat, m);
        }
        Ok(Self {
            space: space.clone(),
            mat,
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self {
            space: self.space.clone(),
            mat: self.mat.adjoint(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            space: self.space.clone(),
            mat: &self.mat * c,
        }
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn try_mul(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Self {
            space: self.space.clone(),
            mat: &self.mat * &rhs.mat,
        })
    }

    pub fn try_add(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Self {
            space: self.space.clone(),
            mat: &self.mat + &rhs.mat,
        })
    }

    pub fn commutator(&self, rhs: &Operator) -> Result<Self> {
        self.check_same(rhs)?;
        Ok(Self {
            space: self.space.clone(),
            mat: &self.mat * &rhs.mat - &rhs.mat * &self.mat,
        })
    }

    pub fn kron(&self, rhs: &Operator) -> Self {
        Self {
            space: self.space.tensor(&rhs.space),
            mat: kron(&self.mat, &rhs.mat),
        }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.mat)
    }

    /// `max |H - H†|` over entries.
    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol * self.max_abs().max(1.0)
    }

    /// `max |U†U - I|` over entries.
    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.dim();
        max_abs(&(self.mat.adjoint() * &self.mat - CMatrix::identity(d, d)))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// Largest entrywise difference to another operator.
    pub fn max_abs_diff(&self, rhs: &Operator) -> f64 {
        max_abs(&(&self.mat - &rhs.mat))
    }

    /// Real eigenvalues of a Hermitian operator, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.0)
    }

    /// Eigen-decomposition of a Hermitian operator; eigenvalues ascending and
    /// eigenvectors as the matching columns.
    pub fn eigh(&self) -> Result<(Vec<f64>, CMatrix)> {
        self.require_hermitian()?;
        let eig = nalgebra::SymmetricEigen::new(self.mat.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = CMatrix::zeros(self.dim(), self.dim());
        for (c, &i) in order.iter().enumerate() {
            vectors.set_column(c, &eig.eigenvectors.column(i));
        }
        Ok((values, vectors))
    }

    fn require_hermitian(&self) -> Result<()> {
        if self.is_hermitian(HERMITIAN_TOL) {
            Ok(())
        } else {
            Err(Error::NotHermitian {
                deviation: self.hermiticity_deviation(),
            })
        }
    }

    fn check_same(&self, rhs: &Operator) -> Result<()> {
        if self.space != rhs.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: rhs.dim(),
            });
        }
        Ok(())
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator spaces differ")
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator spaces differ")
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.try_add(&rhs.scale_re(-1.0)).expect("operator spaces differ")
    }
}

/// A normalized pure state.
#[derive(Clone, Debug)]
pub struct StateVector {
    space: HilbertSpace,
    amps: CVector,
}

impl StateVector {
    /// Accepts amplitudes that are already normalized to within 1e-10.
    pub fn new(space: HilbertSpace, amps: CVector) -> Result<Self> {
        if amps.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: amps.len(),
            });
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { space, amps })
    }

    /// Normalizes the given amplitudes; fails only on a zero vector.
    pub fn normalized(space: HilbertSpace, amps: CVector) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Self::new(space, amps.unscale(norm))
    }

    pub fn basis(space: &HilbertSpace, index: usize) -> Result<Self> {
        let d = space.dim();
        if index >= d {
            return Err(Error::DimensionMismatch { expected: d, got: index });
        }
        let mut amps = CVector::zeros(d);
        amps[index] = ONE;
        Ok(Self {
            space: space.clone(),
            amps,
        })
    }

    /// Tensor product of factor states, in order.
    pub fn product(parts: &[StateVector]) -> Result<Self> {
        let (first, rest) = parts
            .split_first()
            .ok_or_else(|| crate::error::invalid("parts", "empty product"))?;
        let mut out = first.clone();
        for p in rest {
            out = Self {
                space: out.space.tensor(&p.space),
                amps: kron_vec(&out.amps, &p.amps),
            };
        }
        Ok(out)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    /// Apply an operator. The norm is preserved only when `u` is unitary; a
    /// restricted or lossy map leaves the shortfall visible through [`Self::norm`].
    pub fn evolve(&self, u: &Operator) -> Result<Self> {
        if u.space() != &self.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.dim(),
            });
        }
        Ok(Self {
            space: self.space.clone(),
            amps: u.matrix() * &self.amps,
        })
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.space() != &self.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: op.dim(),
            });
        }
        Ok(self.amps.dotc(&(op.matrix() * &self.amps)))
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }
}

/// `exp(-i H t)` through a Hermitian eigen-decomposition.
pub fn propagator(h: &Operator, t: f64) -> Result<Operator> {
    let (vals, vecs) = h.eigh()?;
    Ok(Operator {
        space: h.space.clone(),
        mat: exp_from_eig(&vals, &vecs, t),
    })
}

pub(crate) fn exp_from_eig(vals: &[f64], vecs: &CMatrix, t: f64) -> CMatrix {
    let mut scaled = vecs.clone();
    for (c, &e) in vals.iter().enumerate() {
        let phase = C64::from_polar(1.0, -e * t);
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= phase;
        }
    }
    scaled * vecs.adjoint()
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Outcome probabilities for a projective measurement of one factor.
pub fn measure_subsystem(psi: &StateVector, slot: usize, basis: &[CVector]) -> Result<Vec<f64>> {
    let (before, d, after) = psi.space.split(slot)?;
    check_basis(basis, d)?;
    Ok(basis
        .iter()
        .map(|b| project_onto(psi, b, before, d, after).norm_squared())
        .collect())
}

/// Projective measurement with a fixed outcome; returns the probability and
/// the normalized post-measurement state.
pub fn collapse(psi: &StateVector, slot: usize, basis: &[CVector], outcome: usize) -> Result<(f64, StateVector)> {
    let (before, d, after) = psi.space.split(slot)?;
    check_basis(basis, d)?;
    let b = basis.get(outcome).ok_or(Error::DimensionMismatch {
        expected: d,
        got: outcome,
    })?;
    let reduced = project_onto(psi, b, before, d, after);
    let p = reduced.norm_squared();
    if p == 0.0 {
        return Err(Error::NotNormalized { norm: 0.0 });
    }
    let mut amps = CVector::zeros(psi.dim());
    for i in 0..before {
        for k in 0..d {
            for j in 0..after {
                amps[(i * d + k) * after + j] = b[k] * reduced[i * after + j];
            }
        }
    }
    Ok((p, StateVector::normalized(psi.space.clone(), amps)?))
}

fn project_onto(psi: &StateVector, b: &CVector, before: usize, d: usize, after: usize) -> CVector {
    let mut out = CVector::zeros(before * after);
    for i in 0..before {
        for k in 0..d {
            let w = b[k].conj();
            for j in 0..after {
                out[i * after + j] += w * psi.amps[(i * d + k) * after + j];
            }
        }
    }
    out
}

fn check_basis(basis: &[CVector], d: usize) -> Result<()> {
    if basis.len() != d || basis.iter().any(|b| b.len() != d) {
        return Err(Error::InvalidBasis);
    }
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            if (a.dotc(b) - C64::new(expected, 0.0)).norm() > NORM_TOL {
                return Err(Error::InvalidBasis);
            }
        }
    }
    Ok(())
}

/// `min_θ ‖U − e^{iθ} V‖₂` with θ fixed to `arg tr(V†U)`, the Frobenius-optimal
/// phase. The spectral norm is used for the distance itself.
pub fn phase_aligned_distance(u: &Operator, v: &Operator) -> Result<f64> {
    phase_aligned_distance_mat(u.matrix(), v.matrix())
}

pub fn phase_aligned_distance_mat(u: &CMatrix, v: &CMatrix) -> Result<f64> {
    if u.shape() != v.shape() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            got: v.nrows(),
        });
    }
    let overlap = (v.adjoint() * u).trace();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    Ok(spectral_norm(&(u - v * phase)))
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Standard single-spin matrices.
pub mod ops {
    use super::{c, CMatrix, ONE, ZERO};

    pub fn identity(d: usize) -> CMatrix {
        CMatrix::identity(d, d)
    }

    pub fn sigma_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn sigma_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO])
    }

    pub fn sigma_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, c(-1.0, 0.0)])
    }

    /// `|0⟩⟨1|` in the qubit basis.
    pub fn sigma_plus() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
    }

    pub fn projector(d: usize, i: usize) -> CMatrix {
        let mut m = CMatrix::zeros(d, d);
        m[(i, i)] = ONE;
        m
    }

    pub fn diag(values: &[f64]) -> CMatrix {
        let d = values.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = c(*v, 0.0);
        }
        m
    }

    /// Spin-1 `S_z` in the basis m = +1, 0, -1.
    pub fn spin1_z() -> CMatrix {
        diag(&[1.0, 0.0, -1.0])
    }

    /// Spin-1 `S_+` in the basis m = +1, 0, -1.
    pub fn spin1_plus() -> CMatrix {
        let s = std::f64::consts::SQRT_2;
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 1)] = c(s, 0.0);
        m[(1, 2)] = c(s, 0.0);
        m
    }

    /// Spin-1/2 `I_z` in the basis m = +1/2, -1/2.
    pub fn spin_half_z() -> CMatrix {
        diag(&[0.5, -0.5])
    }

    /// `cos φ X + sin φ Y` for a qubit.
    pub fn in_plane(phi: f64) -> CMatrix {
        sigma_x() * c(phi.cos(), 0.0) + sigma_y() * c(phi.sin(), 0.0)
    }
}
