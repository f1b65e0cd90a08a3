//! Dense complex matrices, pure states, density operators and projector
//! families.
//!
//! Everything here is an immutable value after construction. Dimensions of
//! interest are 2 and 4, so storage is a plain dense `nalgebra::DMatrix`.
//! Units are natural (ħ = 1): a Hamiltonian is stored as an angular
//! frequency matrix.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default absolute tolerance for matrix comparisons.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Floor below which an eigenvalue counts as a genuine negative eigenvalue.
pub const EIGEN_FLOOR: f64 = -1e-10;
/// Frobenius tolerance for projector-family identities.
pub const PROJECTOR_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square dense complex matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMat(DMatrix<C64>);

impl ComplexMat {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(m))
    }

    /// Builds from row-major rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        let m = DMatrix::from_fn(n, rows.first().map_or(0, Vec::len), |i, j| rows[i][j]);
        Self::new(m)
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub(crate) fn from_raw(m: DMatrix<C64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::from_element(dim, dim, ZERO))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        Self(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(entries[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `self * other - other * self`
    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let svd = self.0.clone().svd(false, false);
        svd.singular_values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (self - other).frobenius_norm()
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(other.0.iter()).all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.adjoint()).frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && (&(self * self) - self).frobenius_norm() <= tol
    }

    /// `(self + self^dag) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()).map(|z| z * 0.5))
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let eig = SymmetricEigen::new(self.hermitian_part().0);
        let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.0 * v
    }

    /// Sandwich `self * rho * self` for a projector-like `self`.
    pub fn sandwich(&self, rho: &Self) -> Self {
        Self(&self.0 * &rho.0 * &self.0)
    }
}

impl Add for &ComplexMat {
    type Output = ComplexMat;
    fn add(self, rhs: &ComplexMat) -> ComplexMat {
        ComplexMat(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMat {
    type Output = ComplexMat;
    fn sub(self, rhs: &ComplexMat) -> ComplexMat {
        ComplexMat(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMat {
    type Output = ComplexMat;
    fn mul(self, rhs: &ComplexMat) -> ComplexMat {
        ComplexMat(&self.0 * &rhs.0)
    }
}

/// Normalized state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState(DVector<C64>);

impl PureState {
    /// Accepts amplitudes whose Euclidean norm is 1 within 1e-12.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        if v.is_empty() {
            return Err(Error::InvalidArgument("empty state vector".into()));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let n2 = v.norm_squared();
        if (n2.sqrt() - 1.0).abs() > DEFAULT_TOL {
            return Err(Error::NotNormalized(n2));
        }
        Ok(Self(v))
    }

    /// Rescales arbitrary nonzero amplitudes onto the unit sphere.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let n = v.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalized(n * n));
        }
        Ok(Self(v.unscale(n)))
    }

    /// Wraps a vector already known to be normalized.
    pub(crate) fn from_normalized(v: DVector<C64>) -> Self {
        debug_assert!((v.norm() - 1.0).abs() < 1e-9);
        Self(v)
    }

    pub fn two_level(a: C64, b: C64) -> Result<Self> {
        Self::new(vec![a, b])
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = DVector::from_element(dim, ZERO);
        v[k] = ONE;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn amplitude(&self, k: usize) -> C64 {
        self.0[k]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `|psi><psi|` as a plain matrix.
    pub fn projector(&self) -> ComplexMat {
        ComplexMat(&self.0 * self.0.adjoint())
    }
}

/// Tolerances used when validating a [`DensityOp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub eigen_floor: f64,
}

impl Default for DensityTolerance {
    fn default() -> Self {
        Self { hermitian: DEFAULT_TOL, trace: DEFAULT_TOL, eigen_floor: EIGEN_FLOOR }
    }
}

impl DensityTolerance {
    /// Uniform tolerance for hermiticity, trace and negative eigenvalues.
    pub fn uniform(tol: f64) -> Self {
        Self { hermitian: tol, trace: tol, eigen_floor: -tol }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp(ComplexMat);

impl DensityOp {
    pub fn new(mat: ComplexMat) -> Result<Self> {
        Self::with_tolerance(mat, DensityTolerance::default())
    }

    pub fn with_tolerance(mat: ComplexMat, tol: DensityTolerance) -> Result<Self> {
        let defect = mat.hermiticity_defect();
        if defect > tol.hermitian {
            return Err(Error::InvalidDensity(format!("not hermitian (defect {defect:e})")));
        }
        let tr = mat.trace();
        if (tr - ONE).norm() > tol.trace {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let min_eig = mat.hermitian_eigenvalues()[0];
        if min_eig < tol.eigen_floor {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(mat))
    }

    /// `I / dim`
    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMat::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// Two-level state `[[r, beta], [conj(beta), 1 - r]]`.
    pub fn from_bloch(r: f64, beta: C64) -> Result<Self> {
        let m = ComplexMat::from_rows(&[
            vec![C64::new(r, 0.0), beta],
            vec![beta.conj(), C64::new(1.0 - r, 0.0)],
        ])?;
        Self::new(m)
    }

    /// Weighted mixture of pure states; weights must sum to 1.
    pub fn mixture(weights: &[f64], states: &[PureState]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::InvalidArgument("weights and states differ in length".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument("mixture weights must be non-negative".into()));
        }
        let dim = states[0].dim();
        let mut acc = ComplexMat::zeros(dim);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
            }
            acc = &acc + &s.projector().scale_real(*w);
        }
        Self::new(acc)
    }

    pub fn mat(&self) -> &ComplexMat {
        &self.0
    }

    pub fn into_mat(self) -> ComplexMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `rho[0][0]` for a two-level state.
    pub fn r(&self) -> f64 {
        self.0.get(0, 0).re
    }

    /// `rho[0][1]` for a two-level state.
    pub fn beta(&self) -> C64 {
        self.0.get(0, 1)
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.hermitian_eigenvalues()[0]
    }

    /// Spectral decomposition `(weights, eigenvectors)` with weights
    /// clipped at 0 and renormalized. Diagonal inputs decompose onto the
    /// standard basis exactly.
    pub fn eigen_ensemble(&self) -> (Vec<f64>, Vec<PureState>) {
        let n = self.dim();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || self.0.get(i, j) == ZERO));
        let (mut w, states): (Vec<f64>, Vec<PureState>) = if diagonal {
            (0..n).map(|k| (self.0.get(k, k).re, PureState::basis(n, k))).unzip()
        } else {
            let eig = SymmetricEigen::new(self.0.hermitian_part().0);
            (0..n)
                .map(|k| {
                    let v = eig.eigenvectors.column(k).into_owned();
                    let nv = v.norm();
                    (eig.eigenvalues[k], PureState(v.unscale(nv)))
                })
                .unzip()
        };
        w.iter_mut().for_each(|x| *x = x.max(0.0));
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        (w, states)
    }
}

/// Complete family of mutually orthogonal projectors with outcome labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorFamily {
    projectors: Vec<ComplexMat>,
    labels: Vec<String>,
}

impl ProjectorFamily {
    pub fn new(projectors: Vec<ComplexMat>, labels: Vec<String>) -> Result<Self> {
        if projectors.is_empty() {
            return Err(Error::InvalidProjectors("empty family".into()));
        }
        if projectors.len() != labels.len() {
            return Err(Error::InvalidProjectors("label count differs from projector count".into()));
        }
        let dim = projectors[0].dim();
        let mut sum = ComplexMat::zeros(dim);
        for (k, q) in projectors.iter().enumerate() {
            if q.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: q.dim() });
            }
            if !q.is_projector(PROJECTOR_TOL) {
                return Err(Error::InvalidProjectors(format!("'{}' is not an orthogonal projector", labels[k])));
            }
            for (j, p) in projectors.iter().enumerate().skip(k + 1) {
                let overlap = (q * p).frobenius_norm();
                if overlap > PROJECTOR_TOL {
                    return Err(Error::InvalidProjectors(format!(
                        "'{}' and '{}' are not orthogonal ({overlap:e})",
                        labels[k], labels[j]
                    )));
                }
            }
            sum = &sum + q;
        }
        let defect = sum.distance(&ComplexMat::identity(dim));
        if defect > PROJECTOR_TOL {
            return Err(Error::InvalidProjectors(format!("projectors do not sum to identity ({defect:e})")));
        }
        Ok(Self { projectors, labels })
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].dim()
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[ComplexMat] {
        &self.projectors
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rank(&self, k: usize) -> usize {
        self.projectors[k].trace().re.round() as usize
    }

    /// `Tr(Q_k rho)` for each k.
    pub fn weights(&self, rho: &ComplexMat) -> Vec<f64> {
        self.projectors.iter().map(|q| (q * rho).trace().re).collect()
    }

    /// `sum_k Q_k rho Q_k`
    pub fn dephase(&self, rho: &ComplexMat) -> ComplexMat {
        self.projectors
            .iter()
            .fold(ComplexMat::zeros(rho.dim()), |acc, q| &acc + &q.sandwich(rho))
    }
}

/// `omega * [[0, A], [conj(A), 0]]` with ħ = 1.
pub fn make_two_level_hamiltonian(omega: f64, coupling: C64) -> Result<ComplexMat> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::InvalidFrequency(omega));
    }
    check_unit(coupling)?;
    Ok(ComplexMat(DMatrix::from_row_slice(
        2,
        2,
        &[ZERO, coupling * omega, coupling.conj() * omega, ZERO],
    )))
}

pub(crate) fn check_unit(coupling: C64) -> Result<()> {
    let m = coupling.norm();
    if (m - 1.0).abs() > DEFAULT_TOL {
        return Err(Error::NonUnitCoupling(m));
    }
    Ok(())
}

/// `P+ = diag(1, 0)`, `P- = diag(0, 1)`.
pub fn two_level_projectors() -> ProjectorFamily {
    ProjectorFamily {
        projectors: vec![ComplexMat::diagonal(&[1.0, 0.0]), ComplexMat::diagonal(&[0.0, 1.0])],
        labels: vec!["plus".into(), "minus".into()],
    }
}

/// Matrix elements of a subsystem projector `P1` between the two branch
/// states `phi` and `chi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOverlaps {
    pub phi_phi: C64,
    pub chi_chi: C64,
    pub phi_chi: C64,
}

/// Branch-weighted part of `<Psi|P1|Psi>`, i.e. the value predicted by the
/// statistical mixture of the two branches.
pub fn mixture_expectation(alpha: C64, beta: C64, o: &BranchOverlaps) -> f64 {
    alpha.norm_sqr() * o.phi_phi.re + beta.norm_sqr() * o.chi_chi.re
}

/// Interference contribution `2 Re{alpha* beta <phi|P1|chi> <A|B>}`.
pub fn interference_term(alpha: C64, beta: C64, o: &BranchOverlaps, env_overlap: C64) -> f64 {
    2.0 * (alpha.conj() * beta * o.phi_chi * env_overlap).re
}

/// `<Psi|P1|Psi>` for `Psi = alpha |phi>|A> + beta |chi>|B>`.
pub fn projector_expectation(alpha: C64, beta: C64, overlaps: &BranchOverlaps, env_overlap: C64) -> Result<f64> {
    let n2 = alpha.norm_sqr() + beta.norm_sqr();
    if (n2 - 1.0).abs() > DEFAULT_TOL {
        return Err(Error::NotNormalized(n2));
    }
    if env_overlap.norm() > 1.0 + DEFAULT_TOL {
        return Err(Error::OverlapTooLarge(env_overlap.norm()));
    }
    Ok(mixture_expectation(alpha, beta, overlaps) + interference_term(alpha, beta, overlaps, env_overlap))
}

pub fn density_from_pure(psi: &PureState) -> DensityOp {
    DensityOp(psi.projector())
}
