//! The reduction semigroup `d rho/dt = -i[H, rho] + lam sum_k Q_k rho Q_k - lam rho`.
//!
//! Numerical integration of the generator is the ground truth. The
//! closed-form two-level solution in [`analytic_two_level`] has its
//! integration constants re-derived from `(r0, beta0)` and is checked
//! against the integrator in the test suite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions, OdeStats};
use crate::op::{
    check_unit, make_two_level_hamiltonian, two_level_projectors, ComplexMat, DensityOp, DensityTolerance,
    ProjectorFamily, C64, DEFAULT_TOL,
};

/// Relative tolerance of the master-equation integrator.
pub const ODE_RTOL: f64 = 1e-10;
/// Absolute tolerance of the master-equation integrator.
pub const ODE_ATOL: f64 = 1e-12;
/// Outputs violating the density-operator invariants by more than this abort.
pub const INVARIANT_ABORT_TOL: f64 = 1e-8;

const I: C64 = C64::new(0.0, 1.0);

/// Parameters `(omega, lam, A)` of the two-level model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelParams {
    omega: f64,
    lam: f64,
    coupling: C64,
}

impl TwoLevelParams {
    pub fn new(omega: f64, lam: f64, coupling: C64) -> Result<Self> {
        if !(lam.is_finite() && lam > 0.0) {
            return Err(Error::InvalidRate(lam));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::InvalidFrequency(omega));
        }
        check_unit(coupling)?;
        Ok(Self { omega, lam, coupling })
    }

    /// `omega = eps * lam`.
    pub fn from_eps(eps: f64, lam: f64, coupling: C64) -> Result<Self> {
        Self::new(eps * lam, lam, coupling)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn lam(&self) -> f64 {
        self.lam
    }

    pub fn coupling(&self) -> C64 {
        self.coupling
    }

    /// `omega / lam`
    pub fn eps(&self) -> f64 {
        self.omega / self.lam
    }

    /// `sqrt(1 - 16 eps^2)`, purely imaginary once `eps > 1/4`.
    pub fn delta(&self) -> C64 {
        let eps = self.eps();
        C64::new(1.0 - 16.0 * eps * eps, 0.0).sqrt()
    }

    /// Decay rate of the slow mode, `lam (1 - Re Δ) / 2`.
    pub fn slow_rate(&self) -> f64 {
        let d = self.delta().re;
        if d > 0.0 {
            // 1 - Δ = 16 eps^2 / (1 + Δ) without cancellation
            let eps = self.eps();
            8.0 * self.lam * eps * eps / (1.0 + d)
        } else {
            0.5 * self.lam
        }
    }

    /// Decay rate of the fast mode, `lam (1 + Re Δ) / 2`.
    pub fn fast_rate(&self) -> f64 {
        0.5 * self.lam * (1.0 + self.delta().re)
    }

    pub fn hamiltonian(&self) -> ComplexMat {
        make_two_level_hamiltonian(self.omega, self.coupling).expect("validated on construction")
    }

    pub fn reduction(&self) -> GeneralReduction {
        GeneralReduction { hamiltonian: self.hamiltonian(), family: two_level_projectors(), lam: self.lam }
    }
}

/// Time series of `(r, Re beta, Im beta)` for a two-level evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlochRecord {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub re_beta: Vec<f64>,
    pub im_beta: Vec<f64>,
}

impl BlochRecord {
    pub fn from_states(times: &[f64], states: &[DensityOp]) -> Self {
        Self {
            times: times.to_vec(),
            r: states.iter().map(DensityOp::r).collect(),
            re_beta: states.iter().map(|s| s.beta().re).collect(),
            im_beta: states.iter().map(|s| s.beta().im).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `r in [0, 1]` and `|beta| <= sqrt(r (1 - r)) + 1e-9` everywhere.
    pub fn is_physical(&self) -> bool {
        (0..self.len()).all(|k| {
            let r = self.r[k];
            let b = self.re_beta[k].hypot(self.im_beta[k]);
            (-1e-9..=1.0 + 1e-9).contains(&r) && b <= (r * (1.0 - r)).max(0.0).sqrt() + 1e-9
        })
    }
}

/// Hamiltonian, reduction projectors and reduction rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralReduction {
    hamiltonian: ComplexMat,
    family: ProjectorFamily,
    lam: f64,
}

impl GeneralReduction {
    pub fn new(hamiltonian: ComplexMat, family: ProjectorFamily, lam: f64) -> Result<Self> {
        if !(lam.is_finite() && lam >= 0.0) {
            return Err(Error::InvalidArgument(format!("lam must be >= 0, got {lam}")));
        }
        if hamiltonian.dim() != family.dim() {
            return Err(Error::DimensionMismatch { expected: family.dim(), got: hamiltonian.dim() });
        }
        let defect = hamiltonian.hermiticity_defect();
        if defect > DEFAULT_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self { hamiltonian, family, lam })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &ComplexMat {
        &self.hamiltonian
    }

    pub fn family(&self) -> &ProjectorFamily {
        &self.family
    }

    pub fn lam(&self) -> f64 {
        self.lam
    }

    /// Applies the generator to an arbitrary matrix.
    pub fn apply_generator(&self, rho: &ComplexMat) -> ComplexMat {
        let unitary = self.hamiltonian.commutator(rho).scale(-I);
        if self.lam == 0.0 {
            return unitary;
        }
        let jump = &self.family.dephase(rho) - rho;
        &unitary + &jump.scale_real(self.lam)
    }

    /// Matrix of the generator acting on column-stacked `vec(rho)`.
    pub fn superoperator(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n * n, n * n);
        for col in 0..n * n {
            let mut e = DMatrix::zeros(n, n);
            e[(col % n, col / n)] = C64::new(1.0, 0.0);
            let img = self.apply_generator(&ComplexMat::from_raw(e));
            out.column_mut(col).copy_from_slice(img.as_matrix().as_slice());
        }
        out
    }

    /// Step cap `0.05 min(1/lam, 1/|H|)`.
    pub fn max_step(&self) -> f64 {
        let h = self.hamiltonian.spectral_norm();
        let mut cap = f64::INFINITY;
        if self.lam > 0.0 {
            cap = cap.min(1.0 / self.lam);
        }
        if h > 0.0 {
            cap = cap.min(1.0 / h);
        }
        0.05 * cap
    }

    fn ode_options(&self) -> OdeOptions {
        OdeOptions { rtol: ODE_RTOL, atol: ODE_ATOL, h_max: self.max_step(), ..Default::default() }
    }
}

/// `-i[H, rho] + lam sum_k Q_k rho Q_k - lam rho`
pub fn lindblad_rhs(rho: &DensityOp, spec: &GeneralReduction) -> Result<ComplexMat> {
    if rho.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: rho.dim() });
    }
    Ok(spec.apply_generator(rho.mat()))
}

/// Result of [`evolve_master`].
#[derive(Debug, Clone, PartialEq)]
pub struct MasterEvolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityOp>,
    /// Largest `|Tr rho(t) - 1|` on the grid. Never corrected.
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub stats: OdeStats,
}

impl MasterEvolution {
    pub fn bloch(&self) -> BlochRecord {
        BlochRecord::from_states(&self.times, &self.states)
    }

    pub fn last(&self) -> &DensityOp {
        self.states.last().expect("grid is never empty")
    }
}

fn flatten_into(mats: &[&ComplexMat], y: &mut [f64]) {
    let mut k = 0;
    for m in mats {
        for z in m.as_matrix().iter() {
            y[k] = z.re;
            y[k + 1] = z.im;
            k += 2;
        }
    }
}

fn unflatten(y: &[f64], n: usize) -> Vec<ComplexMat> {
    y.chunks(2 * n * n)
        .map(|c| ComplexMat::from_raw(DMatrix::from_iterator(n, n, c.chunks(2).map(|p| C64::new(p[0], p[1])))))
        .collect()
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first() != Some(&0.0) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTimeGrid);
    }
    Ok(())
}

/// Integrates several matrices jointly (one shared step sequence) and
/// returns, for each grid time, the propagated matrices. No density
/// operator validation is applied.
pub fn evolve_matrices(mats: &[ComplexMat], spec: &GeneralReduction, t_grid: &[f64]) -> Result<(Vec<Vec<ComplexMat>>, OdeStats)> {
    check_grid(t_grid)?;
    let n = spec.dim();
    if let Some(m) = mats.iter().find(|m| m.dim() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: m.dim() });
    }
    let mut y0 = vec![0.0; 2 * n * n * mats.len()];
    flatten_into(&mats.iter().collect::<Vec<_>>(), &mut y0);
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let rhos = unflatten(y, n);
        let out: Vec<ComplexMat> = rhos.iter().map(|r| spec.apply_generator(r)).collect();
        flatten_into(&out.iter().collect::<Vec<_>>(), dy);
    };
    let (ys, stats) = ode::integrate(rhs, &y0, t_grid, &spec.ode_options())?;
    Ok((ys.iter().map(|y| unflatten(y, n)).collect(), stats))
}

fn validate_series(times: &[f64], mats: Vec<ComplexMat>, stats: OdeStats) -> Result<MasterEvolution> {
    let mut drift: f64 = 0.0;
    let mut herm: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    let mut states = Vec::with_capacity(mats.len());
    for (t, m) in times.iter().zip(mats) {
        drift = drift.max((m.trace() - C64::new(1.0, 0.0)).norm());
        herm = herm.max(m.hermiticity_defect());
        min_eig = min_eig.min(m.hermitian_eigenvalues()[0]);
        let rho = DensityOp::with_tolerance(m, DensityTolerance::uniform(INVARIANT_ABORT_TOL))
            .map_err(|e| Error::InvariantViolation { t: *t, reason: e.to_string() })?;
        states.push(rho);
    }
    Ok(MasterEvolution {
        times: times.to_vec(),
        states,
        max_trace_drift: drift,
        max_hermiticity_defect: herm,
        min_eigenvalue: min_eig,
        stats,
    })
}

/// `rho(t_i)` for every time of `t_grid` (which starts at 0).
pub fn evolve_master(rho0: &DensityOp, spec: &GeneralReduction, t_grid: &[f64]) -> Result<MasterEvolution> {
    let mut all = evolve_master_batch(std::slice::from_ref(rho0), spec, t_grid)?;
    Ok(all.pop().expect("one input"))
}

/// Like [`evolve_master`] for several initial states sharing one step
/// sequence, so linear combinations of the outputs commute with the
/// evolution up to rounding.
pub fn evolve_master_batch(rhos: &[DensityOp], spec: &GeneralReduction, t_grid: &[f64]) -> Result<Vec<MasterEvolution>> {
    if let Some(r) = rhos.iter().find(|r| r.dim() != spec.dim()) {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: r.dim() });
    }
    let mats: Vec<ComplexMat> = rhos.iter().map(|r| r.mat().clone()).collect();
    let (series, stats) = evolve_matrices(&mats, spec, t_grid)?;
    let mut per_input: Vec<Vec<ComplexMat>> = vec![Vec::with_capacity(t_grid.len()); rhos.len()];
    for snapshot in series {
        for (k, m) in snapshot.into_iter().enumerate() {
            per_input[k].push(m);
        }
    }
    per_input.into_iter().map(|ms| validate_series(t_grid, ms, stats)).collect()
}

/// Closed-form `(r(t), beta(t))` of the two-level model.
///
/// With `beta = A (g_r + i g_i)` and `x = r - 1/2` the dynamics split into
/// `g_r' = -lam g_r` and the pair `x' = -2 omega g_i`,
/// `g_i' = 2 omega x - lam g_i`, whose eigenvalues are
/// `-lam (1 ± Δ) / 2`.
pub fn analytic_two_level(r0: f64, beta0: C64, params: &TwoLevelParams, t: f64) -> Result<(f64, C64)> {
    let delta = params.delta();
    if delta.norm() <= DEFAULT_TOL {
        return Err(Error::DegenerateDelta);
    }
    let lam = params.lam();
    let omega = params.omega();
    let a = params.coupling();

    let mu_fast = -0.5 * lam * (1.0 + delta);
    let mu_slow = -0.5 * lam * (1.0 - delta);
    let gap = mu_fast - mu_slow;

    let g0 = a.conj() * beta0;
    let x0 = r0 - 0.5;
    let dx0 = -2.0 * omega * g0.im;
    let dgi0 = 2.0 * omega * x0 - lam * g0.im;

    let modes = |v0: f64, dv0: f64| {
        let c_fast = (dv0 - mu_slow * v0) / gap;
        let c_slow = v0 - c_fast;
        c_fast * (mu_fast * t).exp() + c_slow * (mu_slow * t).exp()
    };
    let x = modes(x0, dx0);
    let gi = modes(g0.im, dgi0);
    let residue = x.im.abs().max(gi.im.abs());
    if residue > 1e-10 {
        return Err(Error::ImaginaryResidue(residue));
    }
    let gr = g0.re * (-lam * t).exp();
    Ok((0.5 + x.re, a * C64::new(gr, gi.re)))
}

/// Steady state from the null space of the vectorized generator.
pub fn steady_state(spec: &GeneralReduction) -> Result<DensityOp> {
    let n = spec.dim();
    let (dim, v) = null_space(spec);
    if dim != 1 {
        return Err(Error::NonUniqueSteadyState(dim));
    }
    let m = ComplexMat::from_raw(DMatrix::from_column_slice(n, n, v.as_slice()));
    let tr = m.trace();
    let rho = m.scale(tr.inv()).hermitian_part();
    let residual = spec.apply_generator(&rho).frobenius_norm();
    if residual > 1e-10 {
        return Err(Error::InvalidArgument(format!("steady-state residual {residual:e} exceeds 1e-10")));
    }
    DensityOp::with_tolerance(rho, DensityTolerance::uniform(1e-10))
}

/// Dimension of the generator kernel.
pub fn null_space_dimension(spec: &GeneralReduction) -> usize {
    null_space(spec).0
}

fn null_space(spec: &GeneralReduction) -> (usize, nalgebra::DVector<C64>) {
    let svd = spec.superoperator().svd(false, true);
    let sv = &svd.singular_values;
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let thresh = 1e-12 * s_max.max(1.0);
    let dim = sv.iter().filter(|&&s| s <= thresh).count();
    let k_min = (0..sv.len()).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).expect("nonempty");
    let v_t = svd.v_t.expect("requested");
    let v = v_t.row(k_min).adjoint();
    (dim, v)
}

/// Plateau `(10/lam, 0.1/(4 lam eps^2))` on which `e^{-lam t} < 5e-5` and
/// `e^{-4 lam eps^2 t} > 0.9`.
pub fn regime_window(params: &TwoLevelParams) -> Result<(f64, f64)> {
    let lam = params.lam();
    let eps = params.eps();
    let t_min = 10.0 / lam;
    let t_max = if eps == 0.0 { f64::INFINITY } else { 0.1 / (4.0 * lam * eps * eps) };
    if t_min >= t_max {
        return Err(Error::NoPlateau { t_min, t_max });
    }
    Ok((t_min, t_max))
}

/// First-order plateau value of `r`: `|a|^2` for the mixture and
/// `|a|^2 - 2 eps [Re A Im(a b*) - Im A Re(a b*)]` for the pure state.
pub fn first_order_r(params: &TwoLevelParams, a: C64, b: C64, pure: bool) -> Result<f64> {
    let n2 = a.norm_sqr() + b.norm_sqr();
    if (n2 - 1.0).abs() > DEFAULT_TOL {
        return Err(Error::NotNormalized(n2));
    }
    regime_window(params)?;
    let base = a.norm_sqr();
    if !pure {
        return Ok(base);
    }
    Ok(base - first_order_shift(params, a, b))
}

/// `2 eps [Re A Im(a b*) - Im A Re(a b*)]`, subtracted from `|a|^2` in the
/// pure-state plateau value.
pub fn first_order_shift(params: &TwoLevelParams, a: C64, b: C64) -> f64 {
    let ab = a * b.conj();
    let c = params.coupling();
    2.0 * params.eps() * (c.re * ab.im - c.im * ab.re)
}

/// Finite-time propagator of the semigroup on column-stacked `vec(rho)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    dim: usize,
    dt: f64,
    matrix: DMatrix<C64>,
}

impl Propagator {
    /// Propagator over `dt` obtained by integrating every matrix unit.
    pub fn from_ode(spec: &GeneralReduction, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("propagator step must be > 0, got {dt}")));
        }
        let n = spec.dim();
        let units: Vec<ComplexMat> = (0..n * n)
            .map(|col| {
                let mut e = DMatrix::zeros(n, n);
                e[(col % n, col / n)] = C64::new(1.0, 0.0);
                ComplexMat::from_raw(e)
            })
            .collect();
        let (series, _) = evolve_matrices(&units, spec, &[0.0, dt])?;
        let mut matrix = DMatrix::zeros(n * n, n * n);
        for (col, m) in series[1].iter().enumerate() {
            matrix.column_mut(col).copy_from_slice(m.as_matrix().as_slice());
        }
        Ok(Self { dim: n, dt, matrix })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Propagator over `dt * 2^k`.
    pub fn doubled(&self, k: u32) -> Self {
        let mut m = self.matrix.clone();
        for _ in 0..k {
            m = &m * &m;
        }
        Self { dim: self.dim, dt: self.dt * f64::from(2u32).powi(k as i32), matrix: m }
    }

    pub fn apply(&self, rho: &ComplexMat) -> ComplexMat {
        let v = nalgebra::DVector::from_column_slice(rho.as_matrix().as_slice());
        let out = &self.matrix * v;
        ComplexMat::from_raw(DMatrix::from_column_slice(self.dim, self.dim, out.as_slice()))
    }

    /// `rho`, `P rho`, `P^2 rho`, ... (`steps + 1` entries).
    pub fn iterate(&self, rho: &ComplexMat, steps: usize) -> Vec<ComplexMat> {
        let mut out = Vec::with_capacity(steps + 1);
        out.push(rho.clone());
        for k in 0..steps {
            let next = self.apply(&out[k]);
            out.push(next);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::{density_from_pure, PureState};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn linspace(end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn delta_and_eps() {
        let p = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        assert!((p.eps() - 0.2).abs() < 1e-15);
        assert!((p.delta().re - 0.6).abs() < 1e-14);
        assert!((p.slow_rate() - 20.0).abs() < 1e-10);
        let q = TwoLevelParams::from_eps(0.3, 100.0, c(1.0, 0.0)).unwrap();
        assert_eq!(q.delta().re, 0.0);
        assert!(q.delta().im > 0.0);
        assert!(TwoLevelParams::new(1.0, 0.0, c(1.0, 0.0)).is_err());
        assert!(TwoLevelParams::new(1.0, 1.0, c(2.0, 0.0)).is_err());
    }

    #[test]
    fn maximally_mixed_is_stationary() {
        for a in [c(1.0, 0.0), c(0.0, 1.0), C64::from_polar(1.0, 0.3)] {
            let p = TwoLevelParams::from_eps(0.37, 11.0, a).unwrap();
            let d = lindblad_rhs(&DensityOp::maximally_mixed(2), &p.reduction()).unwrap();
            assert_eq!(d, ComplexMat::zeros(2));
        }
    }

    #[test]
    fn rhs_without_reduction_is_a_commutator() {
        let h = make_two_level_hamiltonian(1.0, c(0.0, 1.0)).unwrap();
        let spec = GeneralReduction::new(h.clone(), two_level_projectors(), 0.0).unwrap();
        let rho = DensityOp::from_bloch(1.0, c(0.0, 0.0)).unwrap();
        let d = lindblad_rhs(&rho, &spec).unwrap();
        assert_eq!(d, h.commutator(rho.mat()).scale(-I));
        assert_eq!(d.get(0, 0), c(0.0, 0.0));
        assert_eq!(d.get(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn rhs_pure_dephasing() {
        // P+ rho P+ + P- rho P- - rho = [[0, -1/2], [-1/2, 0]]
        let lam = 7.0;
        let spec = TwoLevelParams::new(0.0, lam, c(1.0, 0.0)).unwrap().reduction();
        let rho = DensityOp::from_bloch(0.5, c(0.5, 0.0)).unwrap();
        let d = lindblad_rhs(&rho, &spec).unwrap();
        let expected = ComplexMat::from_real_rows(&[vec![0.0, -0.5 * lam], vec![-0.5 * lam, 0.0]]).unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn rhs_dimension_mismatch() {
        let spec = TwoLevelParams::new(1.0, 1.0, c(1.0, 0.0)).unwrap().reduction();
        let r = lindblad_rhs(&DensityOp::maximally_mixed(4), &spec);
        assert_eq!(r.unwrap_err(), Error::DimensionMismatch { expected: 2, got: 4 });
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let p = TwoLevelParams::from_eps(0.13, 3.0, C64::from_polar(1.0, 1.1)).unwrap();
        let rho = DensityOp::from_bloch(0.8, c(0.2, -0.3)).unwrap();
        let d = lindblad_rhs(&rho, &p.reduction()).unwrap();
        assert!(d.trace().norm() < 1e-12);
        assert!(d.is_hermitian(1e-12));
    }

    #[test]
    fn zero_frequency_evolution_only_damps_coherence() {
        let lam = 50.0;
        let spec = TwoLevelParams::new(0.0, lam, c(1.0, 0.0)).unwrap().reduction();
        let beta0 = c(0.1, 0.2);
        let rho0 = DensityOp::from_bloch(0.3, beta0).unwrap();
        let grid = linspace(0.2, 41);
        let ev = evolve_master(&rho0, &spec, &grid).unwrap();
        for (t, s) in grid.iter().zip(&ev.states) {
            assert!((s.r() - 0.3).abs() < 1e-13);
            assert!((s.beta() - beta0 * (-lam * t).exp()).norm() < 1e-11);
        }
    }

    #[test]
    fn negligible_reduction_gives_rabi_oscillation() {
        let params = TwoLevelParams::new(1.0, 1e-12, c(0.0, 1.0)).unwrap();
        let grid = linspace(10.0, 101);
        let ev = evolve_master(&DensityOp::from_bloch(1.0, c(0.0, 0.0)).unwrap(), &params.reduction(), &grid).unwrap();
        for (t, s) in grid.iter().zip(&ev.states) {
            assert!((s.r() - t.cos().powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn headline_pure_deviation_is_plus_eps() {
        let eps = 1e-4;
        let params = TwoLevelParams::from_eps(eps, 100.0, c(0.0, 1.0)).unwrap();
        let s = c(FRAC_1_SQRT_2, 0.0);
        let rho0 = density_from_pure(&PureState::two_level(s, s).unwrap());
        let ev = evolve_master(&rho0, &params.reduction(), &[0.0, 1.0]).unwrap();
        let dev = ev.last().r() - 0.5;
        assert!((dev.abs() / eps - 1.0).abs() < 0.01);
        assert!(dev > 0.0);
    }

    #[test]
    fn evolve_rejects_bad_grid() {
        let spec = TwoLevelParams::new(1.0, 1.0, c(1.0, 0.0)).unwrap().reduction();
        let rho = DensityOp::maximally_mixed(2);
        assert_eq!(evolve_master(&rho, &spec, &[0.5, 1.0]).unwrap_err(), Error::InvalidTimeGrid);
        assert_eq!(evolve_master(&rho, &spec, &[0.0, 1.0, 0.5]).unwrap_err(), Error::InvalidTimeGrid);
    }

    #[test]
    fn analytic_initial_condition_and_limit() {
        let params = TwoLevelParams::from_eps(0.1, 10.0, C64::from_polar(1.0, FRAC_PI_4)).unwrap();
        let beta0 = c(0.1, -0.25);
        let (r, b) = analytic_two_level(0.6, beta0, &params, 0.0).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
        assert!((b - beta0).norm() < 1e-15);
        let (r, b) = analytic_two_level(0.6, beta0, &params, 1e5).unwrap();
        assert!((r - 0.5).abs() < 1e-15 && b.norm() < 1e-15);
    }

    #[test]
    fn analytic_matches_integrator() {
        let params = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        let ev = evolve_master(&DensityOp::from_bloch(1.0, c(0.0, 0.0)).unwrap(), &params.reduction(), &[0.0, 0.05])
            .unwrap();
        let (r, b) = analytic_two_level(1.0, c(0.0, 0.0), &params, 0.05).unwrap();
        let s = ev.last();
        assert!((s.r() - r).abs() <= 1e-8 * r.abs());
        assert!((s.beta() - b).norm() <= 1e-8 * s.mat().frobenius_norm());
    }

    #[test]
    fn analytic_rejects_degenerate_delta() {
        let params = TwoLevelParams::from_eps(0.25, 4.0, c(1.0, 0.0)).unwrap();
        assert_eq!(analytic_two_level(1.0, c(0.0, 0.0), &params, 1.0).unwrap_err(), Error::DegenerateDelta);
    }

    #[test]
    fn steady_state_two_level() {
        for eps in [1e-4, 0.05, 0.2, 0.3, 2.0] {
            let p = TwoLevelParams::from_eps(eps, 100.0, C64::from_polar(1.0, 0.7)).unwrap();
            let rho = steady_state(&p.reduction()).unwrap();
            assert!(rho.mat().approx_eq(DensityOp::maximally_mixed(2).mat(), 1e-10), "eps={eps}");
        }
    }

    #[test]
    fn steady_state_without_hamiltonian_is_degenerate() {
        let p = TwoLevelParams::new(0.0, 100.0, c(1.0, 0.0)).unwrap();
        assert_eq!(steady_state(&p.reduction()).unwrap_err(), Error::NonUniqueSteadyState(2));
    }

    #[test]
    fn regime_windows() {
        let p = TwoLevelParams::from_eps(1e-4, 100.0, c(0.0, 1.0)).unwrap();
        let (lo, hi) = regime_window(&p).unwrap();
        assert!((lo - 0.1).abs() < 1e-15);
        assert!((hi / 2.5e4 - 1.0).abs() < 1e-12);

        let p = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        assert!(matches!(regime_window(&p), Err(Error::NoPlateau { .. })));

        let p = TwoLevelParams::new(0.0, 1e7, c(1.0, 0.0)).unwrap();
        let (lo, hi) = regime_window(&p).unwrap();
        assert!((lo - 1e-6).abs() < 1e-21);
        assert_eq!(hi, f64::INFINITY);
    }

    #[test]
    fn first_order_values() {
        let p = TwoLevelParams::from_eps(1e-4, 100.0, c(0.0, 1.0)).unwrap();
        let s = c(FRAC_1_SQRT_2, 0.0);
        assert!((first_order_r(&p, s, s, false).unwrap() - 0.5).abs() < 1e-15);
        let plus = first_order_r(&p, s, s, true).unwrap() - 0.5;
        let minus = first_order_r(&p, s, -s, true).unwrap() - 0.5;
        assert!((plus.abs() - 1e-4).abs() < 1e-15);
        assert!((plus + minus).abs() < 1e-15);
        // Same sign as the integrator.
        assert!(plus > 0.0);

        let wide = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        assert!(matches!(first_order_r(&wide, s, s, true), Err(Error::NoPlateau { .. })));
        assert!(matches!(first_order_r(&p, s, c(1.0, 0.0), true), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn propagator_matches_direct_evolution() {
        let p = TwoLevelParams::from_eps(0.2, 10.0, C64::from_polar(1.0, FRAC_PI_2)).unwrap();
        let spec = p.reduction();
        let rho0 = DensityOp::from_bloch(0.9, c(0.1, 0.2)).unwrap();
        let prop = Propagator::from_ode(&spec, 0.01).unwrap().doubled(4);
        let via_prop = prop.iterate(rho0.mat(), 3);
        let direct = evolve_master(&rho0, &spec, &[0.0, 0.16, 0.32, 0.48]).unwrap();
        for (a, b) in via_prop.iter().zip(&direct.states) {
            assert!(a.approx_eq(b.mat(), 1e-9));
        }
    }
}
