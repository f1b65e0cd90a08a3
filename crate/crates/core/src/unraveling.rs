//! Jump unraveling of the reduction semigroup.
//!
//! Reduction events form a Poisson process of rate `lam` (the total jump
//! rate is state independent because the projectors sum to the identity),
//! so inter-arrival times are drawn exactly from an exponential
//! distribution. Between events the state evolves under the exact unitary
//! `exp(-i H dt)`. At an event, outcome `k` is chosen with probability
//! `|Q_k psi|^2` and the state is replaced by `Q_k psi / |Q_k psi|`.
//!
//! Every trajectory owns a ChaCha8 stream seeded with
//! `master_seed + trajectory_index`, so ensembles are reproducible
//! regardless of how rayon schedules the work.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::op::{ComplexMat, DensityOp, DensityTolerance, PureState, C64};
use crate::semigroup::GeneralReduction;

/// Outcome weights below this are treated as numerically zero.
pub const DEGENERATE_WEIGHT: f64 = 1e-14;

/// Name of the per-trajectory random number generator.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed = master_seed + trajectory index";

/// Random stream of one trajectory.
pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub outcome: usize,
    pub label: String,
    pub state: PureState,
}

/// One stochastic realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub events: Vec<JumpEvent>,
    pub sample_times: Vec<f64>,
    pub sampled_states: Vec<PureState>,
}

impl Trajectory {
    pub fn first_jump(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }
}

/// Exact propagator `exp(-i H dt)` from the spectral decomposition of `H`.
#[derive(Debug, Clone)]
struct UnitaryFlow {
    basis: Option<(DMatrix<C64>, Vec<f64>)>,
}

impl UnitaryFlow {
    fn new(h: &ComplexMat) -> Self {
        if h.frobenius_norm() == 0.0 {
            return Self { basis: None };
        }
        let eig = SymmetricEigen::new(h.as_matrix().clone());
        Self { basis: Some((eig.eigenvectors, eig.eigenvalues.iter().cloned().collect())) }
    }

    fn advance(&self, psi: &DVector<C64>, dt: f64) -> DVector<C64> {
        match &self.basis {
            None => psi.clone(),
            Some((v, e)) => {
                let mut c = v.adjoint() * psi;
                for (ck, ek) in c.iter_mut().zip(e) {
                    *ck *= C64::from_polar(1.0, -ek * dt);
                }
                v * c
            }
        }
    }
}

struct Engine<'a> {
    spec: &'a GeneralReduction,
    flow: UnitaryFlow,
    waiting: Option<Exp<f64>>,
}

impl<'a> Engine<'a> {
    fn new(spec: &'a GeneralReduction) -> Self {
        let waiting = if spec.lam() > 0.0 { Some(Exp::new(spec.lam()).expect("lam > 0")) } else { None };
        Self { spec, flow: UnitaryFlow::new(spec.hamiltonian()), waiting }
    }

    fn next_wait<R: Rng>(&self, rng: &mut R) -> f64 {
        self.waiting.map_or(f64::INFINITY, |d| d.sample(rng))
    }

    fn reduce<R: Rng>(&self, psi: &DVector<C64>, t: f64, rng: &mut R) -> Result<(usize, DVector<C64>)> {
        let family = self.spec.family();
        let branches: Vec<DVector<C64>> = family.projectors().iter().map(|q| q.apply(psi)).collect();
        let weights: Vec<f64> = branches.iter().map(|b| b.norm_squared()).collect();
        if weights.iter().all(|&w| w < DEGENERATE_WEIGHT) {
            return Err(Error::DegenerateState(t));
        }
        let total: f64 = weights.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut k = weights.len() - 1;
        for (j, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                k = j;
                break;
            }
        }
        let w = weights[k];
        Ok((k, branches[k].unscale(w.sqrt())))
    }

    /// Runs one trajectory, returning the state at each sample time and
    /// reporting each jump to `on_jump`.
    fn simulate<R, F>(&self, psi0: &PureState, sample_times: &[f64], rng: &mut R, mut on_jump: F) -> Result<Vec<DVector<C64>>>
    where
        R: Rng,
        F: FnMut(f64, usize, &DVector<C64>),
    {
        let mut psi = psi0.amplitudes().clone();
        let mut t = 0.0;
        let mut next_jump = self.next_wait(rng);
        let mut samples = Vec::with_capacity(sample_times.len());
        for &ts in sample_times {
            while next_jump <= ts {
                psi = self.flow.advance(&psi, next_jump - t);
                t = next_jump;
                let (k, post) = self.reduce(&psi, t, rng)?;
                psi = post;
                on_jump(t, k, &psi);
                next_jump = t + self.next_wait(rng);
            }
            psi = self.flow.advance(&psi, ts - t);
            t = ts;
            samples.push(psi.clone());
        }
        Ok(samples)
    }
}

fn check_sample_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidTimeGrid);
    }
    Ok(())
}

fn check_state(psi0: &PureState, spec: &GeneralReduction) -> Result<()> {
    if psi0.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: psi0.dim() });
    }
    Ok(())
}

/// Trajectory over `[0, t_end]`, sampled at both ends.
pub fn run_trajectory(psi0: &PureState, spec: &GeneralReduction, t_end: f64, seed: u64) -> Result<Trajectory> {
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end must be > 0, got {t_end}")));
    }
    run_trajectory_sampled(psi0, spec, &[0.0, t_end], seed)
}

/// Trajectory sampled at the given non-decreasing times.
pub fn run_trajectory_sampled(psi0: &PureState, spec: &GeneralReduction, sample_times: &[f64], seed: u64) -> Result<Trajectory> {
    check_state(psi0, spec)?;
    check_sample_times(sample_times)?;
    let engine = Engine::new(spec);
    let mut rng = trajectory_rng(seed);
    let labels = spec.family().labels();
    let mut events = Vec::new();
    let samples = engine.simulate(psi0, sample_times, &mut rng, |t, k, psi| {
        events.push(JumpEvent {
            time: t,
            outcome: k,
            label: labels[k].clone(),
            state: PureState::from_normalized(psi.clone()),
        });
    })?;
    Ok(Trajectory {
        seed,
        events,
        sample_times: sample_times.to_vec(),
        sampled_states: samples.into_iter().map(PureState::from_normalized).collect(),
    })
}

/// Starting point of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Pure(PureState),
    /// Trajectories start from the eigenvectors of the operator, allocated
    /// in proportion to the eigenvalues by systematic (stratified)
    /// sampling: trajectory `i` of `n` takes the component whose cumulative
    /// weight first exceeds `(i + 1/2) / n`.
    Mixed(DensityOp),
}

impl InitialState {
    fn dim(&self) -> usize {
        match self {
            Self::Pure(p) => p.dim(),
            Self::Mixed(r) => r.dim(),
        }
    }
}

/// Monte-Carlo estimate of the semigroup from `n_traj` trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub t_grid: Vec<f64>,
    /// Empirical mean of `|psi><psi|` at each grid time.
    pub mean_rho: Vec<DensityOp>,
    /// Standard error per entry: the real part holds the error of the
    /// entry's real part, the imaginary part that of its imaginary part.
    pub std_err: Vec<ComplexMat>,
    pub outcome_labels: Vec<String>,
    /// Mean of `|Q_k psi|^2` at the last grid time.
    pub outcome_freq: Vec<f64>,
    pub first_jumps: Vec<Option<f64>>,
    pub jump_counts: Vec<usize>,
}

struct Summary {
    states: Vec<DVector<C64>>,
    first_jump: Option<f64>,
    jumps: usize,
}

pub fn run_ensemble(
    init: &InitialState,
    spec: &GeneralReduction,
    t_grid: &[f64],
    n_traj: usize,
    master_seed: u64,
) -> Result<EnsembleStats> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be >= 1".into()));
    }
    if init.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: init.dim() });
    }
    check_sample_times(t_grid)?;
    let engine = Engine::new(spec);
    let ensemble = match init {
        InitialState::Pure(_) => None,
        InitialState::Mixed(rho) => Some(rho.eigen_ensemble()),
    };

    let summaries: Vec<Summary> = (0..n_traj)
        .into_par_iter()
        .map(|idx| {
            let mut rng = trajectory_rng(master_seed.wrapping_add(idx as u64));
            let psi0 = match (init, &ensemble) {
                (InitialState::Pure(p), _) => p.clone(),
                (_, Some((w, states))) => states[stratified_pick(w, idx, n_traj)].clone(),
                _ => unreachable!(),
            };
            let mut first_jump = None;
            let mut jumps = 0usize;
            let states = engine
                .simulate(&psi0, t_grid, &mut rng, |t, _, _| {
                    first_jump.get_or_insert(t);
                    jumps += 1;
                })
                .map_err(|e| Error::Trajectory { index: idx, source: Box::new(e) })?;
            Ok(Summary { states, first_jump, jumps })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = spec.dim();
    let count = n_traj as f64;
    let mut mean_rho = Vec::with_capacity(t_grid.len());
    let mut std_err = Vec::with_capacity(t_grid.len());
    for k in 0..t_grid.len() {
        let mut sum = DMatrix::<C64>::zeros(n, n);
        for s in &summaries {
            sum += &s.states[k] * s.states[k].adjoint();
        }
        let mean = sum.unscale(count);
        let mut var_re = DMatrix::<f64>::zeros(n, n);
        let mut var_im = DMatrix::<f64>::zeros(n, n);
        for s in &summaries {
            let d = &s.states[k] * s.states[k].adjoint() - &mean;
            var_re += d.map(|z| z.re * z.re);
            var_im += d.map(|z| z.im * z.im);
        }
        let se = if n_traj > 1 {
            let denom = (count - 1.0) * count;
            DMatrix::from_fn(n, n, |i, j| C64::new((var_re[(i, j)] / denom).sqrt(), (var_im[(i, j)] / denom).sqrt()))
        } else {
            DMatrix::zeros(n, n)
        };
        let rho = DensityOp::with_tolerance(ComplexMat::new(mean)?, DensityTolerance::uniform(1e-10))?;
        mean_rho.push(rho);
        std_err.push(ComplexMat::new(se)?);
    }

    let family = spec.family();
    let last = t_grid.len() - 1;
    let outcome_freq = family
        .projectors()
        .iter()
        .map(|q| summaries.iter().map(|s| q.apply(&s.states[last]).norm_squared()).sum::<f64>() / count)
        .collect();

    Ok(EnsembleStats {
        n_traj,
        t_grid: t_grid.to_vec(),
        mean_rho,
        std_err,
        outcome_labels: family.labels().to_vec(),
        outcome_freq,
        first_jumps: summaries.iter().map(|s| s.first_jump).collect(),
        jump_counts: summaries.iter().map(|s| s.jumps).collect(),
    })
}

fn stratified_pick(weights: &[f64], idx: usize, n: usize) -> usize {
    let u = (idx as f64 + 0.5) / n as f64;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc && *w > 0.0 {
            return k;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::op::two_level_projectors;
    use crate::semigroup::TwoLevelParams;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigenstate_is_jump_invariant() {
        let spec = TwoLevelParams::new(0.0, 100.0, c(1.0, 0.0)).unwrap().reduction();
        let tr = run_trajectory(&PureState::basis(2, 0), &spec, 1.0, 3).unwrap();
        assert!(tr.events.len() > 20);
        for e in &tr.events {
            assert_eq!(e.label, "plus");
            assert_eq!(e.state, PureState::basis(2, 0));
        }
        assert_eq!(tr.sampled_states.last().unwrap(), &PureState::basis(2, 0));
    }

    #[test]
    fn no_reduction_gives_rabi_flip() {
        let omega = 3.0;
        let h = crate::op::make_two_level_hamiltonian(omega, c(0.0, 1.0)).unwrap();
        let spec = GeneralReduction::new(h, two_level_projectors(), 0.0).unwrap();
        let tr = run_trajectory(&PureState::basis(2, 0), &spec, FRAC_PI_2 / omega, 0).unwrap();
        assert!(tr.events.is_empty());
        let end = tr.sampled_states.last().unwrap();
        assert!(end.amplitude(0).norm_sqr() < 1e-24);
    }

    #[test]
    fn post_jump_states_lie_in_their_manifold() {
        let spec = TwoLevelParams::from_eps(0.3, 10.0, C64::from_polar(1.0, 0.4)).unwrap().reduction();
        let s = c(FRAC_1_SQRT_2, 0.0);
        let tr = run_trajectory(&PureState::two_level(s, s).unwrap(), &spec, 2.0, 11).unwrap();
        assert!(!tr.events.is_empty());
        assert!(tr.events.windows(2).all(|w| w[1].time > w[0].time));
        for e in &tr.events {
            let q = &spec.family().projectors()[e.outcome];
            let proj = q.apply(e.state.amplitudes());
            assert!((proj - e.state.amplitudes()).norm() < 1e-10);
            assert!((e.state.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let spec = TwoLevelParams::from_eps(0.1, 100.0, c(0.0, 1.0)).unwrap().reduction();
        let psi = PureState::two_level(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let a = run_trajectory(&psi, &spec, 0.5, 42).unwrap();
        let b = run_trajectory(&psi, &spec, 0.5, 42).unwrap();
        let other = run_trajectory(&psi, &spec, 0.5, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.events, other.events);
    }

    #[test]
    fn singleton_ensemble_matches_trajectory() {
        let spec = TwoLevelParams::from_eps(0.1, 100.0, c(0.0, 1.0)).unwrap().reduction();
        let psi = PureState::two_level(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let grid: Vec<f64> = (0..11).map(|k| k as f64 * 0.01).collect();
        let stats = run_ensemble(&InitialState::Pure(psi.clone()), &spec, &grid, 1, 9).unwrap();
        let tr = run_trajectory_sampled(&psi, &spec, &grid, 9).unwrap();
        for (m, s) in stats.mean_rho.iter().zip(&tr.sampled_states) {
            assert!(m.mat().approx_eq(&s.projector(), 1e-15));
        }
        assert!(stats.std_err.iter().all(|e| e.frobenius_norm() == 0.0));
        assert_eq!(stats.first_jumps[0], tr.first_jump());
    }

    #[test]
    fn jump_invariant_mixture() {
        let spec = TwoLevelParams::new(0.0, 100.0, c(1.0, 0.0)).unwrap().reduction();
        let grid = [0.0, 0.1, 0.5];
        let stats = run_ensemble(&InitialState::Mixed(DensityOp::maximally_mixed(2)), &spec, &grid, 400, 5).unwrap();
        for k in 0..grid.len() {
            // every trajectory is a basis state, so the mean is exactly diagonal
            let m = stats.mean_rho[k].mat();
            assert_eq!(m, &ComplexMat::diagonal(&[0.5, 0.5]));
        }
        let freq_plus = stats.outcome_freq[0];
        assert!((stats.mean_rho[0].r() - freq_plus).abs() < 1e-15);
    }

    #[test]
    fn ensemble_rejects_empty() {
        let spec = TwoLevelParams::new(0.0, 1.0, c(1.0, 0.0)).unwrap().reduction();
        let r = run_ensemble(&InitialState::Pure(PureState::basis(2, 0)), &spec, &[0.0], 0, 0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn degenerate_state_is_reported() {
        // A projector family that annihilates nothing cannot produce a zero
        // weight, so feed the reducer a zero vector directly.
        let spec = TwoLevelParams::new(0.0, 1.0, c(1.0, 0.0)).unwrap().reduction();
        let engine = Engine::new(&spec);
        let mut rng = trajectory_rng(0);
        let r = engine.reduce(&DVector::from_element(2, c(0.0, 0.0)), 0.25, &mut rng);
        assert_eq!(r.unwrap_err(), Error::DegenerateState(0.25));
    }
}
