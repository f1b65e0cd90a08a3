use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{log_grid, ExperimentReport, Oracle, Tolerances};
use crate::error::{Error, Result};
use crate::op::{ComplexMat, DensityOp, ProjectorFamily, PureState, C64};
use crate::semigroup::{evolve_master_batch, GeneralReduction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FourDCoupling {
    /// Couples the two manifolds.
    Generic,
    /// Cross-manifold blocks set to zero, so `[H, Q_k] = 0`.
    BlockDiagonal,
}

/// Four-level system reduced onto `span{e1, e2}` and `span{e3, e4}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourDSpec {
    hamiltonian: ComplexMat,
    family: ProjectorFamily,
    lam: f64,
}

impl FourDSpec {
    pub fn new(hamiltonian: ComplexMat, family: ProjectorFamily, lam: f64) -> Result<Self> {
        if family.dim() != 4 || hamiltonian.dim() != 4 {
            return Err(Error::DimensionMismatch { expected: 4, got: family.dim().max(hamiltonian.dim()) });
        }
        if family.len() != 2 || family.rank(0) != 2 || family.rank(1) != 2 {
            return Err(Error::InvalidProjectors("need two rank-2 projectors".into()));
        }
        GeneralReduction::new(hamiltonian.clone(), family.clone(), lam)?;
        Ok(Self { hamiltonian, family, lam })
    }

    /// Standard manifolds `Q1 = diag(1,1,0,0)`, `Q2 = diag(0,0,1,1)`.
    pub fn standard_family() -> ProjectorFamily {
        ProjectorFamily::new(
            vec![ComplexMat::diagonal(&[1.0, 1.0, 0.0, 0.0]), ComplexMat::diagonal(&[0.0, 0.0, 1.0, 1.0])],
            vec!["Q1".into(), "Q2".into()],
        )
        .expect("standard manifolds are valid")
    }

    /// Gaussian entries from ChaCha8 seeded with `seed`, Hermitized, then
    /// scaled so that the spectral norm equals `eps * lam`.
    pub fn seeded(seed: u64, eps: f64, lam: f64, coupling: FourDCoupling) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidFrequency(eps));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(4, 4, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        });
        let mut h = ComplexMat::new(raw)?.hermitian_part().into_matrix();
        if coupling == FourDCoupling::BlockDiagonal {
            for i in 0..4 {
                for j in 0..4 {
                    if (i < 2) != (j < 2) {
                        h[(i, j)] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
        let h = ComplexMat::new(h)?;
        let norm = h.spectral_norm();
        let h = if norm > 0.0 { h.scale_real(eps * lam / norm) } else { h };
        Self::new(h, Self::standard_family(), lam)
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

    pub fn reduction(&self) -> GeneralReduction {
        GeneralReduction::new(self.hamiltonian.clone(), self.family.clone(), self.lam).expect("validated on construction")
    }

    /// `|| Q1 H Q2 ||_F`
    pub fn cross_coupling(&self) -> f64 {
        let q = self.family.projectors();
        (&(&q[0] * &self.hamiltonian) * &q[1]).frobenius_norm()
    }

    /// `(1,1,1,1)/2`
    pub fn default_pure() -> DensityOp {
        let s = C64::new(0.5, 0.0);
        crate::op::density_from_pure(&PureState::new(vec![s; 4]).expect("normalized"))
    }

    /// `Q1 rho Q1 + Q2 rho Q2`
    pub fn mixture_of(&self, rho: &DensityOp) -> Result<DensityOp> {
        DensityOp::new(self.family.dephase(rho.mat()))
    }
}

fn conditional(family: &ProjectorFamily, rho: &ComplexMat, k: usize) -> Result<ComplexMat> {
    let q = &family.projectors()[k];
    let w = family.weights(rho)[k];
    if w < 1e-12 {
        return Err(Error::EmptyManifold { label: family.labels()[k].clone(), weight: w });
    }
    Ok(q.sandwich(rho).scale_real(1.0 / w))
}

/// Evolves a cross-manifold superposition and its dephased counterpart and
/// compares their manifold weights and conditional states.
pub fn exp_degenerate_4d(
    spec: &FourDSpec,
    rho0_pure: &DensityOp,
    rho0_mixt: &DensityOp,
    t_eval: Option<f64>,
    tol: &Tolerances,
) -> Result<ExperimentReport> {
    let family = spec.family();
    let w_pure0 = family.weights(rho0_pure.mat());
    let w_mixt0 = family.weights(rho0_mixt.mat());
    let init_gap = w_pure0.iter().zip(&w_mixt0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if init_gap > tol.initial_weights {
        return Err(Error::InvalidArgument(format!(
            "initial manifold weights differ by {init_gap:e} (tol {:e})",
            tol.initial_weights
        )));
    }
    let t_eval = t_eval.unwrap_or(10.0 / spec.lam());
    if !(t_eval > 0.0 && t_eval.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_eval must be > 0, got {t_eval}")));
    }

    let mut rep = ExperimentReport::new("degenerate-4d");
    let h = spec.hamiltonian();
    let h_rows: Vec<Vec<[f64; 2]>> =
        (0..4).map(|i| (0..4).map(|j| [h.get(i, j).re, h.get(i, j).im]).collect()).collect();
    rep.param("lam", spec.lam())
        .param("hamiltonian", h_rows)
        .param("h_norm_over_lam", h.spectral_norm() / spec.lam())
        .param("cross_coupling", spec.cross_coupling())
        .param("t_eval", t_eval);

    let mut grid = log_grid(0.01 / spec.lam(), t_eval, 41);
    if *grid.last().unwrap() != t_eval {
        grid.push(t_eval);
    }
    let evs = evolve_master_batch(&[rho0_pure.clone(), rho0_mixt.clone()], &spec.reduction(), &grid)?;

    let mut sum_err: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut weight_gap: f64 = 0.0;
    for k in 0..grid.len() {
        let wp = family.weights(evs[0].states[k].mat());
        let wm = family.weights(evs[1].states[k].mat());
        sum_err = sum_err.max((wp.iter().sum::<f64>() - 1.0).abs()).max((wm.iter().sum::<f64>() - 1.0).abs());
        for j in 0..2 {
            drift = drift.max((wp[j] - w_pure0[j]).abs()).max((wm[j] - w_mixt0[j]).abs());
            weight_gap = weight_gap.max((wp[j] - wm[j]).abs());
        }
    }
    let end_p = evs[0].last().mat();
    let end_m = evs[1].last().mat();
    let mut cond_dist = Vec::with_capacity(2);
    for j in 0..2 {
        cond_dist.push(conditional(family, end_p, j)?.distance(&conditional(family, end_m, j)?));
    }
    let wp = family.weights(end_p);
    let wm = family.weights(end_m);
    let max_cond = cond_dist.iter().cloned().fold(0.0, f64::max);

    rep.result("weight_q1_pure", wp[0], None, tol.weight_sum, Oracle::Ode)
        .result("weight_q2_pure", wp[1], None, tol.weight_sum, Oracle::Ode)
        .result("weight_q1_mixt", wm[0], None, tol.weight_sum, Oracle::Ode)
        .result("weight_q2_mixt", wm[1], None, tol.weight_sum, Oracle::Ode)
        .result("max_weight_sum_error", sum_err, Some(0.0), tol.weight_sum, Oracle::Ode)
        .result("max_weight_drift", drift, None, tol.weight_drift, Oracle::Ode)
        .result("max_weight_gap_pure_vs_mixt", weight_gap, None, tol.weight_drift, Oracle::Ode)
        .result("conditional_distance_q1", cond_dist[0], None, tol.conditional_distance, Oracle::Ode)
        .result("conditional_distance_q2", cond_dist[1], None, tol.conditional_distance, Oracle::Ode);

    rep.verdict("weights sum to one", sum_err <= tol.weight_sum, format!("max |sum_k Tr(Q_k rho) - 1| = {sum_err:.3e}"));
    if spec.cross_coupling() > 0.0 {
        rep.verdict(
            "conditional states differ",
            max_cond > tol.conditional_distance,
            format!("max_k |rho_k^pure - rho_k^mixt|_F = {max_cond:.3e} at t = {t_eval:.3e} s"),
        );
    } else {
        rep.verdict(
            "weights conserved",
            drift <= tol.weight_drift,
            format!("max_t |Tr(Q_k rho(t)) - Tr(Q_k rho(0))| = {drift:.3e}"),
        );
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(spec: &FourDSpec) -> ExperimentReport {
        let pure = FourDSpec::default_pure();
        let mixt = spec.mixture_of(&pure).unwrap();
        exp_degenerate_4d(spec, &pure, &mixt, None, &Tolerances::default()).unwrap()
    }

    #[test]
    fn generic_coupling_changes_composition() {
        let spec = FourDSpec::seeded(1, 0.05, 100.0, FourDCoupling::Generic).unwrap();
        assert!((spec.hamiltonian().spectral_norm() / 100.0 - 0.05).abs() < 1e-12);
        let rep = run(&spec);
        assert!(rep.passed(), "{}", rep.to_json());
        assert!(rep.get("conditional_distance_q1").unwrap().max(rep.get("conditional_distance_q2").unwrap()) > 1e-6);
    }

    #[test]
    fn block_diagonal_conserves_weights() {
        let spec = FourDSpec::seeded(1, 0.05, 100.0, FourDCoupling::BlockDiagonal).unwrap();
        assert_eq!(spec.cross_coupling(), 0.0);
        let rep = run(&spec);
        assert!(rep.passed(), "{}", rep.to_json());
        assert!(rep.get("max_weight_drift").unwrap() <= 1e-9);
    }

    #[test]
    fn no_hamiltonian_keeps_mixture_fixed() {
        let spec = FourDSpec::new(ComplexMat::zeros(4), FourDSpec::standard_family(), 100.0).unwrap();
        let rep = run(&spec);
        assert!(rep.passed());
        assert!(rep.get("max_weight_gap_pure_vs_mixt").unwrap() <= 1e-12);
        assert!(rep.get("conditional_distance_q1").unwrap() <= 1e-9);
    }

    #[test]
    fn empty_manifold_is_an_error() {
        let spec = FourDSpec::seeded(2, 0.05, 100.0, FourDCoupling::BlockDiagonal).unwrap();
        let rho = crate::op::density_from_pure(&PureState::basis(4, 0));
        let r = exp_degenerate_4d(&spec, &rho, &rho, None, &Tolerances::default());
        assert!(matches!(r, Err(Error::EmptyManifold { .. })));
    }

    #[test]
    fn mismatched_initial_weights_rejected() {
        let spec = FourDSpec::seeded(2, 0.05, 100.0, FourDCoupling::Generic).unwrap();
        let a = FourDSpec::default_pure();
        let b = crate::op::density_from_pure(&PureState::basis(4, 0));
        assert!(matches!(
            exp_degenerate_4d(&spec, &a, &b, None, &Tolerances::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
