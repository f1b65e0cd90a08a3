use std::f64::consts::FRAC_1_SQRT_2;

use super::{default_t_eval, log_grid, log_slope, ExperimentReport, Oracle, TimeSeries, Tolerances};
use crate::error::{Error, Result};
use crate::op::{density_from_pure, ComplexMat, DensityOp, PureState, C64};
use crate::semigroup::{
    analytic_two_level, evolve_master_batch, first_order_r, first_order_shift, regime_window, BlochRecord,
    Propagator, TwoLevelParams,
};

fn echo_params(rep: &mut ExperimentReport, params: &TwoLevelParams) {
    rep.param("lam", params.lam())
        .param("omega", params.omega())
        .param("eps", params.eps())
        .param("coupling", [params.coupling().re, params.coupling().im]);
}

fn resolve_t_eval(params: &TwoLevelParams, t_eval: Option<f64>) -> Result<f64> {
    let (t_min, t_max) = regime_window(params)?;
    match t_eval {
        None => default_t_eval(params),
        Some(t) if t > t_min && t < t_max => Ok(t),
        Some(t) => Err(Error::InvalidArgument(format!(
            "t_eval = {t:e} s lies outside the plateau ({t_min:e}, {t_max:e})"
        ))),
    }
}

fn plateau_grid(params: &TwoLevelParams, t_eval: f64) -> Vec<f64> {
    let mut g = log_grid(0.01 / params.lam(), t_eval, 61);
    if *g.last().unwrap() != t_eval {
        g.push(t_eval);
    }
    g
}

/// Evolves `rho_Mixt = diag(|a|^2, |b|^2)` and `rho_Pure = |Psi><Psi|` and
/// compares `r(t_eval)` with the first-order plateau values.
pub fn exp_mixture_vs_pure(
    params: &TwoLevelParams,
    a: C64,
    b: C64,
    t_eval: Option<f64>,
    tol: &Tolerances,
) -> Result<ExperimentReport> {
    let psi = PureState::two_level(a, b)?;
    let t_eval = resolve_t_eval(params, t_eval)?;
    let mut rep = ExperimentReport::new("mixture-vs-pure");
    echo_params(&mut rep, params);
    rep.param("a", [a.re, a.im]).param("b", [b.re, b.im]).param("t_eval", t_eval);

    let pure0 = density_from_pure(&psi);
    let mixt0 = DensityOp::new(ComplexMat::diagonal(&[a.norm_sqr(), b.norm_sqr()]))?;
    let grid = plateau_grid(params, t_eval);
    let evs = evolve_master_batch(&[mixt0, pure0], &params.reduction(), &grid)?;
    let (mixt, pure) = (&evs[0], &evs[1]);

    let eps = params.eps();
    let r_mixt = mixt.last().r();
    let r_pure = pure.last().r();
    let base = a.norm_sqr();
    let predicted_pure = first_order_r(params, a, b, true)?;
    let shift = first_order_shift(params, a, b);
    let plateau_tol = tol.plateau_eps2 * eps * eps;
    let (r_closed, _) = analytic_two_level(base, a * b.conj(), params, t_eval)?;

    rep.result("r_mixt", r_mixt, Some(base), tol.r_mixt, Oracle::Ode)
        .result("r_pure", r_pure, Some(predicted_pure), plateau_tol, Oracle::Ode)
        .result("r_pure_closed_form", r_closed, Some(r_pure), 1e-8, Oracle::Analytic)
        .result("r_pure_minus_r_mixt", r_pure - r_mixt, Some(-shift), plateau_tol, Oracle::Ode)
        .result("first_order_r_pure", predicted_pure, None, plateau_tol, Oracle::Analytic)
        .result("pure_deviation_sign", (r_pure - base).signum(), Some((-shift).signum()), 0.0, Oracle::Ode);

    let mixt_err = (r_mixt - base).abs();
    rep.verdict(
        "mixture keeps |a|^2",
        mixt_err <= tol.r_mixt,
        format!("|r_Mixt - |a|^2| = {mixt_err:.3e} (tol {:.1e})", tol.r_mixt),
    );
    let mag_err = ((r_pure - base).abs() - shift.abs()).abs();
    rep.verdict(
        "pure deviation follows first order",
        mag_err <= plateau_tol,
        format!(
            "||r_Pure - |a|^2| - |2 eps (Re A Im ab* - Im A Re ab*)|| = {mag_err:.3e} (tol {plateau_tol:.1e}); r_Pure - |a|^2 = {:+.6e}",
            r_pure - base
        ),
    );
    rep.series.push(TimeSeries::from_bloch("mixture", &mixt.bloch()));
    rep.series.push(TimeSeries::from_bloch("pure", &pure.bloch()));
    Ok(rep)
}

/// Evolves `psi+-` = `(|1> +- |2>)/sqrt(2)` and checks that their
/// deviations cancel, and that two decompositions of `I/2` evolve to the
/// same operator.
pub fn exp_sign_flip_no_signalling(params: &TwoLevelParams, t_eval: Option<f64>, tol: &Tolerances) -> Result<ExperimentReport> {
    let t_eval = resolve_t_eval(params, t_eval)?;
    let mut rep = ExperimentReport::new("sign-flip");
    echo_params(&mut rep, params);
    rep.param("t_eval", t_eval);

    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    let plus = PureState::two_level(s, s)?;
    let minus = PureState::two_level(s, -s)?;
    let e1 = PureState::basis(2, 0);
    let e2 = PureState::basis(2, 1);
    let inputs = [
        density_from_pure(&plus),
        density_from_pure(&minus),
        DensityOp::maximally_mixed(2),
        density_from_pure(&e1),
        density_from_pure(&e2),
    ];
    let grid = plateau_grid(params, t_eval);
    let evs = evolve_master_batch(&inputs, &params.reduction(), &grid)?;

    let r_plus = evs[0].last().r();
    let r_minus = evs[1].last().r();
    let r_mixt = evs[2].last().r();
    let antisym = (r_plus - 0.5) + (r_minus - 0.5);
    let avg_err = (0.5 * (r_plus + r_minus) - r_mixt).abs();
    let shift = first_order_shift(params, s, s);

    // Same I/2, two decompositions.
    let mut decomposition_gap: f64 = 0.0;
    for k in 0..grid.len() {
        let pm = (evs[0].states[k].mat() + evs[1].states[k].mat()).scale_real(0.5);
        let basis = (evs[3].states[k].mat() + evs[4].states[k].mat()).scale_real(0.5);
        decomposition_gap = decomposition_gap.max(pm.distance(&basis));
    }

    rep.result("r_plus", r_plus, Some(0.5 - shift), tol.plateau_eps2 * params.eps().powi(2), Oracle::Ode)
        .result("r_minus", r_minus, Some(0.5 + shift), tol.plateau_eps2 * params.eps().powi(2), Oracle::Ode)
        .result("r_mixt", r_mixt, Some(0.5), tol.sign_flip, Oracle::Ode)
        .result("average_r", 0.5 * (r_plus + r_minus), Some(r_mixt), tol.sign_flip, Oracle::Ode)
        .result("decomposition_gap", decomposition_gap, Some(0.0), tol.decomposition, Oracle::Ode);

    rep.verdict(
        "deviations cancel",
        antisym.abs() <= tol.sign_flip,
        format!("(r+ - 1/2) + (r- - 1/2) = {antisym:.3e}; r+ - 1/2 = {:+.6e}, r- - 1/2 = {:+.6e}", r_plus - 0.5, r_minus - 0.5),
    );
    rep.verdict(
        "average equals mixture",
        avg_err <= tol.sign_flip,
        format!("|(r+ + r-)/2 - r_Mixt| = {avg_err:.3e}"),
    );
    rep.verdict(
        "decomposition invariance",
        decomposition_gap <= tol.decomposition,
        format!("max_t |(rho+ + rho-)/2 - (rho_1 + rho_2)/2|_F = {decomposition_gap:.3e}"),
    );
    rep.series.push(TimeSeries::from_bloch("plus", &evs[0].bloch()));
    rep.series.push(TimeSeries::from_bloch("minus", &evs[1].bloch()));
    Ok(rep)
}

/// Long-time approach to `I/2`, driven by a propagator built from the
/// integrator and then doubled.
///
/// Samples `rho(k h)` for `k = 0..=800` with `h = 100 tau / 800`,
/// `tau = 1 / slow_rate`; the slow rate is fitted on `[3 tau, 10 tau]` and
/// the distance to `I/2` is reported at `10 tau` and `100 tau`.
pub fn exp_spohn_longtime(params: &TwoLevelParams, rho0: &DensityOp, tol: &Tolerances) -> Result<ExperimentReport> {
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: rho0.dim() });
    }
    let mut rep = ExperimentReport::new("spohn");
    echo_params(&mut rep, params);
    rep.param("rho0_r", rho0.r()).param("rho0_beta", [rho0.beta().re, rho0.beta().im]);

    let spec = params.reduction();
    let predicted = params.slow_rate();
    let tau = 1.0 / predicted;
    const STEPS: usize = 800;
    let h = 100.0 * tau / STEPS as f64;
    // Base step no longer than 1000 integrator steps.
    let base_cap = 1000.0 * spec.max_step();
    let doublings = ((h / base_cap).log2().ceil()).max(0.0) as u32;
    let base = h / f64::from(2u32).powi(doublings as i32);
    let prop = Propagator::from_ode(&spec, base)?.doubled(doublings);
    // Propagate rho - I/2: the generator annihilates I, and iterating the
    // deviation keeps rounding errors relative to its own size.
    let half = DensityOp::maximally_mixed(2);
    let devs = prop.iterate(&(rho0.mat() - half.mat()), STEPS);
    let times: Vec<f64> = (0..=STEPS).map(|k| k as f64 * h).collect();
    let dist: Vec<f64> = devs.iter().map(ComplexMat::frobenius_norm).collect();
    let mats: Vec<ComplexMat> = devs.iter().map(|d| d + half.mat()).collect();
    let d10 = dist[STEPS / 10];
    let d100 = dist[STEPS];

    let fit: Vec<usize> = (STEPS * 3 / 100..=STEPS / 10).collect();
    let fitted = if fit.iter().all(|&k| dist[k] > 0.0) {
        let t: Vec<f64> = fit.iter().map(|&k| times[k]).collect();
        let y: Vec<f64> = fit.iter().map(|&k| dist[k]).collect();
        Some(-log_slope(&t, &y))
    } else {
        None
    };
    let eps = params.eps();

    rep.param("propagator_step", h).param("propagator_base_step", base).param("doublings", doublings);
    rep.result("slow_rate_predicted", predicted, None, 0.0, Oracle::Analytic)
        .result("four_lam_eps2", 4.0 * params.lam() * eps * eps, None, 0.0, Oracle::Analytic)
        .result("distance_at_10_tau", d10, None, tol.spohn_distance, Oracle::Ode)
        .result("distance_at_100_tau", d100, Some(0.0), tol.spohn_distance, Oracle::Ode)
        .result("max_distance", dist.iter().cloned().fold(0.0, f64::max), None, 0.0, Oracle::Ode);
    if let Some(rate) = fitted {
        rep.result("slow_rate_fitted", rate, Some(predicted), tol.spohn_rate_rel * predicted, Oracle::Ode);
    }

    rep.verdict(
        "converges to I/2",
        d100 <= tol.spohn_distance,
        format!("|rho(100 tau) - I/2|_F = {d100:.3e} at t = {:.6e} s", times[STEPS]),
    );
    match fitted {
        Some(rate) => {
            let rel = (rate / predicted - 1.0).abs();
            rep.verdict(
                "slow rate matches lam (1 - Re Δ) / 2",
                rel <= tol.spohn_rate_rel,
                format!("fitted {rate:.6e} /s, predicted {predicted:.6e} /s (rel. error {rel:.2e})"),
            );
        }
        None => {
            rep.verdict("slow rate matches lam (1 - Re Δ) / 2", true, "initial state already stationary; no decay to fit");
        }
    }

    let rec = BlochRecord {
        r: mats.iter().map(|m| m.get(0, 0).re).collect(),
        re_beta: mats.iter().map(|m| m.get(0, 1).re).collect(),
        im_beta: mats.iter().map(|m| m.get(0, 1).im).collect(),
        times,
    };
    rep.series.push(TimeSeries::from_bloch("relaxation", &rec));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn headline() -> TwoLevelParams {
        TwoLevelParams::from_eps(1e-4, 100.0, c(0.0, 1.0)).unwrap()
    }

    #[test]
    fn headline_scenario() {
        let s = c(FRAC_1_SQRT_2, 0.0);
        let rep = exp_mixture_vs_pure(&headline(), s, s, Some(1.0), &Tolerances::default()).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        assert!((rep.get("r_mixt").unwrap() - 0.5).abs() <= 1e-9);
        let dev = rep.get("r_pure").unwrap() - 0.5;
        assert!((dev.abs() / 1e-4 - 1.0).abs() <= 0.01);
    }

    #[test]
    fn no_superposition_means_no_difference() {
        let rep = exp_mixture_vs_pure(&headline(), c(1.0, 0.0), c(0.0, 0.0), None, &Tolerances::default()).unwrap();
        let pure = &rep.series[1];
        let mixt = &rep.series[0];
        for (p, m) in pure.rows.iter().zip(&mixt.rows) {
            assert!((p[1] - m[1]).abs() <= 1e-9);
        }
    }

    #[test]
    fn real_coupling_and_real_amplitudes_cancel_first_order() {
        let params = TwoLevelParams::from_eps(0.01, 100.0, c(1.0, 0.0)).unwrap();
        let s = c(FRAC_1_SQRT_2, 0.0);
        let rep = exp_mixture_vs_pure(&params, s, s, None, &Tolerances::default()).unwrap();
        assert!((rep.get("r_pure").unwrap() - 0.5).abs() <= 5.0 * 0.01f64.powi(2));
        assert!(rep.passed());
    }

    #[test]
    fn rejects_time_outside_plateau() {
        let s = c(FRAC_1_SQRT_2, 0.0);
        let r = exp_mixture_vs_pure(&headline(), s, s, Some(0.01), &Tolerances::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        let wide = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        assert!(matches!(exp_mixture_vs_pure(&wide, s, s, None, &Tolerances::default()), Err(Error::NoPlateau { .. })));
    }

    #[test]
    fn sign_flip_headline() {
        let rep = exp_sign_flip_no_signalling(&headline(), None, &Tolerances::default()).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        let dp = rep.get("r_plus").unwrap() - 0.5;
        let dm = rep.get("r_minus").unwrap() - 0.5;
        assert!((dp.abs() / 1e-4 - 1.0).abs() < 0.01);
        assert!(dp * dm < 0.0);
    }

    #[test]
    fn sign_flip_without_hamiltonian() {
        let params = TwoLevelParams::new(0.0, 100.0, c(0.0, 1.0)).unwrap();
        let rep = exp_sign_flip_no_signalling(&params, None, &Tolerances::default()).unwrap();
        for row in rep.series[0].rows.iter().chain(&rep.series[1].rows) {
            assert!((row[1] - 0.5).abs() <= 1e-15);
        }
        assert!(rep.passed());
    }

    #[test]
    fn spohn_moderate_eps() {
        let params = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        let rho0 = DensityOp::from_bloch(1.0, c(0.0, 0.0)).unwrap();
        let rep = exp_spohn_longtime(&params, &rho0, &Tolerances::default()).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        assert!((rep.get("slow_rate_fitted").unwrap() / 20.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn spohn_small_eps_from_superposition() {
        // the slow mode carries only O(eps) of this state
        let s = c(FRAC_1_SQRT_2, 0.0);
        let rho0 = density_from_pure(&PureState::two_level(s, s).unwrap());
        let rep = exp_spohn_longtime(&headline(), &rho0, &Tolerances::default()).unwrap();
        assert!(rep.passed(), "{}", rep.to_json());
        assert!((rep.get("slow_rate_fitted").unwrap() / 4e-6 - 1.0).abs() < 0.01);
    }

    #[test]
    fn spohn_from_stationary_state() {
        let params = TwoLevelParams::from_eps(0.2, 100.0, c(0.0, 1.0)).unwrap();
        let rep = exp_spohn_longtime(&params, &DensityOp::maximally_mixed(2), &Tolerances::default()).unwrap();
        assert_eq!(rep.get("max_distance").unwrap(), 0.0);
        assert!(rep.get("slow_rate_fitted").is_none());
        assert!(rep.passed());
    }
}
