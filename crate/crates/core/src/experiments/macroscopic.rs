use super::{log_grid, log_slope, ExperimentReport, Oracle, TimeSeries, Tolerances};
use crate::error::Result;
use crate::op::{density_from_pure, PureState, C64};
use crate::semigroup::{evolve_master, TwoLevelParams};
use crate::unraveling::{run_ensemble, InitialState};

/// Reduction rate of the macroscopic pointer regime, in 1/s.
pub const MACRO_LAM: f64 = 1e7;
/// Simulated time span, in s.
pub const MACRO_T_END: f64 = 1e-5;
const COLLAPSE_TIME: f64 = 1e-6;

/// Pointer states under fast reduction with `omega = 0`: Born frequencies,
/// first-jump statistics and decay of the off-diagonal element.
pub fn exp_macroscopic(a: C64, b: C64, n_traj: usize, master_seed: u64, tol: &Tolerances) -> Result<ExperimentReport> {
    let psi = PureState::two_level(a, b)?;
    let params = TwoLevelParams::new(0.0, MACRO_LAM, C64::new(1.0, 0.0))?;
    let spec = params.reduction();
    let mut rep = ExperimentReport::new("macroscopic");
    rep.param("lam", MACRO_LAM)
        .param("omega", 0.0)
        .param("t_end", MACRO_T_END)
        .param("a", [a.re, a.im])
        .param("b", [b.re, b.im])
        .param("n_traj", n_traj)
        .param("master_seed", master_seed);

    let grid = log_grid(1e-3 / MACRO_LAM, MACRO_T_END, 50);
    let ens = run_ensemble(&InitialState::Pure(psi.clone()), &spec, &grid, n_traj, master_seed)?;
    let ode = evolve_master(&density_from_pure(&psi), &spec, &grid)?;

    let (pa, pb) = (a.norm_sqr(), b.norm_sqr());
    let n = n_traj as f64;
    let band = tol.born_sigmas * (pa * pb / n).sqrt();
    let f_plus = ens.outcome_freq[0];
    let f_minus = ens.outcome_freq[1];
    let sigma = (pa * pb / n).sqrt();

    let mut jumps: Vec<f64> = ens.first_jumps.iter().flatten().copied().collect();
    jumps.sort_by(f64::total_cmp);
    let median = if jumps.is_empty() {
        f64::INFINITY
    } else {
        let m = jumps.len() / 2;
        if jumps.len() % 2 == 1 { jumps[m] } else { 0.5 * (jumps[m - 1] + jumps[m]) }
    };
    let early = jumps.iter().filter(|&&t| t < COLLAPSE_TIME).count() as f64 / n;

    let ab = a * b.conj();
    let offdiag_err = grid
        .iter()
        .zip(&ode.states)
        .map(|(t, s)| (s.beta() - ab * (-MACRO_LAM * t).exp()).norm())
        .fold(0.0, f64::max);
    // fit where |beta| is well above the integrator's absolute floor
    let fit: Vec<usize> = (1..grid.len()).filter(|&k| ode.states[k].beta().norm() > 1e-6 * ab.norm().max(1e-300)).collect();
    let fitted_rate = (ab.norm() > 0.0 && fit.len() >= 2).then(|| {
        let t: Vec<f64> = fit.iter().map(|&k| grid[k]).collect();
        let y: Vec<f64> = fit.iter().map(|&k| ode.states[k].beta().norm()).collect();
        -log_slope(&t, &y)
    });
    let k_mc = grid.iter().position(|&t| t >= 1.0 / MACRO_LAM).unwrap_or(grid.len() - 1);
    let mc_beta = ens.mean_rho[k_mc].beta();
    let mc_beta_err = ens.std_err[k_mc].get(0, 1);

    rep.result_with_uncertainty("freq_plus", f_plus, sigma, Some(pa), band, Oracle::MonteCarlo)
        .result_with_uncertainty("freq_minus", f_minus, sigma, Some(pb), band, Oracle::MonteCarlo)
        .result("median_first_jump", median, Some(std::f64::consts::LN_2 / MACRO_LAM), 0.1 / MACRO_LAM, Oracle::MonteCarlo)
        .result("fraction_first_jump_before_1us", early, Some(1.0), 1.0 - tol.first_jump_fraction, Oracle::MonteCarlo)
        .result("offdiag_max_error", offdiag_err, Some(0.0), tol.offdiag, Oracle::Ode)
        .result_with_uncertainty(
            "offdiag_re_mc_at_1_over_lam",
            mc_beta.re,
            mc_beta_err.re,
            Some((ab * (-1.0f64).exp()).re),
            4.0 * mc_beta_err.re + 1e-12,
            Oracle::MonteCarlo,
        );
    if let Some(rate) = fitted_rate {
        rep.result("offdiag_decay_rate", rate, Some(MACRO_LAM), 1e-6 * MACRO_LAM, Oracle::Ode);
    }

    let freq_err = (f_plus - pa).abs();
    rep.verdict(
        "Born frequencies",
        if band > 0.0 { freq_err <= band } else { freq_err == 0.0 },
        format!("P+ frequency {f_plus:.6} vs |a|^2 = {pa:.6} (band {band:.4})"),
    );
    rep.verdict(
        "fast collapse",
        early >= tol.first_jump_fraction,
        format!("{:.4}% of trajectories jumped before 1e-6 s; median first jump {median:.3e} s", 100.0 * early),
    );
    rep.verdict(
        "off-diagonal decays as a b* exp(-lam t)",
        offdiag_err <= tol.offdiag,
        format!("max |beta(t) - a b* exp(-lam t)| = {offdiag_err:.3e}"),
    );

    let rec = ode.bloch();
    let r_mc: Vec<f64> = ens.mean_rho.iter().map(|s| s.r()).collect();
    let se: Vec<f64> = ens.std_err.iter().map(|s| s.get(0, 0).re).collect();
    rep.series.push(TimeSeries::from_bloch_with_mc("ensemble", &rec, &r_mc, &se));
    Ok(rep)
}
