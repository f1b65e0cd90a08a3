use std::f64::consts::FRAC_1_SQRT_2;

use dynred_core::op::{density_from_pure, PureState, C64};
use dynred_core::semigroup::{evolve_master, TwoLevelParams};
use dynred_core::unraveling::{run_ensemble, run_trajectory, InitialState};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn ensemble_is_unbiased_at_moderate_eps() {
    let s = c(FRAC_1_SQRT_2, 0.0);
    let psi = PureState::two_level(s, s).unwrap();
    let grid: Vec<f64> = (0..20).map(|k| 0.3 * k as f64 / 19.0).collect();
    let p = TwoLevelParams::from_eps(0.05, 100.0, C64::from_polar(1.0, 0.4)).unwrap();
    let spec = p.reduction();
    let ens = run_ensemble(&InitialState::Pure(psi.clone()), &spec, &grid, 20_000, 99).unwrap();
    let ode = evolve_master(&density_from_pure(&psi), &spec, &grid).unwrap();
    for k in 0..grid.len() {
        for i in 0..2 {
            for j in 0..2 {
                let d = ens.mean_rho[k].mat().get(i, j) - ode.states[k].mat().get(i, j);
                let se = ens.std_err[k].get(i, j);
                assert!(d.re.abs() <= 4.0 * se.re + 1e-12, "t={} ({i},{j}) re", grid[k]);
                assert!(d.im.abs() <= 4.0 * se.im + 1e-12, "t={} ({i},{j}) im", grid[k]);
            }
        }
        assert!((ens.mean_rho[k].mat().trace().re - 1.0).abs() <= 1e-12);
    }
    assert!((ens.outcome_freq.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
}

#[test]
fn stored_states_are_normalized_and_in_range() {
    let p = TwoLevelParams::from_eps(0.3, 50.0, c(0.0, 1.0)).unwrap();
    let spec = p.reduction();
    let psi = PureState::two_level(c(0.6, 0.0), c(0.0, 0.8)).unwrap();
    for seed in 0..50 {
        let tr = run_trajectory(&psi, &spec, 1.0, seed).unwrap();
        let mut last = f64::NEG_INFINITY;
        for ev in &tr.events {
            assert!(ev.time > last);
            last = ev.time;
            assert!((ev.state.norm() - 1.0).abs() <= 1e-10);
            let q = &spec.family().projectors()[ev.outcome];
            let projected = q.apply(ev.state.amplitudes());
            assert!((projected - ev.state.amplitudes()).norm() <= 1e-10);
        }
        for s in &tr.sampled_states {
            assert!((s.norm() - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn first_jumps_are_exponential() {
    let lam = 1e7;
    let spec = TwoLevelParams::new(0.0, lam, c(1.0, 0.0)).unwrap().reduction();
    let psi = PureState::two_level(c(0.7f64.sqrt(), 0.0), c(0.3f64.sqrt(), 0.0)).unwrap();
    let ens = run_ensemble(&InitialState::Pure(psi), &spec, &[0.0, 1e-5], 20_000, 3).unwrap();
    let jumps: Vec<f64> = ens.first_jumps.iter().map(|t| t.expect("jump before 100/lam")).collect();
    let mean = jumps.iter().sum::<f64>() / jumps.len() as f64;
    // mean of Exp(lam) has standard error 1/(lam sqrt(n))
    assert!((mean * lam - 1.0).abs() <= 4.0 / (jumps.len() as f64).sqrt());
    let early = jumps.iter().filter(|&&t| t < 1e-6).count() as f64 / jumps.len() as f64;
    assert!(early >= 0.9999);
}
