//! Adaptive Dormand–Prince 5(4) integrator for real state vectors.
//!
//! Steps are clipped so that every requested output time is hit exactly;
//! no interpolation is involved.

use crate::error::{Error, Result};

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integration statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

/// Integrates `dy/dt = f(t, y)` from `times[0]` and returns the state at
/// every entry of `times` (which must be strictly increasing).
pub fn integrate<F>(mut f: F, y0: &[f64], times: &[f64], opts: &OdeOptions) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTimeGrid);
    }
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.to_vec());
    let mut stats = OdeStats::default();
    if times.len() == 1 {
        return Ok((out, stats));
    }

    let mut t = times[0];
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k1);

    let span = times[times.len() - 1] - t;
    let mut h = initial_step(&y, &k1, opts).min(opts.h_max).min(span);
    let mut steps = 0usize;

    for &t_target in &times[1..] {
        while t < t_target {
            let remaining = t_target - t;
            let mut last = false;
            let mut h_try = h.min(opts.h_max);
            // Absorb slivers so no step lands a rounding error short of the target.
            if h_try >= remaining || remaining - h_try < 0.01 * h_try {
                h_try = remaining;
                last = true;
            }
            if h_try <= 16.0 * f64::EPSILON * t.abs().max(span) {
                return Err(Error::StepUnderflow { t, h: h_try });
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::TooManySteps(opts.max_steps));
            }

            axpy(&mut ytmp, &y, h_try, &[(A21, &k1)]);
            f(t + C2 * h_try, &ytmp, &mut k2);
            axpy(&mut ytmp, &y, h_try, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * h_try, &ytmp, &mut k3);
            axpy(&mut ytmp, &y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * h_try, &ytmp, &mut k4);
            axpy(&mut ytmp, &y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * h_try, &ytmp, &mut k5);
            axpy(&mut ytmp, &y, h_try, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            f(t + h_try, &ytmp, &mut k6);
            axpy(&mut ynew, &y, h_try, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            f(t + h_try, &ynew, &mut k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h_try * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n.max(1) as f64).sqrt();

            if err <= 1.0 {
                t = if last { t_target } else { t + h_try };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                stats.accepted += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // Keep the proposal from the unclipped step when the grid
                // forced a shorter one.
                h = if last { h.max(h_try * fac) } else { h_try * fac };
            } else {
                stats.rejected += 1;
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn initial_step(y: &[f64], dy: &[f64], opts: &OdeOptions) -> f64 {
    let n = y.len().max(1) as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(dy) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.5).collect();
        let (ys, _) = integrate(|_, y, dy| dy[0] = -2.0 * y[0], &[1.0], &times, &OdeOptions::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-2.0 * t).exp()).abs() < 1e-11);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let times = [0.0, 1.0, 10.0, 30.0];
        let opts = OdeOptions { h_max: 0.05, ..Default::default() };
        let (ys, stats) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            &times,
            &opts,
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-9, "t={t}: {}", y[0] - t.cos());
        }
        assert!(stats.accepted >= 600);
    }

    #[test]
    fn rejects_bad_grid() {
        let r = integrate(|_, _, _| {}, &[1.0], &[0.0, 1.0, 1.0], &OdeOptions::default());
        assert_eq!(r.unwrap_err(), Error::InvalidTimeGrid);
    }

    #[test]
    fn step_limit() {
        let opts = OdeOptions { h_max: 1e-3, max_steps: 10, ..Default::default() };
        let r = integrate(|_, y, dy| dy[0] = y[0], &[1.0], &[0.0, 1.0], &opts);
        assert_eq!(r.unwrap_err(), Error::TooManySteps(10));
    }
}
