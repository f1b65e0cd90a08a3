use std::f64::consts::FRAC_1_SQRT_2;

use super::{ExperimentReport, Oracle, TimeSeries, Tolerances};
use crate::error::{Error, Result};
use crate::op::{interference_term, mixture_expectation, projector_expectation, BranchOverlaps, C64};

/// Sweeps a real environment overlap `<A|B>` over `n_points` values in
/// `[0, 1]` for `alpha = beta = 1/sqrt(2)` and branch overlaps of `1/2`.
pub fn exp_decoherence_demo(n_points: usize, tol: &Tolerances) -> Result<ExperimentReport> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 sweep points, got {n_points}")));
    }
    let alpha = C64::new(FRAC_1_SQRT_2, 0.0);
    let beta = alpha;
    let half = C64::new(0.5, 0.0);
    let o = BranchOverlaps { phi_phi: half, chi_chi: half, phi_chi: half };

    let mut rep = ExperimentReport::new("decoherence");
    rep.param("alpha", [alpha.re, alpha.im]).param("beta", [beta.re, beta.im]).param("overlaps", o).param("n_points", n_points);

    let xs: Vec<f64> = (0..n_points).map(|k| k as f64 / (n_points - 1) as f64).collect();
    let mut values = Vec::with_capacity(n_points);
    let mut rows = Vec::with_capacity(n_points);
    for &x in &xs {
        let env = C64::new(x, 0.0);
        let v = projector_expectation(alpha, beta, &o, env)?;
        rows.push(vec![x, v, interference_term(alpha, beta, &o, env)]);
        values.push(v);
    }
    let mixture = mixture_expectation(alpha, beta, &o);
    let (v0, v1) = (values[0], values[n_points - 1]);
    let nonlinearity = xs.iter().zip(&values).map(|(x, v)| (v - (v0 + x * (v1 - v0))).abs()).fold(0.0, f64::max);
    let full = interference_term(alpha, beta, &o, C64::new(1.0, 0.0));
    let halfway = interference_term(alpha, beta, &o, half);
    let argmax = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap();

    rep.result("value_at_overlap_0", v0, Some(mixture), 0.0, Oracle::Analytic)
        .result("value_at_overlap_1", v1, Some(mixture + full), tol.interference_linearity, Oracle::Analytic)
        .result("mixture_value", mixture, None, 0.0, Oracle::Analytic)
        .result("interference_at_1", full, None, 0.0, Oracle::Analytic)
        .result("interference_at_half", halfway, Some(0.5 * full), tol.interference_linearity, Oracle::Analytic)
        .result("max_nonlinearity", nonlinearity, Some(0.0), tol.interference_linearity, Oracle::Analytic);

    rep.verdict("no interference at zero overlap", v0 == mixture, format!("value {v0} vs mixture {mixture}"));
    rep.verdict(
        "linear in the overlap",
        nonlinearity <= tol.interference_linearity,
        format!("max deviation from the chord = {nonlinearity:.3e}"),
    );
    rep.verdict(
        "interference maximal at overlap 1",
        argmax == n_points - 1 && full > 0.0,
        format!("largest value at overlap {}", xs[argmax]),
    );
    rep.series.push(TimeSeries { name: "sweep".into(), columns: vec!["overlap".into(), "value".into(), "interference".into()], rows });
    Ok(rep)
}
