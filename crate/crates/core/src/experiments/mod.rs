//! End-to-end scenarios. Each produces an [`ExperimentReport`] with every
//! numeric result tagged by tolerance and oracle, a list of verdicts and
//! optional time series that [`ExperimentReport::write`] turns into CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::semigroup::{regime_window, BlochRecord, TwoLevelParams};

mod decoherence;
mod four_d;
mod macroscopic;
mod two_level;

pub use decoherence::exp_decoherence_demo;
pub use four_d::{exp_degenerate_4d, FourDCoupling, FourDSpec};
pub use macroscopic::{exp_macroscopic, MACRO_LAM, MACRO_T_END};
pub use two_level::{exp_mixture_vs_pure, exp_sign_flip_no_signalling, exp_spohn_longtime};

pub const SCHEMA_VERSION: u32 = 1;

/// Names accepted by `experiment <name>`.
pub const EXPERIMENTS: [(&str, &str); 6] = [
    ("mixture-vs-pure", "plateau discrimination between a superposition and the matching mixture"),
    ("sign-flip", "opposite deviations of the +/- superpositions and decomposition invariance"),
    ("macroscopic", "fast collapse with Born-rule frequencies at lam = 1e7 /s, omega = 0"),
    ("spohn", "long-time convergence to I/2 and the slow decay rate"),
    ("degenerate-4d", "reduction onto two 2D manifolds: weights and conditional states"),
    ("decoherence", "projector expectation versus environment overlap"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Oracle {
    Analytic,
    Ode,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarResult {
    pub label: String,
    pub value: f64,
    pub uncertainty: Option<f64>,
    pub expected: Option<f64>,
    pub tolerance: f64,
    pub oracle: Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Tabular series written to CSV next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    /// `t,r,re_beta,im_beta`
    pub fn from_bloch(name: &str, rec: &BlochRecord) -> Self {
        let rows = (0..rec.len()).map(|k| vec![rec.times[k], rec.r[k], rec.re_beta[k], rec.im_beta[k]]).collect();
        Self { name: name.into(), columns: cols(&["t", "r", "re_beta", "im_beta"]), rows }
    }

    /// `t,r,re_beta,im_beta,r_mc,stderr_r`
    pub fn from_bloch_with_mc(name: &str, rec: &BlochRecord, r_mc: &[f64], stderr_r: &[f64]) -> Self {
        let rows = (0..rec.len())
            .map(|k| vec![rec.times[k], rec.r[k], rec.re_beta[k], rec.im_beta[k], r_mc[k], stderr_r[k]])
            .collect();
        Self { name: name.into(), columns: cols(&["t", "r", "re_beta", "im_beta", "r_mc", "stderr_r"]), rows }
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format_f64(*x)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRef {
    pub name: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub name: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub results: Vec<ScalarResult>,
    pub series_files: Vec<SeriesRef>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub series: Vec<TimeSeries>,
}

impl ExperimentReport {
    pub fn new(name: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            parameters: BTreeMap::new(),
            results: Vec::new(),
            series_files: Vec::new(),
            verdicts: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(key.into(), serde_json::to_value(value).expect("serializable"));
        self
    }

    pub fn result(&mut self, label: &str, value: f64, expected: Option<f64>, tolerance: f64, oracle: Oracle) -> &mut Self {
        self.results.push(ScalarResult { label: label.into(), value, uncertainty: None, expected, tolerance, oracle });
        self
    }

    pub fn result_with_uncertainty(
        &mut self,
        label: &str,
        value: f64,
        uncertainty: f64,
        expected: Option<f64>,
        tolerance: f64,
        oracle: Oracle,
    ) -> &mut Self {
        self.results.push(ScalarResult {
            label: label.into(),
            value,
            uncertainty: Some(uncertainty),
            expected,
            tolerance,
            oracle,
        });
        self
    }

    pub fn verdict(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> &mut Self {
        self.verdicts.push(Verdict { name: name.into(), passed, detail: detail.into() });
        self
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.results.iter().find(|r| r.label == label).map(|r| r.value)
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<name>_<series>.csv` for each series, then `<name>.json`.
    /// Returns the path of the JSON file.
    pub fn write(&mut self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        self.series_files.clear();
        for s in &self.series {
            let file = format!("{}_{}.csv", self.name, s.name);
            s.write_csv(io::BufWriter::new(fs::File::create(dir.join(&file))?))?;
            self.series_files.push(SeriesRef { name: s.name.clone(), path: file });
        }
        let path = dir.join(format!("{}.json", self.name));
        let mut f = fs::File::create(&path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(path)
    }
}

/// Verdict thresholds shared by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `|r_Mixt - |a|^2|`
    pub r_mixt: f64,
    /// Multiple of `eps^2` allowed between the pure-state deviation and
    /// the first-order prediction.
    pub plateau_eps2: f64,
    /// `(r+ - 1/2) + (r- - 1/2)` and `(r+ + r-)/2 - r_Mixt`
    pub sign_flip: f64,
    /// Evolved decompositions of the same initial operator.
    pub decomposition: f64,
    /// Half-width of the Born-frequency band, in binomial standard deviations.
    pub born_sigmas: f64,
    /// Minimum fraction of trajectories with a first jump before `10/lam`.
    pub first_jump_fraction: f64,
    /// Integrated off-diagonal versus `a b* e^{-lam t}`.
    pub offdiag: f64,
    pub spohn_distance: f64,
    pub spohn_rate_rel: f64,
    pub weight_sum: f64,
    pub weight_drift: f64,
    pub initial_weights: f64,
    pub conditional_distance: f64,
    pub interference_linearity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            r_mixt: 1e-8,
            plateau_eps2: 5.0,
            sign_flip: 1e-9,
            decomposition: 1e-12,
            born_sigmas: 3.0,
            first_jump_fraction: 0.999,
            offdiag: 1e-10,
            spohn_distance: 1e-6,
            spohn_rate_rel: 0.01,
            weight_sum: 1e-9,
            weight_drift: 1e-9,
            initial_weights: 1e-12,
            conditional_distance: 1e-6,
            interference_linearity: 1e-12,
        }
    }
}

/// `max(10 t_min, 1 s)`, pulled back to the geometric middle of the
/// plateau when that would reach `t_max`.
pub fn default_t_eval(params: &TwoLevelParams) -> Result<f64> {
    let (t_min, t_max) = regime_window(params)?;
    let t = (10.0 * t_min).max(1.0);
    Ok(if t < t_max { t } else { (t_min * t_max).sqrt() })
}

pub(crate) fn log_grid(t_first: f64, t_last: f64, n: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend((0..n).map(|k| t_first * (t_last / t_first).powf(k as f64 / (n - 1).max(1) as f64)));
    g.dedup();
    g
}

/// Least-squares slope of `ln y` against `t`.
pub(crate) fn log_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - my)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_format_has_17_significant_digits() {
        let s = TimeSeries { name: "x".into(), columns: cols(&["t", "r"]), rows: vec![vec![0.1, 1.0 / 3.0]] };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,r\n1.0000000000000001e-1,3.3333333333333331e-1\n");
        let back: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }

    #[test]
    fn slope_of_exponential() {
        let t: Vec<f64> = (0..10).map(|k| k as f64 * 0.3).collect();
        let y: Vec<f64> = t.iter().map(|x| 2.0 * (-1.7 * x).exp()).collect();
        assert!((log_slope(&t, &y) + 1.7).abs() < 1e-12);
    }

    #[test]
    fn default_evaluation_time() {
        use crate::op::C64;
        let p = TwoLevelParams::from_eps(1e-4, 100.0, C64::new(0.0, 1.0)).unwrap();
        assert_eq!(default_t_eval(&p).unwrap(), 1.0);
        let narrow = TwoLevelParams::from_eps(0.02, 100.0, C64::new(0.0, 1.0)).unwrap();
        let (lo, hi) = regime_window(&narrow).unwrap();
        let t = default_t_eval(&narrow).unwrap();
        assert!(lo < t && t < hi);
    }
}
