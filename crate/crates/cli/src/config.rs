//! Run configuration: a flat TOML document with optional per-job sections.
//!
//! A section named after the selected job (for example `[spohn]`) overrides
//! top-level keys; sections of other jobs are ignored. Every other unknown
//! key is rejected.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use dynred_core::experiments::{FourDCoupling, FourDSpec, Tolerances, EXPERIMENTS};
use dynred_core::semigroup::TwoLevelParams;
use dynred_core::{DensityOp, Error as CoreError, PureState, C64};
use serde::{Deserialize, Serialize};

/// Jobs besides the named experiments.
pub const JOBS: [&str; 3] = ["evolve", "analytic", "trajectories"];

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Parse(m) => write!(f, "config parse error: {m}"),
            Self::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<CoreError> for ConfigError {
    fn from(e: CoreError) -> Self {
        Self::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// `a |1> + b |2>`
    Pure,
    /// `diag(|a|^2, |b|^2)`
    Mixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourDConfig {
    pub h4_seed: u64,
    /// `||H4|| / lam`
    pub eps: f64,
    pub block_diagonal: bool,
}

impl Default for FourDConfig {
    fn default() -> Self {
        Self { h4_seed: 1, eps: 0.05, block_diagonal: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub lam: f64,
    pub eps: f64,
    pub coupling_re: f64,
    pub coupling_im: f64,
    pub a_mod: f64,
    pub a_phase: f64,
    pub b_mod: f64,
    pub b_phase: f64,
    pub initial: InitialKind,
    pub t_start: f64,
    pub t_end: f64,
    pub t_count: usize,
    pub t_spacing: Spacing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_eval: Option<f64>,
    pub n_traj: usize,
    pub master_seed: u64,
    pub sweep_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub four_d: FourDConfig,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            lam: 100.0,
            eps: 1e-4,
            coupling_re: 0.0,
            coupling_im: 1.0,
            a_mod: FRAC_1_SQRT_2,
            a_phase: 0.0,
            b_mod: FRAC_1_SQRT_2,
            b_phase: 0.0,
            initial: InitialKind::Pure,
            t_start: 0.0,
            t_end: 1.0,
            t_count: 101,
            t_spacing: Spacing::Linear,
            t_eval: None,
            n_traj: 10_000,
            master_seed: 0,
            sweep_points: 11,
            output_dir: None,
            four_d: FourDConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

fn is_job(name: &str) -> bool {
    JOBS.contains(&name) || EXPERIMENTS.iter().any(|(n, _)| *n == name)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_for(text, None)
}

/// Like [`parse_config`], with the job name forced to `job` when given.
pub fn parse_config_for(text: &str, job: Option<&str>) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let selected = match job {
        Some(j) => Some(j.to_string()),
        None => match table.get("experiment") {
            Some(toml::Value::String(s)) => Some(s.clone()),
            Some(other) => return Err(ConfigError::Parse(format!("key `experiment`: expected a string, got {}", other.type_str()))),
            None => None,
        },
    };
    let sections: Vec<String> = table.keys().filter(|k| is_job(k)).cloned().collect();
    let mut overrides = None;
    for name in sections {
        let value = table.remove(&name).expect("key listed above");
        if selected.as_deref() == Some(name.as_str()) {
            match value {
                toml::Value::Table(t) => overrides = Some(t),
                other => {
                    return Err(ConfigError::Parse(format!("`{name}` must be a section, got {}", other.type_str())))
                }
            }
        }
    }
    if let Some(t) = overrides {
        for (k, v) in t {
            table.insert(k, v);
        }
    }
    if let Some(s) = &selected {
        table.insert("experiment".into(), toml::Value::String(s.clone()));
    }
    let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let Some(e) = &self.experiment {
            if !is_job(e) {
                return bad(format!("unknown experiment `{e}` (see `dynred list`)"));
            }
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        let params = self.params()?;
        let (a, b) = self.amplitudes();
        let n2 = a.norm_sqr() + b.norm_sqr();
        if !((n2 - 1.0).abs() <= 1e-12) {
            return bad(format!("amplitudes must satisfy a_mod^2 + b_mod^2 = 1, got {n2}"));
        }
        if !(self.t_start.is_finite() && self.t_start >= 0.0) {
            return bad(format!("t_start must be >= 0, got {}", self.t_start));
        }
        if !(self.t_end.is_finite() && self.t_end > self.t_start) {
            return bad(format!("t_end must exceed t_start, got {} <= {}", self.t_end, self.t_start));
        }
        if self.t_count < 2 {
            return bad(format!("t_count must be >= 2, got {}", self.t_count));
        }
        if self.t_spacing == Spacing::Log && self.t_start <= 0.0 {
            return bad("log spacing needs t_start > 0".into());
        }
        if let Some(t) = self.t_eval {
            if !(t.is_finite() && t > 0.0) {
                return bad(format!("t_eval must be > 0, got {t}"));
            }
        }
        if self.n_traj == 0 {
            return bad("n_traj must be >= 1".into());
        }
        if self.master_seed > i64::MAX as u64 {
            return bad(format!("master_seed must be <= {}, got {}", i64::MAX, self.master_seed));
        }
        if self.four_d.h4_seed > i64::MAX as u64 {
            return bad(format!("four_d.h4_seed must be <= {}", i64::MAX));
        }
        if self.sweep_points < 2 {
            return bad(format!("sweep_points must be >= 2, got {}", self.sweep_points));
        }
        if !(self.four_d.eps.is_finite() && self.four_d.eps >= 0.0) {
            return bad(format!("four_d.eps must be >= 0, got {}", self.four_d.eps));
        }
        if self.experiment.as_deref() == Some("analytic") && params.delta().norm() <= 1e-12 {
            return Err(CoreError::DegenerateDelta.into());
        }
        Ok(())
    }

    pub fn coupling(&self) -> C64 {
        C64::new(self.coupling_re, self.coupling_im)
    }

    pub fn params(&self) -> Result<TwoLevelParams, ConfigError> {
        Ok(TwoLevelParams::from_eps(self.eps, self.lam, self.coupling())?)
    }

    pub fn amplitudes(&self) -> (C64, C64) {
        (C64::from_polar(self.a_mod, self.a_phase), C64::from_polar(self.b_mod, self.b_phase))
    }

    pub fn initial_state(&self) -> Result<DensityOp, ConfigError> {
        let (a, b) = self.amplitudes();
        Ok(match self.initial {
            InitialKind::Pure => dynred_core::op::density_from_pure(&PureState::two_level(a, b)?),
            InitialKind::Mixture => DensityOp::from_bloch(a.norm_sqr(), C64::new(0.0, 0.0))?,
        })
    }

    /// Exactly `t_count` times from `t_start` to `t_end`.
    pub fn t_grid(&self) -> Vec<f64> {
        let n = self.t_count;
        let mut g: Vec<f64> = (0..n)
            .map(|k| {
                let f = k as f64 / (n - 1) as f64;
                match self.t_spacing {
                    Spacing::Linear => self.t_start + (self.t_end - self.t_start) * f,
                    Spacing::Log => self.t_start * (self.t_end / self.t_start).powf(f),
                }
            })
            .collect();
        g[n - 1] = self.t_end;
        g
    }

    pub fn four_d_spec(&self) -> Result<FourDSpec, ConfigError> {
        let coupling = if self.four_d.block_diagonal { FourDCoupling::BlockDiagonal } else { FourDCoupling::Generic };
        Ok(FourDSpec::seeded(self.four_d.h4_seed, self.four_d.eps, self.lam, coupling)?)
    }

    /// Fully resolved document; [`parse_config`] reads it back unchanged.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
