use std::fmt;

use dynred_core::experiments::{
    exp_decoherence_demo, exp_degenerate_4d, exp_macroscopic, exp_mixture_vs_pure, exp_sign_flip_no_signalling,
    exp_spohn_longtime, ExperimentReport, FourDSpec,
};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum JobError {
    Config(ConfigError),
    Runtime(dynred_core::Error),
}

impl fmt::Display for JobError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => e.fmt(f),
            Self::Runtime(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for JobError {}

impl From<ConfigError> for JobError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<dynred_core::Error> for JobError {
    fn from(e: dynred_core::Error) -> Self {
        Self::Runtime(e)
    }
}

/// Runs the named experiment with the parameters of `cfg`.
pub fn build_report(name: &str, cfg: &RunConfig) -> Result<ExperimentReport, JobError> {
    let tol = &cfg.tolerances;
    Ok(match name {
        "mixture-vs-pure" => {
            let (a, b) = cfg.amplitudes();
            exp_mixture_vs_pure(&cfg.params()?, a, b, cfg.t_eval, tol)?
        }
        "sign-flip" => exp_sign_flip_no_signalling(&cfg.params()?, cfg.t_eval, tol)?,
        "macroscopic" => {
            let (a, b) = cfg.amplitudes();
            exp_macroscopic(a, b, cfg.n_traj, cfg.master_seed, tol)?
        }
        "spohn" => exp_spohn_longtime(&cfg.params()?, &cfg.initial_state()?, tol)?,
        "degenerate-4d" => {
            let spec = cfg.four_d_spec()?;
            let pure = FourDSpec::default_pure();
            let mixt = spec.mixture_of(&pure)?;
            exp_degenerate_4d(&spec, &pure, &mixt, cfg.t_eval, tol)?
        }
        "decoherence" => exp_decoherence_demo(cfg.sweep_points, tol)?,
        other => return Err(ConfigError::Invalid(format!("unknown experiment `{other}`")).into()),
    })
}
