use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynred_core::experiments::{TimeSeries, EXPERIMENTS};
use dynred_core::semigroup::{analytic_two_level, evolve_master, BlochRecord};
use dynred_core::unraveling::{run_ensemble, InitialState, RNG_ALGORITHM};
use dynred_core::PureState;

use dynred_cli::config::{parse_config_for, ConfigError, InitialKind, RunConfig};
use dynred_cli::jobs::{build_report, JobError};

const OUT_ENV: &str = "DYNRED_OUT_DIR";
const DEFAULT_OUT: &str = "dynred-out";

#[derive(Parser)]
#[command(name = "dynred", version, about = "Reduction-semigroup simulations of a two-level pointer model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the master equation and write `evolve.csv`.
    Evolve(RunArgs),
    /// Evaluate the closed-form two-level solution and write `analytic.csv`.
    Analytic(RunArgs),
    /// Jump-process ensemble next to the master equation, `trajectories.csv`.
    Trajectories(RunArgs),
    /// Run a named scenario and write its JSON report and CSV series.
    Experiment {
        #[arg(value_parser = EXPERIMENTS.map(|(n, _)| n))]
        name: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// List the named scenarios.
    List,
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    lam: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    #[arg(long)]
    t_count: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    t_eval: Option<f64>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $DYNRED_OUT_DIR, then `dynred-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<dynred_core::Error> for Failure {
    fn from(e: dynred_core::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

impl From<JobError> for Failure {
    fn from(e: JobError) -> Self {
        match e {
            JobError::Config(c) => Self::Config(c),
            JobError::Runtime(r) => Self::Runtime(r.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Runtime(format!("i/o: {e}"))
    }
}

fn load(args: &RunArgs, job: &str) -> Result<(RunConfig, PathBuf), Failure> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config_for(&text, Some(job))?;
    if let Some(v) = args.lam {
        cfg.lam = v;
    }
    if let Some(v) = args.eps {
        cfg.eps = v;
    }
    if let Some(v) = args.t_start {
        cfg.t_start = v;
    }
    if let Some(v) = args.t_end {
        cfg.t_end = v;
    }
    if let Some(v) = args.t_count {
        cfg.t_count = v;
    }
    if let Some(v) = args.t_eval {
        cfg.t_eval = Some(v);
    }
    if let Some(v) = args.n_traj {
        cfg.n_traj = v;
    }
    if let Some(v) = args.seed {
        cfg.master_seed = v;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.output_dir = Some(out.to_string_lossy().into_owned());
    cfg.validate()?;
    fs::create_dir_all(&out)?;
    fs::write(out.join(format!("{job}_config.toml")), cfg.to_toml())?;
    Ok((cfg, out))
}

fn write_series(dir: &Path, file: &str, series: &TimeSeries) -> Result<PathBuf, Failure> {
    let path = dir.join(file);
    series.write_csv(BufWriter::new(fs::File::create(&path)?))?;
    Ok(path)
}

fn evolve(args: &RunArgs) -> Result<bool, Failure> {
    let (cfg, out) = load(args, "evolve")?;
    let grid = cfg.t_grid();
    let ev = evolve_master(&cfg.initial_state()?, &cfg.params()?.reduction(), &grid)?;
    let path = write_series(&out, "evolve.csv", &TimeSeries::from_bloch("evolve", &ev.bloch()))?;
    let last = ev.last();
    println!(
        "evolve: {} points to t = {:e} s; r = {:.12}, beta = {:.6e}{:+.6e}i; {} steps ({} rejected)",
        grid.len(),
        cfg.t_end,
        last.r(),
        last.beta().re,
        last.beta().im,
        ev.stats.accepted,
        ev.stats.rejected
    );
    println!("wrote {}", path.display());
    Ok(true)
}

fn analytic(args: &RunArgs) -> Result<bool, Failure> {
    let (cfg, out) = load(args, "analytic")?;
    let params = cfg.params()?;
    let rho0 = cfg.initial_state()?;
    let grid = cfg.t_grid();
    let mut rec = BlochRecord { times: grid.clone(), r: vec![], re_beta: vec![], im_beta: vec![] };
    for &t in &grid {
        let (r, b) = analytic_two_level(rho0.r(), rho0.beta(), &params, t)?;
        rec.r.push(r);
        rec.re_beta.push(b.re);
        rec.im_beta.push(b.im);
    }
    let path = write_series(&out, "analytic.csv", &TimeSeries::from_bloch("analytic", &rec))?;
    println!(
        "analytic: {} points to t = {:e} s; slow rate {:.6e} /s, fast rate {:.6e} /s",
        grid.len(),
        cfg.t_end,
        params.slow_rate(),
        params.fast_rate()
    );
    println!("wrote {}", path.display());
    Ok(true)
}

fn trajectories(args: &RunArgs) -> Result<bool, Failure> {
    let (cfg, out) = load(args, "trajectories")?;
    let spec = cfg.params()?.reduction();
    let grid = cfg.t_grid();
    let rho0 = cfg.initial_state()?;
    let init = match cfg.initial {
        InitialKind::Pure => {
            let (a, b) = cfg.amplitudes();
            InitialState::Pure(PureState::two_level(a, b)?)
        }
        InitialKind::Mixture => InitialState::Mixed(rho0.clone()),
    };
    let ens = run_ensemble(&init, &spec, &grid, cfg.n_traj, cfg.master_seed)?;
    let ode = evolve_master(&rho0, &spec, &grid)?;
    let r_mc: Vec<f64> = ens.mean_rho.iter().map(|s| s.r()).collect();
    let se: Vec<f64> = ens.std_err.iter().map(|s| s.get(0, 0).re).collect();
    let worst = (0..grid.len())
        .filter(|&k| se[k] > 0.0)
        .map(|k| (r_mc[k] - ode.states[k].r()).abs() / se[k])
        .fold(0.0, f64::max);
    let series = TimeSeries::from_bloch_with_mc("trajectories", &ode.bloch(), &r_mc, &se);
    let path = write_series(&out, "trajectories.csv", &series)?;
    println!("trajectories: {} runs, master_seed {}, rng {RNG_ALGORITHM}", cfg.n_traj, cfg.master_seed);
    for (label, f) in ens.outcome_labels.iter().zip(&ens.outcome_freq) {
        println!("  outcome {label}: {f:.6}");
    }
    println!("  max |r_mc - r_ode| = {worst:.2} standard errors");
    println!("wrote {}", path.display());
    Ok(true)
}

fn run_experiment(name: &str, args: &RunArgs) -> Result<bool, Failure> {
    let (cfg, out) = load(args, name)?;
    let mut rep = build_report(name, &cfg)?;
    let path = rep.write(&out)?;
    println!("experiment {name}");
    for r in &rep.results {
        match r.expected {
            Some(e) => println!("  {:<32} {:>24.16e}  (expected {e:.6e}, tol {:.1e})", r.label, r.value, r.tolerance),
            None => println!("  {:<32} {:>24.16e}", r.label, r.value),
        }
    }
    for v in &rep.verdicts {
        println!("[{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    println!("wrote {}", path.display());
    Ok(rep.passed())
}

fn list() {
    for (name, what) in EXPERIMENTS {
        println!("{name:<16} {what}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    let result = match &cli.command {
        Command::Evolve(a) => evolve(a),
        Command::Analytic(a) => analytic(a),
        Command::Trajectories(a) => trajectories(a),
        Command::Experiment { name, args } => run_experiment(name, args),
        Command::List => {
            list();
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
