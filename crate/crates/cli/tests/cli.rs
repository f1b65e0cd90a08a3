use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dynred(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynred"))
        .args(args)
        .current_dir(dir)
        .env_remove("DYNRED_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn headline_experiment_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dynred(&["experiment", "mixture-vs-pure", "--out", "out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("out/mixture-vs-pure.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let get = |label: &str| {
        report["results"].as_array().unwrap().iter().find(|r| r["label"] == label).unwrap()["value"].as_f64().unwrap()
    };
    assert!((get("r_mixt") - 0.5).abs() <= 1e-9);
    assert!(((get("r_pure") - 0.5).abs() / 1e-4 - 1.0).abs() <= 0.01);
    for r in report["results"].as_array().unwrap() {
        assert!(r["tolerance"].is_number());
        assert!(["analytic", "ode", "monte-carlo"].contains(&r["oracle"].as_str().unwrap()));
    }
    let (header, rows) = read_csv(&tmp.path().join("out/mixture-vs-pure_pure.csv"));
    assert_eq!(header, "t,r,re_beta,im_beta");
    assert!(!rows.is_empty());
}

#[test]
fn evolve_writes_fixed_rows_with_decaying_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dynred(&["evolve", "--lam", "100", "--eps", "0.2", "--t-end", "1", "--out", "."], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&tmp.path().join("evolve.csv"));
    assert_eq!(header, "t,r,re_beta,im_beta");
    assert_eq!(rows.len(), 101);
    let env: Vec<f64> = rows.iter().map(|r| r[2].hypot(r[3])).collect();
    // |beta| passes through zero once; its successive local maxima shrink
    let peaks: Vec<f64> = (0..env.len())
        .filter(|&k| (k == 0 || env[k] >= env[k - 1]) && (k + 1 == env.len() || env[k] >= env[k + 1]))
        .map(|k| env[k])
        .collect();
    assert!(peaks.len() >= 2);
    assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
    assert!(env[100] < 1e-3 * env[0]);
}

#[test]
fn row_count_follows_t_count() {
    let tmp = tempfile::tempdir().unwrap();
    for n in ["2", "17"] {
        let o = dynred(&["analytic", "--eps", "0.1", "--t-count", n, "--out", "."], tmp.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let (_, rows) = read_csv(&tmp.path().join("analytic.csv"));
        assert_eq!(rows.len(), n.parse::<usize>().unwrap());
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dynred(&["frobnicate"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
    let o = dynred(&["evolve", "--lam", "-1"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lam must be > 0"));
    let o = dynred(&["analytic", "--eps", "0.25"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Δ=0 degenerate; use ODE path"));
    fs::write(tmp.path().join("bad.toml"), "lam = 100\nbogus_key = 1\n").unwrap();
    let o = dynred(&["evolve", "--config", "bad.toml"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bogus_key"));
    let o = dynred(&["experiment", "no-such-thing"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_verdict_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("strict.toml"), "[tolerances]\nsign_flip = 1e-30\n").unwrap();
    let o = dynred(&["experiment", "sign-flip", "--config", "strict.toml", "--out", "."], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));
}

#[test]
fn config_echo_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "experiment = \"spohn\"\nlam = 50.0\n[spohn]\neps = 0.2\n[tolerances]\nspohn_rate_rel = 0.02\n";
    fs::write(tmp.path().join("run.toml"), text).unwrap();
    let o = dynred(&["experiment", "spohn", "--config", "run.toml", "--out", "a"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echo = fs::read_to_string(tmp.path().join("a/spohn_config.toml")).unwrap();
    assert!(echo.contains("eps = 0.2"));
    let o = dynred(&["experiment", "spohn", "--config", "a/spohn_config.toml"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(tmp.path().join("a/spohn_config.toml")).unwrap(), echo);
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dynred"))
        .args(["experiment", "decoherence"])
        .current_dir(tmp.path())
        .env("DYNRED_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = read_csv(&tmp.path().join("from-env/decoherence_sweep.csv"));
    assert_eq!(header, "overlap,value,interference");
    assert_eq!(rows.len(), 11);
}

#[test]
fn every_experiment_passes_with_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["mixture-vs-pure", "sign-flip", "macroscopic", "spohn", "degenerate-4d", "decoherence"] {
        let o = dynred(&["experiment", name, "--out", "."], tmp.path());
        assert_eq!(code(&o), 0, "{name}: {}{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
        assert!(tmp.path().join(format!("{name}.json")).exists());
    }
    let o = dynred(&["list"], tmp.path());
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 6);
}

#[test]
fn trajectories_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["trajectories", "--eps", "0.1", "--t-end", "0.1", "--t-count", "11", "--n-traj", "500", "--seed", "9"];
    let a = dynred(&[&args[..], &["--out", "a"]].concat(), tmp.path());
    let b = dynred(&[&args[..], &["--out", "b"]].concat(), tmp.path());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    let ta = fs::read(tmp.path().join("a/trajectories.csv")).unwrap();
    assert_eq!(ta, fs::read(tmp.path().join("b/trajectories.csv")).unwrap());
    let (header, rows) = read_csv(&tmp.path().join("a/trajectories.csv"));
    assert_eq!(header, "t,r,re_beta,im_beta,r_mc,stderr_r");
    assert_eq!(rows.len(), 11);
}
