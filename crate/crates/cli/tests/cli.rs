use fbsde_core::density::{kde_on, Bandwidth, DensityEnvelope, Target};
use fbsde_core::rng;
use fbsde_lab::emit::{density_rows, emit_density_table, read_density_table, DENSITY_HEADER};
use fbsde_lab::{ExperimentConfig, DEFAULT_CONFIG};
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_fbsde-lab");

const SMALL: &str = r#"
seed = 5

[problem]
kind = "fbsde-linear"
hurst = 0.7
horizon = 1.0
bounds = { c = 0.5, c_upper = 2.0, c_tilde = 1e-6, c_tilde_upper = 0.5 }
terminal = { kind = "smooth_convex", lo = 0.5, hi = 2.0, scale = 1.5 }

[problem.coeffs]
sigma = { kind = "polynomial", coeffs = [1.0, 0.25] }
beta = { kind = "constant", value = 0.2 }

[simulate]
n_times = 8
paths = 4000

[pde]
nx = 100
nt = 50

[envelope]
paths = 5000
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env_remove("FBSDE_LAB_OUT").output().unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn identical_config_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for cmd in ["simulate", "envelope"] {
        let a = tmp.path().join(format!("{cmd}_a"));
        let b = tmp.path().join(format!("{cmd}_b"));
        let c = tmp.path().join(format!("{cmd}_c"));
        for (out, threads) in [(&a, "1"), (&b, "1"), (&c, "2")] {
            let o = run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let first = dir_contents(&a);
        assert!(first.contains_key("report.json"));
        assert_eq!(first, dir_contents(&b), "{cmd} differs between runs");
        assert_eq!(first, dir_contents(&c), "{cmd} differs between thread counts");
    }
}

#[test]
fn seed_flag_changes_the_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(std::fs::read(a.join("ensemble.bin")).unwrap(), std::fs::read(b.join("ensemble.bin")).unwrap());
}

#[test]
fn manifest_digests_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    assert!(run(&["iota", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let files = report["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), fbsde_lab::report::sha256_hex(&bytes));
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    assert_eq!(report["all_pass"], true);
}

#[test]
fn sigma_table_with_a_zero_is_rejected() {
    let bad = SMALL.replace(
        r#"sigma = { kind = "polynomial", coeffs = [1.0, 0.25] }"#,
        r#"sigma = { kind = "table", t = [0.0, 0.5, 1.0], v = [1.0, 0.0, 1.0] }"#,
    );
    let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
    assert!(err.contains("σ(t) ≠ 0"), "{err}");
    assert!(err.contains("problem.coeffs"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &bad);
    let o = run(&["iota", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("σ(t) ≠ 0"));
}

#[test]
fn unknown_keys_and_bad_ranges_name_their_path() {
    let typo = SMALL.replace("paths = 4000", "pahts = 4000");
    assert!(ExperimentConfig::parse(&typo).is_err());
    let bad_t = format!("{SMALL}\n[tails]\nt = 3.0\n");
    let err = ExperimentConfig::parse(&bad_t).unwrap_err().to_string();
    assert!(err.contains("tails.t"), "{err}");
}

#[test]
fn inapplicable_command_still_writes_a_report_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = run(&["represent", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], false);
    assert!(report["error"].as_str().unwrap().contains("gauss-transfer") || report["error"].as_str().unwrap().contains("fbsde-linear"));
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("env_out");
    let o = Command::new(BIN).args(["iota", "--config", cfg.to_str().unwrap()]).env("FBSDE_LAB_OUT", &out).output().unwrap();
    assert!(o.status.success());
    assert!(out.join("iota.csv").exists());
}

fn sandwich() -> (DensityEnvelope, fbsde_core::density::EmpiricalDensity) {
    let env = DensityEnvelope::gaussian(Target::Y, 0.3, (2.0 * 0.8 / std::f64::consts::PI).sqrt(), 0.8, 0.8, "exact").unwrap();
    let samples: Vec<f64> = rng::normals(3, 20_000).into_iter().map(|z| 0.3 + 0.8f64.sqrt() * z).collect();
    (env, kde_on(&samples, Bandwidth::Silverman, None).unwrap())
}

#[test]
fn gaussian_sandwich_table_round_trips() {
    let (env, emp) = sandwich();
    let mut buf = Vec::new();
    emit_density_table(&env, &emp, &emp.grid, 3.0, &mut buf).unwrap();
    let back = read_density_table(buf.as_slice()).unwrap();
    assert_eq!(back, density_rows(&env, &emp, &emp.grid, 3.0).unwrap());
    assert_eq!(back.len(), emp.grid.len());
    for r in &back {
        assert!((r.lower - r.upper).abs() <= 1e-12 * r.upper.max(1e-300), "{r:?}");
    }
}

#[test]
fn empty_grid_gives_header_only() {
    let (env, emp) = sandwich();
    let mut buf = Vec::new();
    emit_density_table(&env, &emp, &[], 3.0, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", DENSITY_HEADER.join(",")));
}

fn collect_paths(v: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let toml::Value::Table(t) = v {
        for (k, child) in t {
            let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            out.push(p.clone());
            collect_paths(child, &p, out);
        }
    }
}

#[test]
fn every_parameter_is_reachable_from_the_schema() {
    let shipped = [
        DEFAULT_CONFIG,
        include_str!("../configs/nonlinear.toml"),
        include_str!("../configs/transfer.toml"),
        r#"
seed = 1
out_dir = "x"
[problem]
kind = "gauss-transfer"
clock_csv = "clock.csv"
driver = { label = "d", horizon = 1.0, clock = { kind = "linear", rate = 1.0 } }
generator = { kind = "zero" }
terminal = { kind = "affine", intercept = 0.0, slope = 1.0 }
[envelope]
constants = { c1 = 1.0, c2 = 2.0 }
bandwidth = { rule = "fixed", h = 0.1 }
"#,
    ];
    let mut paths = Vec::new();
    for text in shipped {
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        collect_paths(&toml::Value::try_from(&cfg).unwrap(), "", &mut paths);
    }
    let required = [
        "seed",
        "out_dir",
        "problem.kind",
        "problem.hurst",
        "problem.horizon",
        "problem.coeffs.b",
        "problem.coeffs.sigma",
        "problem.coeffs.alpha",
        "problem.coeffs.beta",
        "problem.coeffs.gamma",
        "problem.coeffs.eta0",
        "problem.terminal",
        "problem.bounds.c",
        "problem.bounds.c_upper",
        "problem.bounds.c_tilde",
        "problem.bounds.c_tilde_upper",
        "problem.check_bounds",
        "problem.generator",
        "problem.lipschitz",
        "problem.driver.label",
        "problem.driver.clock",
        "problem.driver.horizon",
        "problem.clock_csv",
        "simulate.n_times",
        "simulate.paths",
        "simulate.write_paths_csv",
        "iota.n_times",
        "pde.nx",
        "pde.nt",
        "pde.k",
        "pde.report_times",
        "linear_solve.times",
        "linear_solve.n_w",
        "linear_solve.width_sd",
        "linear_solve.tolerance",
        "envelope.t",
        "envelope.target",
        "envelope.eps",
        "envelope.delta",
        "envelope.paths",
        "envelope.bandwidth",
        "envelope.slack",
        "envelope.region_sd",
        "envelope.constants.c1",
        "envelope.constants.c2",
        "envelope.min_pass_fraction",
        "tails.t",
        "tails.samples",
        "tails.multiples",
        "transfer.grid.nx",
        "transfer.grid.nt",
        "transfer.grid.k",
        "transfer.report_times",
        "transfer.samples",
        "represent.t",
        "represent.y",
        "represent.z",
        "represent.eps_fractions",
        "represent.grid",
        "verify.scale",
    ];
    for r in required {
        assert!(paths.iter().any(|p| p == r), "{r} is not reachable");
    }
}

#[test]
fn shipped_configs_validate() {
    ExperimentConfig::parse(DEFAULT_CONFIG).unwrap();
    ExperimentConfig::parse(include_str!("../configs/nonlinear.toml")).unwrap();
    ExperimentConfig::parse(include_str!("../configs/transfer.toml")).unwrap();
}

#[test]
fn clock_table_loads_from_csv_next_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("t,V\n");
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        csv.push_str(&format!("{t},{}\n", t.powf(1.5)));
    }
    std::fs::write(tmp.path().join("clock.csv"), csv).unwrap();
    let text = r#"
seed = 3
[problem]
kind = "gauss-transfer"
clock_csv = "clock.csv"
driver = { label = "tabulated", horizon = 1.0, clock = { kind = "linear", rate = 1.0 } }
generator = { kind = "zero" }
terminal = { kind = "cubic", linear = 1.0, cubic = 0.1 }
"#;
    let cfg = ExperimentConfig::load(&write_config(tmp.path(), text)).unwrap();
    let fbsde_lab::Problem::GaussTransfer(p) = &cfg.problem else { panic!("wrong kind") };
    assert!((p.driver.variance(0.5).unwrap() - 0.5f64.powf(1.5)).abs() < 1e-3);

    std::fs::write(tmp.path().join("clock.csv"), "t,V\n0,0\n0.5,0.4\n1,0.3\n").unwrap();
    let err = ExperimentConfig::load(&tmp.path().join("config.toml")).unwrap_err().to_string();
    assert!(err.contains("problem.clock_csv"), "{err}");
}
