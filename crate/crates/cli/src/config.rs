//! The experiment file. One TOML document; every section except `problem` has defaults.
//!
//! ```toml
//! seed = 20240611
//! out_dir = "fbsde-out"          # optional
//!
//! [problem]
//! kind = "fbsde-linear"           # or "fbsde-nonlinear", "gauss-transfer"
//! ...                             # the fields of the matching spec type
//!
//! [simulate]      n_times, paths, write_paths_csv
//! [iota]          n_times
//! [pde]           nx, nt, k, report_times
//! [linear_solve]  times, n_w, width_sd, tolerance
//! [envelope]      t, target, eps, delta, paths, bandwidth, slack, region_sd, constants
//! [tails]         t, samples, multiples
//! [transfer]      grid, report_times, samples
//! [represent]     t, y, z, eps_fractions, grid
//! [verify]        scale
//! ```

use crate::error::{CliError, CliResult};
use fbsde_core::coeff::TimeFn;
use fbsde_core::density::{Bandwidth, Target};
use fbsde_core::generator::Generator;
use fbsde_core::heat::{LinearFbsdeSpec, TerminalMap};
use fbsde_core::pde::NonlinearFbsdeSpec;
use fbsde_core::transfer::{EnvelopeConstants, GaussianDriverSpec, TransferGrid, VarianceClock};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// The configuration shipped with the binary; `verify-all` on it runs the full acceptance suite.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub problem: Problem,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub iota: IotaConfig,
    #[serde(default)]
    pub pde: PdeConfig,
    #[serde(default)]
    pub linear_solve: LinearSolveConfig,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub tails: TailsConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub represent: RepresentConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Problem {
    FbsdeNonlinear(NonlinearFbsdeSpec),
    FbsdeLinear(LinearFbsdeSpec),
    GaussTransfer(TransferProblem),
}

/// A Gaussian driver known through its variance clock, with the BSDE data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferProblem {
    pub driver: GaussianDriverSpec,
    /// Replaces `driver.clock` by a `t,V` table read from this CSV file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_csv: Option<PathBuf>,
    pub generator: Generator,
    pub terminal: TerminalMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Uniform grid T/n, 2T/n, …, T.
    pub n_times: usize,
    pub paths: usize,
    pub write_paths_csv: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { n_times: 64, paths: 100_000, write_paths_csv: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IotaConfig {
    pub n_times: usize,
}

impl Default for IotaConfig {
    fn default() -> Self {
        Self { n_times: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub nx: usize,
    pub nt: usize,
    /// Half-width of the domain in standard deviations of η_T.
    pub k: f64,
    pub report_times: Vec<f64>,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self { nx: 400, nt: 400, k: 8.0, report_times: vec![0.0, 0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSolveConfig {
    pub times: Vec<f64>,
    pub n_w: usize,
    /// w ranges over ±width_sd·√ι_t.
    pub width_sd: f64,
    /// Agreement required between the closed form and the PDE solve on ±2 SD.
    pub tolerance: f64,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        Self { times: vec![0.25, 0.5, 0.75], n_w: 101, width_sd: 4.0, tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub t: f64,
    pub target: Target,
    /// ε and δ of the calibration; leaving either out selects them automatically.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub paths: usize,
    pub bandwidth: Bandwidth,
    pub slack: f64,
    pub region_sd: f64,
    /// Fixed (c₁, c₂) for the Gaussian-driver envelope instead of calibrated ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<EnvelopeConstants>,
    pub min_pass_fraction: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            t: 0.5,
            target: Target::Y,
            eps: None,
            delta: None,
            paths: 100_000,
            bandwidth: Bandwidth::Silverman,
            slack: 3.0,
            region_sd: 2.5,
            constants: None,
            min_pass_fraction: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsConfig {
    pub t: f64,
    pub samples: usize,
    /// Thresholds in standard deviations of the sample.
    pub multiples: Vec<f64>,
}

impl Default for TailsConfig {
    fn default() -> Self {
        Self { t: 0.5, samples: 1_000_000, multiples: vec![1.0, 2.0, 3.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub grid: TransferGrid,
    pub report_times: Vec<f64>,
    pub samples: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self { grid: TransferGrid::default(), report_times: vec![0.25, 0.5, 0.75], samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentConfig {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    /// ε as fractions of T − t.
    pub eps_fractions: Vec<f64>,
    pub grid: TransferGrid,
}

impl Default for RepresentConfig {
    fn default() -> Self {
        Self { t: 0.3, y: 0.7, z: 0.5, eps_fractions: vec![0.2, 0.1, 0.05, 0.025], grid: TransferGrid { nx: 100, nt: 100, k: 8.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Multiplies every Monte Carlo size of the acceptance suite.
    pub scale: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

fn at<T>(path: &str, r: fbsde_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Config { path: path.to_string(), reason: e.to_string() })
}

fn check(path: &str, ok: bool, reason: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config { path: path.to_string(), reason: reason.to_string() })
    }
}

fn in_horizon(path: &str, t: f64, horizon: f64) -> CliResult<()> {
    check(path, t >= 0.0 && t <= horizon, &format!("must lie in [0, {horizon}], got {t}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Problem::GaussTransfer(p) = &mut cfg.problem {
            if let Some(csv) = &p.clock_csv {
                let resolved = if csv.is_relative() { path.parent().unwrap_or(Path::new(".")).join(csv) } else { csv.clone() };
                p.driver.clock = at("problem.clock_csv", VarianceClock::from_csv(&resolved))?;
                at("problem.clock_csv", p.driver.validate())?;
            }
        }
        Ok(cfg)
    }

    pub fn horizon(&self) -> f64 {
        match &self.problem {
            Problem::FbsdeNonlinear(s) => s.horizon,
            Problem::FbsdeLinear(s) => s.horizon,
            Problem::GaussTransfer(p) => p.driver.horizon,
        }
    }

    /// (H, σ) of an fBM-driven problem.
    pub fn fbm_driver(&self) -> Option<(f64, &TimeFn)> {
        match &self.problem {
            Problem::FbsdeNonlinear(s) => Some((s.hurst, &s.coeffs.sigma)),
            Problem::FbsdeLinear(s) => Some((s.hurst, &s.coeffs.sigma)),
            Problem::GaussTransfer(_) => None,
        }
    }

    /// Every semantic check, reported with the dotted path of the offending key.
    pub fn validate(&self) -> CliResult<()> {
        match &self.problem {
            Problem::FbsdeNonlinear(s) => {
                at("problem.coeffs", s.coeffs.validate(s.horizon))?;
                at("problem", s.validate())?;
            }
            Problem::FbsdeLinear(s) => {
                at("problem.coeffs", s.coeffs.validate(s.horizon))?;
                at("problem", s.validate())?;
            }
            Problem::GaussTransfer(p) => {
                if p.clock_csv.is_none() {
                    at("problem.clock_csv", p.driver.validate())?;
                }
                at("problem.generator", p.generator.validate())?;
                at("problem.terminal", p.terminal.validate())?;
            }
        }
        let horizon = self.horizon();
        check("simulate.n_times", self.simulate.n_times >= 2, "need at least 2 times")?;
        check("simulate.paths", self.simulate.paths >= 2, "need at least 2 paths")?;
        check("iota.n_times", self.iota.n_times >= 1, "need at least 1 time")?;
        check("pde.nx", self.pde.nx >= 50, "need at least 50 cells")?;
        check("pde.nt", self.pde.nt >= 10, "need at least 10 steps")?;
        check("pde.k", self.pde.k > 0.0, "must be positive")?;
        for t in &self.pde.report_times {
            in_horizon("pde.report_times", *t, horizon)?;
        }
        for t in &self.linear_solve.times {
            in_horizon("linear_solve.times", *t, horizon)?;
        }
        check("linear_solve.n_w", self.linear_solve.n_w >= 2, "need at least 2 points")?;
        check("linear_solve.width_sd", self.linear_solve.width_sd > 0.0, "must be positive")?;
        let e = &self.envelope;
        check("envelope.t", e.t > 0.0 && e.t < horizon, &format!("must lie in (0, {horizon}), got {}", e.t))?;
        for (name, v) in [("envelope.eps", e.eps), ("envelope.delta", e.delta)] {
            if let Some(v) = v {
                check(name, v > 0.0 && v.is_finite(), "must be positive")?;
            }
        }
        check("envelope.paths", e.paths >= 100, "need at least 100 samples")?;
        check("envelope.slack", e.slack >= 0.0, "must be nonnegative")?;
        check("envelope.region_sd", e.region_sd > 0.0, "must be positive")?;
        check("envelope.min_pass_fraction", (0.0..=1.0).contains(&e.min_pass_fraction), "must lie in [0, 1]")?;
        if let Bandwidth::Fixed(h) = e.bandwidth {
            check("envelope.bandwidth", h > 0.0, "a fixed bandwidth must be positive")?;
        }
        check("tails.t", self.tails.t > 0.0 && self.tails.t <= horizon, "must lie in (0, T]")?;
        check("tails.samples", self.tails.samples >= 100, "need at least 100 samples")?;
        check("tails.multiples", self.tails.multiples.iter().all(|x| *x > 0.0), "thresholds must be positive")?;
        at("transfer.grid", self.transfer.grid.validate())?;
        for t in &self.transfer.report_times {
            in_horizon("transfer.report_times", *t, horizon)?;
        }
        check("transfer.samples", self.transfer.samples >= 2, "need at least 2 samples")?;
        let r = &self.represent;
        check("represent.t", r.t >= 0.0 && r.t < horizon, &format!("must lie in [0, {horizon})"))?;
        check(
            "represent.eps_fractions",
            !r.eps_fractions.is_empty() && r.eps_fractions.iter().all(|f| *f > 0.0 && *f < 1.0),
            "need fractions in (0, 1)",
        )?;
        at("represent.grid", r.grid.validate())?;
        check("verify.scale", self.verify.scale > 0.0, "must be positive")?;
        Ok(())
    }
}
