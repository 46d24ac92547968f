//! Acceptance checks for `fbsde-core`, each compared against an independent oracle.

pub mod oracle;

use fbsde_core::coeff::{CoefficientSet, TimeFn, TimeGrid};
use fbsde_core::density::{
    calibrate, chi, corollary_tails, field_moments, g_y_explicit, gaussian_envelope, kde, kde_on, verify_envelope, Bandwidth,
    EmpiricalDensity, Target,
};
use fbsde_core::fbm::{self, sample_paths, Integrand};
use fbsde_core::generator::{Composite, Generator};
use fbsde_core::heat::{quasi_conditional_expectation, DerivativeBounds, LinearFbsdeSpec, LinearSlice, TerminalMap};
use fbsde_core::pde::{bsde_marginals, loglog_fit, solve_mixed_pde, Field, NonlinearFbsdeSpec};
use fbsde_core::transfer::{representation_check, solve_transferred, GaussianDriverSpec, TransferGrid, VarianceClock};
use fbsde_core::{par, quad, rng, LabError, Result};
use oracle::{lsmc_richardson, nested_mc_g, ControlledBsde, LinearTable};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Instant;

/// Seeds and sample sizes. `scale` multiplies every Monte Carlo count; 1 is the full suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceConfig {
    pub seed: u64,
    pub scale: f64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self { seed: 20_240_611, scale: 1.0 }
    }
}

impl AcceptanceConfig {
    fn count(&self, n: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(1000)
    }

    fn seed_for(&self, id: u32) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(id as u64)
    }
}

/// Outcome of one numbered criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub tolerance: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>2}] {}: {} (need {}; {:.1} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.seconds
        )
    }
}

pub const CRITERIA: [(u32, &str); 11] = [
    (1, "fBM law"),
    (2, "iota identity"),
    (3, "exact Gaussian sandwich"),
    (4, "PDE vs heat semigroup"),
    (5, "linear cross-check"),
    (6, "chi closed form"),
    (7, "g sandwich and nested MC"),
    (8, "envelope verification"),
    (9, "corollary tails"),
    (10, "transfer consistency"),
    (11, "representation limit"),
];

struct Check {
    pass: bool,
    measured: String,
    tolerance: String,
    runtime_limit: f64,
}

pub fn run_all(cfg: &AcceptanceConfig) -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|(id, _)| run_one(*id, cfg)).collect()
}

pub fn run_one(id: u32, cfg: &AcceptanceConfig) -> CriterionOutcome {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown").to_string();
    let start = Instant::now();
    let r = match id {
        1 => fbm_law(cfg),
        2 => iota_identity(),
        3 => gaussian_sandwich(),
        4 => semigroup_oracle(),
        5 => linear_cross_check(),
        6 => chi_closed_form(),
        7 => g_sandwich(cfg),
        8 => envelope_verification(cfg),
        9 => tails(cfg),
        10 => transfer_consistency(cfg),
        11 => representation_limit(),
        _ => Err(LabError::NotFound(format!("criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    match r {
        Ok(c) => {
            let in_time = seconds <= c.runtime_limit;
            let measured = if in_time { c.measured } else { format!("{} but took longer than {} s", c.measured, c.runtime_limit) };
            CriterionOutcome { id, name, pass: c.pass && in_time, measured, tolerance: c.tolerance, seconds }
        }
        Err(e) => CriterionOutcome { id, name, pass: false, measured: format!("error: {e}"), tolerance: "-".into(), seconds },
    }
}

fn unit_grid(n: usize) -> Result<TimeGrid> {
    TimeGrid::new((1..=n).map(|k| k as f64 / n as f64).collect())
}

fn fbm_law(cfg: &AcceptanceConfig) -> Result<Check> {
    let grid = unit_grid(64)?;
    let n = cfg.count(100_000);
    let mut worst: f64 = 1.0;
    let mut parts = Vec::new();
    for (k, h) in [0.6, 0.75, 0.9].into_iter().enumerate() {
        let e = sample_paths(h, &grid, Integrand::Unit, n, cfg.seed_for(100 + k as u32))?;
        let emp = e.empirical_gram();
        let t = grid.points();
        let cov = |i: usize, j: usize| fbm::covariance(h, t[i], t[j]);
        let mut inside = 0usize;
        let m = t.len();
        for i in 0..m {
            for j in 0..m {
                let c = cov(i, j)?;
                let se = ((cov(i, i)? * cov(j, j)? + c * c) / n as f64).sqrt();
                inside += ((emp[i][j] - c).abs() <= 3.0 * se) as usize;
            }
        }
        let frac = inside as f64 / (m * m) as f64;
        worst = worst.min(frac);
        parts.push(format!("H={h}: {:.2}%", 100.0 * frac));
    }
    Ok(Check {
        pass: worst >= 0.99,
        measured: format!("entries within 3 SE {} ({n} paths)", parts.join(", ")),
        tolerance: ">= 99% per H, < 60 s".into(),
        runtime_limit: 60.0,
    })
}

fn iota_identity() -> Result<Check> {
    let one = TimeFn::constant(1.0);
    let mut worst_rel: f64 = 0.0;
    for h in [0.6, 0.75, 0.9] {
        for t in [0.25, 0.5, 1.0] {
            let exact: f64 = f64::powf(t, 2.0 * h);
            worst_rel = worst_rel.max((fbm::iota(&one, t, h)? - exact).abs() / exact);
        }
    }
    let mut worst_fd: f64 = 0.0;
    for sigma in [one.clone(), TimeFn::linear(1.0, 0.25)] {
        for h in [0.6, 0.75, 0.9] {
            for t in [0.25, 0.5, 1.0] {
                let e = 1e-4 * t;
                let fd = (fbm::iota(&sigma, t + e, h)? - fbm::iota(&sigma, t - e, h)?) / (2.0 * e);
                let d = fbm::iota_derivative(&sigma, t, h)?;
                worst_fd = worst_fd.max((d - fd).abs() / fd.abs());
            }
        }
    }
    Ok(Check {
        pass: worst_rel < 1e-6 && worst_fd < 1e-5,
        measured: format!("max rel error {worst_rel:.2e}, derivative vs finite differences {worst_fd:.2e}"),
        tolerance: "< 1e-6 and < 1e-5".into(),
        runtime_limit: 60.0,
    })
}

fn linear_spec(terminal: TerminalMap, coeffs: CoefficientSet, bounds: DerivativeBounds, check: bool) -> LinearFbsdeSpec {
    LinearFbsdeSpec { coeffs, terminal, hurst: 0.75, horizon: 1.0, bounds, check_bounds: check }
}

fn gaussian_sandwich() -> Result<Check> {
    let coeffs = CoefficientSet {
        b: TimeFn::constant(0.1),
        sigma: TimeFn::linear(1.0, 0.25),
        alpha: TimeFn::constant(0.3),
        gamma: TimeFn::constant(0.2),
        eta0: 0.4,
        ..Default::default()
    };
    let unit = DerivativeBounds { c: 1.0, c_upper: 1.0, c_tilde: 1.0, c_tilde_upper: 1.0 };
    let spec = linear_spec(TerminalMap::Identity, coeffs, unit, false);
    spec.validate()?;
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0] {
        let iota = spec.iota(t)?;
        let mu = (2.0 * iota / std::f64::consts::PI).sqrt();
        let e = gaussian_envelope(&spec, t, Target::Y, mu)?;
        let sd = iota.sqrt();
        for k in -100..=100 {
            let x = e.center + 5.0 * sd * k as f64 / 100.0;
            let normal = (-(x - e.center).powi(2) / (2.0 * iota)).exp() / (2.0 * std::f64::consts::PI * iota).sqrt();
            let (lo, up) = (e.lower(x)?, e.upper(x)?);
            worst = worst.max((lo - up).abs()).max((lo - normal).abs()).max((up - normal).abs());
        }
    }
    Ok(Check {
        pass: worst <= 1e-10,
        measured: format!("max pointwise gap {worst:.2e} on ±5 SD"),
        tolerance: "<= 1e-10, < 1 s".into(),
        runtime_limit: 1.0,
    })
}

fn smooth_convex() -> TerminalMap {
    TerminalMap::SmoothConvex { lo: 0.5, hi: 2.0, scale: 1.5 }
}

fn semigroup_oracle() -> Result<Check> {
    let coeffs = CoefficientSet { b: TimeFn::constant(0.3), eta0: 0.2, ..Default::default() };
    let bounds = DerivativeBounds { c: 0.5, c_upper: 2.0, c_tilde: 1e-4, c_tilde_upper: 0.5 };
    let lin = linear_spec(smooth_convex(), coeffs, bounds, false);
    let spec = NonlinearFbsdeSpec { generator: Generator::Zero, lipschitz: 0.0, ..NonlinearFbsdeSpec::from_linear(&lin) };
    let h = lin.terminal.clone();
    let times = [0.0, 0.25, 0.5, 0.75];
    let errors = par::sequential(|| -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        for nx in [100, 200, 400] {
            let sol = solve_mixed_pde(&spec, nx, 400, 8.0)?;
            let len = sol.x_hi - sol.x_lo;
            let mut err: f64 = 0.0;
            for &t in &times {
                let u = sol.slice(Field::U, t)?;
                for (i, ui) in u.iter().enumerate() {
                    let x = sol.x(i);
                    if x < sol.x_lo + 0.1 * len || x > sol.x_hi - 0.1 * len {
                        continue;
                    }
                    let exact = quasi_conditional_expectation(&lin, |v| h.h(v), t, x - spec.coeffs.drift_mean(t))?;
                    err = err.max((ui - exact).abs());
                }
            }
            out.push((sol.dx(), err));
        }
        Ok(out)
    })?;
    let fit = loglog_fit(errors.iter().copied());
    let fine = errors[2].1;
    Ok(Check {
        pass: fine <= 5e-4 && fit.slope >= 1.8,
        measured: format!("max error {:.2e} / {:.2e} / {fine:.2e} at nx = 100/200/400, order {:.2}", errors[0].1, errors[1].1, fit.slope),
        tolerance: "<= 5e-4 at 400, order >= 1.8, < 120 s".into(),
        runtime_limit: 120.0,
    })
}

fn linear_cross_check() -> Result<Check> {
    let coeffs = CoefficientSet {
        b: TimeFn::constant(0.1),
        sigma: TimeFn::linear(1.0, 0.25),
        alpha: TimeFn::linear(0.1, 0.2),
        beta: TimeFn::linear(0.2, -0.1),
        gamma: TimeFn::constant(0.25),
        eta0: 0.2,
    };
    let bounds = DerivativeBounds { c: 0.5, c_upper: 2.0, c_tilde: 1e-4, c_tilde_upper: 0.5 };
    let lin = linear_spec(smooth_convex(), coeffs, bounds, false);
    let spec = NonlinearFbsdeSpec::from_linear(&lin);
    let sol = solve_mixed_pde(&spec, 400, 400, 8.0)?;
    let half = 2.0 * lin.iota(1.0)?.sqrt();
    let mut worst_y: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for i in 0..10 {
        let t = 0.05 + 0.1 * i as f64;
        let slice = LinearSlice::new(&lin, t)?;
        let sigma = spec.coeffs.sigma.eval(t);
        for j in 0..100 {
            let w = -half + 2.0 * half * j as f64 / 99.0;
            let (y, z) = slice.solve(w)?;
            let p = sol.evaluate(t, spec.coeffs.drift_mean(t) + w)?;
            worst_y = worst_y.max((p.u - y).abs());
            // z of the linear equation is −σ u_x
            worst_z = worst_z.max((-sigma * p.ux - z).abs());
        }
    }
    Ok(Check {
        pass: worst_y <= 1e-3 && worst_z <= 1e-3,
        measured: format!("max |Δy| {worst_y:.2e}, max |Δz| {worst_z:.2e} over 10x100 (t, w)"),
        tolerance: "<= 1e-3, < 120 s".into(),
        runtime_limit: 120.0,
    })
}

fn chi_closed_form() -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for z in [-3.0, -1.0, -0.2, 0.0, 0.5, 2.0, 4.0] {
        for m in [-1.0, 0.0, 0.7] {
            for lambda in [0.1, 0.5, 1.0] {
                for d in [0.3, 1.0, 1.5] {
                    let p = 2.0 * lambda * d;
                    let upper: f64 = z - m;
                    let reference = if upper == 0.0 {
                        0.0
                    } else {
                        let f = |u: f64| u * (1.0 + (u + m).abs().powf(p));
                        // split at the kink u = −m
                        let kink = -m;
                        let (a, b) = if upper > 0.0 { (0.0, upper) } else { (upper, 0.0) };
                        let piece = |lo: f64, hi: f64| quad::adaptive(f, lo, hi, 1e-14, 1e-13).map(|r| r.value);
                        let mut v = if kink > a && kink < b { piece(a, kink)? + piece(kink, b)? } else { piece(a, b)? };
                        if upper < 0.0 {
                            v = -v;
                        }
                        v
                    };
                    worst = worst.max((chi(z, m, lambda, d)? - reference).abs());
                    count += 1;
                }
            }
        }
    }
    Ok(Check {
        pass: worst <= 1e-8,
        measured: format!("max |chi − integral| {worst:.2e} over {count} parameter points"),
        tolerance: "<= 1e-8, < 5 s".into(),
        runtime_limit: 5.0,
    })
}

fn nonlinear_problem() -> NonlinearFbsdeSpec {
    NonlinearFbsdeSpec {
        coeffs: CoefficientSet::default(),
        generator: Generator::Composite(Composite { y_sin: 0.5, z_tanh: 0.25, ..Default::default() }),
        lipschitz: 1.25,
        terminal: TerminalMap::Cubic { linear: 1.0, cubic: 0.1 },
        hurst: 0.75,
        horizon: 1.0,
    }
}

fn g_sandwich(cfg: &AcceptanceConfig) -> Result<Check> {
    let spec = nonlinear_problem();
    let sol = solve_mixed_pde(&spec, 400, 200, 8.0)?;
    let t = 0.5;
    let cal = calibrate(&sol, &spec, t, Target::Y, 0.1, 0.1)?;
    let (m, abs_dev) = field_moments(&sol, &spec, t, Target::Y)?;
    let sd = abs_dev * (std::f64::consts::PI / 2.0).sqrt();
    let mut inside = 0;
    let probes = 41;
    for k in 0..probes {
        let y = -4.0 * sd + 8.0 * sd * k as f64 / (probes - 1) as f64;
        let g = g_y_explicit(&sol, &spec, t, y, m)?;
        inside += (cal.g_lower(y, m) <= g && g <= cal.g_upper(y, m)) as usize;
    }
    let iota = spec.iota(t)?;
    let m_eta = spec.coeffs.drift_mean(t);
    let table = LinearTable::new(sol.x_lo, sol.x_hi, 16_000, |x| sol.field_clamped(Field::U, t, x).map(|p| p.1).unwrap_or(f64::NAN));
    let (outer, inner) = (cfg.count(10_000), 1000);
    let mut worst_z: f64 = 0.0;
    for k in 0..10 {
        let y = -2.0 * sd + 4.0 * sd * k as f64 / 9.0;
        let g = g_y_explicit(&sol, &spec, t, y, m)?;
        let x_star = sol.inverse_u(t, y + m)?;
        let mc = nested_mc_g(|x| table.eval(x), iota, iota, m_eta, x_star, outer, inner, cfg.seed_for(700 + k));
        worst_z = worst_z.max((g - mc.mean).abs() / mc.se);
    }
    Ok(Check {
        pass: inside == probes && worst_z <= 3.0,
        measured: format!("{inside}/{probes} probes inside the calibrated bounds; nested MC max |Δ|/SE = {worst_z:.2}"),
        tolerance: "100% inside, <= 3 SE at 10 points, < 10 min".into(),
        runtime_limit: 600.0,
    })
}

fn central_check(emp: &EmpiricalDensity, env: &fbsde_core::density::DensityEnvelope) -> Result<f64> {
    let r = verify_envelope(emp, env, (emp.mean - 2.5 * emp.sd, emp.mean + 2.5 * emp.sd), 3.0)?;
    Ok(r.pass_fraction)
}

fn smooth_convex_linear() -> Result<LinearFbsdeSpec> {
    let coeffs = CoefficientSet {
        b: TimeFn::constant(0.1),
        alpha: TimeFn::constant(0.1),
        beta: TimeFn::constant(0.2),
        gamma: TimeFn::constant(0.25),
        ..Default::default()
    };
    let h = smooth_convex();
    let probe = DerivativeBounds { c: 0.5, c_upper: 2.0, c_tilde: 1.0, c_tilde_upper: 1.0 };
    let mut spec = linear_spec(h.clone(), coeffs, probe, true);
    // curvature bounds of h over the probe box
    let half = 6.0 * spec.iota(1.0)?.sqrt();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..=4000 {
        let x = spec.coeffs.eta0 - half + 2.0 * half * k as f64 / 4000.0;
        lo = lo.min(h.d2(x));
        hi = hi.max(h.d2(x));
    }
    spec.bounds.c_tilde = 0.999 * lo;
    spec.bounds.c_tilde_upper = 1.001 * hi;
    spec.validate()?;
    Ok(spec)
}

/// E|g(W) − mean| for W ~ N(0, var), by adaptive quadrature over ±12 SD.
pub fn abs_deviation(g: impl Fn(f64) -> f64, var: f64, mean: f64) -> Result<f64> {
    let sd = var.sqrt();
    let p = |w: f64| (-(w * w) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    Ok(quad::adaptive(|w| (g(w) - mean).abs() * p(w), -12.0 * sd, 12.0 * sd, 1e-14, 1e-10)?.value)
}

fn envelope_verification(cfg: &AcceptanceConfig) -> Result<Check> {
    let n = cfg.count(100_000);
    let t = 0.5;
    // non-Gaussian envelope of the nonlinear problem
    let spec = nonlinear_problem();
    let sol = solve_mixed_pde(&spec, 400, 200, 8.0)?;
    let cal = calibrate(&sol, &spec, t, Target::Y, 0.1, 0.1)?;
    let (m, mu) = field_moments(&sol, &spec, t, Target::Y)?;
    let env = cal.envelope(m, mu)?;
    let grid = TimeGrid::new(vec![t, 1.0])?;
    let ens = sample_paths(spec.hurst, &grid, Integrand::Sigma(&spec.coeffs.sigma), n, cfg.seed_for(800))?;
    let marg = bsde_marginals(&sol, &spec, t, &ens)?;
    let frac_ng = central_check(&kde(&marg.y, Bandwidth::Silverman)?, &env)?;

    // Gaussian envelopes of a strictly convex terminal map
    let lin = smooth_convex_linear()?;
    let slice = LinearSlice::new(&lin, t)?;
    let iota = lin.iota(t)?;
    let ws: Vec<f64> = rng::normals(cfg.seed_for(801), n).into_iter().map(|z| z * iota.sqrt()).collect();
    let pairs = par::map_slice(&ws, |w| slice.solve(*w)).into_iter().collect::<Result<Vec<_>>>()?;
    let (ys, zs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (my, mz) = (slice.mean_y()?, slice.mean_z()?);
    let mu_y = abs_deviation(|w| slice.solve(w).map(|p| p.0).unwrap_or(f64::NAN), iota, my)?;
    let mu_z = abs_deviation(|w| slice.solve(w).map(|p| p.1).unwrap_or(f64::NAN), iota, mz)?;
    let frac_y = central_check(&kde(&ys, Bandwidth::Silverman)?, &gaussian_envelope(&lin, t, Target::Y, mu_y)?)?;
    let frac_z = central_check(&kde(&zs, Bandwidth::Silverman)?, &gaussian_envelope(&lin, t, Target::Z, mu_z)?)?;
    let worst = frac_ng.min(frac_y).min(frac_z);
    Ok(Check {
        pass: worst >= 0.99,
        measured: format!(
            "grid points inside: non-Gaussian y {:.1}%, Gaussian y {:.1}%, Gaussian z {:.1}% ({n} samples)",
            100.0 * frac_ng,
            100.0 * frac_y,
            100.0 * frac_z
        ),
        tolerance: ">= 99% on ±2.5 SD, slack 3 SE, < 5 min".into(),
        runtime_limit: 300.0,
    })
}

fn tails(cfg: &AcceptanceConfig) -> Result<Check> {
    let lin = smooth_convex_linear()?;
    let t = 0.5;
    let n = cfg.count(1_000_000);
    let slice = LinearSlice::new(&lin, t)?;
    let iota = lin.iota(t)?;
    let ws: Vec<f64> = rng::normals(cfg.seed_for(900), n).into_iter().map(|z| z * iota.sqrt()).collect();
    let pairs = par::map_slice(&ws, |w| slice.solve(*w)).into_iter().collect::<Result<Vec<_>>>()?;
    let (my, mz) = (slice.mean_y()?, slice.mean_z()?);
    let sd = |v: &mut dyn Iterator<Item = f64>, m: f64| {
        let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + (x - m) * (x - m), c + 1));
        (s / c as f64).sqrt()
    };
    let sy = sd(&mut pairs.iter().map(|p| p.0), my);
    let sz = sd(&mut pairs.iter().map(|p| p.1), mz);
    let mut ok = true;
    let mut rows = Vec::new();
    for k in [1.0, 2.0, 3.0] {
        let freq = |get: &dyn Fn(&(f64, f64)) -> f64, m: f64, x: f64, up: bool| {
            pairs.iter().filter(|p| if up { get(p) - m >= x } else { get(p) - m <= -x }).count() as f64 / n as f64
        };
        let by = corollary_tails(&lin, t, k * sy)?;
        let bz = corollary_tails(&lin, t, k * sz)?;
        let emp = [
            freq(&|p| p.0, my, k * sy, true),
            freq(&|p| p.0, my, k * sy, false),
            freq(&|p| p.1, mz, k * sz, true),
            freq(&|p| p.1, mz, k * sz, false),
        ];
        let bound = [by.y_up, by.y_down, bz.z_up, bz.z_down];
        ok &= emp.iter().zip(&bound).all(|(e, b)| e <= b);
        let slack = emp.iter().zip(&bound).map(|(e, b)| b - e).fold(f64::INFINITY, f64::min);
        rows.push(format!("x={k}: min(bound − freq) {slack:.2e}"));
    }
    Ok(Check {
        pass: ok,
        measured: format!("{} ({n} samples)", rows.join(", ")),
        tolerance: "all four bounds >= frequency, < 2 min".into(),
        runtime_limit: 120.0,
    })
}

/// max |d₁ − d₂| / √(se₁² + se₂²) for two samples on a common grid and bandwidth,
/// over the inner 99% of both samples.
pub fn kde_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let pilot = kde(a, Bandwidth::Silverman)?;
    let pooled = kde(b, Bandwidth::Silverman)?;
    let (lo, hi) = (pilot.q_lo.max(pooled.q_lo), pilot.q_hi.min(pooled.q_hi));
    let grid: Vec<f64> = (0..512).map(|i| lo + (hi - lo) * i as f64 / 511.0).collect();
    let h = pilot.bandwidth;
    let da = kde_on(a, Bandwidth::Fixed(h), Some(grid.clone()))?;
    let db = kde_on(b, Bandwidth::Fixed(h), Some(grid))?;
    Ok(da
        .density
        .iter()
        .zip(&db.density)
        .zip(da.local_se.iter().zip(&db.local_se))
        .map(|((x, y), (s, r))| (x - y).abs() / (s * s + r * r).sqrt())
        .fold(0.0, f64::max))
}

fn transfer_consistency(cfg: &AcceptanceConfig) -> Result<Check> {
    let n = cfg.count(100_000);
    let h_idx = 0.75;
    let t = 0.5;
    let terminal = smooth_convex();

    // law of y_t: fBM ensemble through the closed-form linear solve vs the transferred solve
    let lin = linear_spec(
        terminal.clone(),
        CoefficientSet::default(),
        DerivativeBounds { c: 0.5, c_upper: 2.0, c_tilde: 1e-4, c_tilde_upper: 0.5 },
        false,
    );
    let grid = unit_grid(64)?;
    let j = grid.index_of(t).ok_or_else(|| LabError::NotFound("t on grid".into()))?;
    let ens = sample_paths(h_idx, &grid, Integrand::Sigma(&TimeFn::constant(1.0)), n, cfg.seed_for(1000))?;
    let slice = LinearSlice::new(&lin, t)?;
    let closed: Vec<f64> = par::map_slice(&ens.column(j), |w| slice.solve(*w).map(|p| p.0)).into_iter().collect::<Result<_>>()?;
    let driver = GaussianDriverSpec::fbm(h_idx, 1.0);
    let sol = solve_transferred(&driver, &Generator::Zero, &terminal, TransferGrid { nx: 400, nt: 400, k: 8.0 })?;
    let (transferred, _) = sol.marginal_samples(t, n, cfg.seed_for(1001))?;
    let dist = kde_distance(&closed, &transferred)?;

    // Brownian reduction against a least-squares Monte Carlo Euler solve
    let f = |_t: f64, y: f64, z: f64| 0.3 * y.sin() + 0.2 * z + 0.1;
    let v = |t: f64, x: f64| x + 0.1 * (x * x * x + 3.0 * (1.0 - t) * x);
    let vx = |t: f64, x: f64| 1.0 + 0.1 * (3.0 * x * x + 3.0 * (1.0 - t));
    let gen = Generator::Composite(Composite { constant: 0.1, y_sin: 0.3, z_lin: 0.2, ..Default::default() });
    let cubic = TerminalMap::Cubic { linear: 1.0, cubic: 0.1 };
    let bm = solve_transferred(&GaussianDriverSpec::brownian(1.0), &gen, &cubic, TransferGrid { nx: 800, nt: 400, k: 8.0 })?;
    let phi0 = bm.phi(0.0, 0.0)?;
    let problem = ControlledBsde { horizon: 1.0, f: &f, v: &v, vx: &vx };
    let (reference, se, _, _) = lsmc_richardson(&problem, 100, n, 7, cfg.seed_for(1002));
    let gap = (phi0 - reference).abs();
    Ok(Check {
        pass: dist < 3.0 && gap <= 1e-3,
        measured: format!(
            "law sup distance {dist:.2} local SE ({n} samples each); Brownian reduction phi(0,0) = {phi0:.6}, Euler reference {reference:.6} ± {se:.1e}, gap {gap:.2e}"
        ),
        tolerance: "< 3 SE and <= 1e-3".into(),
        runtime_limit: 600.0,
    })
}

fn representation_limit() -> Result<Check> {
    let battery: Vec<(&str, GaussianDriverSpec, Generator, f64, f64, f64)> = vec![
        (
            "f=y, V=t",
            GaussianDriverSpec::brownian(1.0),
            Generator::Composite(Composite { y_lin: 1.0, ..Default::default() }),
            0.2,
            1.0,
            0.0,
        ),
        (
            "f=0.5 sin y+0.3z, V=t^1.5",
            GaussianDriverSpec { label: "power".into(), clock: VarianceClock::Power { scale: 1.0, exponent: 1.5 }, horizon: 1.0 },
            Generator::Composite(Composite { y_sin: 0.5, z_lin: 0.3, ..Default::default() }),
            0.3,
            0.7,
            0.5,
        ),
        (
            "f=0.2+t, V=t^1.5",
            GaussianDriverSpec { label: "power".into(), clock: VarianceClock::Power { scale: 1.0, exponent: 1.5 }, horizon: 1.0 },
            Generator::Composite(Composite { constant: 0.2, t_lin: 1.0, ..Default::default() }),
            0.4,
            -0.5,
            1.0,
        ),
    ];
    let mut ok = true;
    let mut rows = Vec::new();
    for (label, driver, f, t, y, z) in battery {
        let eps: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|e| e * (1.0 - t)).collect();
        let c = representation_check(&driver, &f, t, y, z, &eps, TransferGrid { nx: 100, nt: 100, k: 8.0 })?;
        let red = c.reduction();
        ok &= c.monotone() && red > 3.0;
        rows.push(format!("{label}: monotone {}, e(max)/e(min) = {red:.2}, order {:.2}", c.monotone(), c.order.slope));
    }
    Ok(Check { pass: ok, measured: rows.join("; "), tolerance: "monotone and e(min) < e(max)/3, < 5 min".into(), runtime_limit: 300.0 })
}
