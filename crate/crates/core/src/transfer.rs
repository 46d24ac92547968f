//! General Gaussian drivers through their variance clock V(t) = Var X_t.
//!
//! With U the inverse of V, the BSDE driven by X is the time change of a Brownian one:
//! y_t = φ(V(t), X_t) and z_t = ψ(V(t), X_t), where φ solves
//! φ_s + ½φ_xx + f(U(s), x, φ, φ_x) = 0 on [0, V(T)], φ(V(T), ·) = h, and ψ = φ_x.
//! Only the marginal law Normal(0, V(t)) of X_t is ever used.

use crate::coeff::TimeFn;
use crate::density::{DensityEnvelope, Target};
use crate::error::{finite, invalid, LabError, Result};
use crate::generator::Generator;
use crate::heat::TerminalMap;
use crate::interp::Pchip;
use crate::pde::{loglog_fit, solve_backward, BackwardProblem, Field, IndexFit, PdeSolution, SolverGrid};
use crate::{fbm, par, quad, rng};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Dense probe count for the monotonicity check of a clock.
const CLOCK_PROBES: usize = 1000;

/// A strictly increasing, continuous V on [0, T] with V(0) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceClock {
    /// V(t) = scale·t^exponent. Fractional Brownian motion is (1, 2H).
    Power { scale: f64, exponent: f64 },
    /// V(t) = rate·t.
    Linear { rate: f64 },
    /// Monotone cubic through (t, V) nodes; the first node must be (0, 0).
    Table { t: Vec<f64>, v: Vec<f64> },
}

impl VarianceClock {
    pub fn fbm(hurst: f64) -> Self {
        Self::Power { scale: 1.0, exponent: 2.0 * hurst }
    }

    pub fn brownian() -> Self {
        Self::Linear { rate: 1.0 }
    }

    /// The clock V = ι of the Wiener integral ∫σ dB^H, tabulated on `n` + 1 points.
    pub fn from_iota(sigma: &TimeFn, hurst: f64, horizon: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "need at least 2 intervals"));
        }
        let t: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        let v =
            par::map_slice(&t, |&s| if s == 0.0 { Ok(0.0) } else { fbm::iota(sigma, s, hurst) }).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self::Table { t, v })
    }

    /// Two-column CSV (t, V). A non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
        let (mut t, mut v) = (Vec::new(), Vec::new());
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(LabError::Format(format!("row {}: expected 2 columns, found {}", i + 1, rec.len())));
            }
            let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match parsed {
                (Ok(a), Ok(b)) => {
                    t.push(a);
                    v.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(LabError::Format(format!("row {}: not a number", i + 1))),
            }
        }
        Ok(Self::Table { t, v })
    }

    fn table(&self) -> Option<Result<Pchip>> {
        match self {
            Self::Table { t, v } => Some(Pchip::new(t.clone(), v.clone())),
            _ => None,
        }
    }

    fn check_table(t: &[f64], v: &[f64]) -> Result<()> {
        if t.first() != Some(&0.0) || v.first() != Some(&0.0) {
            return Err(invalid("clock", "a table must start at (0, 0)"));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("clock", "tabulated V must be strictly increasing"));
        }
        Ok(())
    }

    /// V(t) for t ≥ 0 (tables extend constantly past their last node).
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Power { scale, exponent } => scale * t.max(0.0).powf(*exponent),
            Self::Linear { rate } => rate * t.max(0.0),
            Self::Table { t: ts, v } => match Pchip::new(ts.clone(), v.clone()) {
                Ok(p) => p.eval(t),
                Err(_) => f64::NAN,
            },
        }
    }

    /// U(s) = inf{t ≥ 0 : V(t) ≥ s} for s ∈ [0, V(T)].
    pub fn inverse(&self, s: f64, horizon: f64) -> Result<f64> {
        let top = self.eval(horizon);
        let tol = 1e-12 * (1.0 + top);
        if !(s >= -tol && s <= top + tol) {
            return Err(LabError::OutOfRange { value: s, lo: 0.0, hi: top });
        }
        let s = s.clamp(0.0, top);
        if s == 0.0 {
            return Ok(0.0);
        }
        match self {
            Self::Power { scale, exponent } => Ok((s / scale).powf(1.0 / exponent).min(horizon)),
            Self::Linear { rate } => Ok((s / rate).min(horizon)),
            Self::Table { .. } => {
                let p = self.table().expect("table variant")?;
                p.inverse_increasing(s).ok_or(LabError::OutOfRange { value: s, lo: 0.0, hi: top })
            }
        }
    }

    /// V(0) = 0, finiteness, and strict increase on dense probes of [0, T].
    pub fn validate(&self, horizon: f64) -> Result<()> {
        match self {
            Self::Power { scale, exponent } => {
                if !(scale.is_finite() && *scale > 0.0 && exponent.is_finite() && *exponent > 0.0) {
                    return Err(invalid("clock", "power clock needs scale > 0 and exponent > 0"));
                }
            }
            Self::Linear { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(invalid("clock", "linear clock needs rate > 0"));
                }
            }
            Self::Table { t, v } => {
                self.table().expect("table variant")?;
                Self::check_table(t, v)?;
                if t.last().copied().unwrap_or(0.0) < horizon * (1.0 - 1e-12) {
                    return Err(invalid("clock", format!("table ends before the horizon {horizon}")));
                }
            }
        }
        let vals: Vec<f64> = (0..=CLOCK_PROBES).map(|k| self.eval(horizon * k as f64 / CLOCK_PROBES as f64)).collect();
        if vals[0].abs() > 1e-14 {
            return Err(invalid("clock", format!("V(0) = {} but must vanish", vals[0])));
        }
        if vals.iter().any(|v| !v.is_finite()) || vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("clock", "V must be finite and strictly increasing on [0, T]"));
        }
        Ok(())
    }
}

/// A centred Gaussian driver X, known through its variance clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDriverSpec {
    pub label: String,
    pub clock: VarianceClock,
    pub horizon: f64,
}

impl GaussianDriverSpec {
    pub fn fbm(hurst: f64, horizon: f64) -> Self {
        Self { label: format!("fbm({hurst})"), clock: VarianceClock::fbm(hurst), horizon }
    }

    pub fn brownian(horizon: f64) -> Self {
        Self { label: "brownian".into(), clock: VarianceClock::brownian(), horizon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        self.clock.validate(self.horizon)
    }

    /// V(t) for t ∈ [0, T].
    pub fn variance(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(LabError::OutOfRange { value: t, lo: 0.0, hi: self.horizon });
        }
        Ok(self.clock.eval(t))
    }

    pub fn total_variance(&self) -> f64 {
        self.clock.eval(self.horizon)
    }
}

/// U(s) for the driver's clock.
pub fn inverse_variance(driver: &GaussianDriverSpec, s: f64) -> Result<f64> {
    driver.clock.inverse(s, driver.horizon)
}

/// Discretisation of an auxiliary Brownian PDE: `nx` × `nt` cells on ±k·√(clock span).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferGrid {
    pub nx: usize,
    pub nt: usize,
    pub k: f64,
}

impl Default for TransferGrid {
    fn default() -> Self {
        Self { nx: 400, nt: 400, k: 8.0 }
    }
}

impl TransferGrid {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 50 || self.nt < 50 {
            return Err(invalid("grid", format!("need nx ≥ 50 and nt ≥ 50, got ({}, {})", self.nx, self.nt)));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(invalid("k", "domain width must be positive"));
        }
        Ok(())
    }
}

enum Terminal<'a> {
    Map(&'a TerminalMap),
    Affine { y: f64, z: f64 },
}

/// φ_s + ½φ_xx + f(U(s), x, φ, φ_x) = 0 in clock time.
struct ClockProblem<'a> {
    driver: &'a GaussianDriverSpec,
    f: &'a Generator,
    terminal: Terminal<'a>,
}

impl ClockProblem<'_> {
    fn real_time(&self, s: f64) -> f64 {
        let top = self.driver.total_variance();
        self.driver.clock.inverse(s.clamp(0.0, top), self.driver.horizon).unwrap_or(self.driver.horizon)
    }
}

impl BackwardProblem for ClockProblem<'_> {
    fn diffusion(&self, _s: f64) -> Result<f64> {
        Ok(0.5)
    }

    fn drift(&self, _s: f64) -> f64 {
        0.0
    }

    fn has_generator(&self) -> bool {
        !self.f.is_zero()
    }

    fn generator(&self, s: f64, x: &[f64], u: &[f64], ux: &[f64], out: &mut [f64]) {
        let t = self.real_time(s);
        for i in 0..out.len() {
            out[i] = self.f.eval(t, x[i], u[i], ux[i]);
        }
    }

    fn terminal(&self, x: f64) -> f64 {
        match self.terminal {
            Terminal::Map(h) => h.h(x),
            Terminal::Affine { y, z } => y + z * x,
        }
    }
}

/// Box probes of the structural hypotheses on (f, h). Recorded, never enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureProbe {
    pub half_width: f64,
    pub terminal_min_curvature: f64,
    pub terminal_convex: bool,
    pub generator_min_derivative: f64,
    pub generator_increasing: bool,
}

fn probe_structure(driver: &GaussianDriverSpec, f: &Generator, h: &TerminalMap) -> StructureProbe {
    let half_width = 6.0 * driver.total_variance().sqrt();
    let n = 200;
    let curv = (0..=n).map(|k| h.d2(-half_width + 2.0 * half_width * k as f64 / n as f64)).fold(f64::INFINITY, f64::min);
    let gmin = f.min_first_derivative(driver.horizon, half_width.max(1.0));
    StructureProbe {
        half_width,
        terminal_min_curvature: curv,
        terminal_convex: curv > 0.0,
        generator_min_derivative: gmin,
        generator_increasing: gmin > 0.0,
    }
}

/// φ and ψ on [0, V(T)] × [−k√V(T), k√V(T)], with the driver they belong to.
#[derive(Debug, Clone)]
pub struct TransferSolution {
    pub driver: GaussianDriverSpec,
    pub generator: Generator,
    /// Clock-time solution; its time axis is s ∈ [0, V(T)].
    pub pde: PdeSolution,
    pub probe: StructureProbe,
}

/// Solves the auxiliary Brownian PDE for the driver's clock.
pub fn solve_transferred(driver: &GaussianDriverSpec, f: &Generator, h: &TerminalMap, grid: TransferGrid) -> Result<TransferSolution> {
    driver.validate()?;
    h.validate()?;
    f.validate()?;
    grid.validate()?;
    let top = driver.total_variance();
    let w = grid.k * top.sqrt();
    let probe = probe_structure(driver, f, h);
    let problem = ClockProblem { driver, f, terminal: Terminal::Map(h) };
    let sg = SolverGrid { x_lo: -w, x_hi: w, nx: grid.nx, t_start: 0.0, t_end: top, nt: grid.nt, grading_levels: 0 };
    let mut pde = solve_backward(&problem, sg)?;
    pde.meta.notes.push(format!("transferred solve for driver {}, clock span V(T) = {top}", driver.label));
    pde.meta.notes.push(format!(
        "terminal convexity probe on ±{:.4}: min h'' = {:.6e} ({})",
        probe.half_width,
        probe.terminal_min_curvature,
        if probe.terminal_convex { "holds" } else { "fails" }
    ));
    pde.meta.notes.push(format!(
        "generator monotonicity probe: min first derivative = {:.6e} ({})",
        probe.generator_min_derivative,
        if probe.generator_increasing { "holds" } else { "fails" }
    ));
    Ok(TransferSolution { driver: driver.clone(), generator: f.clone(), pde, probe })
}

impl TransferSolution {
    /// φ(s, x) in clock time.
    pub fn phi(&self, s: f64, x: f64) -> Result<f64> {
        Ok(self.pde.evaluate(s, x)?.u)
    }

    /// ψ(s, x) = φ_x(s, x).
    pub fn psi(&self, s: f64, x: f64) -> Result<f64> {
        Ok(self.pde.evaluate(s, x)?.ux)
    }

    /// (y_t, z_t) on the event X_t = x.
    pub fn solution_at(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let p = self.pde.evaluate(self.driver.variance(t)?, x)?;
        Ok((p.u, p.ux))
    }

    fn field(target: Target) -> Field {
        match target {
            Target::Y => Field::U,
            Target::Z => Field::Ux,
        }
    }

    /// Pushes the standard normals `normals` through x ↦ (φ, ψ)(V(t), √V(t)·x).
    /// Points beyond the domain are evaluated at its edge.
    pub fn pushforward(&self, t: f64, normals: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.driver.variance(t)?;
        let sd = s.sqrt();
        let pairs = par::map_slice(normals, |&g| -> Result<(f64, f64)> {
            let x = sd * g;
            let (u, ux) = self.pde.field_clamped(Field::U, s, x)?;
            Ok((u, ux))
        });
        let mut y = Vec::with_capacity(normals.len());
        let mut z = Vec::with_capacity(normals.len());
        for p in pairs {
            let (a, b) = p?;
            y.push(a);
            z.push(b);
        }
        Ok((y, z))
    }

    /// `n` samples of (y_t, z_t).
    pub fn marginal_samples(&self, t: f64, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.pushforward(t, &rng::normals(seed, n))
    }

    /// (E F, E|F − E F|) for F = y_t or z_t, by Gauss–Hermite quadrature.
    pub fn moments(&self, t: f64, target: Target) -> Result<(f64, f64)> {
        let s = self.driver.variance(t)?;
        let field = Self::field(target);
        let err = std::cell::RefCell::new(None);
        let eval = |x: f64| match self.pde.field_clamped(field, s, x) {
            Ok(v) => v.0,
            Err(e) => {
                *err.borrow_mut() = Some(e);
                0.0
            }
        };
        // Gauss–Hermite first; the interpolated fields are only piecewise smooth, so fall
        // back to adaptive quadrature over ±12 SD when it does not settle.
        let expect = |g: &dyn Fn(f64) -> f64, rel: f64| {
            quad::gaussian_expectation(g, 0.0, s, rel).or_else(|_| {
                let sd = s.sqrt();
                quad::adaptive(|x| g(x) * (-(x * x) / (2.0 * s)).exp(), -12.0 * sd, 12.0 * sd, 1e-14, rel)
                    .map(|q| q.value / (2.0 * std::f64::consts::PI * s).sqrt())
            })
        };
        let m = expect(&eval, 1e-9)?;
        let a = expect(&|x| (eval(x) - m).abs(), 1e-6)?;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        Ok((m, a))
    }

    /// (min, max) over interior nodes with |x| ≤ 6√V(t) of the squared derivative of the
    /// target field: φ_x² for y, φ_xx² for z.
    pub fn derivative_range(&self, t: f64, target: Target) -> Result<(f64, f64)> {
        let s = self.driver.variance(t)?;
        let d = self.pde.slice(Self::field_derivative(target), s)?;
        let reach = 6.0 * s.sqrt();
        let n = self.pde.nx;
        let skip = (n / 20).max(2);
        let vals: Vec<f64> = (skip..=n - skip).filter(|&i| self.pde.x(i).abs() <= reach).map(|i| d[i] * d[i]).collect();
        if vals.is_empty() {
            return Err(LabError::Degenerate(format!("no interior nodes within ±{reach:.3e} at t = {t}")));
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        Ok((lo, hi))
    }

    fn field_derivative(target: Target) -> Field {
        match target {
            Target::Y => Field::Ux,
            Target::Z => Field::Uxx,
        }
    }
}

/// The two constants of the Gaussian-driver envelope,
/// μ/(c₂V) e^{−(x−m)²/(c₁V)} ≤ p(x) ≤ μ/(c₁V) e^{−(x−m)²/(c₂V)}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub c1: f64,
    pub c2: f64,
}

/// Envelope of y_t or z_t with scale V(t). Constants default to 2·min and 2·max of the
/// squared derivative field near the bulk of X_t; μ defaults to E|F − E F|.
pub fn general_envelope(
    sol: &TransferSolution,
    t: f64,
    target: Target,
    constants: Option<EnvelopeConstants>,
    mu: Option<f64>,
) -> Result<DensityEnvelope> {
    if target == Target::Z {
        if !sol.generator.is_linear_in_z() {
            return Err(LabError::Unsupported("a z envelope needs f linear in z".into()));
        }
        if !sol.generator.depends_only_on_t_y() {
            return Err(LabError::Unsupported("the calibrated z envelope needs f = f(t, y)".into()));
        }
    }
    let v = sol.driver.variance(t)?;
    if !(v > 0.0) {
        return Err(LabError::Degenerate(format!("V({t}) = 0: the law is a point mass")));
    }
    let (c, provenance) = match constants {
        Some(c) => (c, "supplied constants"),
        None => {
            let (lo, hi) = sol.derivative_range(t, target)?;
            if lo <= 1e-12 * (1.0 + hi) {
                return Err(LabError::Degenerate(format!("the derivative field nearly vanishes at t = {t} (min square {lo:.3e})")));
            }
            (EnvelopeConstants { c1: 2.0 * lo, c2: 2.0 * hi }, "calibrated on grid nodes, not proven global")
        }
    };
    if !(c.c1.is_finite() && c.c1 > 0.0 && c.c2.is_finite() && c.c2 >= c.c1) {
        return Err(invalid("constants", format!("need 0 < c1 ≤ c2, got ({}, {})", c.c1, c.c2)));
    }
    let (m, abs_dev) = sol.moments(t, target)?;
    let mu = match mu {
        Some(m) => finite("mu", m)?,
        None => abs_dev,
    };
    DensityEnvelope::gaussian(target, m, mu, 0.5 * c.c1 * v, 0.5 * c.c2 * v, provenance)
}

/// One ε of a representation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationRow {
    pub eps: f64,
    /// V(t + ε) − V(t)
    pub delta_v: f64,
    pub y_eps: f64,
    /// (y^ε − y) / ΔV
    pub quotient: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationCurve {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub f_value: f64,
    pub rows: Vec<RepresentationRow>,
    /// Log-log slope of error against ε.
    pub order: IndexFit,
}

impl RepresentationCurve {
    /// Errors strictly decrease as ε shrinks.
    pub fn monotone(&self) -> bool {
        let mut r: Vec<&RepresentationRow> = self.rows.iter().collect();
        r.sort_by(|a, b| a.eps.total_cmp(&b.eps));
        r.windows(2).all(|w| w[0].error < w[1].error)
    }

    /// e(ε_max) / e(ε_min).
    pub fn reduction(&self) -> f64 {
        let lo = self.rows.iter().min_by(|a, b| a.eps.total_cmp(&b.eps));
        let hi = self.rows.iter().max_by(|a, b| a.eps.total_cmp(&b.eps));
        match (lo, hi) {
            (Some(a), Some(b)) => b.error / a.error,
            _ => f64::NAN,
        }
    }
}

/// For each ε, solves the auxiliary problem on [V(t), V(t + ε)] with terminal y + z·x in the
/// increment variable x and reports |(y^ε − y)/ΔV − f(t, y, z)|. With an x-free f the
/// initial value y^ε is deterministic, so the L² error is this absolute value.
pub fn representation_check(
    driver: &GaussianDriverSpec,
    f: &Generator,
    t: f64,
    y: f64,
    z: f64,
    eps: &[f64],
    grid: TransferGrid,
) -> Result<RepresentationCurve> {
    driver.validate()?;
    f.validate()?;
    grid.validate()?;
    if f.depends_on_x() {
        return Err(LabError::Unsupported("the representation limit is stated for f = f(t, y, z)".into()));
    }
    finite("y", y)?;
    finite("z", z)?;
    if !(t >= 0.0 && t < driver.horizon) {
        return Err(LabError::OutOfRange { value: t, lo: 0.0, hi: driver.horizon });
    }
    if eps.is_empty() {
        return Err(invalid("eps", "need at least one ε"));
    }
    for &e in eps {
        if !(e > 0.0 && e < driver.horizon - t) {
            return Err(invalid("eps", format!("each ε must lie in (0, T − t) = (0, {}), got {e}", driver.horizon - t)));
        }
    }
    let f_value = f.eval(t, 0.0, y, z);
    let s0 = driver.variance(t)?;
    let rows = par::map_slice(eps, |&e| -> Result<RepresentationRow> {
        let s1 = driver.variance(t + e)?;
        let delta_v = s1 - s0;
        let w = grid.k * delta_v.sqrt();
        let problem = ClockProblem { driver, f, terminal: Terminal::Affine { y, z } };
        let sg = SolverGrid { x_lo: -w, x_hi: w, nx: grid.nx, t_start: s0, t_end: s1, nt: grid.nt, grading_levels: 0 };
        let sol = solve_backward(&problem, sg)?;
        let y_eps = sol.evaluate(s0, 0.0)?.u;
        let quotient = (y_eps - y) / delta_v;
        Ok(RepresentationRow { eps: e, delta_v, y_eps, quotient, error: (quotient - f_value).abs() })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let order = loglog_fit(rows.iter().map(|r| (r.eps, r.error)));
    Ok(RepresentationCurve { t, y, z, f_value, rows, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Composite;

    #[test]
    fn power_clock_round_trip() {
        let c = VarianceClock::fbm(0.75);
        assert_eq!(c.inverse(1.0, 1.0).unwrap(), 1.0);
        assert!((c.inverse(0.25, 1.0).unwrap() - 0.25f64.powf(2.0 / 3.0)).abs() < 1e-15);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert!((c.inverse(c.eval(t), 1.0).unwrap() - t).abs() < 1e-12);
        }
        assert!(c.inverse(1.5, 1.0).is_err());
    }

    #[test]
    fn table_clock_validation() {
        let bad = VarianceClock::Table { t: vec![0.0, 0.5, 1.0], v: vec![0.0, 0.4, 0.4] };
        assert!(bad.validate(1.0).is_err());
        let shifted = VarianceClock::Table { t: vec![0.0, 1.0], v: vec![0.1, 0.4] };
        assert!(shifted.validate(1.0).is_err());
        let ok = VarianceClock::Table { t: vec![0.0, 0.5, 1.0], v: vec![0.0, 0.3, 1.2] };
        ok.validate(1.0).unwrap();
        let s = ok.eval(0.7);
        assert!((ok.eval(ok.inverse(s, 1.0).unwrap()) - s).abs() < 1e-12);
    }

    #[test]
    fn zero_generator_is_heat_flow() {
        let d = GaussianDriverSpec::fbm(0.75, 1.0);
        let h = TerminalMap::Cubic { linear: 1.0, cubic: 0.1 };
        let sol = solve_transferred(&d, &Generator::Zero, &h, TransferGrid { nx: 200, nt: 100, k: 8.0 }).unwrap();
        let s = d.variance(0.5).unwrap();
        for x in [-0.5, 0.0, 0.7] {
            let exact = crate::heat::semigroup_apply(1.0 - s, |v| h.h(v), x).unwrap();
            assert!((sol.phi(s, x).unwrap() - exact).abs() < 1e-3);
        }
    }

    #[test]
    fn linear_terminal_gives_exact_gaussian_envelope() {
        let d = GaussianDriverSpec::brownian(1.0);
        let h = TerminalMap::Identity;
        let sol = solve_transferred(&d, &Generator::Zero, &h, TransferGrid { nx: 100, nt: 50, k: 8.0 }).unwrap();
        let e = general_envelope(&sol, 0.5, Target::Y, None, None).unwrap();
        for x in [-1.0f64, 0.0, 0.3] {
            let exact = (-(x * x)).exp() / std::f64::consts::PI.sqrt();
            assert!((e.lower(x).unwrap() - exact).abs() < 1e-6);
            assert!((e.upper(x).unwrap() - exact).abs() < 1e-6);
        }
        assert!(matches!(
            general_envelope(&sol, 0.5, Target::Z, None, None),
            Err(LabError::Degenerate(_)) | Err(LabError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn z_envelope_rejects_nonlinear_z() {
        let d = GaussianDriverSpec::brownian(1.0);
        let f = Generator::Composite(Composite { z_tanh: 0.2, ..Default::default() });
        let h = TerminalMap::Cubic { linear: 1.0, cubic: 0.1 };
        let sol = solve_transferred(&d, &f, &h, TransferGrid { nx: 100, nt: 50, k: 8.0 }).unwrap();
        assert!(matches!(general_envelope(&sol, 0.5, Target::Z, None, None), Err(LabError::Unsupported(_))));
    }

    #[test]
    fn representation_of_linear_generator() {
        let d = GaussianDriverSpec::brownian(1.0);
        let f = Generator::Composite(Composite { y_lin: 1.0, ..Default::default() });
        let c = representation_check(&d, &f, 0.2, 1.0, 0.0, &[0.2, 0.1, 0.05], TransferGrid { nx: 100, nt: 100, k: 8.0 }).unwrap();
        for r in &c.rows {
            let exact = (r.eps.exp() - 1.0) / r.eps;
            assert!((r.quotient - exact).abs() < 1e-5, "{r:?}");
        }
        assert!(c.monotone());
        assert!(representation_check(&d, &f, 0.2, 1.0, 0.0, &[0.8], TransferGrid::default()).is_err());
    }
}
