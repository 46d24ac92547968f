//! Deterministic time functions, coefficient sets and time grids.

use crate::error::{invalid, LabError, Result};
use crate::interp::Pchip;
use serde::{Deserialize, Serialize};

/// A scalar function of time: a closed-form tag or an interpolated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeFnDef", into = "TimeFnDef")]
pub enum TimeFn {
    Constant(f64),
    /// `Σ c_k t^k`
    Polynomial(Vec<f64>),
    /// Monotone cubic interpolation of `(t, v)` nodes, constant outside.
    Table(Pchip),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TimeFnDef {
    Constant { value: f64 },
    Polynomial { coeffs: Vec<f64> },
    Table { t: Vec<f64>, v: Vec<f64> },
}

impl TryFrom<TimeFnDef> for TimeFn {
    type Error = LabError;
    fn try_from(d: TimeFnDef) -> Result<Self> {
        match d {
            TimeFnDef::Constant { value } => {
                crate::error::finite("value", value)?;
                Ok(TimeFn::Constant(value))
            }
            TimeFnDef::Polynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("coeffs", "need at least one finite coefficient"));
                }
                Ok(TimeFn::Polynomial(coeffs))
            }
            TimeFnDef::Table { t, v } => Ok(TimeFn::Table(Pchip::new(t, v)?)),
        }
    }
}

impl From<TimeFn> for TimeFnDef {
    fn from(f: TimeFn) -> Self {
        match f {
            TimeFn::Constant(value) => TimeFnDef::Constant { value },
            TimeFn::Polynomial(coeffs) => TimeFnDef::Polynomial { coeffs },
            TimeFn::Table(p) => TimeFnDef::Table { t: p.nodes().to_vec(), v: p.values().to_vec() },
        }
    }
}

impl TimeFn {
    pub fn constant(v: f64) -> Self {
        TimeFn::Constant(v)
    }

    pub fn linear(a: f64, b: f64) -> Self {
        TimeFn::Polynomial(vec![a, b])
    }

    pub fn table(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Ok(TimeFn::Table(Pchip::new(t, v)?))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, k| acc * t + k),
            TimeFn::Table(p) => p.eval(t),
        }
    }

    /// Exact ∫_a^b.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => c * (b - a),
            TimeFn::Polynomial(c) => {
                let prim = |t: f64| c.iter().enumerate().rev().fold(0.0, |acc, (k, ck)| acc * t + ck / (k as f64 + 1.0)) * t;
                prim(b) - prim(a)
            }
            TimeFn::Table(p) => p.integral(a, b),
        }
    }

    /// k·f, in the same representation.
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            TimeFn::Constant(c) => TimeFn::Constant(k * c),
            TimeFn::Polynomial(c) => TimeFn::Polynomial(c.iter().map(|v| k * v).collect()),
            TimeFn::Table(p) => {
                let v = p.values().iter().map(|v| k * v).collect();
                TimeFn::Table(Pchip::new(p.nodes().to_vec(), v).expect("scaling keeps a valid table"))
            }
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            TimeFn::Constant(c) => Some(*c),
            TimeFn::Polynomial(c) if c.iter().skip(1).all(|v| *v == 0.0) => Some(c[0]),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() == Some(0.0)
    }

    /// (inf, sup) on [a, b]. Tables use node values inside the window plus the
    /// end values (exact for a monotone interpolant); polynomials use a dense probe.
    pub fn inf_sup(&self, a: f64, b: f64) -> (f64, f64) {
        match self {
            TimeFn::Constant(c) => (*c, *c),
            TimeFn::Polynomial(_) => {
                let n = 4096;
                (0..=n)
                    .map(|k| self.eval(a + (b - a) * k as f64 / n as f64))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            }
            TimeFn::Table(p) => {
                let mut lo = self.eval(a).min(self.eval(b));
                let mut hi = self.eval(a).max(self.eval(b));
                for (t, v) in p.nodes().iter().zip(p.values()) {
                    if *t > a && *t < b {
                        lo = lo.min(*v);
                        hi = hi.max(*v);
                    }
                }
                (lo, hi)
            }
        }
    }
}

/// The deterministic coefficients of the forward process and the linear generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    #[serde(default = "zero_fn")]
    pub b: TimeFn,
    #[serde(default = "one_fn")]
    pub sigma: TimeFn,
    #[serde(default = "zero_fn")]
    pub alpha: TimeFn,
    #[serde(default = "zero_fn")]
    pub beta: TimeFn,
    #[serde(default = "zero_fn")]
    pub gamma: TimeFn,
    #[serde(default)]
    pub eta0: f64,
}

fn zero_fn() -> TimeFn {
    TimeFn::Constant(0.0)
}

fn one_fn() -> TimeFn {
    TimeFn::Constant(1.0)
}

impl Default for CoefficientSet {
    fn default() -> Self {
        Self { b: zero_fn(), sigma: one_fn(), alpha: zero_fn(), beta: zero_fn(), gamma: zero_fn(), eta0: 0.0 }
    }
}

impl CoefficientSet {
    /// Checks σ(t) ≠ 0 and finiteness of every function on [0, T]: on a dense probe,
    /// on table nodes, and against sign changes between table nodes.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        crate::error::finite("eta0", self.eta0)?;
        let named = [("b", &self.b), ("sigma", &self.sigma), ("alpha", &self.alpha), ("beta", &self.beta), ("gamma", &self.gamma)];
        let n = 2000;
        for (name, f) in named {
            for k in 0..=n {
                let t = horizon * k as f64 / n as f64;
                if !f.eval(t).is_finite() {
                    return Err(invalid(name, format!("not finite at t = {t}")));
                }
            }
        }
        let mut probes: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        if let TimeFn::Table(p) = &self.sigma {
            probes.extend(p.nodes().iter().copied().filter(|t| *t >= 0.0 && *t <= horizon));
        }
        let mut sign = 0.0;
        for t in probes {
            let s = self.sigma.eval(t);
            if s == 0.0 {
                return Err(invalid("sigma", format!("violates σ(t) ≠ 0: σ({t}) = 0")));
            }
            if sign != 0.0 && s.signum() != sign {
                return Err(invalid("sigma", format!("violates σ(t) ≠ 0: sign change before t = {t}")));
            }
            sign = s.signum();
        }
        Ok(())
    }

    /// η₀ + ∫₀ᵗ b.
    pub fn drift_mean(&self, t: f64) -> f64 {
        self.eta0 + self.b.integral(0.0, t)
    }
}

/// Ordered observation times in [0, T].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid("grid", "needs at least 2 points"));
        }
        if points.iter().any(|t| !t.is_finite()) || points[0] < 0.0 {
            return Err(invalid("grid", "points must be finite and nonnegative"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid", "points must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `n` equal steps on [0, T], including both ends.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0) || n == 0 {
            return Err(invalid("grid", "need T > 0 and at least one step"));
        }
        Self::new((0..=n).map(|k| horizon * k as f64 / n as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the grid point within 1e-12 of `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|p| (p - t).abs() <= 1e-12 * (1.0 + t.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_round_trip_and_tags() {
        let f: TimeFn = serde_json::from_str(r#"{"kind":"polynomial","coeffs":[1.0,0.5]}"#).unwrap();
        assert_eq!(f.eval(2.0), 2.0);
        let t: TimeFn = serde_json::from_str(r#"{"kind":"table","t":[0,1,2],"v":[1,2,2.5]}"#).unwrap();
        let back: TimeFn = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn polynomial_integral_exact() {
        let f = TimeFn::Polynomial(vec![1.0, 2.0, 3.0]);
        assert!((f.integral(0.5, 2.0) - (1.5 + (4.0 - 0.25) + (8.0 - 0.125))).abs() < 1e-14);
    }

    #[test]
    fn zero_sigma_rejected_with_invariant_text() {
        let mut c = CoefficientSet { sigma: TimeFn::table(vec![0.0, 0.5, 1.0], vec![1.0, 0.0, 1.0]).unwrap(), ..Default::default() };
        let e = c.validate(1.0).unwrap_err().to_string();
        assert!(e.contains("σ(t) ≠ 0"), "{e}");
        c.sigma = TimeFn::table(vec![0.0, 1.0], vec![1.0, -1.0]).unwrap();
        assert!(c.validate(1.0).unwrap_err().to_string().contains("σ(t) ≠ 0"));
    }

    #[test]
    fn grid_invariants() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::new(vec![-0.1, 0.5]).is_err());
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.index_of(1.5), Some(3));
    }
}
