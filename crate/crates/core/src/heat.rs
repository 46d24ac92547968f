//! Heat kernel, heat semigroup and the closed-form linear fBSDE solution.

use crate::coeff::CoefficientSet;
use crate::error::{invalid, LabError, Result};
use crate::fbm;
use crate::quad;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative agreement required between successive Gauss–Hermite estimates.
pub const SEMIGROUP_TOL: f64 = 1e-8;

/// p_t(x) = (2πt)^{-1/2} exp(−x²/2t).
pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("variance must be positive, got {t}")));
    }
    Ok((-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

/// P_t g(x) = ∫ p_t(x − y) g(y) dy, by Gauss–Hermite with node doubling.
pub fn semigroup_apply<G: Fn(f64) -> f64>(t: f64, g: G, x: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("variance must be nonnegative, got {t}")));
    }
    quad::gaussian_expectation(g, x, t, SEMIGROUP_TOL)
}

/// Terminal maps with closed-form first and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalMap {
    Identity,
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// h′(x) = mid + d·tanh(x/scale) with mid = (lo+hi)/2, d = (hi−lo)/2, h(0) = 0.
    /// Strictly convex with lo < h′ < hi.
    SmoothConvex {
        lo: f64,
        hi: f64,
        scale: f64,
    },
    /// h(x) = linear·x + cubic·x³.
    Cubic {
        linear: f64,
        cubic: f64,
    },
}

/// log cosh without overflow.
fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl TerminalMap {
    pub fn h(&self, x: f64) -> f64 {
        match *self {
            TerminalMap::Identity => x,
            TerminalMap::Affine { intercept, slope } => intercept + slope * x,
            TerminalMap::SmoothConvex { lo, hi, scale } => {
                let (mid, d) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                mid * x + d * scale * ln_cosh(x / scale)
            }
            TerminalMap::Cubic { linear, cubic } => x * (linear + cubic * x * x),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            TerminalMap::Identity => 1.0,
            TerminalMap::Affine { slope, .. } => slope,
            TerminalMap::SmoothConvex { lo, hi, scale } => 0.5 * (lo + hi) + 0.5 * (hi - lo) * (x / scale).tanh(),
            TerminalMap::Cubic { linear, cubic } => linear + 3.0 * cubic * x * x,
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            TerminalMap::Identity | TerminalMap::Affine { .. } => 0.0,
            TerminalMap::SmoothConvex { lo, hi, scale } => {
                let c = (x / scale).cosh();
                0.5 * (hi - lo) / (scale * c * c)
            }
            TerminalMap::Cubic { cubic, .. } => 6.0 * cubic * x,
        }
    }

    /// Declared polynomial growth exponent p: |h(x)| ≲ 1 + |x|^p.
    pub fn growth_power(&self) -> f64 {
        match self {
            TerminalMap::Cubic { cubic, .. } if *cubic != 0.0 => 3.0,
            _ => 1.0,
        }
    }

    /// max |h(x)|/(1 + |x|^p) over a probe grid of [lo, hi].
    pub fn growth_ratio(&self, lo: f64, hi: f64) -> f64 {
        let p = self.growth_power();
        (0..=1000).map(|k| lo + (hi - lo) * k as f64 / 1000.0).map(|x| self.h(x).abs() / (1.0 + x.abs().powf(p))).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TerminalMap::SmoothConvex { lo, hi, scale } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi && scale > 0.0) {
                    return Err(invalid("terminal", "smooth_convex needs lo < hi and scale > 0"));
                }
            }
            TerminalMap::Affine { intercept, slope } => {
                crate::error::finite("intercept", intercept)?;
                crate::error::finite("slope", slope)?;
            }
            TerminalMap::Cubic { linear, cubic } => {
                crate::error::finite("linear", linear)?;
                crate::error::finite("cubic", cubic)?;
            }
            TerminalMap::Identity => {}
        }
        Ok(())
    }
}

/// Derivative bounds 0 < c ≤ h′ ≤ C and 0 < c̃ ≤ h″ ≤ C̃.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeBounds {
    pub c: f64,
    pub c_upper: f64,
    pub c_tilde: f64,
    pub c_tilde_upper: f64,
}

/// Problem data for the linear fBSDE dy = −(α + βy + γz)dt − z dB^H, y_T = h(η_T).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFbsdeSpec {
    pub coeffs: CoefficientSet,
    pub terminal: TerminalMap,
    pub hurst: f64,
    pub horizon: f64,
    pub bounds: DerivativeBounds,
    /// Probe-check the derivative bounds in `validate`. Only diagnostics switch this off.
    #[serde(default = "yes")]
    pub check_bounds: bool,
}

fn yes() -> bool {
    true
}

impl LinearFbsdeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(LabError::Unsupported(format!("linear solve needs H in (1/2, 1), got {}", self.hurst)));
        }
        self.coeffs.validate(self.horizon)?;
        self.terminal.validate()?;
        if self.check_bounds {
            self.check_derivative_bounds()?;
        }
        Ok(())
    }

    /// Probes c ≤ h′ ≤ C and c̃ ≤ h″ ≤ C̃ at 1000 points of [η₀ − 6√ι_T, η₀ + 6√ι_T].
    pub fn check_derivative_bounds(&self) -> Result<()> {
        let b = self.bounds;
        if !(b.c > 0.0 && b.c <= b.c_upper && b.c_tilde > 0.0 && b.c_tilde <= b.c_tilde_upper) {
            return Err(invalid("bounds", "need 0 < c ≤ C and 0 < c̃ ≤ C̃"));
        }
        let half = 6.0 * self.iota(self.horizon)?.sqrt();
        let eta0 = self.coeffs.eta0;
        let slack = 1e-12;
        for k in 0..1000 {
            let x = eta0 - half + 2.0 * half * k as f64 / 999.0;
            let d1 = self.terminal.d1(x);
            let d2 = self.terminal.d2(x);
            if d1 < b.c * (1.0 - slack) || d1 > b.c_upper * (1.0 + slack) {
                return Err(invalid("terminal", format!("h'({x}) = {d1} outside [{}, {}]", b.c, b.c_upper)));
            }
            if d2 < b.c_tilde * (1.0 - slack) || d2 > b.c_tilde_upper * (1.0 + slack) {
                return Err(invalid("terminal", format!("h''({x}) = {d2} outside [{}, {}]", b.c_tilde, b.c_tilde_upper)));
            }
        }
        Ok(())
    }

    pub fn iota(&self, t: f64) -> Result<f64> {
        fbm::iota(&self.coeffs.sigma, t, self.hurst)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(invalid("t", format!("must lie in [0, {}], got {t}", self.horizon)));
        }
        Ok(())
    }

    /// ϑ₁(t) and ϑ₂(t): ι_t·exp(2(T − t)·inf β) and ι_t·exp(2(T − t)·sup β).
    pub fn thetas(&self, t: f64) -> Result<(f64, f64)> {
        self.check_time(t)?;
        let iota = self.iota(t)?;
        let (lo, hi) = self.coeffs.beta.inf_sup(0.0, self.horizon);
        let d = 2.0 * (self.horizon - t);
        Ok((iota * (d * lo).exp(), iota * (d * hi).exp()))
    }
}

/// Ê(g(η_T) | F_t) = P_{ι_T − ι_t} g(η₀ + ∫₀ᵀ b + w), where w is the realised ∫₀ᵗ σ dB^H.
pub fn quasi_conditional_expectation<G: Fn(f64) -> f64>(spec: &LinearFbsdeSpec, g: G, t: f64, w: f64) -> Result<f64> {
    spec.check_time(t)?;
    let var = (spec.iota(spec.horizon)? - spec.iota(t)?).max(0.0);
    semigroup_apply(var, g, spec.coeffs.drift_mean(spec.horizon) + w)
}

/// Everything in the closed-form solution that depends on t but not on w.
#[derive(Debug, Clone)]
pub struct LinearSlice<'a> {
    spec: &'a LinearFbsdeSpec,
    pub t: f64,
    /// ι_T − ι_t
    pub remaining_variance: f64,
    /// ι_t
    pub iota_t: f64,
    /// η₀ + ∫₀ᵀ b − ∫ₜᵀ σγ
    pub shift: f64,
    /// e^{∫ₜᵀ β}
    pub growth: f64,
    /// ∫ₜᵀ α_s e^{∫ₜˢ β} ds
    pub alpha_term: f64,
    pub sigma_t: f64,
}

impl<'a> LinearSlice<'a> {
    pub fn new(spec: &'a LinearFbsdeSpec, t: f64) -> Result<Self> {
        spec.check_time(t)?;
        let c = &spec.coeffs;
        let big_t = spec.horizon;
        let iota_t = spec.iota(t)?;
        let remaining_variance = (spec.iota(big_t)? - iota_t).max(0.0);
        let sigma_gamma = match (c.sigma.is_constant(), c.gamma.is_constant()) {
            (Some(s), Some(g)) => s * g * (big_t - t),
            _ => quad::adaptive(|s| c.sigma.eval(s) * c.gamma.eval(s), t, big_t, 1e-14, 1e-13)?.value,
        };
        let shift = c.drift_mean(big_t) - sigma_gamma;
        let growth = c.beta.integral(t, big_t).exp();
        let alpha_term = if c.alpha.is_zero() {
            0.0
        } else {
            quad::adaptive(|s| c.alpha.eval(s) * c.beta.integral(t, s).exp(), t, big_t, 1e-14, 1e-13)?.value
        };
        Ok(Self { spec, t, remaining_variance, iota_t, shift, growth, alpha_term, sigma_t: c.sigma.eval(t) })
    }

    /// (y_t, z_t) given w = ∫₀ᵗ σ dB^H.
    pub fn solve(&self, w: f64) -> Result<(f64, f64)> {
        let h = &self.spec.terminal;
        let arg = self.shift + w;
        let ph = semigroup_apply(self.remaining_variance, |x| h.h(x), arg)?;
        let pdh = semigroup_apply(self.remaining_variance, |x| h.d1(x), arg)?;
        Ok((self.growth * ph + self.alpha_term, -self.sigma_t * self.growth * pdh))
    }

    /// E y_t, using P_{ι_T−ι_t} ∘ P_{ι_t} = P_{ι_T}.
    pub fn mean_y(&self) -> Result<f64> {
        let h = &self.spec.terminal;
        let total = self.remaining_variance + self.iota_t;
        Ok(self.growth * semigroup_apply(total, |x| h.h(x), self.shift)? + self.alpha_term)
    }

    /// E z_t.
    pub fn mean_z(&self) -> Result<f64> {
        let h = &self.spec.terminal;
        let total = self.remaining_variance + self.iota_t;
        Ok(-self.sigma_t * self.growth * semigroup_apply(total, |x| h.d1(x), self.shift)?)
    }
}

/// Closed-form (y_t, z_t) of the linear fBSDE at realised w = ∫₀ᵗ σ dB^H:
/// y = e^{∫ₜᵀβ} P_{ι_T−ι_t} h(η₀ + ∫₀ᵀb − ∫ₜᵀσγ + w) + ∫ₜᵀ α_s e^{∫ₜˢβ} ds,
/// z = −σ(t) e^{∫ₜᵀβ} P_{ι_T−ι_t} h′(same argument).
pub fn linear_solve(spec: &LinearFbsdeSpec, t: f64, w: f64) -> Result<(f64, f64)> {
    LinearSlice::new(spec, t)?.solve(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::TimeFn;

    fn spec(terminal: TerminalMap) -> LinearFbsdeSpec {
        LinearFbsdeSpec {
            coeffs: CoefficientSet::default(),
            terminal,
            hurst: 0.75,
            horizon: 1.0,
            bounds: DerivativeBounds { c: 1.0, c_upper: 1.0, c_tilde: 1.0, c_tilde_upper: 1.0 },
            check_bounds: false,
        }
    }

    #[test]
    fn kernel_values() {
        assert!((heat_kernel(1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(heat_kernel(0.3, 1.1).unwrap(), heat_kernel(0.3, -1.1).unwrap());
        assert!(heat_kernel(0.0, 1.0).is_err());
    }

    #[test]
    fn semigroup_basics() {
        assert_eq!(semigroup_apply(0.0, |x: f64| x.sin(), 0.4).unwrap(), 0.4f64.sin());
        let v = semigroup_apply(0.7, |x: f64| 2.0 - 3.0 * x, 0.4).unwrap();
        assert!((v - (2.0 - 1.2)).abs() < 1e-13);
        assert!((semigroup_apply(0.7, |x: f64| x * x, 0.0).unwrap() - 0.7).abs() < 1e-13);
        assert!(semigroup_apply(-0.1, |x: f64| x, 0.0).is_err());
    }

    #[test]
    fn smooth_convex_derivatives_consistent() {
        let h = TerminalMap::SmoothConvex { lo: 0.5, hi: 2.0, scale: 3.0 };
        for x in [-40.0, -2.0, 0.0, 0.7, 5.0, 400.0] {
            let e = 1e-5 * (1.0 + f64::abs(x));
            let fd1 = (h.h(x + e) - h.h(x - e)) / (2.0 * e);
            let fd2 = (h.d1(x + e) - h.d1(x - e)) / (2.0 * e);
            assert!((fd1 - h.d1(x)).abs() < 1e-8 * (1.0 + f64::abs(x)), "x={x}");
            assert!((fd2 - h.d2(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn affine_terminal_closed_forms() {
        let mut s = spec(TerminalMap::Identity);
        s.coeffs.eta0 = 0.3;
        s.coeffs.sigma = TimeFn::linear(1.0, 0.5);
        let (y, z) = linear_solve(&s, 0.4, 0.2).unwrap();
        assert!((y - 0.5).abs() < 1e-13);
        assert!((z + 1.2).abs() < 1e-13);
    }

    #[test]
    fn deterministic_alpha_only() {
        let mut s = spec(TerminalMap::Affine { intercept: 0.0, slope: 0.0 });
        s.coeffs.alpha = TimeFn::constant(0.7);
        let (y, z) = linear_solve(&s, 0.25, 1.3).unwrap();
        assert!((y - 0.7 * 0.75).abs() < 1e-13);
        assert_eq!(z, 0.0);
    }

    #[test]
    fn bounds_probe_rejects_violation() {
        let mut s = spec(TerminalMap::SmoothConvex { lo: 0.5, hi: 2.0, scale: 3.0 });
        s.check_bounds = true;
        s.bounds = DerivativeBounds { c: 0.5, c_upper: 2.0, c_tilde: 0.01, c_tilde_upper: 0.25 };
        s.validate().unwrap();
        s.bounds.c = 0.9;
        assert!(s.validate().is_err());
    }
}
