use super::engine::{solve_backward, BackwardProblem, SolverGrid};
use super::solution::{Field, PdeSolution};
use crate::coeff::CoefficientSet;
use crate::error::{invalid, LabError, Result};
use crate::fbm::{self, EnsembleKind, FbmEnsemble};
use crate::generator::Generator;
use crate::heat::{LinearFbsdeSpec, TerminalMap};
use serde::{Deserialize, Serialize};

/// Geometric sub-cells in the first time step, where ι' may vanish.
const GRADING_LEVELS: usize = 10;

/// The nonlinear fBSDE with Markovian solution y_t = u(t, η_t), z_t = σ_t u_x(t, η_t),
/// where η_t = η₀ + ∫₀ᵗ b + ∫₀ᵗ σ dB^H and
/// u_t + ½ ι'_t u_xx + b u_x + f(t, x, u, σ u_x) = 0, u(T, ·) = h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearFbsdeSpec {
    pub coeffs: CoefficientSet,
    pub generator: Generator,
    /// Declared Lipschitz constant K of f and f_y in (y, z).
    pub lipschitz: f64,
    pub terminal: TerminalMap,
    pub hurst: f64,
    pub horizon: f64,
}

impl NonlinearFbsdeSpec {
    /// The PDE form of the linear fBSDE dy = −(α + βy + γz)dt − z dB^H. Its z is −σu_x,
    /// so the generator in the PDE variable p = σu_x is α + βu − γp.
    pub fn from_linear(spec: &LinearFbsdeSpec) -> Self {
        let c = &spec.coeffs;
        let generator = Generator::Linear { alpha: c.alpha.clone(), beta: c.beta.clone(), gamma: c.gamma.scaled(-1.0) };
        let lipschitz = generator.lipschitz_bound(spec.horizon);
        Self { coeffs: c.clone(), generator, lipschitz, terminal: spec.terminal.clone(), hurst: spec.hurst, horizon: spec.horizon }
    }

    /// Checks coefficients and terminal map, and probes the declared Lipschitz constant
    /// on a box of half-width 10.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if !(self.hurst > 0.5 && self.hurst < 1.0) {
            return Err(LabError::Unsupported(format!("the mixed PDE needs H in (1/2, 1), got {}", self.hurst)));
        }
        self.coeffs.validate(self.horizon)?;
        self.terminal.validate()?;
        self.generator.validate()?;
        if !(self.lipschitz >= 0.0) {
            return Err(invalid("lipschitz", "must be nonnegative"));
        }
        let probed = self.generator.probe_lipschitz(self.horizon, 10.0);
        if probed > self.lipschitz * (1.0 + 1e-3) + 1e-6 {
            return Err(invalid("lipschitz", format!("declared K = {} but the probe found slope {probed:.4}", self.lipschitz)));
        }
        Ok(())
    }

    pub fn iota(&self, t: f64) -> Result<f64> {
        fbm::iota(&self.coeffs.sigma, t, self.hurst)
    }

    /// [η₀ + ∫₀ᵀ min(b, 0) − k√ι_T, η₀ + ∫₀ᵀ max(b, 0) + k√ι_T].
    pub fn domain(&self, k: f64) -> Result<(f64, f64)> {
        let big_t = self.horizon;
        let b = &self.coeffs.b;
        let (neg, pos) = match b.is_constant() {
            Some(v) => ((v.min(0.0)) * big_t, v.max(0.0) * big_t),
            None => {
                let lo = crate::quad::adaptive(|s| b.eval(s).min(0.0), 0.0, big_t, 1e-12, 1e-10)?.value;
                let hi = crate::quad::adaptive(|s| b.eval(s).max(0.0), 0.0, big_t, 1e-12, 1e-10)?.value;
                (lo, hi)
            }
        };
        let w = k * self.iota(big_t)?.sqrt();
        Ok((self.coeffs.eta0 + neg - w, self.coeffs.eta0 + pos + w))
    }
}

/// [`NonlinearFbsdeSpec`] as a [`BackwardProblem`].
pub struct MixedProblem<'a> {
    spec: &'a NonlinearFbsdeSpec,
}

impl<'a> MixedProblem<'a> {
    pub fn new(spec: &'a NonlinearFbsdeSpec) -> Self {
        Self { spec }
    }
}

impl BackwardProblem for MixedProblem<'_> {
    fn diffusion(&self, t: f64) -> Result<f64> {
        Ok(0.5 * fbm::iota_derivative(&self.spec.coeffs.sigma, t, self.spec.hurst)?)
    }

    fn drift(&self, t: f64) -> f64 {
        self.spec.coeffs.b.eval(t)
    }

    fn has_generator(&self) -> bool {
        !self.spec.generator.is_zero()
    }

    fn generator(&self, t: f64, x: &[f64], u: &[f64], ux: &[f64], out: &mut [f64]) {
        let s = self.spec.coeffs.sigma.eval(t);
        for i in 0..out.len() {
            out[i] = self.spec.generator.eval(t, x[i], u[i], s * ux[i]);
        }
    }

    fn terminal(&self, x: f64) -> f64 {
        self.spec.terminal.h(x)
    }
}

/// Crank–Nicolson march of the mixed PDE on `nx` × `nt` cells over the domain of
/// half-width `k`√ι_T around the drifted centre.
pub fn solve_mixed_pde(spec: &NonlinearFbsdeSpec, nx: usize, nt: usize, k: f64) -> Result<PdeSolution> {
    spec.validate()?;
    if nx < 50 || nt < 50 {
        return Err(invalid("grid", format!("need nx ≥ 50 and nt ≥ 50, got ({nx}, {nt})")));
    }
    if !(k > 0.0) {
        return Err(invalid("k", "domain width must be positive"));
    }
    let (x_lo, x_hi) = spec.domain(k)?;
    let grid = SolverGrid { x_lo, x_hi, nx, t_start: 0.0, t_end: spec.horizon, nt, grading_levels: GRADING_LEVELS };
    let mut sol = solve_backward(&MixedProblem::new(spec), grid)?;
    sol.meta.notes.push(format!("mixed pde, domain width k = {k}"));
    Ok(sol)
}

/// Samples of (y_t, z_t) and diagnostics for paths leaving the PDE domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Share of paths with η_t outside the domain (evaluated at the clamped point).
    pub outside_fraction: f64,
    /// Set when more than 0.1% of paths fell outside.
    pub widen_hint: Option<String>,
}

/// y = u(t, η_t), z = σ(t) u_x(t, η_t) per path, η_t = η₀ + ∫₀ᵗ b + w_t.
pub fn bsde_marginals(sol: &PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, ensemble: &FbmEnsemble) -> Result<Marginals> {
    if ensemble.kind != EnsembleKind::WienerIntegral {
        return Err(invalid("ensemble", "need the Wiener-integral kind"));
    }
    if (ensemble.hurst - spec.hurst).abs() > 0.0 {
        return Err(invalid("ensemble", format!("Hurst {} does not match the spec's {}", ensemble.hurst, spec.hurst)));
    }
    let j = ensemble.grid.index_of(t).ok_or_else(|| invalid("t", format!("{t} is not a point of the ensemble grid")))?;
    let centre = spec.coeffs.drift_mean(t);
    let sigma = spec.coeffs.sigma.eval(t);
    let w = ensemble.column(j);
    let pairs = crate::par::map_slice(&w, |wi| -> Result<(f64, f64, bool)> {
        let x = centre + wi;
        let outside = x < sol.x_lo || x > sol.x_hi;
        let (u, ux) = sol.field_clamped(Field::U, t, x)?;
        Ok((u, sigma * ux, outside))
    });
    let mut y = Vec::with_capacity(w.len());
    let mut z = Vec::with_capacity(w.len());
    let mut outside = 0usize;
    for p in pairs {
        let (a, b, o) = p?;
        y.push(a);
        z.push(b);
        outside += o as usize;
    }
    let outside_fraction = if w.is_empty() { 0.0 } else { outside as f64 / w.len() as f64 };
    let widen_hint = (outside_fraction > 1e-3).then(|| {
        let msg =
            format!("{:.3}% of paths left [{}, {}] at t = {t}; increase the domain width k", 100.0 * outside_fraction, sol.x_lo, sol.x_hi);
        log::warn!("{msg}");
        msg
    });
    Ok(Marginals { y, z, outside_fraction, widen_hint })
}
