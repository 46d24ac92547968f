use super::envelope::{DensityEnvelope, GrowthIndices, NonGaussianShape, Target};
use crate::error::{invalid, LabError, Result};
use crate::pde::{loglog_fit, Field, IndexFit, NonlinearFbsdeSpec, PdeSolution};
use crate::quad;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Multiplier applied to probe maxima so the inequalities also hold between probes.
pub const PROBE_MARGIN: f64 = 1.01;

const PROBES_PER_CELL: usize = 8;

/// Envelope constants fitted on a PDE solution. These make the defining inequalities
/// hold on the probe domain; they are not proven global.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target: Target,
    pub t: f64,
    pub eps: f64,
    pub delta: f64,
    pub indices: GrowthIndices,
    /// D(x) ≤ C_ε (1 + |x|^ε̄) for the derivative field D.
    pub c_eps: f64,
    /// |x| ≤ C_δ (1 + |F(x)|^δ̄) for the value map F.
    pub c_delta: f64,
    pub derivative_fit: IndexFit,
    pub inverse_fit: IndexFit,
    /// ι_t
    pub iota: f64,
    /// η₀ + ∫₀ᵗ b
    pub drift_mean: f64,
    /// 1 for y, σ_t² for z.
    pub scale: f64,
}

impl Calibration {
    /// C̃ s ι / (1 + |y + m|^{2λδ̄}).
    pub fn g_lower(&self, y: f64, m: f64) -> f64 {
        let i = &self.indices;
        i.c_tilde_delta * self.scale * self.iota / (1.0 + (y + m).abs().powf(2.0 * i.lambda * i.delta_bar))
    }

    /// C s ι (1 + Y)(1 + Y + ι^{ε̄/2}), Y = |y + m|^{ε̄δ̄}.
    pub fn g_upper(&self, y: f64, m: f64) -> f64 {
        let i = &self.indices;
        let p = (y + m).abs().powf(i.product());
        i.c_eps_delta * self.scale * self.iota * (1.0 + p) * (1.0 + p + self.iota.powf(0.5 * i.eps_bar))
    }

    /// The density envelope these constants imply. For z, C₁ = 2C and C₂ = C̃.
    pub fn envelope(&self, m: f64, mu: f64) -> Result<DensityEnvelope> {
        let shape = match self.target {
            Target::Y => NonGaussianShape::y_target(self.indices, self.iota)?,
            Target::Z => NonGaussianShape::z_target(
                self.indices,
                self.iota,
                self.scale.sqrt(),
                2.0 * self.indices.c_eps_delta,
                self.indices.c_tilde_delta,
            )?,
        };
        DensityEnvelope::nongaussian(self.target, m, mu, shape, "probe-calibrated, not proven global")
    }
}

/// F (the value map) and D (its derivative field) for a target.
struct Maps<'a> {
    sol: &'a PdeSolution,
    t: f64,
    target: Target,
    sigma: f64,
}

impl Maps<'_> {
    fn new<'a>(sol: &'a PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, target: Target) -> Result<Maps<'a>> {
        let sigma = spec.coeffs.sigma.eval(t);
        if target == Target::Z && !(sigma > 0.0) {
            return Err(LabError::Unsupported(format!("z-target densities need σ_t > 0, got {sigma}")));
        }
        Ok(Maps { sol, t, target, sigma })
    }

    fn scale(&self) -> f64 {
        match self.target {
            Target::Y => 1.0,
            Target::Z => self.sigma * self.sigma,
        }
    }

    fn value(&self, x: f64) -> Result<f64> {
        Ok(match self.target {
            Target::Y => self.sol.field_clamped(Field::U, self.t, x)?.0,
            Target::Z => self.sigma * self.sol.field_clamped(Field::Ux, self.t, x)?.0,
        })
    }

    fn derivative(&self, x: f64) -> Result<f64> {
        Ok(match self.target {
            Target::Y => self.sol.field_clamped(Field::Ux, self.t, x)?.0,
            Target::Z => self.sol.field_clamped(Field::Uxx, self.t, x)?.0,
        })
    }

    fn inverse(&self, v: f64) -> Result<f64> {
        match self.target {
            Target::Y => self.sol.inverse_field(Field::U, self.t, v),
            Target::Z => self.sol.inverse_field(Field::Ux, self.t, v / self.sigma),
        }
    }
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// ∫ p_ι(z) / (1 + |m|^λ + |z|^λ) dz, split at 0 and truncated at 14 standard deviations.
fn lower_integral(m: f64, lambda: f64, iota: f64) -> Result<f64> {
    let s = iota.sqrt();
    let c = 1.0 + m.abs().powf(lambda);
    let f = |z: f64| (-z * z / (2.0 * iota)).exp() / (2.0 * PI * iota).sqrt() / (c + z.abs().powf(lambda));
    Ok(2.0 * quad::adaptive(f, 0.0, 14.0 * s, 1e-15, 1e-12)?.value)
}

/// Fits ε̄, δ̄, λ, L, C_ε, C_δ on the solution at time t and assembles C(ε, δ) and C̃(δ).
///
/// ε̄ = (log-log slope of D) + ε, δ̄ = (slope of F⁻¹) + δ, λ = (decay rate of D) + ε, where
/// (F, D) = (u, u_x) for y and (σu_x, u_xx) for z. Maxima are taken over 8 probes per grid
/// cell and inflated by [`PROBE_MARGIN`].
pub fn calibrate(sol: &PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, target: Target, eps: f64, delta: f64) -> Result<Calibration> {
    if !(eps > 0.0 && delta > 0.0) {
        return Err(invalid("eps/delta", "must be positive"));
    }
    if !(t > 0.0 && t <= spec.horizon) {
        return Err(invalid("t", format!("must lie in (0, {}], got {t}", spec.horizon)));
    }
    let maps = Maps::new(sol, spec, t, target)?;
    let band = sol.outer_band(0.2)?;
    let mut fv = Vec::with_capacity(band.len());
    let mut dv = Vec::with_capacity(band.len());
    for &i in &band {
        let x = sol.x(i);
        fv.push((maps.value(x)?, x));
        dv.push((x, maps.derivative(x)?));
    }
    let derivative_fit = loglog_fit(dv.into_iter());
    let inverse_fit = loglog_fit(fv.into_iter());
    let d_slope = derivative_fit.slope;
    let eps_bar = pos(d_slope) + eps;
    let delta_bar = pos(inverse_fit.slope) + delta;
    let lambda = pos(-d_slope) + eps;

    let n = sol.nx * PROBES_PER_CELL;
    let probes: Vec<f64> = (0..=n).map(|k| sol.x_lo + (sol.x_hi - sol.x_lo) * k as f64 / n as f64).collect();
    let rows: Vec<(f64, f64, f64)> =
        crate::par::map_slice(&probes, |&x| -> Result<(f64, f64, f64)> { Ok((x, maps.value(x)?, maps.derivative(x)?)) })
            .into_iter()
            .collect::<Result<_>>()?;
    let (mut c_eps, mut c_delta, mut l) = (0.0f64, 0.0f64, 0.0f64);
    for (x, f, d) in rows {
        if !(d > 0.0) {
            return Err(LabError::Monotonicity(format!("derivative field is {d} ≤ 0 at x = {x}, t = {t}")));
        }
        c_eps = c_eps.max(d / (1.0 + x.abs().powf(eps_bar)));
        c_delta = c_delta.max(x.abs() / (1.0 + f.abs().powf(delta_bar)));
        l = l.max(1.0 / (d * (1.0 + x.abs().powf(lambda))));
    }
    c_eps *= PROBE_MARGIN;
    c_delta = (c_delta * PROBE_MARGIN).max(f64::MIN_POSITIVE);
    l *= PROBE_MARGIN;

    let iota = spec.iota(t)?;
    let m_eta = spec.coeffs.drift_mean(t);
    let e = eps_bar;
    let k3 = 3f64.powf(pos(e - 1.0));
    let gamma = statrs::function::gamma::gamma((1.0 + e) / 2.0);
    let first = c_eps * c_eps * (1.0 + c_delta.powf(e) * 2f64.powf(pos(e - 1.0)));
    let a = 1.0 + k3 * m_eta.abs().powf(e) + c_delta.powf(e) * 6f64.powf(pos(e - 1.0)) / (1.0 + e);
    let k = k3 * gamma * 2f64.powf(e / 2.0) / PI.sqrt();
    let c_eps_delta = first * a.max(k);
    let c_tilde_delta = lower_integral(m_eta, lambda, iota)?
        / (3f64.powf(pos(lambda - 1.0)) * 2.0 * l * l * (1.0 + 2f64.powf(pos(2.0 * lambda - 1.0)) * c_delta.powf(2.0 * lambda)));

    let indices = GrowthIndices { eps_bar, delta_bar, lambda, l, c_eps_delta, c_tilde_delta };
    indices.validate()?;
    Ok(Calibration {
        target,
        t,
        eps,
        delta,
        indices,
        c_eps,
        c_delta,
        derivative_fit,
        inverse_fit,
        iota,
        drift_mean: m_eta,
        scale: maps.scale(),
    })
}

/// E D((1−ρ)m_η + ρx* + √((1−ρ²)ι) Z), Gauss–Hermite with an adaptive fallback.
fn inner_expectation(maps: &Maps, centre: f64, var: f64) -> Result<f64> {
    let err = std::cell::RefCell::new(None);
    let d = |x: f64| match maps.derivative(x) {
        Ok(v) => v,
        Err(e) => {
            *err.borrow_mut() = Some(e);
            0.0
        }
    };
    let r = match quad::gaussian_expectation(d, centre, var, 1e-7) {
        Ok(v) => Ok(v),
        Err(LabError::Quadrature { .. }) => {
            let s = var.sqrt();
            let f = |z: f64| (-z * z / 2.0).exp() / (2.0 * PI).sqrt() * d(centre + s * z);
            Ok(quad::adaptive(f, -12.0, 12.0, 1e-14, 1e-9)?.value)
        }
        Err(e) => Err(e),
    };
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    r
}

/// g(y) = s ι D(x*) ∫₀¹ E D((1−ρ)m_η + ρx* + √(1−ρ²) W) dρ with W ~ N(0, ι), x* = F⁻¹(y + m),
/// where (F, D, s) = (u, u_x, 1) for y and (σu_x, u_xx, σ²) for z. The θ-integral of the
/// Ornstein–Uhlenbeck representation becomes the ρ = e^{−θ} integral over [0, 1].
pub fn g_explicit(sol: &PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, target: Target, y: f64, m: f64) -> Result<f64> {
    if !(t > 0.0 && t <= spec.horizon) {
        return Err(invalid("t", format!("must lie in (0, {}], got {t}", spec.horizon)));
    }
    let maps = Maps::new(sol, spec, t, target)?;
    let iota = spec.iota(t)?;
    let m_eta = spec.coeffs.drift_mean(t);
    let x_star = maps.inverse(y + m)?;
    let d_star = maps.derivative(x_star)?;
    let err = std::cell::RefCell::new(None);
    let outer = quad::adaptive(
        |rho| match inner_expectation(&maps, (1.0 - rho) * m_eta + rho * x_star, (1.0 - rho * rho) * iota) {
            Ok(v) => v,
            Err(e) => {
                *err.borrow_mut() = Some(e);
                0.0
            }
        },
        0.0,
        1.0,
        1e-14,
        1e-6,
    )?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(maps.scale() * iota * d_star * outer.value)
}

pub fn g_y_explicit(sol: &PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, y: f64, m: f64) -> Result<f64> {
    g_explicit(sol, spec, t, Target::Y, y, m)
}

pub fn g_z_explicit(sol: &PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, y: f64, m: f64) -> Result<f64> {
    g_explicit(sol, spec, t, Target::Z, y, m)
}

/// (E F(η_t), E|F(η_t) − E F(η_t)|) for η_t ~ N(η₀ + ∫₀ᵗb, ι_t), by quadrature over
/// 12 standard deviations with the kink of |·| placed at a breakpoint when F is invertible.
pub fn field_moments(sol: &PdeSolution, spec: &NonlinearFbsdeSpec, t: f64, target: Target) -> Result<(f64, f64)> {
    let maps = Maps::new(sol, spec, t, target)?;
    let iota = spec.iota(t)?;
    if !(iota > 0.0) {
        return Ok((maps.value(spec.coeffs.drift_mean(t))?, 0.0));
    }
    let m_eta = spec.coeffs.drift_mean(t);
    let s = iota.sqrt();
    let (a, b) = (m_eta - 12.0 * s, m_eta + 12.0 * s);
    let p = |x: f64| (-(x - m_eta).powi(2) / (2.0 * iota)).exp() / (2.0 * PI * iota).sqrt();
    let err = std::cell::RefCell::new(None);
    let f = |x: f64| match maps.value(x) {
        Ok(v) => v,
        Err(e) => {
            *err.borrow_mut() = Some(e);
            0.0
        }
    };
    let mean = quad::adaptive(|x| f(x) * p(x), a, b, 1e-14, 1e-12)?.value;
    let abs = |lo: f64, hi: f64| quad::adaptive(|x| (f(x) - mean).abs() * p(x), lo, hi, 1e-14, 1e-11).map(|r| r.value);
    let dev = match maps.inverse(mean) {
        Ok(k) if k > a && k < b => abs(a, k)? + abs(k, b)?,
        _ => abs(a, b)?,
    };
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok((mean, dev))
}
