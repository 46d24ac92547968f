use super::nv::{chi, nv_density, tail_bound};
use crate::error::{invalid, LabError, Result};
use crate::heat::{LinearFbsdeSpec, LinearSlice};
use crate::interp::Pchip;
use crate::quad;
use serde::{Deserialize, Serialize};

/// Which component of the solution a density statement is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    /// Constant bounds on g: Gaussian-shaped curves.
    Gaussian,
    /// Polynomially weighted bounds from growth indices.
    NonGaussian,
    /// Both curves equal the density reconstructed from a tabulated g.
    NvGeneric,
}

/// Growth indices and envelope constants at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthIndices {
    /// ε̄: growth index of the derivative field plus ε.
    pub eps_bar: f64,
    /// δ̄: growth index of the inverse map plus δ.
    pub delta_bar: f64,
    pub lambda: f64,
    pub l: f64,
    /// C(ε, δ)
    pub c_eps_delta: f64,
    /// C̃(δ)
    pub c_tilde_delta: f64,
}

impl GrowthIndices {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eps_bar, self.delta_bar, self.lambda, self.l, self.c_eps_delta, self.c_tilde_delta];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("indices", format!("all growth indices and constants must be positive: {self:?}")));
        }
        Ok(())
    }

    /// ε̄δ̄
    pub fn product(&self) -> f64 {
        self.eps_bar * self.delta_bar
    }

    /// The tail corollary needs ε̄δ̄ < 1.
    pub fn corollary_enabled(&self) -> bool {
        self.product() < 1.0
    }
}

/// Curves of the polynomially weighted envelope with the scale constants spelled out:
///
/// lower(x) = μ / (A_lo (1 + |x|^a)(1 + |x|^a + ι^{ε̄/2})) · exp(−χ(x, m) / B_lo),
/// upper(x) = μ (1 + |x|^{2λδ̄}) / A_up · exp(−I(x − m) / B_up),
///
/// with a = ε̄δ̄ and I(y) = ∫₀^y u du / ((1 + |u + m|^a)(1 + |u + m|^a + ι^{ε̄/2})).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonGaussianShape {
    pub indices: GrowthIndices,
    pub iota: f64,
    pub lower_scale: f64,
    pub lower_rate: f64,
    pub upper_scale: f64,
    pub upper_rate: f64,
    /// Threshold beyond which the closed-form tail corollary applies.
    pub z0: Option<f64>,
}

impl NonGaussianShape {
    /// y-target constants: A_lo = 2Cι, B_lo = C̃ι, A_up = 2C̃ι, B_up = Cι.
    pub fn y_target(idx: GrowthIndices, iota: f64) -> Result<Self> {
        idx.validate()?;
        positive("iota", iota)?;
        let (c, ct) = (idx.c_eps_delta, idx.c_tilde_delta);
        Ok(Self {
            indices: idx,
            iota,
            lower_scale: 2.0 * c * iota,
            lower_rate: ct * iota,
            upper_scale: 2.0 * ct * iota,
            upper_rate: c * iota,
            z0: None,
        })
    }

    /// z-target constants with C₁ and C₂ scaled by σ_t²ι_t: A_lo = B_up = C₁σ²ι and
    /// B_lo = A_up = C₂σ²ι.
    pub fn z_target(idx: GrowthIndices, iota: f64, sigma: f64, c1: f64, c2: f64) -> Result<Self> {
        idx.validate()?;
        positive("iota", iota)?;
        positive("c1", c1)?;
        positive("c2", c2)?;
        let s = sigma * sigma * iota;
        if !(s > 0.0) {
            return Err(invalid("sigma", "σ_t must be nonzero"));
        }
        Ok(Self { indices: idx, iota, lower_scale: c1 * s, lower_rate: c2 * s, upper_scale: c2 * s, upper_rate: c1 * s, z0: None })
    }

    fn a(&self) -> f64 {
        self.indices.product()
    }

    fn iota_pow(&self) -> f64 {
        self.iota.powf(0.5 * self.indices.eps_bar)
    }

    fn weight(&self, v: f64) -> f64 {
        let p = v.abs().powf(self.a());
        (1.0 + p) * (1.0 + p + self.iota_pow())
    }

    pub fn lower(&self, m: f64, mu: f64, x: f64) -> Result<f64> {
        let i = &self.indices;
        let c = chi(x, m, i.lambda, i.delta_bar)?;
        Ok(mu / (self.lower_scale * self.weight(x)) * (-c / self.lower_rate).exp())
    }

    /// I(y) by adaptive quadrature.
    pub fn upper_exponent(&self, m: f64, y: f64) -> Result<f64> {
        Ok(quad::adaptive(|u| u / self.weight(u + m), 0.0, y, 1e-14, 1e-11)?.value)
    }

    pub fn upper(&self, m: f64, mu: f64, x: f64) -> Result<f64> {
        let i = &self.indices;
        let pre = mu * (1.0 + x.abs().powf(2.0 * i.lambda * i.delta_bar)) / self.upper_scale;
        Ok(pre * (-self.upper_exponent(m, x - m)? / self.upper_rate).exp())
    }

    /// Closed-form tail bound for |x| > z₀ (requires ε̄δ̄ < 1).
    pub fn corollary(&self, m: f64, mu: f64, z0: f64, x: f64) -> Result<f64> {
        let i = &self.indices;
        let a = self.a();
        if a >= 1.0 {
            return Err(LabError::Unsupported(format!("the tail corollary needs ε̄δ̄ < 1, got {a}")));
        }
        if !(x.abs() > z0) {
            return Err(invalid("x", format!("the tail corollary holds for |x| > z0 = {z0}, got {x}")));
        }
        let e = 2.0 * (1.0 - a);
        let num = (x - m).abs().powf(e) - (x.signum() * z0 - m).abs().powf(e);
        let pre = mu * (1.0 + x.abs().powf(2.0 * i.lambda * i.delta_bar)) / self.upper_scale;
        Ok(pre * (-num / (4.0 * (1.0 - a) * self.upper_rate)).exp())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

/// How the curves are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    /// g_lo ≤ g ≤ g_hi: lower = μ/(2g_hi)·exp(−(x−m)²/(2g_lo)), upper = μ/(2g_lo)·exp(−(x−m)²/(2g_hi)).
    Gaussian {
        g_lo: f64,
        g_hi: f64,
    },
    NonGaussian(NonGaussianShape),
    /// g tabulated on centred values y = x − m.
    Nv {
        y: Vec<f64>,
        g: Vec<f64>,
    },
}

/// Evaluable density and tail curves around the centre m with μ = E|F − m|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEnvelope {
    pub kind: EnvelopeKind,
    pub target: Target,
    pub center: f64,
    pub mu: f64,
    pub shape: Shape,
    /// Where the constants came from.
    pub provenance: String,
}

impl DensityEnvelope {
    pub fn gaussian(target: Target, center: f64, mu: f64, g_lo: f64, g_hi: f64, provenance: &str) -> Result<Self> {
        positive("g_lo", g_lo)?;
        positive("g_hi", g_hi)?;
        if g_lo > g_hi * (1.0 + 1e-12) {
            return Err(invalid("g", format!("need g_lo ≤ g_hi, got {g_lo} > {g_hi}")));
        }
        Self::checked(EnvelopeKind::Gaussian, target, center, mu, Shape::Gaussian { g_lo, g_hi }, provenance)
    }

    pub fn nongaussian(target: Target, center: f64, mu: f64, shape: NonGaussianShape, provenance: &str) -> Result<Self> {
        Self::checked(EnvelopeKind::NonGaussian, target, center, mu, Shape::NonGaussian(shape), provenance)
    }

    /// Envelope whose curves are the density rebuilt from g sampled at centred values `y`.
    pub fn nv(target: Target, center: f64, mu: f64, y: Vec<f64>, g: Vec<f64>, provenance: &str) -> Result<Self> {
        Pchip::new(y.clone(), g.clone())?;
        Self::checked(EnvelopeKind::NvGeneric, target, center, mu, Shape::Nv { y, g }, provenance)
    }

    fn checked(kind: EnvelopeKind, target: Target, center: f64, mu: f64, shape: Shape, provenance: &str) -> Result<Self> {
        crate::error::finite("center", center)?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid("mu", format!("must be finite and nonnegative, got {mu}")));
        }
        Ok(Self { kind, target, center, mu, shape, provenance: provenance.to_string() })
    }

    fn nv_eval(&self, y: &[f64], g: &[f64], x: f64) -> Result<f64> {
        let p = Pchip::new(y.to_vec(), g.to_vec())?;
        nv_density(|u| p.eval(u), self.center, self.mu, x)
    }

    pub fn lower(&self, x: f64) -> Result<f64> {
        let m = self.center;
        match &self.shape {
            Shape::Gaussian { g_lo, g_hi } => Ok(self.mu / (2.0 * g_hi) * (-(x - m).powi(2) / (2.0 * g_lo)).exp()),
            Shape::NonGaussian(s) => s.lower(m, self.mu, x),
            Shape::Nv { y, g } => self.nv_eval(y, g, x),
        }
    }

    pub fn upper(&self, x: f64) -> Result<f64> {
        let m = self.center;
        match &self.shape {
            Shape::Gaussian { g_lo, g_hi } => Ok(self.mu / (2.0 * g_lo) * (-(x - m).powi(2) / (2.0 * g_hi)).exp()),
            Shape::NonGaussian(s) => s.upper(m, self.mu, x),
            Shape::Nv { y, g } => self.nv_eval(y, g, x),
        }
    }

    /// Bound on P(F − m ≥ d) for d > 0.
    pub fn tail_up(&self, d: f64) -> Result<f64> {
        match &self.shape {
            Shape::Gaussian { g_hi, .. } => Ok(tail_bound(0.0, *g_hi, d)?.0),
            _ => self.integrated_tail(d, 1.0),
        }
    }

    /// Bound on P(F − m ≤ −d) for d > 0.
    pub fn tail_down(&self, d: f64) -> Result<f64> {
        match &self.shape {
            Shape::Gaussian { g_hi, .. } => Ok(tail_bound(0.0, *g_hi, d)?.1),
            _ => self.integrated_tail(d, -1.0),
        }
    }

    /// min(1, ∫ of the upper curve beyond m ± d), with x = m ± (d + s/(1 − s)).
    fn integrated_tail(&self, d: f64, side: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(invalid("x", format!("must be positive, got {d}")));
        }
        let err = std::cell::RefCell::new(None);
        let v = quad::adaptive(
            |s| {
                let r = d + s / (1.0 - s);
                match self.upper(self.center + side * r) {
                    Ok(v) => v / ((1.0 - s) * (1.0 - s)),
                    Err(e) => {
                        *err.borrow_mut() = Some(e);
                        0.0
                    }
                }
            },
            0.0,
            1.0,
            1e-12,
            1e-8,
        )?;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        Ok(v.value.min(1.0))
    }

    /// (x, lower, upper) on a grid.
    pub fn curves(&self, xs: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        crate::par::map_slice(xs, |&x| Ok((x, self.lower(x)?, self.upper(x)?))).into_iter().collect()
    }
}

/// Envelope of the linear solution's y_t or z_t: g bounds c²ϑ₁ ≤ g_y ≤ C²ϑ₂ and
/// c̃²ϑ₁σ_t² ≤ g_z ≤ C̃²ϑ₂σ_t², centred at the exact mean.
pub fn gaussian_envelope(spec: &LinearFbsdeSpec, t: f64, target: Target, mu: f64) -> Result<DensityEnvelope> {
    if !(t > 0.0 && t <= spec.horizon) {
        return Err(invalid("t", format!("must lie in (0, {}], got {t}", spec.horizon)));
    }
    let (th1, th2) = spec.thetas(t)?;
    let slice = LinearSlice::new(spec, t)?;
    let b = spec.bounds;
    let (center, g_lo, g_hi) = match target {
        Target::Y => (slice.mean_y()?, b.c * b.c * th1, b.c_upper * b.c_upper * th2),
        Target::Z => {
            let s2 = slice.sigma_t * slice.sigma_t;
            (slice.mean_z()?, b.c_tilde * b.c_tilde * th1 * s2, b.c_tilde_upper * b.c_tilde_upper * th2 * s2)
        }
    };
    DensityEnvelope::gaussian(target, center, mu, g_lo, g_hi, "derivative bounds of the terminal map")
}

/// Both curves of the polynomially weighted y_t envelope at x.
pub fn nongaussian_envelope(idx: &GrowthIndices, m: f64, mu: f64, iota: f64, x: f64) -> Result<(f64, f64)> {
    let s = NonGaussianShape::y_target(*idx, iota)?;
    Ok((s.lower(m, mu, x)?, s.upper(m, mu, x)?))
}

/// Closed-form upper density bound for |x| > z₀ (y-target constants).
pub fn corollary_upper(idx: &GrowthIndices, m: f64, mu: f64, iota: f64, z0: f64, x: f64) -> Result<f64> {
    NonGaussianShape::y_target(*idx, iota)?.corollary(m, mu, z0, x)
}

/// The pointwise inequality behind the tail corollary at u:
/// 2|u|^{2a} ≥ (1 + |u + m|^a)(1 + |u + m|^a + ι^{ε̄/2}), a = ε̄δ̄.
fn corollary_inequality(idx: &GrowthIndices, m: f64, iota: f64, u: f64) -> bool {
    let a = idx.product();
    let p = (u + m).abs().powf(a);
    2.0 * u.abs().powf(2.0 * a) >= (1.0 + p) * (1.0 + p + iota.powf(0.5 * idx.eps_bar))
}

/// Smallest z₀ on the geometric grid 10⁻³·1.005^k ≤ 10⁸ such that the inequality holds at
/// u = ±z − m for every grid z ≥ z₀, and z₀ > |m|.
pub fn find_z0(idx: &GrowthIndices, m: f64, iota: f64) -> Result<f64> {
    idx.validate()?;
    if !idx.corollary_enabled() {
        return Err(LabError::Unsupported(format!("the tail corollary needs ε̄δ̄ < 1, got {}", idx.product())));
    }
    let (start, stop, ratio) = (1e-3f64, 1e8f64, 1.005f64);
    let n = ((stop / start).ln() / ratio.ln()).floor() as i32;
    let grid: Vec<f64> = (0..=n).map(|k| start * ratio.powi(k)).collect();
    let ok = |z: f64| corollary_inequality(idx, m, iota, z - m) && corollary_inequality(idx, m, iota, -z - m);
    if !ok(grid[grid.len() - 1]) {
        return Err(LabError::NotFound(format!("no z0 in [{start:e}, {stop:e}]: the inequality fails at the top")));
    }
    let mut j = grid.len() - 1;
    while j > 0 && ok(grid[j - 1]) {
        j -= 1;
    }
    while grid[j] <= m.abs() {
        j += 1;
        if j == grid.len() {
            return Err(LabError::NotFound(format!("no z0 above |m| = {} below {stop:e}", m.abs())));
        }
    }
    Ok(grid[j])
}

/// Sub-Gaussian tail bounds of the corollary for the linear solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBounds {
    pub y_up: f64,
    pub y_down: f64,
    pub z_up: f64,
    pub z_down: f64,
}

/// Bounds on P(y_t − E y_t ≥ x), P(y_t − E y_t ≤ −x) with a₂ = C²ϑ₂ and the z analogues
/// with a₂ = C̃²ϑ₂σ_t².
pub fn corollary_tails(spec: &LinearFbsdeSpec, t: f64, x: f64) -> Result<TailBounds> {
    let (_, th2) = spec.thetas(t)?;
    let b = spec.bounds;
    let s = spec.coeffs.sigma.eval(t);
    let (y_up, y_down) = tail_bound(0.0, b.c_upper * b.c_upper * th2, x)?;
    let (z_up, z_down) = tail_bound(0.0, b.c_tilde_upper * b.c_tilde_upper * th2 * s * s, x)?;
    Ok(TailBounds { y_up, y_down, z_up, z_down })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx() -> GrowthIndices {
        GrowthIndices { eps_bar: 0.5, delta_bar: 0.5, lambda: 0.3, l: 2.0, c_eps_delta: 1.5, c_tilde_delta: 0.2 }
    }

    #[test]
    fn centre_values() {
        let (m, mu, iota) = (0.3, 0.8, 0.6);
        let i = idx();
        let (lo, up) = nongaussian_envelope(&i, m, mu, iota, m).unwrap();
        let a = i.product();
        let p = m.abs().powf(a);
        let expect_lo = mu / (2.0 * i.c_eps_delta * iota * (1.0 + p) * (1.0 + p + iota.powf(i.eps_bar / 2.0)));
        let expect_up = mu * (1.0 + m.abs().powf(2.0 * i.lambda * i.delta_bar)) / (2.0 * i.c_tilde_delta * iota);
        assert!((lo - expect_lo).abs() < 1e-15);
        assert!((up - expect_up).abs() < 1e-15);
    }

    #[test]
    fn z0_minimal_and_symmetric() {
        let i = idx();
        let z0 = find_z0(&i, 0.0, 0.1).unwrap();
        assert!(corollary_inequality(&i, 0.0, 0.1, z0));
        assert!(!corollary_inequality(&i, 0.0, 0.1, z0 / 1.005) || !corollary_inequality(&i, 0.0, 0.1, -z0 / 1.005));
    }

    #[test]
    fn gaussian_tails_match_prop() {
        let e = DensityEnvelope::gaussian(Target::Y, 0.0, 0.5, 1.0, 2.0, "test").unwrap();
        assert!((e.tail_up(1.0).unwrap() - (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn integrated_tail_is_a_probability() {
        let i = GrowthIndices { c_tilde_delta: 5.0, ..idx() };
        let s = NonGaussianShape::y_target(i, 0.5).unwrap();
        let e = DensityEnvelope::nongaussian(Target::Y, 0.1, 0.4, s, "test").unwrap();
        let p1 = e.tail_up(0.5).unwrap();
        let p2 = e.tail_up(1.5).unwrap();
        assert!(p2 < p1 && p1 <= 1.0 && p2 > 0.0, "{p1} {p2}");
    }
}
