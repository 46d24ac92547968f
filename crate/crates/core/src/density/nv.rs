use crate::error::{invalid, LabError, Result};
use crate::quad;
use std::cell::Cell;

/// ρ(x) = μ / (2 g(x − m)) · exp(−∫₀^{x−m} u / g(u) du) for F with E F = m,
/// μ = E|F − m| and conditional functional g. The integral is adaptive to 1e-10.
pub fn nv_density<G: Fn(f64) -> f64>(g: G, m: f64, mu: f64, x: f64) -> Result<f64> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(invalid("mu", format!("must be a finite nonnegative number, got {mu}")));
    }
    let y = x - m;
    let gy = g(y);
    if !(gy > 0.0) {
        return Err(LabError::DensityUndefined { at: y, value: gy });
    }
    let bad: Cell<Option<(f64, f64)>> = Cell::new(None);
    let r = quad::adaptive(
        |u| {
            let gu = g(u);
            if !(gu > 0.0) {
                bad.set(Some((u, gu)));
                return 0.0;
            }
            u / gu
        },
        0.0,
        y,
        1e-13,
        1e-10,
    )?;
    if let Some((at, value)) = bad.get() {
        return Err(LabError::DensityUndefined { at, value });
    }
    Ok(mu / (2.0 * gy) * (-r.value).exp())
}

/// χ(z, m) = ∫₀^{z−m} u (1 + |u + m|^{2λδ̄}) du in closed form.
pub fn chi(z: f64, m: f64, lambda: f64, delta_bar: f64) -> Result<f64> {
    if !(lambda >= 0.0 && delta_bar >= 0.0) {
        return Err(invalid("indices", "λ and δ̄ must be nonnegative"));
    }
    let p = lambda * delta_bar;
    let (az, am) = (z.abs(), m.abs());
    let sgn = if z == 0.0 || m == 0.0 { 0.0 } else { (z * m).signum() };
    Ok(0.5 * (z - m).powi(2) + (az.powf(2.0 * (1.0 + p)) - am.powf(2.0 * (1.0 + p))) / (2.0 * (1.0 + p))
        - am / (1.0 + 2.0 * p) * (sgn * az.powf(1.0 + 2.0 * p) - am.powf(1.0 + 2.0 * p)))
}

/// (P(F ≥ x) bound, P(F ≤ −x) bound) for centred F with 0 < g_F(y) ≤ a₁y + a₂:
/// exp(−x²/(2a₁x + 2a₂)) and exp(−x²/(2a₂)).
pub fn tail_bound(a1: f64, a2: f64, x: f64) -> Result<(f64, f64)> {
    if !(a1 >= 0.0) || !(a2 > 0.0) {
        return Err(invalid("tail", format!("need a₁ ≥ 0 and a₂ > 0, got ({a1}, {a2})")));
    }
    if !(x > 0.0) {
        return Err(invalid("x", format!("must be positive, got {x}")));
    }
    Ok(((-x * x / (2.0 * a1 * x + 2.0 * a2)).exp(), (-x * x / (2.0 * a2)).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_g_gives_gaussian() {
        let v = 0.7;
        let mu = (2.0 * v / PI).sqrt();
        for x in [-2.0, -0.3, 0.0, 1.1, 3.0] {
            let d = nv_density(|_| v, 0.0, mu, x).unwrap();
            let e = (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
            assert!((d - e).abs() < 1e-12, "{x}: {d} vs {e}");
        }
        assert_eq!(nv_density(|_| 2.0, 0.4, 1.0, 0.4).unwrap(), 0.25);
    }

    #[test]
    fn nonpositive_g_is_rejected() {
        let r = nv_density(|u: f64| 1.0 - u, 0.0, 1.0, 2.0);
        assert!(matches!(r, Err(LabError::DensityUndefined { .. })));
    }

    #[test]
    fn chi_limits() {
        assert_eq!(chi(0.7, 0.7, 0.3, 1.0).unwrap(), 0.0);
        let z: f64 = 1.3;
        assert!((chi(z, -0.4, 0.0, 1.0).unwrap() - (z + 0.4).powi(2)).abs() < 1e-13);
    }

    #[test]
    fn tail_bound_reduces_to_subgaussian() {
        let (u, d) = tail_bound(0.0, 2.0, 1.5).unwrap();
        assert_eq!(u, d);
        assert!((u - (-2.25f64 / 4.0).exp()).abs() < 1e-15);
        assert!(tail_bound(0.0, 1.0, 0.0).is_err());
    }
}
