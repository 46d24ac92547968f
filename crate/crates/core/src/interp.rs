//! Cubic Hermite interpolation: monotone (PCHIP) tables and per-segment helpers.

use crate::error::{invalid, Result};

/// Value and first derivative of the cubic Hermite segment with end values
/// `y0, y1`, end slopes `d0, d1`, width `h`, at local coordinate `s` in [0, 1].
#[inline]
pub fn hermite(h: f64, y0: f64, y1: f64, d0: f64, d1: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let v = h00 * y0 + h * h10 * d0 + h01 * y1 + h * h11 * d1;
    let dh00 = 6.0 * s2 - 6.0 * s;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = -6.0 * s2 + 6.0 * s;
    let dh11 = 3.0 * s2 - 2.0 * s;
    let dv = (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1;
    (v, dv)
}

/// Integral of the Hermite segment from local coordinate 0 to `s`.
#[inline]
fn hermite_integral(h: f64, y0: f64, y1: f64, d0: f64, d1: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let i00 = s - s3 + 0.5 * s4;
    let i10 = 0.5 * s2 - 2.0 * s3 / 3.0 + 0.25 * s4;
    let i01 = s3 - 0.5 * s4;
    let i11 = 0.25 * s4 - s3 / 3.0;
    h * (i00 * y0 + h * i10 * d0 + i01 * y1 + h * i11 * d1)
}

/// Fritsch–Carlson limiter applied to one segment's end slopes.
#[inline]
pub fn limit_slopes(secant: f64, d0: f64, d1: f64) -> (f64, f64) {
    if secant == 0.0 {
        return if d0 == 0.0 && d1 == 0.0 { (0.0, 0.0) } else { (d0, d1) };
    }
    let a = d0 / secant;
    let b = d1 / secant;
    if a < 0.0 || b < 0.0 {
        // data says monotone, slopes disagree: leave as is, the interpolant is not forced
        return (d0, d1);
    }
    let r = a * a + b * b;
    if r > 9.0 {
        let tau = 3.0 / r.sqrt();
        (tau * a * secant, tau * b * secant)
    } else {
        (d0, d1)
    }
}

/// Monotone piecewise cubic interpolant (Fritsch–Carlson slopes). Constant
/// extension outside the node range.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(invalid("table", format!("{} abscissae but {} values", x.len(), y.len())));
        }
        if x.len() < 2 {
            return Err(invalid("table", "needs at least 2 nodes"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("table", "non-finite entry"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("table", "abscissae must be strictly increasing"));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
        } else {
            for i in 1..n - 1 {
                if del[i - 1] * del[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
                }
            }
            d[0] = end_slope(h[0], h[1], del[0], del[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }

    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        if t <= self.x[0] {
            return (self.y[0], 0.0);
        }
        if t >= self.x[n - 1] {
            return (self.y[n - 1], 0.0);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        hermite(h, self.y[i], self.y[i + 1], self.d[i], self.d[i + 1], (t - self.x[i]) / h)
    }

    /// Exact integral of the interpolant over [a, b].
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        self.primitive(b) - self.primitive(a)
    }

    fn primitive(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] * (t - self.x[0]);
        }
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let (x0, x1) = (self.x[i], self.x[i + 1]);
            let h = x1 - x0;
            if t >= x1 {
                acc += hermite_integral(h, self.y[i], self.y[i + 1], self.d[i], self.d[i + 1], 1.0);
            } else {
                let s = (t - x0) / h;
                return acc + hermite_integral(h, self.y[i], self.y[i + 1], self.d[i], self.d[i + 1], s);
            }
        }
        acc + self.y[n - 1] * (t - self.x[n - 1])
    }

    /// Inverse of a strictly increasing interpolant by bisection and Newton.
    pub fn inverse_increasing(&self, v: f64) -> Option<f64> {
        let n = self.x.len();
        if v < self.y[0] || v > self.y[n - 1] {
            return None;
        }
        let i = match self.y.binary_search_by(|a| a.partial_cmp(&v).unwrap()) {
            Ok(i) => return Some(self.x[i]),
            Err(i) => i - 1,
        };
        let (mut lo, mut hi) = (self.x[i], self.x[i + 1]);
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (f, df) = self.eval_with_derivative(t);
            let r = f - v;
            if r.abs() <= 1e-15 * (1.0 + v.abs()) {
                break;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - r / df;
            t = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-16 * (1.0 + t.abs()) {
                break;
            }
        }
        Some(t)
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 <= 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_and_linear_data() {
        let p = Pchip::new(vec![0.0, 0.5, 1.5, 2.0], vec![1.0, 2.0, 4.0, 5.0]).unwrap();
        for (x, y) in [(0.0, 1.0), (0.5, 2.0), (1.5, 4.0), (2.0, 5.0)] {
            assert!((p.eval(x) - y).abs() < 1e-15);
        }
        assert!((p.eval(1.0) - 3.0).abs() < 1e-14);
        assert!((p.integral(0.0, 2.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn integral_matches_quadrature() {
        let p = Pchip::new(vec![0.0, 0.3, 0.9, 1.4, 2.0], vec![0.2, 1.0, 0.7, 2.0, 2.1]).unwrap();
        let q = crate::quad::adaptive(|t| p.eval(t), 0.1, 1.7, 1e-14, 1e-14).unwrap();
        assert!((p.integral(0.1, 1.7) - q.value).abs() < 1e-12);
    }

    #[test]
    fn monotone_data_gives_monotone_curve() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 0.1, 3.0, 3.05, 10.0]).unwrap();
        let mut prev = p.eval(0.0);
        for k in 1..=400 {
            let v = p.eval(k as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
        let x = p.inverse_increasing(2.0).unwrap();
        assert!((p.eval(x) - 2.0).abs() < 1e-13);
    }
}
