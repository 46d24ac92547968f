//! Gauss–Legendre and Gauss–Hermite rules plus an adaptive integrator.

use crate::error::{LabError, Result};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Legendre rule on [-1, 1], nodes by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            x = 0.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Rule { nodes, weights }
}

fn gl20() -> &'static Rule {
    static R: OnceLock<Rule> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(20))
}

/// Fixed-order Gauss–Legendre on [a, b].
pub fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &Rule) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Value of an integral with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Adaptive 20-point Gauss–Legendre by bisection: a panel is accepted when the
/// panel estimate and the sum over its halves agree to within the panel's share
/// of `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    if b < a {
        let r = adaptive(f, b, a, abs_tol, rel_tol)?;
        return Ok(Integral { value: -r.value, error: r.error });
    }
    let rule = gl20();
    let total_len = b - a;
    let whole = fixed(&f, a, b, rule);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut value = 0.0;
    let mut error = 0.0;
    let mut scale = whole.abs();
    let mut evals = 0usize;
    let mut failed = false;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = fixed(&f, lo, mid, rule);
        let right = fixed(&f, mid, hi, rule);
        evals += 40;
        let refined = left + right;
        let diff = (refined - est).abs();
        scale = scale.max(refined.abs());
        let share = (hi - lo) / total_len;
        let tol = abs_tol.max(rel_tol * scale) * share;
        if diff <= tol || depth >= 60 || evals > 4_000_000 {
            if diff > tol {
                failed = true;
            }
            value += refined;
            error += diff;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    let target = abs_tol.max(rel_tol * value.abs());
    if failed && error > target {
        return Err(LabError::Quadrature { achieved: error, target });
    }
    Ok(Integral { value, error })
}

/// Orthonormal Hermite polynomial (weight e^{−x²}) of degree n and its derivative.
fn hermite_orthonormal(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Gauss–Hermite rule for the standard normal weight: `E f(Z) ≈ Σ w_i f(x_i)`.
/// Positive roots are bracketed by a sign scan, then polished by safeguarded Newton.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "need at least one node");
    let half = n / 2;
    let mut roots: Vec<(f64, f64)> = Vec::with_capacity(n);
    if n % 2 == 1 {
        let (_, d) = hermite_orthonormal(n, 0.0);
        roots.push((0.0, d));
    }
    let step = 0.25 * PI / (2.0 * n as f64 + 1.0).sqrt();
    let top = (2.0 * n as f64 + 1.0).sqrt() + 1.0;
    let mut a = 0.5 * step;
    let mut fa = hermite_orthonormal(n, a).0;
    let mut found = 0;
    while found < half && a < top {
        let b = a + step;
        let fb = hermite_orthonormal(n, b).0;
        if fa.signum() != fb.signum() {
            let (mut lo, mut hi, flo) = (a, b, fa);
            let mut z = 0.5 * (lo + hi);
            let mut d = 0.0;
            for _ in 0..100 {
                let (p, dp) = hermite_orthonormal(n, z);
                d = dp;
                if p.signum() == flo.signum() {
                    lo = z;
                } else {
                    hi = z;
                }
                let newton = z - p / dp;
                let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                let done = (next - z).abs() <= 1e-15 * z.abs().max(1.0);
                z = next;
                if done {
                    d = hermite_orthonormal(n, z).1;
                    break;
                }
            }
            roots.push((z, d));
            roots.push((-z, d));
            found += 1;
        }
        a = b;
        fa = fb;
    }
    assert_eq!(roots.len(), n, "Gauss–Hermite root scan missed roots");
    roots.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let s2 = 2f64.sqrt();
    let spi = PI.sqrt();
    let nodes = roots.iter().map(|r| r.0 * s2).collect();
    let weights = roots.iter().map(|r| 2.0 / (r.1 * r.1) / spi).collect();
    Rule { nodes, weights }
}

/// Cached Gauss–Hermite rules of 64, 128, 256 and 512 nodes.
pub fn hermite_cached(n: usize) -> &'static Rule {
    static R: [OnceLock<Rule>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let idx = match n {
        64 => 0,
        128 => 1,
        256 => 2,
        512 => 3,
        _ => panic!("no cached Gauss–Hermite rule with {n} nodes"),
    };
    R[idx].get_or_init(|| gauss_hermite(n))
}

/// `E g(x + sqrt(var) Z)` with doubling from 64 to 512 nodes until two successive
/// estimates agree to `rel_tol` (with an absolute floor of 1e-14).
pub fn gaussian_expectation<G: Fn(f64) -> f64>(g: G, x: f64, var: f64, rel_tol: f64) -> Result<f64> {
    if var == 0.0 {
        return Ok(g(x));
    }
    let s = var.sqrt();
    let eval = |n: usize| {
        let r = hermite_cached(n);
        r.nodes.iter().zip(&r.weights).map(|(z, w)| w * g(x + s * z)).sum::<f64>()
    };
    let mut prev = eval(64);
    let mut n = 64;
    while n < 512 {
        n *= 2;
        let cur = eval(n);
        let diff = (cur - prev).abs();
        if diff <= rel_tol * cur.abs() + 1e-14 {
            return Ok(cur);
        }
        prev = cur;
        if n == 512 {
            return Err(LabError::Quadrature { achieved: diff, target: rel_tol * cur.abs() + 1e-14 });
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(10);
        let v = fixed(&|x: f64| x.powi(19) + 3.0 * x.powi(8), -1.0, 1.0, &r);
        assert!((v - 6.0 / 9.0).abs() < 1e-14);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        for n in [64, 128, 256, 512] {
            let r = hermite_cached(n);
            let m0: f64 = r.weights.iter().sum();
            let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
            let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
            assert!((m0 - 1.0).abs() < 1e-12, "n={n} m0={m0}");
            assert!((m2 - 1.0).abs() < 1e-12, "n={n} m2={m2}");
            assert!((m4 - 3.0).abs() < 1e-11, "n={n} m4={m4}");
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let r = adaptive(|x: f64| if x > 0.0 { x.powf(-0.5) } else { 0.0 }, 0.0, 1.0, 1e-9, 0.0);
        let r = r.unwrap();
        assert!((r.value - 2.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn adaptive_reversed_interval() {
        let r = adaptive(|x: f64| x.exp(), 1.0, 0.0, 1e-13, 1e-13).unwrap();
        assert!((r.value + (1f64.exp() - 1.0)).abs() < 1e-13);
    }
}
