//! Independent reference computations. None of these call the PDE solver or the
//! density module; they only consume closures.

use fbsde_core::rng;
use rand::Rng;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        Self { mean, se: (var / n as f64).sqrt(), n }
    }
}

/// Piecewise-linear table of a function on a uniform grid, constant outside.
#[derive(Debug, Clone)]
pub struct LinearTable {
    lo: f64,
    step: f64,
    v: Vec<f64>,
}

impl LinearTable {
    pub fn new(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let step = (hi - lo) / n as f64;
        Self { lo, step, v: (0..=n).map(|i| f(lo + step * i as f64)).collect() }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let r = (x - self.lo) / self.step;
        if r <= 0.0 {
            return self.v[0];
        }
        let i = r as usize;
        if i >= self.v.len() - 1 {
            return self.v[self.v.len() - 1];
        }
        let a = r - i as f64;
        self.v[i] * (1.0 - a) + self.v[i + 1] * a
    }
}

/// Nested Monte Carlo for the Ornstein–Uhlenbeck form of g at F = F(x*):
/// `scale · D(x*) · E_θ E_W D(e^{−θ}x* + (1 − e^{−θ})m + √(1 − e^{−2θ}) W)`
/// with θ ~ Exp(1), W ~ N(0, ι). `scale` is s·ι. The standard error comes from the
/// spread of the outer (per-θ) means.
#[allow(clippy::too_many_arguments)]
pub fn nested_mc_g<D: Fn(f64) -> f64 + Sync>(
    d: D,
    scale: f64,
    iota: f64,
    m: f64,
    x_star: f64,
    outer: usize,
    inner: usize,
    seed: u64,
) -> McEstimate {
    let d_star = d(x_star);
    let sd = iota.sqrt();
    let per_chunk = 64;
    let chunks = outer.div_ceil(per_chunk);
    let vals: Vec<Vec<f64>> = fbsde_core::par::map_indexed(chunks, |c| {
        let mut r = rng::stream(seed, c as u64);
        let count = per_chunk.min(outer - c * per_chunk);
        (0..count)
            .map(|_| {
                let u: f64 = r.random();
                let theta = -(1.0 - u).ln();
                let a = (-theta).exp();
                let centre = a * x_star + (1.0 - a) * m;
                let spread = (1.0 - a * a).max(0.0).sqrt() * sd;
                let s: f64 = (0..inner).map(|_| d(centre + spread * rng::normal(&mut r))).sum();
                scale * d_star * s / inner as f64
            })
            .collect()
    });
    McEstimate::from_samples(&vals.concat())
}

/// A Brownian BSDE dY = −f(t, Y, Z)dt + Z dW, Y_T = h(W_T), with a known solution
/// (v, v_x) of the f = 0 problem used as a control.
pub struct ControlledBsde<'a> {
    pub horizon: f64,
    pub f: &'a (dyn Fn(f64, f64, f64) -> f64 + Sync),
    pub v: &'a (dyn Fn(f64, f64) -> f64 + Sync),
    pub vx: &'a (dyn Fn(f64, f64) -> f64 + Sync),
}

/// Result of one Euler least-squares Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmcResult {
    pub steps: usize,
    /// Y_0 with the control-variate estimator.
    pub y0: f64,
    pub se: f64,
    /// Y_0 straight from the regression recursion.
    pub y0_plain: f64,
}

/// Probabilists' Hermite polynomials He_0..He_p at ξ.
fn hermite_basis(xi: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = xi;
    }
    for k in 2..out.len() {
        out[k] = xi * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
}

/// Least squares by normal equations and Cholesky (the basis is near-orthogonal).
fn regress(x: &[f64], scale: f64, y: &[f64], p: usize) -> Vec<f64> {
    let n = p + 1;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut phi = vec![0.0; n];
    for (xi, yi) in x.iter().zip(y) {
        hermite_basis(xi / scale, &mut phi);
        for i in 0..n {
            b[i] += phi[i] * yi;
            for j in 0..=i {
                a[i * n + j] += phi[i] * phi[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = if i == j { s.max(1e-300).sqrt() } else { s / a[j * n + j] };
        }
    }
    let mut c = b;
    for i in 0..n {
        let mut s = c[i];
        for k in 0..i {
            s -= a[i * n + k] * c[k];
        }
        c[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = c[i];
        for k in i + 1..n {
            s -= a[k * n + i] * c[k];
        }
        c[i] = s / a[i * n + i];
    }
    c
}

fn fitted(c: &[f64], xi: f64, phi: &mut [f64]) -> f64 {
    hermite_basis(xi, phi);
    c.iter().zip(phi.iter()).map(|(a, b)| a * b).sum()
}

/// E g(√t Z) by composite Simpson over ±10 standard deviations.
fn gaussian_mean(t: f64, g: impl Fn(f64) -> f64) -> f64 {
    if t <= 0.0 {
        return g(0.0);
    }
    let sd = t.sqrt();
    let n = 4000;
    let h = 20.0 / n as f64;
    let mut s = 0.0;
    for k in 0..=n {
        let z = -10.0 + h * k as f64;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * g(sd * z) * (-0.5 * z * z).exp();
    }
    s * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Explicit Euler scheme for D = Y − v, dD = −f(t, v + D, v_x + Z_D)dt + Z_D dW, D_T = 0,
/// with conditional expectations by regression on Hermite polynomials of degree `degree`
/// in W_t/√t. Paths are generated backward by Brownian bridges, so memory is O(paths).
///
/// The Euler value D_0 equals the path mean of Σ_k f_k Δt. Its part Σ_k f(t_k, v, v_x) Δt
/// is replaced by its exact expectation, leaving only the small remainder to Monte Carlo.
pub fn lsmc_euler(p: &ControlledBsde, steps: usize, paths: usize, degree: usize, seed: u64) -> LsmcResult {
    let dt = p.horizon / steps as f64;
    let mut x: Vec<f64> = rng::normals(seed, paths).into_iter().map(|z| z * p.horizon.sqrt()).collect();
    let mut d_next = vec![0.0; paths];
    let mut acc = vec![0.0; paths];
    let mut control = 0.0;
    let mut phi = vec![0.0; degree + 1];
    let mut tz = vec![0.0; paths];
    let mut ty = vec![0.0; paths];
    for k in (0..steps).rev() {
        let t0 = dt * k as f64;
        let t1 = t0 + dt;
        let x_next = x.clone();
        if k == 0 {
            x.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let noise = rng::normals(seed.wrapping_add(1 + k as u64), paths);
            let (a, s) = (t0 / t1, (t0 * dt / t1).sqrt());
            for i in 0..paths {
                x[i] = a * x_next[i] + s * noise[i];
            }
        }
        for i in 0..paths {
            tz[i] = d_next[i] * (x_next[i] - x[i]) / dt;
        }
        let zhat: Vec<f64> = if k == 0 {
            vec![tz.iter().sum::<f64>() / paths as f64; paths]
        } else {
            let sc = t0.sqrt();
            let c = regress(&x, sc, &tz, degree);
            x.iter().map(|xi| fitted(&c, xi / sc, &mut phi)).collect()
        };
        for i in 0..paths {
            let (v, vx) = ((p.v)(t0, x[i]), (p.vx)(t0, x[i]));
            let full = (p.f)(t0, v + d_next[i], vx + zhat[i]);
            acc[i] += (full - (p.f)(t0, v, vx)) * dt;
            ty[i] = d_next[i] + full * dt;
        }
        control += dt * gaussian_mean(t0, |w| (p.f)(t0, (p.v)(t0, w), (p.vx)(t0, w)));
        d_next = if k == 0 {
            vec![ty.iter().sum::<f64>() / paths as f64; paths]
        } else {
            let sc = t0.sqrt();
            let c = regress(&x, sc, &ty, degree);
            x.iter().map(|xi| fitted(&c, xi / sc, &mut phi)).collect()
        };
    }
    let rem = McEstimate::from_samples(&acc);
    let v0 = (p.v)(0.0, 0.0);
    LsmcResult { steps, y0: v0 + control + rem.mean, se: rem.se, y0_plain: v0 + d_next[0] }
}

/// Richardson extrapolation 2·Y(2n) − Y(n) of two Euler runs.
pub fn lsmc_richardson(p: &ControlledBsde, steps: usize, paths: usize, degree: usize, seed: u64) -> (f64, f64, LsmcResult, LsmcResult) {
    let coarse = lsmc_euler(p, steps, paths, degree, seed);
    let fine = lsmc_euler(p, 2 * steps, paths, degree, seed ^ 0x9e37_79b9_7f4a_7c15);
    let y = 2.0 * fine.y0 - coarse.y0;
    let se = (4.0 * fine.se * fine.se + coarse.se * coarse.se).sqrt();
    (y, se, coarse, fine)
}

/// Simpson rule with `n` (even) panels, for reference integrals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * k as f64);
    }
    s * h / 3.0
}
