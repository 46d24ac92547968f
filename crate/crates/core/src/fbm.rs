//! Fractional Brownian motion: covariance, the variance functional ι_t of
//! Wiener integrals ∫σ dB^H, and exact Gaussian sampling.
//!
//! `ι_t` is also the squared norm ‖σ 1_{[0,t]}‖² that appears in the heat-semigroup
//! form of the quasi-conditional expectation.

use crate::coeff::{TimeFn, TimeGrid};
use crate::error::{invalid, LabError, Result};
use crate::quad;
use serde::{Deserialize, Serialize};

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid("hurst", format!("must lie in (0, 1), got {h}")));
    }
    Ok(())
}

fn check_long_memory(h: f64) -> Result<()> {
    check_hurst(h)?;
    if h <= 0.5 {
        return Err(LabError::Unsupported(format!("the kernel C_H|u-v|^(2H-2) needs H > 1/2, got H = {h}")));
    }
    Ok(())
}

/// R_H(s, t) = ½(t^{2H} + s^{2H} − |t − s|^{2H}).
pub fn covariance(h: f64, s: f64, t: f64) -> Result<f64> {
    check_hurst(h)?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(invalid("time", format!("times must be nonnegative, got ({s}, {t})")));
    }
    let e = 2.0 * h;
    Ok(0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e)))
}

/// C_H = H(2H − 1).
pub fn c_h(h: f64) -> f64 {
    h * (2.0 * h - 1.0)
}

/// Relative tolerance used for the ι integrals; tight enough for finite differences.
const IOTA_TOL: f64 = 1e-13;

/// Var(∫_a^b σ dB^H) = C_H ∬_{[a,b]²} σ_u σ_v |u − v|^{2H−2} du dv.
///
/// The substitutions r = (u − a)^{2H} and w = s (u − a) with s ↦ s^{1/(2H−1)}
/// remove the diagonal singularity:
/// J = ∫_0^{(b−a)^{2H}} σ(a + ρ) ∫_0^1 σ(a + ρ(1 − s^p)) ds dr, ρ = r^{1/(2H)}, p = 1/(2H−1).
pub fn interval_variance(sigma: &TimeFn, a: f64, b: f64, h: f64) -> Result<f64> {
    check_long_memory(h)?;
    if !(a >= 0.0 && b >= a) {
        return Err(invalid("time", format!("need 0 ≤ a ≤ b, got [{a}, {b}]")));
    }
    let len = b - a;
    if len == 0.0 {
        return Ok(0.0);
    }
    if let Some(k) = sigma.is_constant() {
        return Ok(k * k * len.powf(2.0 * h));
    }
    let p = 1.0 / (2.0 * h - 1.0);
    let scale = {
        let (lo, hi) = sigma.inf_sup(a, b);
        lo.abs().max(hi.abs()).powi(2) * len.powf(2.0 * h)
    };
    let inner = |rho: f64| -> Result<f64> {
        Ok(quad::adaptive(|s| sigma.eval(a + rho * (1.0 - s.powf(p))), 0.0, 1.0, IOTA_TOL * 1e-2, IOTA_TOL * 1e-2)?.value)
    };
    let cell: std::cell::RefCell<Option<LabError>> = std::cell::RefCell::new(None);
    let r = quad::adaptive(
        |r| {
            let rho = r.powf(1.0 / (2.0 * h));
            match inner(rho) {
                Ok(v) => sigma.eval(a + rho) * v,
                Err(e) => {
                    *cell.borrow_mut() = Some(e);
                    0.0
                }
            }
        },
        0.0,
        len.powf(2.0 * h),
        IOTA_TOL * scale,
        IOTA_TOL,
    )?;
    if let Some(e) = cell.into_inner() {
        return Err(e);
    }
    Ok(r.value)
}

/// ι_t = Var(∫₀ᵗ σ dB^H).
pub fn iota(sigma: &TimeFn, t: f64, h: f64) -> Result<f64> {
    interval_variance(sigma, 0.0, t, h)
}

/// ι'_t = 2 C_H σ(t) ∫₀ᵗ σ_v (t − v)^{2H−2} dv = 2H σ(t) t^{2H−1} ∫₀¹ σ(t(1 − s^p)) ds.
/// Returns the limit 0 at t = 0.
pub fn iota_derivative(sigma: &TimeFn, t: f64, h: f64) -> Result<f64> {
    check_long_memory(h)?;
    if !(t >= 0.0) {
        return Err(invalid("time", format!("must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let lead = 2.0 * h * sigma.eval(t) * t.powf(2.0 * h - 1.0);
    if let Some(k) = sigma.is_constant() {
        return Ok(lead * k);
    }
    let p = 1.0 / (2.0 * h - 1.0);
    let i = quad::adaptive(|s| sigma.eval(t * (1.0 - s.powf(p))), 0.0, 1.0, 1e-15, 1e-14)?;
    Ok(lead * i.value)
}

/// What the ensemble columns represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// B^H at the grid times.
    Fbm,
    /// ∫₀ᵗ σ dB^H at the grid times.
    WienerIntegral,
}

/// Integrand for [`sample_paths`].
#[derive(Debug, Clone, Copy)]
pub enum Integrand<'a> {
    /// Plain fBM (any H in (0, 1)).
    Unit,
    /// Wiener integral of σ (H > 1/2).
    Sigma(&'a TimeFn),
}

/// Sampled paths, stored row-major (one row per path).
#[derive(Debug, Clone, PartialEq)]
pub struct FbmEnsemble {
    pub hurst: f64,
    pub grid: TimeGrid,
    pub kind: EnsembleKind,
    pub seed: u64,
    n: usize,
    data: Vec<f64>,
}

impl FbmEnsemble {
    pub fn from_parts(hurst: f64, grid: TimeGrid, kind: EnsembleKind, seed: u64, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * grid.len() {
            return Err(LabError::Format(format!("expected {} values, found {}", n * grid.len(), data.len())));
        }
        Ok(Self { hurst, grid, kind, seed, n, data })
    }

    pub fn n_paths(&self) -> usize {
        self.n
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let m = self.grid.len();
        (0..self.n).map(|i| self.data[i * m + j]).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Empirical E[X_i X_j] (the mean is known to be zero).
    pub fn empirical_second_moment(&self, i: usize, j: usize) -> f64 {
        let m = self.grid.len();
        let s: f64 = (0..self.n).map(|k| self.data[k * m + i] * self.data[k * m + j]).sum();
        s / self.n as f64
    }

    /// Full empirical second-moment matrix, computed in parallel over rows of the result.
    pub fn empirical_gram(&self) -> Vec<Vec<f64>> {
        let m = self.grid.len();
        crate::par::map_indexed(m, |i| (0..m).map(|j| self.empirical_second_moment(i, j)).collect())
    }
}

/// Analytic Gram matrix of the process at the grid times.
pub fn gram_matrix(h: f64, grid: &TimeGrid, integrand: Integrand) -> Result<Vec<Vec<f64>>> {
    let t = grid.points();
    let m = t.len();
    let mut g = vec![vec![0.0; m]; m];
    match integrand {
        Integrand::Unit => {
            check_hurst(h)?;
            for i in 0..m {
                for j in 0..=i {
                    let c = covariance(h, t[i], t[j])?;
                    g[i][j] = c;
                    g[j][i] = c;
                }
            }
        }
        Integrand::Sigma(sigma) => {
            check_long_memory(h)?;
            let diag: Vec<f64> = t.iter().map(|&ti| iota(sigma, ti, h)).collect::<Result<_>>()?;
            let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
            let off = crate::par::map_slice(&pairs, |&(i, j)| interval_variance(sigma, t[j], t[i], h));
            for (&(i, j), v) in pairs.iter().zip(off) {
                let c = 0.5 * (diag[i] + diag[j] - v?);
                g[i][j] = c;
                g[j][i] = c;
            }
            for i in 0..m {
                g[i][i] = diag[i];
            }
        }
    }
    Ok(g)
}

/// Lower Cholesky factor; one retry with diagonal jitter 1e-12·trace/n.
pub fn cholesky_with_jitter(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    match cholesky(a) {
        Ok(l) => Ok(l),
        Err(_) => {
            let n = a.len();
            let tr: f64 = (0..n).map(|i| a[i][i]).sum();
            let jitter = 1e-12 * tr / n as f64;
            let mut b = a.to_vec();
            for (i, row) in b.iter_mut().enumerate() {
                row[i] += jitter;
            }
            cholesky(&b)
        }
    }
}

fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return Err(LabError::Conditioning { pivot: j, value: d });
        }
        let dj = d.sqrt();
        l[j][j] = dj;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / dj;
        }
    }
    Ok(l)
}

/// Exact joint Gaussian sampling by dense Cholesky. Paths are drawn in chunks of
/// [`crate::rng::CHUNK`] rows, chunk `k` from stream `(seed, k)`, so the result is
/// bit-identical for a given seed whatever the thread count.
pub fn sample_paths(h: f64, grid: &TimeGrid, integrand: Integrand, n: usize, seed: u64) -> Result<FbmEnsemble> {
    let kind = match integrand {
        Integrand::Unit => EnsembleKind::Fbm,
        Integrand::Sigma(_) => EnsembleKind::WienerIntegral,
    };
    match integrand {
        Integrand::Unit => check_hurst(h)?,
        Integrand::Sigma(_) => check_long_memory(h)?,
    }
    let m = grid.len();
    if n == 0 {
        return Ok(FbmEnsemble { hurst: h, grid: grid.clone(), kind, seed, n: 0, data: Vec::new() });
    }
    // Times equal to zero carry the zero column and are left out of the factorisation.
    let active: Vec<usize> = (0..m).filter(|&j| grid.points()[j] > 0.0).collect();
    let sub = TimeGrid::new(active.iter().map(|&j| grid.points()[j]).collect()).ok();
    let l = match &sub {
        Some(g) => cholesky_with_jitter(&gram_matrix(h, g, integrand)?)?,
        None => {
            // a single positive time
            let t = grid.points()[active[0]];
            let v = match integrand {
                Integrand::Unit => t.powf(2.0 * h),
                Integrand::Sigma(s) => iota(s, t, h)?,
            };
            vec![vec![v.sqrt()]]
        }
    };
    let k = active.len();
    let mut data = vec![0.0; n * m];
    let rows_per_chunk = crate::rng::CHUNK;
    crate::par::for_each_chunk(&mut data, rows_per_chunk * m, |c, block| {
        let mut rng = crate::rng::stream(seed, c as u64);
        let mut z = vec![0.0; k];
        for row in block.chunks_mut(m) {
            for v in z.iter_mut() {
                *v = crate::rng::normal(&mut rng);
            }
            for (a, &j) in active.iter().enumerate() {
                let mut s = 0.0;
                for b in 0..=a {
                    s += l[a][b] * z[b];
                }
                row[j] = s;
            }
        }
    });
    Ok(FbmEnsemble { hurst: h, grid: grid.clone(), kind, seed, n, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        assert!((covariance(0.5, 0.3, 0.7).unwrap() - 0.3).abs() < 1e-15);
        assert!((covariance(0.7, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(covariance(1.0, 0.3, 0.7).is_err());
        assert!(covariance(0.0, 0.3, 0.7).is_err());
        assert!(covariance(0.6, -0.3, 0.7).is_err());
    }

    #[test]
    fn iota_rejects_short_memory() {
        let s = TimeFn::constant(1.0);
        assert!(matches!(iota(&s, 1.0, 0.5), Err(LabError::Unsupported(_))));
        assert!(matches!(iota(&s, 1.0, 0.3), Err(LabError::Unsupported(_))));
        assert!(iota(&s, 1.0, 1.2).is_err());
    }

    #[test]
    fn interval_variance_for_unit_sigma_via_generic_path() {
        // a table equal to 1 everywhere takes the quadrature path
        let s = TimeFn::table(vec![0.0, 3.0], vec![1.0, 1.0]).unwrap();
        for h in [0.6, 0.75, 0.9] {
            let v = interval_variance(&s, 0.25, 1.5, h).unwrap();
            let exact = 1.25f64.powf(2.0 * h);
            assert!((v / exact - 1.0).abs() < 1e-12, "h={h}: {v} vs {exact}");
        }
    }

    #[test]
    fn empty_ensemble() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let e = sample_paths(0.3, &g, Integrand::Unit, 0, 7).unwrap();
        assert_eq!(e.n_paths(), 0);
        assert_eq!(e.grid.len(), 5);
        assert_eq!(e.kind, EnsembleKind::Fbm);
    }

    #[test]
    fn wiener_integral_needs_long_memory() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let s = TimeFn::constant(1.0);
        assert!(matches!(sample_paths(0.4, &g, Integrand::Sigma(&s), 10, 1), Err(LabError::Unsupported(_))));
    }

    #[test]
    fn cholesky_reports_indefinite() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(cholesky_with_jitter(&a), Err(LabError::Conditioning { .. })));
    }
}
