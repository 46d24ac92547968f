use super::envelope::DensityEnvelope;
use crate::error::{invalid, LabError, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const GRID_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "h", rename_all = "snake_case")]
pub enum Bandwidth {
    /// 0.9·min(sd, IQR/1.34)·n^{-1/5}
    Silverman,
    Fixed(f64),
}

/// Empirical P(F − mean ≥ d) and P(F − mean ≤ −d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFrequency {
    pub d: f64,
    pub up: f64,
    pub down: f64,
}

/// Gaussian-kernel density estimate on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDensity {
    pub n: usize,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Monte Carlo standard error of the estimate at each grid point.
    pub local_se: Vec<f64>,
    pub mean: f64,
    /// E|F − E F|
    pub abs_moment: f64,
    pub sd: f64,
    /// 0.5% and 99.5% sample quantiles; verification stays inside them.
    pub q_lo: f64,
    pub q_hi: f64,
    /// Tail frequencies at 1, 2 and 3 standard deviations.
    pub tails: Vec<TailFrequency>,
}

impl EmpiricalDensity {
    /// Trapezoid integral of the estimate over its grid.
    pub fn mass(&self) -> f64 {
        self.grid.windows(2).zip(self.density.windows(2)).map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1])).sum()
    }

    /// Linear interpolation of (density, local SE); zero outside the grid.
    pub fn at(&self, x: f64) -> (f64, f64) {
        let (a, b) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if !(x >= a && x <= b) {
            return (0.0, 0.0);
        }
        let h = (b - a) / (self.grid.len() - 1) as f64;
        let j = (((x - a) / h).floor() as usize).min(self.grid.len() - 2);
        let s = (x - self.grid[j]) / h;
        let lin = |v: &[f64]| (1.0 - s) * v[j] + s * v[j + 1];
        (lin(&self.density), lin(&self.local_se))
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let j = pos.floor() as usize;
    let s = pos - j as f64;
    if j + 1 < sorted.len() {
        (1.0 - s) * sorted[j] + s * sorted[j + 1]
    } else {
        sorted[j]
    }
}

/// Kernel density estimate on 512 points spanning [min − 4h, max + 4h].
pub fn kde(samples: &[f64], rule: Bandwidth) -> Result<EmpiricalDensity> {
    kde_on(samples, rule, None)
}

/// As [`kde`] but on a caller-supplied grid (for comparing two samples point by point).
pub fn kde_on(samples: &[f64], rule: Bandwidth, grid: Option<Vec<f64>>) -> Result<EmpiricalDensity> {
    let n = samples.len();
    if n < 100 {
        return Err(invalid("samples", format!("need at least 100 samples, got {n}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples", "non-finite sample"));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(LabError::Degenerate("sample variance is zero".into()));
    }
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let h = match rule {
        Bandwidth::Silverman => {
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * nf.powf(-0.2)
        }
        Bandwidth::Fixed(h) => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid("bandwidth", format!("must be positive, got {h}")));
            }
            h
        }
    };
    let grid = grid.unwrap_or_else(|| {
        let (a, b) = (sorted[0] - 4.0 * h, sorted[n - 1] + 4.0 * h);
        (0..GRID_POINTS).map(|k| a + (b - a) * k as f64 / (GRID_POINTS - 1) as f64).collect()
    });
    let norm = 1.0 / ((2.0 * PI).sqrt() * h);
    // kernels beyond 8.5 bandwidths are below 1e-15 of the peak
    let reach = 8.5 * h;
    let est: Vec<(f64, f64)> = crate::par::map_slice(&grid, |&x| {
        let lo = sorted.partition_point(|v| *v < x - reach);
        let hi = sorted.partition_point(|v| *v <= x + reach);
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in &sorted[lo..hi] {
            let u = (x - v) / h;
            let k = norm * (-0.5 * u * u).exp();
            s1 += k;
            s2 += k * k;
        }
        let (m1, m2) = (s1 / nf, s2 / nf);
        (m1, ((m2 - m1 * m1).max(0.0) / nf).sqrt())
    });
    let abs_moment = samples.iter().map(|v| (v - mean).abs()).sum::<f64>() / nf;
    let tails = [1.0, 2.0, 3.0]
        .iter()
        .map(|k| {
            let d = k * sd;
            let up = samples.iter().filter(|v| **v - mean >= d).count() as f64 / nf;
            let down = samples.iter().filter(|v| **v - mean <= -d).count() as f64 / nf;
            TailFrequency { d, up, down }
        })
        .collect();
    Ok(EmpiricalDensity {
        n,
        bandwidth: h,
        density: est.iter().map(|e| e.0).collect(),
        local_se: est.iter().map(|e| e.1).collect(),
        grid,
        mean,
        abs_moment,
        sd,
        q_lo: quantile(&sorted, 0.005),
        q_hi: quantile(&sorted, 0.995),
        tails,
    })
}

/// One verified grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub x: f64,
    pub lower: f64,
    pub upper: f64,
    pub kde: f64,
    pub local_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub region: (f64, f64),
    pub slack: f64,
    pub rows: Vec<ReportRow>,
    pub pass_fraction: f64,
}

impl EnvelopeReport {
    pub fn violations(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Checks lower − slack·se ≤ kde ≤ upper + slack·se at the estimate's grid points inside
/// `region`, further restricted to the central 99% of the sample.
pub fn verify_envelope(emp: &EmpiricalDensity, env: &DensityEnvelope, region: (f64, f64), slack: f64) -> Result<EnvelopeReport> {
    if !(slack >= 0.0) {
        return Err(invalid("slack", "must be nonnegative"));
    }
    let (a, b) = (region.0.max(emp.q_lo), region.1.min(emp.q_hi));
    let idx: Vec<usize> = (0..emp.grid.len()).filter(|&i| emp.grid[i] >= a && emp.grid[i] <= b).collect();
    let rows: Vec<ReportRow> = crate::par::map_slice(&idx, |&i| -> Result<ReportRow> {
        let x = emp.grid[i];
        let (lower, upper) = (env.lower(x)?, env.upper(x)?);
        let (kde, se) = (emp.density[i], emp.local_se[i]);
        let pass = lower - slack * se <= kde && kde <= upper + slack * se;
        Ok(ReportRow { x, lower, upper, kde, local_se: se, pass })
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let pass_fraction = if rows.is_empty() { 1.0 } else { rows.iter().filter(|r| r.pass).count() as f64 / rows.len() as f64 };
    Ok(EnvelopeReport { region: (a, b), slack, rows, pass_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Target;

    #[test]
    fn normal_sample_estimate() {
        let s: Vec<f64> = crate::rng::normals(3, 20_000).iter().map(|z| z + 5.0).collect();
        let e = kde(&s, Bandwidth::Silverman).unwrap();
        let m = e.mass();
        assert!(m > 0.98 && m < 1.001, "mass {m}");
        let worst = e
            .grid
            .iter()
            .zip(&e.density)
            .map(|(x, d)| (d - (-(x - 5.0) * (x - 5.0) / 2.0).exp() / (2.0 * PI).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
        assert!((e.abs_moment - (2.0 / PI).sqrt()).abs() < 0.02);
    }

    #[test]
    fn rejects_small_or_constant_samples() {
        assert!(kde(&[1.0; 50], Bandwidth::Silverman).is_err());
        assert!(matches!(kde(&[1.0; 200], Bandwidth::Silverman), Err(LabError::Degenerate(_))));
    }

    #[test]
    fn halved_upper_curve_fails_near_mode() {
        let s = crate::rng::normals(9, 50_000);
        let e = kde(&s, Bandwidth::Silverman).unwrap();
        let mu = (2.0 / PI).sqrt();
        let exact = DensityEnvelope::gaussian(Target::Y, 0.0, mu, 1.0, 1.0, "exact").unwrap();
        let r = verify_envelope(&e, &exact, (-2.5, 2.5), 3.0).unwrap();
        assert_eq!(r.pass_fraction, 1.0);
        let halved = DensityEnvelope::gaussian(Target::Y, 0.0, 0.5 * mu, 1.0, 1.0, "halved").unwrap();
        let r = verify_envelope(&e, &halved, (-2.5, 2.5), 3.0).unwrap();
        assert!(r.pass_fraction < 1.0);
        assert!(r.violations().any(|v| v.x.abs() < 0.5));
    }
}
