use super::engine::{SolverGrid, THETA};
use crate::error::{invalid, LabError, Result};
use crate::interp::{hermite, limit_slopes};
use serde::{Deserialize, Serialize};

/// Scheme parameters and diagnostics recorded with every solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMeta {
    pub theta: f64,
    pub nx: usize,
    pub nt: usize,
    pub grading_levels: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub max_fixed_point_iterations: usize,
    pub max_fixed_point_residual: f64,
    /// Steps where the cell Péclet number exceeded 2 and upwinding was blended in.
    pub advection_flagged_steps: usize,
    /// Largest |u_xx| over all levels (regularity report).
    pub max_abs_uxx: f64,
    /// Interior nodes, over all levels, where u_x ≤ 0.
    pub nonpositive_ux_interior: usize,
    /// Free-form notes from the caller (domain width, problem label, probes).
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SchemeMeta {
    pub(crate) fn new(g: &SolverGrid) -> Self {
        Self {
            theta: THETA,
            nx: g.nx,
            nt: g.nt,
            grading_levels: g.grading_levels,
            x_lo: g.x_lo,
            x_hi: g.x_hi,
            t_start: g.t_start,
            t_end: g.t_end,
            max_fixed_point_iterations: 0,
            max_fixed_point_residual: 0.0,
            advection_flagged_steps: 0,
            max_abs_uxx: 0.0,
            nonpositive_ux_interior: 0,
            notes: Vec::new(),
        }
    }
}

/// (u, u_x, u_xx) at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub u: f64,
    pub ux: f64,
    pub uxx: f64,
}

/// Which stored field to interpolate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    Ux,
    Uxx,
}

/// Fourth-order first, second and third derivatives on a uniform grid
/// (central in the interior, one-sided at the two nodes next to each end).
pub fn derive_fields(u: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ux = d1(u, dx);
    let uxx = d2(u, dx);
    let uxxx = d1(&uxx, dx);
    (ux, uxx, uxxx)
}

fn d1(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    let h = 12.0 * dx;
    for i in 2..n - 2 {
        d[i] = (-u[i + 2] + 8.0 * u[i + 1] - 8.0 * u[i - 1] + u[i - 2]) / h;
    }
    d[0] = (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]) / h;
    d[1] = (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]) / h;
    let m = n - 1;
    d[m] = (25.0 * u[m] - 48.0 * u[m - 1] + 36.0 * u[m - 2] - 16.0 * u[m - 3] + 3.0 * u[m - 4]) / h;
    d[m - 1] = (3.0 * u[m] + 10.0 * u[m - 1] - 18.0 * u[m - 2] + 6.0 * u[m - 3] - u[m - 4]) / h;
    d
}

fn d2(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let mut d = vec![0.0; n];
    let h = 12.0 * dx * dx;
    for i in 2..n - 2 {
        d[i] = (-u[i + 2] + 16.0 * u[i + 1] - 30.0 * u[i] + 16.0 * u[i - 1] - u[i - 2]) / h;
    }
    d[0] = (45.0 * u[0] - 154.0 * u[1] + 214.0 * u[2] - 156.0 * u[3] + 61.0 * u[4] - 10.0 * u[5]) / h;
    d[1] = (10.0 * u[0] - 15.0 * u[1] - 4.0 * u[2] + 14.0 * u[3] - 6.0 * u[4] + u[5]) / h;
    let m = n - 1;
    d[m] = (45.0 * u[m] - 154.0 * u[m - 1] + 214.0 * u[m - 2] - 156.0 * u[m - 3] + 61.0 * u[m - 4] - 10.0 * u[m - 5]) / h;
    d[m - 1] = (10.0 * u[m] - 15.0 * u[m - 1] - 4.0 * u[m - 2] + 14.0 * u[m - 3] - 6.0 * u[m - 4] + u[m - 5]) / h;
    d
}

/// A space-time solution: rows are time levels (ascending), columns are the
/// uniform space nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub times: Vec<f64>,
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    u: Vec<f64>,
    ux: Vec<f64>,
    uxx: Vec<f64>,
    uxxx: Vec<f64>,
    pub meta: SchemeMeta,
}

/// One power-law fit log|v| ~ slope·log|x| on the outer band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_points: usize,
    /// Set when the regression is degenerate (fewer than 3 points or no spread in the
    /// abscissa); the slope is then reported as 0.
    pub degenerate: bool,
}

/// Growth-index estimates of u, u_x and u^{-1} at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    pub u: IndexFit,
    pub ux: IndexFit,
    pub u_inverse: IndexFit,
}

fn ols(pts: &[(f64, f64)]) -> IndexFit {
    let n = pts.len();
    let bad = IndexFit { slope: 0.0, ci_low: 0.0, ci_high: 0.0, n_points: n, degenerate: true };
    if n < 3 {
        return bad;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-14) {
        return bad;
    }
    if !(syy > 1e-24) {
        return IndexFit { slope: 0.0, ci_low: 0.0, ci_high: 0.0, n_points: n, degenerate: false };
    }
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = (rss / (n as f64 - 2.0) / sxx).sqrt();
    IndexFit { slope, ci_low: slope - 1.96 * se, ci_high: slope + 1.96 * se, n_points: n, degenerate: false }
}

impl PdeSolution {
    pub(crate) fn from_levels(
        times: Vec<f64>,
        x_lo: f64,
        x_hi: f64,
        nx: usize,
        levels: Vec<Vec<f64>>,
        mut meta: SchemeMeta,
    ) -> Result<Self> {
        let n = nx + 1;
        let dx = (x_hi - x_lo) / nx as f64;
        let mut u = Vec::with_capacity(levels.len() * n);
        let mut ux = Vec::with_capacity(levels.len() * n);
        let mut uxx = Vec::with_capacity(levels.len() * n);
        let mut uxxx = Vec::with_capacity(levels.len() * n);
        for row in &levels {
            if row.len() != n {
                return Err(LabError::Format(format!("level has {} nodes, expected {n}", row.len())));
            }
            let (a, b, c) = derive_fields(row, dx);
            meta.max_abs_uxx = b.iter().fold(meta.max_abs_uxx, |m, v| m.max(v.abs()));
            meta.nonpositive_ux_interior += a[1..n - 1].iter().filter(|v| **v <= 0.0).count();
            u.extend_from_slice(row);
            ux.extend(a);
            uxx.extend(b);
            uxxx.extend(c);
        }
        Ok(Self { times, x_lo, x_hi, nx, u, ux, uxx, uxxx, meta })
    }

    /// Rebuilds a solution from stored u fields (derivatives are recomputed).
    pub fn from_u_levels(times: Vec<f64>, x_lo: f64, x_hi: f64, nx: usize, levels: Vec<Vec<f64>>, meta: SchemeMeta) -> Result<Self> {
        let mut meta = meta;
        meta.max_abs_uxx = 0.0;
        meta.nonpositive_ux_interior = 0;
        Self::from_levels(times, x_lo, x_hi, nx, levels, meta)
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + (self.x_hi - self.x_lo) * i as f64 / self.nx as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| self.x(i)).collect()
    }

    pub fn n_levels(&self) -> usize {
        self.times.len()
    }

    fn row<'a>(&self, f: &'a [f64], lvl: usize) -> &'a [f64] {
        let n = self.nx + 1;
        &f[lvl * n..(lvl + 1) * n]
    }

    /// Stored node values of a field at a time level.
    pub fn level(&self, field: Field, lvl: usize) -> &[f64] {
        match field {
            Field::U => self.row(&self.u, lvl),
            Field::Ux => self.row(&self.ux, lvl),
            Field::Uxx => self.row(&self.uxx, lvl),
        }
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Level index n and weight λ with t = (1 − λ) t_n + λ t_{n+1}.
    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let (a, b) = (self.t_start(), self.t_end());
        let tol = 1e-12 * (1.0 + b.abs());
        if !(t >= a - tol && t <= b + tol) {
            return Err(invalid("t", format!("must lie in [{a}, {b}], got {t}")));
        }
        let t = t.clamp(a, b);
        let k = match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok((i.min(self.times.len() - 2), if i == self.times.len() - 1 { 1.0 } else { 0.0 })),
            Err(i) => i - 1,
        };
        Ok((k, (t - self.times[k]) / (self.times[k + 1] - self.times[k])))
    }

    fn check_x(&self, x: f64) -> Result<()> {
        let tol = 1e-12 * (1.0 + self.x_hi.abs().max(self.x_lo.abs()));
        if !(x >= self.x_lo - tol && x <= self.x_hi + tol) {
            return Err(LabError::OutOfDomain { x, lo: self.x_lo, hi: self.x_hi });
        }
        Ok(())
    }

    /// Value and x-derivative of one field at one level.
    fn level_eval(&self, field: Field, lvl: usize, x: f64) -> (f64, f64) {
        let dx = self.dx();
        let pos = ((x - self.x_lo) / dx).clamp(0.0, self.nx as f64);
        let j = (pos.floor() as usize).min(self.nx - 1);
        let s = pos - j as f64;
        let (v, d) = match field {
            Field::U => (self.row(&self.u, lvl), self.row(&self.ux, lvl)),
            Field::Ux => (self.row(&self.ux, lvl), self.row(&self.uxx, lvl)),
            Field::Uxx => (self.row(&self.uxx, lvl), self.row(&self.uxxx, lvl)),
        };
        let (d0, d1) = if field == Field::U { limit_slopes((v[j + 1] - v[j]) / dx, d[j], d[j + 1]) } else { (d[j], d[j + 1]) };
        hermite(dx, v[j], v[j + 1], d0, d1, s)
    }

    fn blended(&self, field: Field, t: f64, x: f64) -> Result<(f64, f64)> {
        let (k, lam) = self.bracket(t)?;
        let (a, da) = self.level_eval(field, k, x);
        if lam == 0.0 {
            return Ok((a, da));
        }
        let (b, db) = self.level_eval(field, k + 1, x);
        if lam == 1.0 {
            return Ok((b, db));
        }
        Ok(((1.0 - lam) * a + lam * b, (1.0 - lam) * da + lam * db))
    }

    /// (u, u_x, u_xx): monotone cubic Hermite in x on (u, u_x), linear in t.
    /// u_x is the derivative of the u interpolant; u_xx that of the u_x interpolant.
    pub fn evaluate(&self, t: f64, x: f64) -> Result<Point> {
        self.check_x(x)?;
        let (u, ux) = self.blended(Field::U, t, x)?;
        let (_, uxx) = self.blended(Field::Ux, t, x)?;
        Ok(Point { u, ux, uxx })
    }

    /// A field's C¹ interpolant value and its x-derivative, with x clamped into the
    /// domain. Used inside quadratures whose nodes may leave the domain.
    pub fn field_clamped(&self, field: Field, t: f64, x: f64) -> Result<(f64, f64)> {
        self.blended(field, t, x.clamp(self.x_lo, self.x_hi))
    }

    /// Node values of a field at time t (linear blend of the two bracketing levels).
    pub fn slice(&self, field: Field, t: f64) -> Result<Vec<f64>> {
        let (k, lam) = self.bracket(t)?;
        let a = self.level(field, k);
        let b = self.level(field, k + 1);
        Ok(a.iter().zip(b).map(|(p, q)| (1.0 - lam) * p + lam * q).collect())
    }

    /// x with F(t, x) = y for an increasing field F, by bracketing, bisection and Newton,
    /// to |F(t, x) − y| ≤ 1e-10 (1 + |y|).
    pub fn inverse_field(&self, field: Field, t: f64, y: f64) -> Result<f64> {
        let v = self.slice(field, t)?;
        if let Some(i) = v.windows(2).position(|w| w[1] <= w[0]) {
            return Err(LabError::Monotonicity(format!(
                "field not strictly increasing at t = {t} between x = {} and x = {}",
                self.x(i),
                self.x(i + 1)
            )));
        }
        let (lo_v, hi_v) = (v[0], v[self.nx]);
        if !(y >= lo_v && y <= hi_v) {
            return Err(LabError::OutOfRange { value: y, lo: lo_v, hi: hi_v });
        }
        let j = match v.binary_search_by(|a| a.partial_cmp(&y).unwrap()) {
            Ok(i) => return Ok(self.x(i)),
            Err(i) => i - 1,
        };
        let (mut a, mut b) = (self.x(j), self.x(j + 1));
        let tol = 1e-10 * (1.0 + y.abs());
        let mut x = a + (b - a) * (y - v[j]) / (v[j + 1] - v[j]);
        for _ in 0..200 {
            let (f, df) = self.blended(field, t, x)?;
            let r = f - y;
            if r.abs() <= 0.01 * tol {
                return Ok(x);
            }
            if r > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let newton = x - r / df;
            x = if df > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if b - a <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        let r = self.blended(field, t, x)?.0 - y;
        if r.abs() <= tol {
            Ok(x)
        } else {
            Err(LabError::Monotonicity(format!("interpolant not monotone near x = {x}: residual {r:.3e}")))
        }
    }

    /// u^{-1}(t, y).
    pub fn inverse_u(&self, t: f64, y: f64) -> Result<f64> {
        self.inverse_field(Field::U, t, y)
    }

    /// Node indices in the outer band: a fraction `band` of the domain, half at each end.
    pub fn outer_band(&self, band: f64) -> Result<Vec<usize>> {
        if !(0.0..=1.0).contains(&band) {
            return Err(invalid("band", "must lie in [0, 1]"));
        }
        let edge = 0.5 * band * (self.x_hi - self.x_lo);
        Ok((0..=self.nx)
            .filter(|&i| {
                let x = self.x(i);
                band > 0.0 && (x - self.x_lo <= edge || self.x_hi - x <= edge)
            })
            .collect())
    }

    /// Log–log regressions of |u|, |u_x| against |x| and of |u^{-1}(y)| against |y| on the
    /// outer 20% of the domain (10% at each end).
    pub fn growth_indices(&self, t: f64) -> Result<GrowthEstimate> {
        self.growth_indices_with_band(t, 0.2)
    }

    /// As [`Self::growth_indices`] with the total outer fraction `band` in [0, 1].
    pub fn growth_indices_with_band(&self, t: f64, band: f64) -> Result<GrowthEstimate> {
        let idx = self.outer_band(band)?;
        let u = self.slice(Field::U, t)?;
        let ux = self.slice(Field::Ux, t)?;
        let x = |i: usize| self.x(i);
        Ok(GrowthEstimate {
            u: loglog_fit(idx.iter().map(|&i| (x(i), u[i]))),
            ux: loglog_fit(idx.iter().map(|&i| (x(i), ux[i]))),
            u_inverse: loglog_fit(idx.iter().map(|&i| (u[i], x(i)))),
        })
    }
}

/// Least-squares slope of log|v| on log|a| over pairs (a, v), skipping zeros.
pub fn loglog_fit(pairs: impl Iterator<Item = (f64, f64)>) -> IndexFit {
    let pts: Vec<(f64, f64)> = pairs
        .filter(|(a, v)| a.abs() > 1e-12 && v.abs() > 1e-300 && a.is_finite() && v.is_finite())
        .map(|(a, v)| (a.abs().ln(), v.abs().ln()))
        .collect();
    ols(&pts)
}
