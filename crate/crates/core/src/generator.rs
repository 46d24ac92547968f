//! BSDE generators f(t, x, y, z).

use crate::coeff::TimeFn;
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// f = constant + t_lin·t + x_sin·sin x + y_lin·y + y_sin·sin y + z_lin·z + z_tanh·tanh z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Composite {
    pub constant: f64,
    pub t_lin: f64,
    pub x_sin: f64,
    pub y_lin: f64,
    pub y_sin: f64,
    pub z_lin: f64,
    pub z_tanh: f64,
}

/// A generator in the PDE convention u_t + … + f(t, x, u, z) = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Zero,
    /// f = α(t) + β(t)·y + γ(t)·z
    Linear {
        alpha: TimeFn,
        beta: TimeFn,
        gamma: TimeFn,
    },
    Composite(Composite),
}

impl Generator {
    pub fn eval(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        match self {
            Generator::Zero => 0.0,
            Generator::Linear { alpha, beta, gamma } => alpha.eval(t) + beta.eval(t) * y + gamma.eval(t) * z,
            Generator::Composite(c) => {
                let mut v = c.constant + c.t_lin * t + c.y_lin * y + c.z_lin * z;
                if c.x_sin != 0.0 {
                    v += c.x_sin * x.sin();
                }
                if c.y_sin != 0.0 {
                    v += c.y_sin * y.sin();
                }
                if c.z_tanh != 0.0 {
                    v += c.z_tanh * z.tanh();
                }
                v
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Generator::Zero => true,
            Generator::Linear { alpha, beta, gamma } => alpha.is_zero() && beta.is_zero() && gamma.is_zero(),
            Generator::Composite(c) => *c == Composite::default(),
        }
    }

    pub fn depends_on_x(&self) -> bool {
        matches!(self, Generator::Composite(c) if c.x_sin != 0.0)
    }

    /// True when f is affine in z.
    pub fn is_linear_in_z(&self) -> bool {
        match self {
            Generator::Composite(c) => c.z_tanh == 0.0,
            _ => true,
        }
    }

    /// True when f depends on (t, y) only.
    pub fn depends_only_on_t_y(&self) -> bool {
        match self {
            Generator::Zero => true,
            Generator::Linear { gamma, .. } => gamma.is_zero(),
            Generator::Composite(c) => c.x_sin == 0.0 && c.z_lin == 0.0 && c.z_tanh == 0.0,
        }
    }

    /// Lipschitz constant in (y, z) jointly with that of f_y, from the closed form, on [0, T].
    pub fn lipschitz_bound(&self, horizon: f64) -> f64 {
        match self {
            Generator::Zero => 0.0,
            Generator::Linear { beta, gamma, .. } => {
                let (bl, bh) = beta.inf_sup(0.0, horizon);
                let (gl, gh) = gamma.inf_sup(0.0, horizon);
                bl.abs().max(bh.abs()) + gl.abs().max(gh.abs())
            }
            // f_y = y_lin + y_sin cos y is itself |y_sin|-Lipschitz
            Generator::Composite(c) => c.y_lin.abs() + 2.0 * c.y_sin.abs() + c.z_lin.abs() + c.z_tanh.abs(),
        }
    }

    /// Largest finite-difference slope of f and f_y in (y, z) over a probe box.
    pub fn probe_lipschitz(&self, horizon: f64, half_width: f64) -> f64 {
        let n = 24;
        let e = 1e-4;
        let mut worst = 0.0f64;
        for it in 0..=4 {
            let t = horizon * it as f64 / 4.0;
            for iy in 0..=n {
                let y = -half_width + 2.0 * half_width * iy as f64 / n as f64;
                for iz in 0..=n {
                    let z = -half_width + 2.0 * half_width * iz as f64 / n as f64;
                    let f = |y: f64, z: f64| self.eval(t, 0.0, y, z);
                    let fy = |y: f64, z: f64| (f(y + e, z) - f(y - e, z)) / (2.0 * e);
                    let dy = (f(y + e, z) - f(y, z)).abs() / e;
                    let dz = (f(y, z + e) - f(y, z)).abs() / e;
                    let dfy = (fy(y + e, z) - fy(y, z)).abs() / e + (fy(y, z + e) - fy(y, z)).abs() / e;
                    worst = worst.max(dy.max(dz) + dfy);
                }
            }
        }
        worst
    }

    /// Sign probe for "all derivatives positive": min over a box of f_x, f_y, f_z.
    pub fn min_first_derivative(&self, horizon: f64, half_width: f64) -> f64 {
        let n = 16;
        let e = 1e-5;
        let mut lo = f64::INFINITY;
        for it in 0..=4 {
            let t = horizon * it as f64 / 4.0;
            for ix in 0..=n {
                let x = -half_width + 2.0 * half_width * ix as f64 / n as f64;
                for iy in 0..=n {
                    let y = -half_width + 2.0 * half_width * iy as f64 / n as f64;
                    for iz in 0..=n {
                        let z = -half_width + 2.0 * half_width * iz as f64 / n as f64;
                        let f0 = self.eval(t, x, y, z);
                        let fx = (self.eval(t, x + e, y, z) - f0) / e;
                        let fy = (self.eval(t, x, y + e, z) - f0) / e;
                        let fz = (self.eval(t, x, y, z + e) - f0) / e;
                        lo = lo.min(fx.min(fy).min(fz));
                    }
                }
            }
        }
        lo
    }

    pub fn validate(&self) -> Result<()> {
        if let Generator::Composite(c) = self {
            let all = [c.constant, c.t_lin, c.x_sin, c.y_lin, c.y_sin, c.z_lin, c.z_tanh];
            if all.iter().any(|v| !v.is_finite()) {
                return Err(invalid("generator", "coefficients must be finite"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_eval_and_flags() {
        let g = Generator::Composite(Composite { y_sin: 0.5, z_tanh: 0.25, ..Default::default() });
        assert!((g.eval(0.0, 0.0, 1.0, 2.0) - (0.5 * 1f64.sin() + 0.25 * 2f64.tanh())).abs() < 1e-15);
        assert!(!g.is_linear_in_z());
        assert!(!g.depends_on_x());
        assert!(g.probe_lipschitz(1.0, 3.0) <= g.lipschitz_bound(1.0) * (1.0 + 1e-3));
        assert!(Generator::Zero.is_zero());
    }

    #[test]
    fn serde_tags() {
        let g: Generator = serde_json::from_str(r#"{"kind":"composite","y_lin":1.0}"#).unwrap();
        assert_eq!(g.eval(0.3, 0.0, 2.0, 0.0), 2.0);
        assert!(g.depends_only_on_t_y());
    }
}
