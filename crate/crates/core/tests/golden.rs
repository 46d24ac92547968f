//! Values frozen from an independent mpmath/numpy oracle (tests/fixtures/gen_golden.py).

use fbsde_core::coeff::{CoefficientSet, TimeFn};
use fbsde_core::density::{chi, nv_density};
use fbsde_core::fbm;
use fbsde_core::generator::{Composite, Generator};
use fbsde_core::heat::{quasi_conditional_expectation, semigroup_apply, DerivativeBounds, LinearFbsdeSpec, TerminalMap};
use fbsde_core::transfer::{inverse_variance, representation_check, solve_transferred, GaussianDriverSpec, TransferGrid};
use serde::Deserialize;

#[derive(Deserialize)]
struct Record {
    name: String,
    value: f64,
    se: Option<f64>,
}

#[derive(Deserialize)]
struct Golden {
    schema_version: u32,
    values: Vec<Record>,
}

fn golden(name: &str) -> Record {
    let text = include_str!("fixtures/golden.json");
    let g: Golden = serde_json::from_str(text).unwrap();
    assert_eq!(g.schema_version, 1);
    g.values.into_iter().find(|r| r.name == name).unwrap_or_else(|| panic!("no golden value {name}"))
}

fn close(got: f64, name: &str, rel: f64) {
    let want = golden(name).value;
    assert!((got - want).abs() <= rel * want.abs().max(1e-300), "{name}: got {got}, want {want}");
}

#[test]
fn fbm_covariance() {
    close(fbm::covariance(0.75, 0.5, 1.0).unwrap(), "covariance_h075_s05_t1", 1e-14);
}

#[test]
fn iota_and_derivative_for_linear_sigma() {
    let s = TimeFn::linear(0.0, 1.0);
    close(fbm::iota(&s, 1.0, 0.75).unwrap(), "iota_sigma_linear_h075_t1", 1e-7);
    close(fbm::iota_derivative(&s, 1.0, 0.75).unwrap(), "iota_derivative_sigma_linear_h075_t1", 1e-6);
}

#[test]
fn nourdin_viens_density() {
    close(nv_density(|u| 1.0 + u * u, 0.0, 1.0, 1.0).unwrap(), "nv_density_g_1pu2_x1", 1e-9);
}

#[test]
fn heat_semigroup_of_exponential() {
    close(semigroup_apply(0.5, f64::exp, 0.2).unwrap(), "semigroup_exp_t05_x02", 1e-10);
}

#[test]
fn chi_closed_form() {
    close(chi(1.5, 0.2, 0.3, 1.0).unwrap(), "chi_z15_m02_a03", 1e-10);
}

#[test]
fn quasi_conditional_expectation_smooth_convex() {
    let spec = LinearFbsdeSpec {
        coeffs: CoefficientSet::default(),
        terminal: TerminalMap::SmoothConvex { lo: 0.5, hi: 2.0, scale: 3.0 },
        hurst: 0.75,
        horizon: 1.0,
        bounds: DerivativeBounds { c: 0.5, c_upper: 2.0, c_tilde: 1e-3, c_tilde_upper: 0.25 },
        check_bounds: false,
    };
    let h = spec.terminal.clone();
    let v = quasi_conditional_expectation(&spec, |x| h.h(x), 0.5, 0.3).unwrap();
    close(v, "qce_smooth_convex_t05_w03_quad", 1e-9);
    let mc = golden("qce_smooth_convex_t05_w03");
    assert!((v - mc.value).abs() < 3.0 * mc.se.unwrap());
}

#[test]
fn transferred_heat_flow() {
    let d = GaussianDriverSpec::fbm(0.75, 1.0);
    let h = TerminalMap::Cubic { linear: 1.0, cubic: 0.1 };
    let sol = solve_transferred(&d, &Generator::Zero, &h, TransferGrid { nx: 400, nt: 200, k: 8.0 }).unwrap();
    let s = d.variance(0.5).unwrap();
    close(sol.phi(s, 0.7).unwrap(), "transfer_phi_cubic_h075_t05_x07", 1e-4);
}

#[test]
fn representation_quotient_for_linear_generator() {
    let d = GaussianDriverSpec::brownian(1.0);
    let f = Generator::Composite(Composite { y_lin: 1.0, ..Default::default() });
    let c = representation_check(&d, &f, 0.3, 1.0, 0.0, &[0.1], TransferGrid { nx: 100, nt: 100, k: 8.0 }).unwrap();
    close(c.rows[0].quotient, "representation_quotient_ylin_eps01", 1e-6);
}

#[test]
fn clock_inverse() {
    let d = GaussianDriverSpec::fbm(0.75, 1.0);
    close(inverse_variance(&d, 0.25).unwrap(), "clock_inverse_h075_s025", 1e-14);
}
