use fbsde_core::rng;
use fbsde_verify::kde_distance;
use fbsde_verify::oracle::{lsmc_euler, lsmc_richardson, nested_mc_g, simpson, ControlledBsde, LinearTable, McEstimate};

#[test]
fn nested_mc_constant_derivative_is_exact() {
    let g = nested_mc_g(|_| 1.5, 0.7, 0.7, 0.2, 0.4, 200, 50, 1);
    assert!((g.mean - 0.7 * 1.5 * 1.5).abs() < 1e-12);
    assert!(g.se < 1e-12);
}

#[test]
fn nested_mc_linear_derivative() {
    // E_θ E_W D(e^{−θ}x + (1 − e^{−θ})m + …) = (x + m)/2 for D(x) = x
    let (scale, m, x) = (0.6, 0.3, 1.1);
    let g = nested_mc_g(|v| v, scale, 0.6, m, x, 20_000, 100, 2);
    let exact = scale * x * (x + m) / 2.0;
    assert!((g.mean - exact).abs() < 4.0 * g.se, "{} vs {exact} ± {}", g.mean, g.se);
}

#[test]
fn lsmc_recovers_an_affine_generator() {
    // f = a y + b with Y_T = W_T: Y_0 = b (e^{aT} − 1)/a
    let (a, b) = (0.5, 0.2);
    let f = move |_t: f64, y: f64, _z: f64| a * y + b;
    let v = |_t: f64, x: f64| x;
    let vx = |_t: f64, _x: f64| 1.0;
    let p = ControlledBsde { horizon: 1.0, f: &f, v: &v, vx: &vx };
    let exact = b * (a.exp() - 1.0) / a;
    let (y, se, coarse, _) = lsmc_richardson(&p, 40, 20_000, 5, 9);
    assert!((y - exact).abs() < 2e-3 + 3.0 * se, "{y} vs {exact}");
    assert!((coarse.y0_plain - exact).abs() < 2e-2);
}

#[test]
fn lsmc_zero_generator_returns_the_control() {
    let f = |_t: f64, _y: f64, _z: f64| 0.0;
    let v = |t: f64, x: f64| x * x + (1.0 - t);
    let vx = |_t: f64, x: f64| 2.0 * x;
    let p = ControlledBsde { horizon: 1.0, f: &f, v: &v, vx: &vx };
    let r = lsmc_euler(&p, 10, 2000, 3, 4);
    assert!((r.y0 - 1.0).abs() < 1e-12);
}

#[test]
fn tables_and_simpson() {
    let t = LinearTable::new(-1.0, 1.0, 10, |x| 3.0 * x - 1.0);
    for x in [-0.95, -0.3, 0.0, 0.71] {
        assert!((t.eval(x) - (3.0 * x - 1.0)).abs() < 1e-12);
    }
    assert_eq!(t.eval(5.0), 2.0);
    assert!((simpson(|x| x * x * x - x, 0.0, 2.0, 10) - 2.0).abs() < 1e-12);
    let e = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
    assert!((e.mean - 2.5).abs() < 1e-15 && (e.se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
}

#[test]
fn kde_distance_separates_laws() {
    let a = rng::normals(1, 20_000);
    let b = rng::normals(2, 20_000);
    assert!(kde_distance(&a, &b).unwrap() < 4.5);
    let shifted: Vec<f64> = b.iter().map(|x| x + 0.3).collect();
    assert!(kde_distance(&a, &shifted).unwrap() > 10.0);
}
