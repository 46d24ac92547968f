use fbsde_core::coeff::{CoefficientSet, TimeFn};
use fbsde_core::container::{read_solution, write_solution};
use fbsde_core::density::{calibrate, field_moments, g_y_explicit, gaussian_envelope, kde, verify_envelope, Bandwidth, Target};
use fbsde_core::generator::{Composite, Generator};
use fbsde_core::heat::{linear_solve, quasi_conditional_expectation, DerivativeBounds, LinearFbsdeSpec, TerminalMap};
use fbsde_core::pde::{solve_mixed_pde, NonlinearFbsdeSpec};
use fbsde_core::transfer::{general_envelope, solve_transferred, EnvelopeConstants, GaussianDriverSpec, TransferGrid, VarianceClock};

fn linear_spec(terminal: TerminalMap, coeffs: CoefficientSet) -> LinearFbsdeSpec {
    LinearFbsdeSpec {
        coeffs,
        terminal,
        hurst: 0.75,
        horizon: 1.0,
        bounds: DerivativeBounds { c: 1.0, c_upper: 1.0, c_tilde: 1.0, c_tilde_upper: 1.0 },
        check_bounds: false,
    }
}

#[test]
fn zero_generator_matches_semigroup() {
    let lin = linear_spec(
        TerminalMap::SmoothConvex { lo: 0.5, hi: 2.0, scale: 1.5 },
        CoefficientSet { b: TimeFn::constant(0.2), ..Default::default() },
    );
    let spec = NonlinearFbsdeSpec { generator: Generator::Zero, lipschitz: 0.0, ..NonlinearFbsdeSpec::from_linear(&lin) };
    let sol = solve_mixed_pde(&spec, 200, 100, 8.0).unwrap();
    let h = lin.terminal.clone();
    for t in [0.0, 0.5, 0.9] {
        for w in [-0.8, 0.0, 0.6] {
            let x = spec.coeffs.drift_mean(t) + w;
            let exact = quasi_conditional_expectation(&lin, |v| h.h(v), t, w).unwrap();
            let got = sol.evaluate(t, x).unwrap().u;
            assert!((got - exact).abs() < 2e-3, "t={t} w={w}: {got} vs {exact}");
        }
    }
}

#[test]
fn linear_generator_cross_check() {
    let coeffs =
        CoefficientSet { alpha: TimeFn::constant(0.1), beta: TimeFn::constant(0.2), gamma: TimeFn::constant(0.25), ..Default::default() };
    let lin = linear_spec(TerminalMap::SmoothConvex { lo: 0.5, hi: 2.0, scale: 1.5 }, coeffs);
    let spec = NonlinearFbsdeSpec::from_linear(&lin);
    let sol = solve_mixed_pde(&spec, 200, 200, 8.0).unwrap();
    for t in [0.1, 0.5] {
        for w in [-0.5, 0.4] {
            let (y, z) = linear_solve(&lin, t, w).unwrap();
            let p = sol.evaluate(t, w).unwrap();
            assert!((p.u - y).abs() < 2e-3, "y at ({t}, {w}): {} vs {y}", p.u);
            assert!((-p.ux - z).abs() < 5e-3, "z at ({t}, {w}): {} vs {z}", -p.ux);
        }
    }
}

#[test]
fn solution_container_round_trip() {
    let lin = linear_spec(TerminalMap::Cubic { linear: 1.0, cubic: 0.1 }, CoefficientSet::default());
    let spec = NonlinearFbsdeSpec {
        generator: Generator::Composite(Composite { y_sin: 0.5, ..Default::default() }),
        lipschitz: 1.0,
        ..NonlinearFbsdeSpec::from_linear(&lin)
    };
    let sol = solve_mixed_pde(&spec, 60, 50, 6.0).unwrap();
    let mut buf = Vec::new();
    write_solution(&sol, &mut buf).unwrap();
    let back = read_solution(buf.as_slice()).unwrap();
    assert_eq!(back.times, sol.times);
    assert_eq!(back.meta.notes, sol.meta.notes);
    for x in [-1.0, 0.0, 0.5] {
        assert_eq!(back.evaluate(0.4, x).unwrap(), sol.evaluate(0.4, x).unwrap());
    }
}

#[test]
fn identity_terminal_gives_exact_gaussian() {
    let lin = linear_spec(TerminalMap::Identity, CoefficientSet { alpha: TimeFn::constant(0.3), ..Default::default() });
    let t = 0.6;
    let iota = lin.iota(t).unwrap();
    let mu = (2.0 * iota / std::f64::consts::PI).sqrt();
    let e = gaussian_envelope(&lin, t, Target::Y, mu).unwrap();
    for k in -10..=10 {
        let x = e.center + 0.5 * k as f64 * iota.sqrt();
        let exact = (-(x - e.center).powi(2) / (2.0 * iota)).exp() / (2.0 * std::f64::consts::PI * iota).sqrt();
        assert!((e.lower(x).unwrap() - exact).abs() < 1e-10);
        assert!((e.upper(x).unwrap() - exact).abs() < 1e-10);
    }
}

#[test]
fn calibrated_g_bounds_hold() {
    let lin = linear_spec(TerminalMap::Cubic { linear: 1.0, cubic: 0.1 }, CoefficientSet::default());
    let spec = NonlinearFbsdeSpec {
        generator: Generator::Composite(Composite { y_sin: 0.5, z_tanh: 0.25, ..Default::default() }),
        lipschitz: 0.75,
        ..NonlinearFbsdeSpec::from_linear(&lin)
    };
    let sol = solve_mixed_pde(&spec, 200, 100, 8.0).unwrap();
    let t = 0.5;
    let cal = calibrate(&sol, &spec, t, Target::Y, 0.1, 0.1).unwrap();
    let (m, _) = field_moments(&sol, &spec, t, Target::Y).unwrap();
    let sd = spec.iota(t).unwrap().sqrt();
    for k in -4..=4 {
        let y = 0.6 * k as f64 * sd;
        let g = g_y_explicit(&sol, &spec, t, y, m).unwrap();
        assert!(cal.g_lower(y, m) <= g && g <= cal.g_upper(y, m), "y={y}: {} ≤ {g} ≤ {}", cal.g_lower(y, m), cal.g_upper(y, m));
    }
}

#[test]
fn transferred_envelope_covers_samples_and_scales_with_clock() {
    let d = GaussianDriverSpec::fbm(0.75, 1.0);
    let h = TerminalMap::Cubic { linear: 1.0, cubic: 0.1 };
    let grid = TransferGrid { nx: 200, nt: 100, k: 8.0 };
    let sol = solve_transferred(&d, &Generator::Zero, &h, grid).unwrap();
    let t = 0.6;
    let env = general_envelope(&sol, t, Target::Y, None, None).unwrap();
    let (y, _) = sol.marginal_samples(t, 20_000, 4).unwrap();
    let emp = kde(&y, Bandwidth::Silverman).unwrap();
    let sd = emp.sd;
    let r = verify_envelope(&emp, &env, (env.center - 2.5 * sd, env.center + 2.5 * sd), 3.0).unwrap();
    assert!(r.pass_fraction >= 0.99, "{}", r.pass_fraction);

    // identity terminal: the envelope is Normal(0, V(t)); a 4× clock doubles its scale
    let id = TerminalMap::Identity;
    let c = Some(EnvelopeConstants { c1: 2.0, c2: 2.0 });
    let a = solve_transferred(&d, &Generator::Zero, &id, grid).unwrap();
    let quad = GaussianDriverSpec { clock: VarianceClock::Power { scale: 4.0, exponent: 1.5 }, ..d.clone() };
    let b = solve_transferred(&quad, &Generator::Zero, &id, grid).unwrap();
    let ea = general_envelope(&a, t, Target::Y, c, None).unwrap();
    let eb = general_envelope(&b, t, Target::Y, c, None).unwrap();
    for x in [-1.0, -0.2, 0.0, 0.7] {
        assert!((eb.upper(2.0 * x).unwrap() - 0.5 * ea.upper(x).unwrap()).abs() < 1e-6);
        assert!((eb.lower(2.0 * x).unwrap() - 0.5 * ea.lower(x).unwrap()).abs() < 1e-6);
    }
}
