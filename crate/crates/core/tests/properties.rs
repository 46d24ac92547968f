use fbsde_core::coeff::TimeGrid;
use fbsde_core::container::{fmt_f64, read_ensemble, write_ensemble};
use fbsde_core::density::{chi, nv_density, DensityEnvelope, Target};
use fbsde_core::fbm::{covariance, sample_paths, Integrand};
use fbsde_core::interp::Pchip;
use fbsde_core::transfer::VarianceClock;
use proptest::prelude::*;

fn increasing(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..2.0, n).prop_map(|steps| {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain(steps.into_iter().map(move |s| {
                acc += s;
                acc
            }))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_clock_round_trips(exponent in 0.3f64..2.5, scale in 0.1f64..5.0, t in 0.0f64..1.0) {
        let c = VarianceClock::Power { scale, exponent };
        c.validate(1.0).unwrap();
        let back = c.inverse(c.eval(t), 1.0).unwrap();
        prop_assert!((back - t).abs() < 1e-10);
        let s = c.eval(1.0) * t;
        prop_assert!((c.eval(c.inverse(s, 1.0).unwrap()) - s).abs() < 1e-10);
    }

    #[test]
    fn table_clock_round_trips(v in increasing(12), u in 0.0f64..1.0) {
        let t: Vec<f64> = (0..v.len()).map(|k| k as f64 / (v.len() - 1) as f64).collect();
        let c = VarianceClock::Table { t, v: v.clone() };
        c.validate(1.0).unwrap();
        let back = c.inverse(c.eval(u), 1.0).unwrap();
        prop_assert!((back - u).abs() < 1e-8);
        let s = v[v.len() - 1] * u;
        prop_assert!((c.eval(c.inverse(s, 1.0).unwrap()) - s).abs() < 1e-8);
    }

    #[test]
    fn pchip_preserves_monotone_data(v in increasing(9), a in 0.0f64..8.0, b in 0.0f64..8.0) {
        let x: Vec<f64> = (0..v.len()).map(|k| k as f64).collect();
        let p = Pchip::new(x, v).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(p.eval(lo) <= p.eval(hi) + 1e-12);
    }

    #[test]
    fn float_text_is_exact(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn fbm_covariance_is_symmetric_and_cauchy_schwarz(h in 0.05f64..0.95, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let c = covariance(h, s, t).unwrap();
        prop_assert!((c - covariance(h, t, s).unwrap()).abs() < 1e-15);
        let bound = (covariance(h, s, s).unwrap() * covariance(h, t, t).unwrap()).sqrt();
        prop_assert!(c.abs() <= bound * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn gaussian_envelope_is_ordered(g_lo in 0.05f64..2.0, ratio in 1.0f64..4.0, m in -2.0f64..2.0, x in -6.0f64..6.0) {
        let e = DensityEnvelope::gaussian(Target::Y, m, 0.7, g_lo, g_lo * ratio, "prop").unwrap();
        prop_assert!(e.lower(x).unwrap() <= e.upper(x).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn constant_g_reproduces_normal_density(g in 0.1f64..3.0, m in -1.0f64..1.0, x in -3.0f64..3.0) {
        let mu = (2.0 * g / std::f64::consts::PI).sqrt();
        let p = nv_density(|_| g, m, mu, x).unwrap();
        let exact = (-(x - m).powi(2) / (2.0 * g)).exp() / (2.0 * std::f64::consts::PI * g).sqrt();
        prop_assert!((p - exact).abs() < 1e-10 * exact.max(1e-6));
    }

    #[test]
    fn chi_is_nonnegative(z in -4.0f64..4.0, m in -2.0f64..2.0, lambda in 0.1f64..1.0, d in 0.1f64..1.5) {
        prop_assert!(chi(z, m, lambda, d).unwrap() >= -1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ensemble_container_round_trips(h in 0.1f64..0.9, n in 1usize..40, seed in any::<u64>()) {
        let g = TimeGrid::uniform(1.0, 6).unwrap();
        let e = sample_paths(h, &g, Integrand::Unit, n, seed).unwrap();
        let mut buf = Vec::new();
        write_ensemble(&e, &mut buf).unwrap();
        prop_assert_eq!(read_ensemble(buf.as_slice()).unwrap(), e);
    }
}
