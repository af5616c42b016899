use std::f64::consts::PI;

use proptest::prelude::*;
use srcas::params::{reflected_resistance, FilterHelpers};
use srcas::{derive_params, ConverterParams};

prop_compose! {
    fn converter()(
        lr in 10e-6..1e-3f64,
        cr in 1e-9..1e-6f64,
        co in 10e-9..10e-6f64,
        ro in 10.0..100e3f64,
        n in 0.5..30.0f64,
        vin in 1.0..1000.0f64,
        f_ratio in 1.001..2.0f64,
    ) -> ConverterParams {
        let fr = 1.0 / (2.0 * PI * (lr * cr).sqrt());
        ConverterParams::new(lr, cr, co, ro, n, vin, f_ratio * fr).unwrap()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn impedance_scaling_keeps_resonance(p in converter(), k in 0.1..10.0f64) {
        let q = ConverterParams::new(p.lr() * k, p.cr() / k, p.co(), p.ro(), p.n(), p.vin(), p.fs()).unwrap();
        let (d, e) = (derive_params(&p), derive_params(&q));
        prop_assert!(rel(e.omega_r, d.omega_r) < 1e-12);
        prop_assert!(rel(e.zc, k * d.zc) < 1e-12);
    }

    #[test]
    fn quality_factor_two_paths(p in converter()) {
        let d = derive_params(&p);
        let direct = d.zc * PI * PI * p.n() * p.n() / (8.0 * p.ro());
        prop_assert!(rel(d.qe, direct) < 1e-12);
        prop_assert!(rel(d.rac, reflected_resistance(p.ro(), p.n())) < 1e-15);
    }

    #[test]
    fn helper_derivatives_are_angle_derivatives(p in converter(), u in 0.0..1.0f64) {
        let h = FilterHelpers::new(&p);
        let t = u * p.ts();
        // derivative with respect to θ = ωr·t
        let dt = 1e-6 / h.omega_r;
        let fd1 = (h.g1(t + dt) - h.g1(t - dt)) / 2e-6;
        let fd2 = (h.g2(t + dt) - h.g2(t - dt)) / 2e-6;
        let scale = h.a.abs() + h.omega_r;
        prop_assert!((fd1 - h.g1_prime(t)).abs() <= 1e-6 * scale);
        prop_assert!((fd2 - h.g2_prime(t)).abs() <= 1e-6 * scale);
    }
}
