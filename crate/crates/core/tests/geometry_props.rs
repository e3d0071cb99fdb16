use proptest::prelude::*;
use semires::geometry::{BoundaryMetric, Dimension, ModelProblem, PhasePoint, Potential};

fn model(dim: Dimension, metric: BoundaryMetric<f64>, potential: Potential<f64>) -> ModelProblem<f64> {
    ModelProblem::new(dim, metric, potential, 1.0, 1.0, 0.25).unwrap()
}

fn potentials() -> impl Strategy<Value = Potential<f64>> {
    prop_oneof![
        Just(Potential::Zero),
        (-1.0..1.0f64).prop_map(|a| Potential::LongRangePow { amplitude: a, exponent: 1.0 }),
        (0.5..2.0f64, 0.0..4.0f64)
            .prop_map(|(a, d)| Potential::DoubleBump { amplitude: a, separation: d }),
        (-2.0..2.0f64).prop_map(|a| Potential::Well { amplitude: a }),
    ]
}

fn metrics() -> impl Strategy<Value = BoundaryMetric<f64>> {
    prop_oneof![
        Just(BoundaryMetric::Flat),
        (-0.6..0.6f64, 1u32..4).prop_map(|(a, k)| BoundaryMetric::Warped { amplitude: a, mode: k }),
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (a.abs() + b.abs()) + 1e-300
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn charts_agree_on_the_symbol(
        pot in potentials(), met in metrics(),
        lr in (2.0f64).ln()..(1e4f64).ln(), th in 0.0..std::f64::consts::TAU,
        tau in -2.0..2.0f64, mu in -2.0..2.0f64,
    ) {
        let m = model(Dimension::Two, met, pot);
        let x = (-lr).exp();
        let pt = PhasePoint::from_scattering(Dimension::Two, x, [th.cos(), th.sin()], tau, mu).unwrap();
        let pe = m.symbol(&pt);
        let ps = m.symbol_scattering(pt.x, pt.y, pt.tau, pt.mu).unwrap();
        prop_assert!((pe - ps).abs() <= 1e-10 * (1.0 + pe.abs()), "pe={pe} ps={ps}");
    }

    #[test]
    fn chart_round_trip_is_identity(
        lr in (2.0f64).ln()..(1e4f64).ln(), th in 0.0..std::f64::consts::TAU,
        k1 in -3.0..3.0f64, k2 in -3.0..3.0f64, sign in any::<bool>(),
    ) {
        let r = lr.exp();
        let z = [r * th.cos(), r * th.sin()];
        let a = PhasePoint::from_euclidean(Dimension::Two, z, [k1, k2]);
        let b = PhasePoint::from_scattering(Dimension::Two, a.x, a.y, a.tau, a.mu).unwrap();
        let scale = r + k1.abs() + k2.abs();
        for (u, v) in a.z.iter().chain(a.zeta.iter()).zip(b.z.iter().chain(b.zeta.iter())) {
            prop_assert!((u - v).abs() <= 1e-12 * scale);
        }
        let s = if sign { 1.0 } else { -1.0 };
        let c = PhasePoint::from_euclidean(Dimension::One, [s * r, 0.0], [k1, 0.0]);
        let d = PhasePoint::from_scattering(Dimension::One, c.x, c.y, c.tau, 0.0).unwrap();
        prop_assert!((c.z[0] - d.z[0]).abs() <= 1e-12 * r && (c.zeta[0] - d.zeta[0]).abs() <= 1e-12 * (1.0 + k1.abs()));
    }

    #[test]
    fn pushed_field_matches_boundary_expression(
        pot in potentials(), met in metrics(),
        lr in (2.0f64).ln()..(1e4f64).ln(), th in 0.0..std::f64::consts::TAU,
        tau in -2.0..2.0f64, mu in -2.0..2.0f64,
    ) {
        let m = model(Dimension::Two, met, pot);
        let x = (-lr).exp();
        let pt = PhasePoint::from_scattering(Dimension::Two, x, [th.cos(), th.sin()], tau, mu).unwrap();
        let a = m.pushforward_field(pt.z, pt.zeta);
        let b = m.scattering_field(pt.x, pt.y, pt.tau, pt.mu).unwrap();
        prop_assert!(close(a.x_dot, b.x_dot, 1e-8), "{a:?} {b:?}");
        prop_assert!(close(a.tau_dot, b.tau_dot, 1e-8), "{a:?} {b:?}");
        prop_assert!(close(a.theta_dot, b.theta_dot, 1e-8), "{a:?} {b:?}");
        prop_assert!(close(a.mu_dot, b.mu_dot, 1e-8), "{a:?} {b:?}");
    }

    #[test]
    fn line_field_matches_boundary_expression(
        pot in potentials(), r in 2.0..1e4f64, k in -2.0..2.0f64, left in any::<bool>(),
    ) {
        let m = model(Dimension::One, BoundaryMetric::Flat, pot);
        let z = if left { -r } else { r };
        let pt = m.point([z, 0.0], [k, 0.0]);
        let a = m.pushforward_field(pt.z, pt.zeta);
        let b = m.scattering_field(pt.x, pt.y, pt.tau, pt.mu).unwrap();
        prop_assert!(close(a.x_dot, b.x_dot, 1e-8) && close(a.tau_dot, b.tau_dot, 1e-8), "{a:?} {b:?}");
    }

    #[test]
    fn sublevel_sets_have_bounded_momentum(
        pot in potentials(), met in metrics(),
        z1 in -20.0..20.0f64, z2 in -20.0..20.0f64, k1 in -4.0..4.0f64, k2 in -4.0..4.0f64,
    ) {
        let m = model(Dimension::Two, met, pot);
        let pt = m.point([z1, z2], [k1, k2]);
        let p = m.symbol(&pt);
        prop_assert!(p >= m.potential_floor() - 1e-12);
        if p <= 2.0 * m.lambda2() {
            prop_assert!(k1.hypot(k2) <= m.momentum_bound(2.0 * m.lambda2()) + 1e-12);
        }
    }

    #[test]
    fn boundary_function_positive_and_asymptotic(r in 0.0..1e6f64) {
        let pt = PhasePoint::<f64>::from_euclidean(Dimension::Two, [r, 0.0], [0.0, 0.0]);
        prop_assert!(pt.x > 0.0);
        if r >= 1.0 {
            prop_assert!((pt.x * r - 1.0).abs() < 1e-15);
        }
    }
}

#[test]
fn field_consistency_in_the_blended_interior() {
    let m = model(
        Dimension::Two,
        BoundaryMetric::Warped { amplitude: 0.4, mode: 2 },
        Potential::LongRangePow { amplitude: 0.5, exponent: 1.0 },
    );
    for i in 1..200 {
        let r = i as f64 * 0.01;
        let th = 0.37 * i as f64;
        let z = [r * th.cos(), r * th.sin()];
        let zeta = [0.3 - 0.01 * i as f64, 0.8];
        let (zd, kd) = m.hamilton_field(z, zeta);
        let e = 1e-6;
        for j in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[j] += e;
            zm[j] -= e;
            let fd = (m.symbol_euclidean(zp, zeta) - m.symbol_euclidean(zm, zeta)) / (2.0 * e);
            assert!((fd + kd[j]).abs() < 1e-7 * (1.0 + fd.abs()), "r={r} j={j}");
            let mut kp = zeta;
            let mut km = zeta;
            kp[j] += e;
            km[j] -= e;
            let fd = (m.symbol_euclidean(z, kp) - m.symbol_euclidean(z, km)) / (2.0 * e);
            assert!((fd - zd[j]).abs() < 1e-7 * (1.0 + fd.abs()), "r={r} j={j}");
        }
    }
}

#[test]
fn decay_certificate_for_long_range_potential() {
    let m = model(
        Dimension::One,
        BoundaryMetric::Flat,
        Potential::LongRangePow { amplitude: 0.5, exponent: 1.0 },
    );
    let pts: Vec<_> = (0..2000)
        .map(|i| m.point([1.0 + i as f64 * 0.5, 0.0], [0.9, 0.0]))
        .collect();
    let c = m.decay_certificate(&pts);
    // A <r>^{-1} r <= A, approached as r grows.
    assert!(c <= 0.5 && c > 0.49, "c={c}");
    let free = ModelProblem::<f64>::free_line(0.25);
    assert_eq!(free.decay_certificate(&pts), 0.0);
}
