use std::f64::consts::PI;

use num_complex::Complex;
use proptest::prelude::*;
use semires::geometry::{BoundaryMetric, Dimension, ModelProblem, Potential};
use semires::linalg::symmetric_eigen;
use semires::quantize::{quantize, Factor, GridQuantization, Symbol};
use semires::resolvent::*;
use semires::smooth::PlateauBump;

type C = Complex<f64>;

fn free() -> ModelProblem<f64> {
    ModelProblem::free_line(0.2)
}

fn model(potential: Potential<f64>) -> ModelProblem<f64> {
    ModelProblem::new(Dimension::One, BoundaryMetric::Flat, potential, 1.0, 1.0, 0.2).unwrap()
}

fn longrange() -> ModelProblem<f64> {
    model(Potential::LongRangePow { amplitude: 0.5, exponent: 1.0 })
}

fn double_bump() -> ModelProblem<f64> {
    model(Potential::DoubleBump { amplitude: 2.0, separation: 3.0 })
}

fn grid(l: f64, n: usize, order: FdOrder) -> BoxGrid<f64> {
    BoxGrid { half_length: l, n, order }
}

fn dirichlet(m: &ModelProblem<f64>, h: f64, l: f64, n: usize) -> DiscreteOperator<f64> {
    discretize(m, h, &grid(l, n, FdOrder::Second), Boundary::Dirichlet).unwrap()
}

fn test_vector(op: &DiscreteOperator<f64>) -> Vec<C> {
    op.z.iter().map(|&z| C::new((-z * z / 8.0).exp(), 0.3 * (z / 2.0).sin() * (-z * z / 20.0).exp())).collect()
}

fn max_diff(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

const HS: [f64; 5] = [0.2, 0.14, 0.1, 0.07, 0.05];

#[test]
fn free_spectrum_follows_the_discrete_dispersion() {
    let (h, l, n) = (0.1, 100.0, 1 << 14);
    let op = dirichlet(&free(), h, l, n);
    let dz = op.dz();
    for m in [1usize, 37, 1000, 9000, n] {
        // k = πm/2L, so kΔz = πm/(N+1); phases are reduced exactly in integers.
        let phase = |j: usize| ((m * j) % (2 * (n + 1))) as f64 * PI / (n + 1) as f64;
        let v: Vec<C> = (0..n).map(|i| C::new(phase(i + 1).sin(), 0.0)).collect();
        let sigma = h * h * 2.0 / (dz * dz) * (1.0 - phase(1).cos());
        let pv = op.apply(&v);
        let expected: Vec<C> = v.iter().map(|x| x * sigma).collect();
        assert!(max_diff(&pv, &expected) <= 1e-10, "m={m}");
    }
}

#[test]
fn potential_adds_a_diagonal() {
    let (h, l, n) = (0.1, 20.0, 2048);
    for order in [FdOrder::Second, FdOrder::Fourth] {
        let g = grid(l, n, order);
        let p0 = discretize(&free(), h, &g, Boundary::Dirichlet).unwrap();
        let p1 = discretize(&longrange(), h, &g, Boundary::Dirichlet).unwrap();
        for i in (0..n).step_by(97) {
            for j in i.saturating_sub(3)..(i + 4).min(n) {
                let d = p1.entry(i, j) - p0.entry(i, j);
                let expected = if i == j { 0.5 / (1.0 + p0.z[i].powi(2)).sqrt() } else { 0.0 };
                assert!((d - C::new(expected, 0.0)).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn under_resolved_grids_are_rejected() {
    let r = discretize(&free(), 0.05, &grid(100.0, 1024, FdOrder::Second), Boundary::Dirichlet);
    assert!(matches!(r, Err(ResolventError::Config(_))));
    assert!(matches!(
        discretize(&free(), 0.1, &grid(10.0, 512, FdOrder::Second), Boundary::Cap { strength: 0.0 }),
        Err(ResolventError::Config(_))
    ));
}

#[test]
fn two_dimensional_models_are_unsupported() {
    let m = ModelProblem::new(Dimension::Two, BoundaryMetric::Flat, Potential::Zero, 1.0, 1.0, 0.2).unwrap();
    let r = discretize(&m, 0.1, &grid(10.0, 1024, FdOrder::Second), Boundary::Dirichlet);
    assert!(matches!(r, Err(ResolventError::UnsupportedDimension)));
}

#[test]
fn resolution_helper_meets_the_guard() {
    for h in HS {
        let g = BoxGrid::resolving(200.0, h, 1.0, 10.0, FdOrder::Fourth);
        assert!(g.n.is_power_of_two());
        assert!(discretize(&free(), h, &g, Boundary::Dirichlet).is_ok());
    }
}

#[test]
fn shifted_solves_invert_the_operator() {
    for boundary in [Boundary::Dirichlet, Boundary::Cap { strength: 1.0 }] {
        for order in [FdOrder::Second, FdOrder::Fourth] {
            let op = discretize(&longrange(), 0.1, &grid(40.0, 4096, order), boundary).unwrap();
            let g = test_vector(&op);
            let (l2, t) = (1.0, 0.01);
            let w = C::new(l2, t);
            let f: Vec<C> = op.apply(&g).iter().zip(&g).map(|(p, x)| p - x * w).collect();
            let u = solve_shifted(&op, l2, t, &f).unwrap();
            assert!(max_diff(&u, &g) <= 1e-9);
        }
    }
}

#[test]
fn negative_shift_conjugates_the_solution() {
    let op = dirichlet(&longrange(), 0.1, 30.0, 2048);
    let f: Vec<C> = op.z.iter().map(|&z| C::new((-(z - 1.0).powi(2)).exp(), 0.0)).collect();
    let up = solve_shifted(&op, 1.0, 0.05, &f).unwrap();
    let um = solve_shifted(&op, 1.0, -0.05, &f).unwrap();
    let conj: Vec<C> = up.iter().map(|z| z.conj()).collect();
    assert!(max_diff(&um, &conj) <= 1e-12 * up.iter().map(|z| z.norm()).fold(0.0, f64::max));
}

#[test]
fn shift_restrictions() {
    let op = discretize(&free(), 0.1, &grid(20.0, 1024, FdOrder::Second), Boundary::Cap { strength: 1.0 }).unwrap();
    assert!(matches!(op.factor_shift(1.0, -0.1), Err(ResolventError::InvalidShift(_))));
    assert!(op.factor_shift(1.0, 0.0).is_ok());
}

#[test]
fn absorber_lives_outside_the_weight() {
    let op = discretize(&free(), 0.1, &grid(50.0, 4096, FdOrder::Fourth), Boundary::Cap { strength: 1.0 }).unwrap();
    let w = op.weight(0.7);
    assert!(op.absorber.iter().any(|&a| a > 0.0));
    for (a, x) in op.absorber.iter().zip(&w) {
        assert!(*a == 0.0 || *x == 0.0);
    }
    assert!(op.z.iter().zip(&op.absorber).all(|(z, a)| (*a > 0.0) == (z.abs() > 0.8 * 50.0)));
}

#[test]
fn unweighted_norm_is_the_inverse_spectral_distance() {
    let op = dirichlet(&free(), 0.1, 8.0, 256);
    let (vals, _) = symmetric_eigen(op.n(), &op.dense_real().unwrap());
    for (l2, t) in [(1.0, 1e-3), (0.9, 1e-4)] {
        let dist = vals.iter().map(|s| C::new(s - l2, t).norm()).fold(f64::INFINITY, f64::min);
        let opts = PowerOptions { tol: 1e-10, max_iter: 500 };
        let n = weighted_resolvent_norm_with(&op, l2, t, 0.0, 0.0, &opts).unwrap();
        assert!((n.value * dist - 1.0).abs() <= 1e-6, "{} vs {}", n.value, 1.0 / dist);
    }
}

#[test]
fn large_shift_bound() {
    for m in [free(), longrange(), double_bump()] {
        let op = dirichlet(&m, 0.1, 40.0, 4096);
        let n = weighted_resolvent_norm(&op, 1.0, 1.0, 0.7).unwrap();
        assert!(n.value <= 1.0 + 1e-6, "{}", n.value);
    }
}

#[test]
fn weighted_norm_is_even_in_t_for_dirichlet() {
    let op = dirichlet(&longrange(), 0.1, 40.0, 4096);
    let opts = PowerOptions { tol: 1e-7, max_iter: 5000 };
    for t in [0.01, 0.1] {
        let a = weighted_resolvent_norm_with(&op, 1.0, t, 0.7, 0.7, &opts).unwrap().value;
        let b = weighted_resolvent_norm_with(&op, 1.0, -t, 0.7, 0.7, &opts).unwrap().value;
        assert!((a - b).abs() <= 1e-4 * a, "{a} vs {b}");
    }
}

#[test]
fn oracle_is_grid_converged() {
    let o = analytic_free_resolvent_norm(1.0, 0.01, 0.1, 0.7, &OracleOptions::default()).unwrap();
    assert!(o.certified(), "change {}", o.change);
    assert!(o.value > 0.0);
}

#[test]
fn oracle_doubles_when_h_halves() {
    // The shape h⁻¹·F(·/h) needs t ≪ h: at fixed t the kernel decays like e^{−t|z−z′|/2h}.
    let opts = OracleOptions::<f64>::default();
    let a = analytic_free_resolvent_norm(1.0, 1e-6, 0.1, 0.7, &opts).unwrap().refined;
    let b = analytic_free_resolvent_norm(1.0, 1e-6, 0.05, 0.7, &opts).unwrap().refined;
    assert!((b / a / 2.0 - 1.0).abs() <= 0.03, "ratio {}", b / a);
}

#[test]
fn oracle_decreases_in_t() {
    let opts = OracleOptions { certify: false, ..OracleOptions::default() };
    let mut prev = f64::INFINITY;
    for k in 0..=10 {
        let t = 0.001 + 0.499 * k as f64 / 10.0;
        let v = analytic_free_resolvent_norm(1.0, t, 0.1, 0.7, &opts).unwrap().value;
        assert!(v < prev, "t={t}");
        prev = v;
    }
    assert!(analytic_free_resolvent_norm(1.0, -0.1, 0.1, 0.7, &opts).is_err());
}

#[test]
fn discretization_matches_the_oracle() {
    let model = free();
    let strength = 1.0;
    // L = 200, N = 2^15, h = 0.1, t = 1e-3.
    let op = discretize(&model, 0.1, &grid(200.0, 1 << 15, FdOrder::Fourth), Boundary::Cap { strength }).unwrap();
    let n = weighted_resolvent_norm(&op, 1.0, 1e-3, 0.7).unwrap().value;
    let o = analytic_free_resolvent_norm(1.0, 1e-3, 0.1, 0.7, &OracleOptions::default()).unwrap();
    assert!(o.certified());
    assert!((n / o.refined - 1.0).abs() <= 0.02, "{n} vs {}", o.refined);

    let opts = SweepOptions::for_model(&model);
    for h in HS {
        let g = BoxGrid::resolving(opts.half_length, h, 1.0, opts.ppw, opts.order);
        let op = discretize(&model, h, &g, Boundary::Cap { strength }).unwrap();
        let n = weighted_resolvent_norm(&op, 1.0, 0.0, 0.7).unwrap().value;
        let o = analytic_free_resolvent_norm(1.0, 0.0, h, 0.7, &OracleOptions::default()).unwrap();
        assert!((n / o.refined - 1.0).abs() <= 0.03, "h={h}: {n} vs {}", o.refined);
    }
}

fn sweep(m: &ModelProblem<f64>, rule: TRule<f64>) -> ScalingReport<f64> {
    h_sweep(m, 1.0, &HS, rule, 0.7, &SweepOptions::for_model(m)).unwrap()
}

#[test]
fn free_sweep_scales_like_inverse_h() {
    let r = sweep(&free(), TRule::default());
    assert!(!r.trapping && !r.partial);
    assert!((r.slope - 1.0).abs() <= 0.05, "slope {}", r.slope);
    assert!(r.max_uniformity() <= 3.0);
    assert_eq!(r.rows.len(), 15);
}

#[test]
fn longrange_sweep_scales_like_inverse_h() {
    let m = longrange();
    let cap = sweep(&m, TRule::default());
    assert!(!cap.trapping);
    assert!((0.85..=1.15).contains(&cap.slope), "slope {}", cap.slope);
    assert!(cap.max_uniformity() <= 3.0);
    let dir = sweep(&m, TRule::DirichletFraction(0.1));
    assert_eq!(dir.mode, "dirichlet");
    for (a, b) in cap.central_norms().iter().zip(dir.central_norms()) {
        let r = a / b;
        assert!((0.5..=2.0).contains(&r), "cap/dirichlet {r}");
    }
    for (row, h) in dir.rows.iter().step_by(3).zip(HS) {
        assert!((row.t - h / 10.0).abs() < 1e-15);
    }
}

#[test]
fn trapping_is_flagged() {
    let r = sweep(&double_bump(), TRule::default());
    assert!(r.trapping);
}

#[test]
fn sweep_rejects_bad_inputs() {
    let m = free();
    let opts = SweepOptions::for_model(&m);
    assert!(h_sweep(&m, 1.0, &[0.1, 0.2], TRule::default(), 0.7, &opts).is_err());
    let small = SweepOptions { half_length: 20.0, ..opts.clone() };
    assert!(h_sweep(&m, 1.0, &[0.2, 0.1], TRule::default(), 0.7, &small).is_err());
}

#[test]
fn sweep_csv_is_deterministic() {
    let m = free();
    let opts = SweepOptions { jobs: 1, ..SweepOptions::for_model(&m) };
    let run = || {
        let r = h_sweep(&m, 1.0, &[0.2, 0.1], TRule::default(), 0.7, &opts).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.starts_with("h,t,lambda2,s,norm,iterations,mode"));
    assert_eq!(a.lines().count(), 7);
}

#[test]
fn slope_fit() {
    let x = [0.0, 1.0, 2.0, 3.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let (s, r) = least_squares_slope(&x, &y);
    assert!((s - 2.0).abs() < 1e-14 && r < 1e-14);
}

#[test]
fn spectral_mapping_reproduces_simple_functions() {
    let op = dirichlet(&longrange(), 0.2, 8.0, 256);
    let n = op.n();
    let id = function_of_operator(&op, &|_s: f64| 1.0, CalculusMethod::Eigen).unwrap();
    let p = function_of_operator(&op, &|s: f64| s, CalculusMethod::Eigen).unwrap();
    let dense = op.dense_real().unwrap();
    let (id, p) = (id.dense().unwrap(), p.dense().unwrap());
    for i in 0..n {
        for j in 0..n {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((id[i * n + j] - e).abs() <= 1e-10);
            assert!((p[i * n + j] - dense[i * n + j]).abs() <= 1e-10);
        }
    }
    let cap = discretize(&free(), 0.2, &grid(8.0, 256, FdOrder::Second), Boundary::Cap { strength: 1.0 }).unwrap();
    assert!(function_of_operator(&cap, &|s: f64| s, CalculusMethod::Eigen).is_err());
}

fn bump() -> PlateauBump<f64> {
    PlateauBump::new(1.0, 0.25, 0.5)
}

#[test]
fn helffer_sjostrand_matches_the_eigen_calculus() {
    let psi = bump();
    let f = |s: f64| psi.value(s);
    let op = dirichlet(&free(), 0.1, 8.0, 512);
    let a = function_of_operator(&op, &f, CalculusMethod::Eigen).unwrap();
    let b = function_of_operator(&op, &f, CalculusMethod::helffer_sjostrand((psi.lower(), psi.upper()))).unwrap();
    assert!(b.dense().is_none());
    let d = spectral_distance(&op, &a, &b).unwrap();
    assert!(d <= 1e-5, "distance {d}");
    // The same measure sees a real discrepancy.
    let c = function_of_operator(&op, &|s: f64| 0.5 * psi.value(s), CalculusMethod::Eigen).unwrap();
    assert!((spectral_distance(&op, &a, &c).unwrap() - 0.5).abs() < 1e-2);
}

#[test]
fn helffer_sjostrand_refinement_guard() {
    let psi = bump();
    let f = |s: f64| psi.value(s);
    let op = dirichlet(&free(), 0.2, 8.0, 128);
    let coarse = CalculusMethod::HelfferSjostrand { order: 4, nodes: 20, support: (psi.lower(), psi.upper()), height: 0.5 };
    assert!(matches!(function_of_operator(&op, &f, coarse), Err(ResolventError::Config(_))));
}

#[test]
fn helffer_sjostrand_scalar_quadrature() {
    let psi = bump();
    let f = |s: f64| psi.value(s);
    let q = HsQuadrature::new(&f, 4, 200, (0.5, 1.5), 0.02);
    for k in 0..=400 {
        let s = -0.5 + 3.0 * k as f64 / 400.0;
        assert!((q.eval(s) - f(s)).abs() <= 1e-5, "sigma={s}");
    }
}

#[test]
fn nonchar_bound_examples() {
    let op = dirichlet(&free(), 0.1, 8.0, 512);
    let ts = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    let one = nonchar_bound(&op, &|_s: f64| 1.0, 1.0, &ts).unwrap();
    assert_eq!(one.bound, 0.0);

    let psi = bump();
    let f = |s: f64| psi.value(s);
    let mut bounds = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        let op = dirichlet(&free(), h, 8.0, 512);
        let r = nonchar_bound(&op, &f, 1.0, &ts).unwrap();
        assert!(r.bound <= 4.1, "h={h} bound {}", r.bound);
        assert!(r.bound <= 1.05 * r.scalar_bound);
        for (_, v, s) in &r.per_t {
            assert!(*v <= 1.05 * s);
        }
        bounds.push(r.bound);
    }
    let hi = bounds.iter().copied().fold(0.0, f64::max);
    let lo = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo - 1.0 < 0.1, "bounds {bounds:?}");
}

#[test]
fn quantized_symbol_matches_finite_differences() {
    // Shared nodes: the periodic grid with N points and the box grid with N − 1 interior points.
    let (l, h) = (12.0, 0.1);
    let v = |z: f64| 0.5 / (1.0 + z * z).sqrt();
    let mut errs = Vec::new();
    for n in [1024usize, 2048] {
        let q = GridQuantization::new(l, n, h).unwrap();
        let a = Symbol::of_zeta(Factor::square())
            + Symbol::of_z(Factor::new(move |z: f64| {
                let b = 1.0 + z * z;
                (0.5 / b.sqrt(), -0.5 * z / (b * b.sqrt()))
            }));
        let qa = quantize(&a, &q).unwrap();
        let op = dirichlet(&longrange(), h, l, n - 1);
        let zs = q.z_values();
        assert!((zs[1] - op.z[0]).abs() < 1e-12 && (op.dz() - q.dz()).abs() < 1e-15);
        let u: Vec<C> = zs.iter().map(|&z| C::new((-z * z / 2.0).exp() * (3.0 * z).cos(), 0.0)).collect();
        let spectral = qa.apply(&u);
        let fd = op.apply(&u[1..]);
        let err = spectral[1..].iter().zip(&fd).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        // Exact h²(−u″) + Vu, to confirm which side carries the error.
        let exact: Vec<C> = zs
            .iter()
            .map(|&z| {
                let (e, c, s) = ((-z * z / 2.0).exp(), (3.0 * z).cos(), (3.0 * z).sin());
                let upp = e * ((z * z - 1.0 - 9.0) * c + 6.0 * z * s);
                C::new(-h * h * upp + v(z) * e * c, 0.0)
            })
            .collect();
        assert!(max_diff(&spectral, &exact) < 1e-10);
        errs.push(err);
    }
    let ratio = errs[0] / errs[1];
    assert!((ratio - 4.0).abs() < 0.2, "errors {errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dirichlet_operator_is_symmetric(amp in 0.0f64..2.0, fourth in any::<bool>(), i in 0usize..600, k in 0usize..3) {
        let order = if fourth { FdOrder::Fourth } else { FdOrder::Second };
        let m = model(Potential::LongRangePow { amplitude: amp, exponent: 1.0 });
        let op = discretize(&m, 0.1, &grid(10.0, 600, order), Boundary::Dirichlet).unwrap();
        let j = (i + k).min(599);
        prop_assert_eq!(op.entry(i, j), op.entry(j, i));
        prop_assert_eq!(op.entry(i, i).im, 0.0);
    }

    #[test]
    fn solves_are_linear_inverses(a in -1.0f64..1.0, c in -3.0f64..3.0, t in 0.001f64..0.5, l2 in 0.6f64..1.4) {
        let op = discretize(&longrange(), 0.1, &grid(20.0, 2048, FdOrder::Fourth), Boundary::Cap { strength: 1.0 }).unwrap();
        let g: Vec<C> = op.z.iter().map(|&z| C::new((-(z - c).powi(2)).exp(), a * (-(z + c).powi(2)).exp())).collect();
        let w = C::new(l2, t);
        let f: Vec<C> = op.apply(&g).iter().zip(&g).map(|(p, x)| p - x * w).collect();
        let u = solve_shifted(&op, l2, t, &f).unwrap();
        prop_assert!(max_diff(&u, &g) <= 1e-9);
    }
}
