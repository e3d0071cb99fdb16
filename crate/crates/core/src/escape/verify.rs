//! Grid certificate of q >= c′x^ε ψ(p) and −H_p q >= c″x^{1+ε} ψ(p).

use std::io::{self, Write};

use rayon::prelude::*;

use crate::flow::halton::radical_inverse;
use crate::flow::{advance_state, FlowOptions};
use crate::geometry::{ModelProblem, PhasePoint};
use crate::scalar::{from_usize, lit, to_f64, Real};

use super::{sample_pieces, worst, EscapeError, EscapeFunction, Sample, Witness};

/// Verification grid in the (z, energy, sign) variables on the line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// z samples: half uniform on |z| <= 4/x₀, a quarter log-spaced on each outer side.
    pub n_z: usize,
    /// Energy levels at the midpoints of the window cells.
    pub n_e: usize,
    /// Smallest x covered, i.e. |z| <= 1/x_min.
    pub x_min: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_z: 1280, n_e: 40, x_min: 1e-3 }
    }
}

impl GridSpec {
    /// Both resolutions doubled.
    pub fn refined(&self) -> Self {
        Self { n_z: 2 * self.n_z, n_e: 2 * self.n_e, x_min: self.x_min }
    }

    pub fn point_count(&self) -> usize {
        2 * self.n_z * self.n_e
    }
}

fn z_values<T: Real>(x0: T, spec: &GridSpec) -> Vec<T> {
    let zk = lit::<T>(4.0) / x0;
    let zmax = T::one() / lit::<T>(spec.x_min);
    let n_out = if zmax > zk { spec.n_z / 4 } else { 0 };
    let n_in = spec.n_z - 2 * n_out;
    let mut zs = Vec::with_capacity(spec.n_z);
    if n_out > 0 {
        let ratio = (zmax / zk).powf(T::one() / from_usize::<T>(n_out));
        let outer: Vec<T> = (1..=n_out).map(|k| zk * ratio.powi(k as i32)).collect();
        zs.extend(outer.iter().rev().map(|z| -*z));
    }
    let span = if n_out > 0 { zk } else { zmax };
    for i in 0..n_in {
        zs.push(span * (lit::<T>(2.0) * (from_usize::<T>(i) + lit(0.5)) / from_usize::<T>(n_in) - T::one()));
    }
    if n_out > 0 {
        let ratio = (zmax / zk).powf(T::one() / from_usize::<T>(n_out));
        zs.extend((1..=n_out).map(|k| zk * ratio.powi(k as i32)));
    }
    zs
}

/// Deterministic grid over supp ψ(p) ∩ {x >= x_min} on the line.
pub fn verification_grid<T: Real>(model: &ModelProblem<T>, x0: T, spec: &GridSpec) -> Vec<PhasePoint<T>> {
    let l2 = model.lambda2();
    let zs = z_values(x0, spec);
    let mut out = Vec::with_capacity(spec.point_count());
    for j in 0..spec.n_e {
        let e = l2 - model.delta
            + lit::<T>(2.0) * model.delta * (from_usize::<T>(j) + lit(0.5)) / from_usize::<T>(spec.n_e);
        for sign in [T::one(), -T::one()] {
            for &z in &zs {
                let k2 = e - model.potential.value(z);
                if k2 > T::zero() {
                    out.push(model.point([z, T::zero()], [sign * k2.sqrt(), T::zero()]));
                }
            }
        }
    }
    out
}

/// Margins and arg-mins of the certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct PropositionReport {
    pub c_prime: f64,
    pub c_second: f64,
    /// min of b/x^{1+2ε} with b = −2qH_p q/ψ² over ψ > 1/2.
    pub c0: f64,
    pub argmin_c_prime: Witness,
    pub argmin_c_second: Witness,
    pub argmin_c0: Witness,
    pub grid_points: usize,
    pub support_points: usize,
    /// max of x^{−1+ε}H_p q₋, which must not be positive.
    pub max_minus_rate: f64,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
}

impl PropositionReport {
    pub fn passed(&self) -> bool {
        self.c_prime > 0.0 && self.c_second > 0.0 && self.c0 > 0.0 && self.max_minus_rate <= 0.0
    }

    /// key = value lines.
    pub fn write_summary<W: Write>(&self, mut out: W) -> io::Result<()> {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:.9e}"));
        writeln!(out, "grid_points = {}", self.grid_points)?;
        writeln!(out, "support_points = {}", self.support_points)?;
        writeln!(out, "c_prime = {:.9e}", self.c_prime)?;
        writeln!(out, "c_prime_argmin = {}", self.argmin_c_prime)?;
        writeln!(out, "c_second = {:.9e}", self.c_second)?;
        writeln!(out, "c_second_argmin = {}", self.argmin_c_second)?;
        writeln!(out, "c0 = {:.9e}", self.c0)?;
        writeln!(out, "c0_argmin = {}", self.argmin_c0)?;
        writeln!(out, "max_minus_rate = {:.9e}", self.max_minus_rate)?;
        writeln!(out, "c2 = {}", opt(self.c2))?;
        writeln!(out, "c3 = {}", opt(self.c3))?;
        writeln!(out, "c4 = {}", opt(self.c4))?;
        writeln!(out, "passed = {}", self.passed())
    }
}

/// Largest c′, c″ for which both inequalities hold on the grid, and the b-form check.
pub fn verify_proposition<T: Real>(q: &EscapeFunction<T>, spec: &GridSpec) -> Result<PropositionReport, EscapeError> {
    let model = &q.model;
    let grid = verification_grid(model, q.constants().x0, spec);
    let samples = sample_pieces(&q.boundary, &q.tubes, model, &grid)?;
    verify_samples(q, &samples, grid.len())
}

pub fn verify_samples<T: Real>(
    q: &EscapeFunction<T>,
    samples: &[Sample<T>],
    grid_points: usize,
) -> Result<PropositionReport, EscapeError> {
    let model = &q.model;
    let eps = q.eps;
    let two = lit::<T>(2.0);
    if samples.is_empty() {
        return Err(EscapeError::PropositionViolated { reason: "no grid point in supp psi".into(), witnesses: vec![] });
    }
    let val = |s: &Sample<T>| q.combine(&s.pieces);
    let lower = |s: &Sample<T>| val(s).0 / (s.point.x.powf(eps) * s.psi);
    let rate = |s: &Sample<T>| -val(s).1 / (s.point.x.powf(T::one() + eps) * s.psi);
    let big = |s: &Sample<T>| s.psi > lit(0.5);
    let bform = |s: &Sample<T>| {
        let (v, h) = val(s);
        -two * v * h / (s.psi * s.psi) / s.point.x.powf(T::one() + two * eps)
    };
    let minus = |s: &Sample<T>| s.point.x.powf(-T::one() + eps) * s.pieces.minus.1;
    let (cp, ip) = super::min_over(samples, |_| true, lower).expect("samples");
    let (cs, is) = super::min_over(samples, |_| true, rate).expect("samples");
    let (c0, i0) = super::min_over(samples, big, bform).unwrap_or((T::zero(), 0));
    let mx = samples.iter().map(minus).fold(T::neg_infinity(), T::max);
    let w = |i: usize, v: T| Witness::new(model, &samples[i].point, to_f64(v));
    let report = PropositionReport {
        c_prime: to_f64(cp),
        c_second: to_f64(cs),
        c0: to_f64(c0),
        argmin_c_prime: w(ip, cp),
        argmin_c_second: w(is, cs),
        argmin_c0: w(i0, c0),
        grid_points,
        support_points: samples.len(),
        max_minus_rate: to_f64(mx),
        c2: q.c2.map(to_f64),
        c3: q.c3.map(to_f64),
        c4: q.c4.map(to_f64),
    };
    let fail = |reason: &str, f: &dyn Fn(&Sample<T>) -> T, keep: &dyn Fn(&Sample<T>) -> bool| {
        Err(EscapeError::PropositionViolated {
            reason: reason.to_string(),
            witnesses: worst(model, samples, keep, f, 10),
        })
    };
    if !(cp > T::zero()) {
        return fail("q >= c' x^eps psi(p) fails for every c' > 0", &lower, &|_| true);
    }
    if !(cs > T::zero()) {
        return fail("-H_p q >= c'' x^(1+eps) psi(p) fails for every c'' > 0", &rate, &|_| true);
    }
    if !(c0 > T::zero()) {
        return fail("b = -2 q H_p q / psi^2 >= c0 x^(1+2 eps) fails where psi > 1/2", &bform, &big);
    }
    if mx > T::zero() {
        return fail("x^(-1+eps) H_p q_- is positive", &|s: &Sample<T>| -minus(s), &|_| true);
    }
    Ok(report)
}

/// Central flow difference (q(exp(δH_p)pt) − q(exp(−δH_p)pt))/(2δ).
pub fn flow_difference<T: Real>(q: &EscapeFunction<T>, pt: &PhasePoint<T>, delta: T) -> Result<T, EscapeError> {
    let opts = FlowOptions { tol: lit(1e-13), ..q.tubes.flow };
    let dim = q.model.dimension;
    let yp = advance_state(&q.model, &pt.state(), delta, &opts)?;
    let ym = advance_state(&q.model, &pt.state(), -delta, &opts)?;
    let qp = q.eval(&PhasePoint::from_state(dim, &yp))?.0;
    let qm = q.eval(&PhasePoint::from_state(dim, &ym))?.0;
    Ok((qp - qm) / (lit::<T>(2.0) * delta))
}

/// CSV dump x, tau, q, H_p q of q on the given points (e.g. a slice at fixed energy).
pub fn write_slice_csv<T: Real, W: Write>(
    q: &EscapeFunction<T>,
    pts: &[PhasePoint<T>],
    out: W,
) -> Result<(), EscapeError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| EscapeError::Construction(format!("slice output: {e}"));
    w.write_record(["x", "tau", "q", "H_p q"]).map_err(io)?;
    for pt in pts {
        let (v, h) = q.eval(pt)?;
        w.write_record([
            format!("{:.12e}", to_f64(pt.x)),
            format!("{:.12e}", to_f64(pt.tau)),
            format!("{:.12e}", to_f64(v)),
            format!("{:.12e}", to_f64(h)),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EscapeError::Construction(format!("slice output: {e}")))?;
    Ok(())
}

/// Agreement of the analytic H_p q with flow differences.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowConsistency {
    pub points: usize,
    /// max |fd − H_p q| / max(|fd|, |H_p q|, 1e-6·max|H_p q|).
    pub worst_relative: f64,
    pub worst: Witness,
}

/// Compares H_p q with [`flow_difference`] at `count` points of the verification grid inside
/// supp ψ, picked by a base-2 radical inverse of the grid index.
pub fn flow_consistency<T: Real>(
    q: &EscapeFunction<T>,
    spec: &GridSpec,
    count: usize,
    delta: T,
) -> Result<FlowConsistency, EscapeError> {
    let model = &q.model;
    let grid: Vec<PhasePoint<T>> = verification_grid(model, q.constants().x0, spec)
        .into_iter()
        .filter(|pt| q.psi(pt) > T::zero())
        .collect();
    if grid.is_empty() {
        return Err(EscapeError::PropositionViolated { reason: "no grid point in supp psi".into(), witnesses: vec![] });
    }
    let picks: Vec<PhasePoint<T>> = (1..=count as u64)
        .map(|k| grid[((radical_inverse(k, 2) * grid.len() as f64) as usize).min(grid.len() - 1)])
        .collect();
    let pairs: Vec<Result<(f64, f64), EscapeError>> = picks
        .par_iter()
        .map(|pt| Ok((to_f64(q.eval(pt)?.1), to_f64(flow_difference(q, pt, delta)?))))
        .collect();
    let pairs: Vec<(f64, f64)> = pairs.into_iter().collect::<Result<_, _>>()?;
    let floor = 1e-6 * pairs.iter().fold(0.0f64, |a, p| a.max(p.0.abs()));
    let mut worst = (0.0, 0);
    for (i, &(hq, fd)) in pairs.iter().enumerate() {
        let scale = hq.abs().max(fd.abs()).max(floor);
        let e = if scale == 0.0 { 0.0 } else { (fd - hq).abs() / scale };
        if e > worst.0 || e.is_nan() {
            worst = (e, i);
        }
    }
    Ok(FlowConsistency { points: picks.len(), worst_relative: worst.0, worst: Witness::new(model, &picks[worst.1], worst.0) })
}
