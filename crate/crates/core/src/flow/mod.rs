//! Hamiltonian flow exp(tH_p): integration, escape classification, non-trapping scans and
//! the incoming time used by the tube construction.

pub mod halton;
pub mod rk;

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Dimension, ModelProblem, PhasePoint};
use crate::scalar::{lit, to_f64, Real};
use rk::{Control, State, StepControl};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, partial: Box<Trajectory<f64>> },
    #[error("incoming region not reached within t_max = {t_max}; the point may be trapped")]
    NotReached { t_max: f64 },
    #[error("trajectory output: {0}")]
    Io(#[from] csv::Error),
}

/// Knobs for flow integration and escape detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions<T> {
    pub tol: T,
    pub r_esc: T,
    pub t_max: T,
    /// Largest step; bounds the spacing of stored samples.
    pub h_max: T,
}

impl<T: Real> Default for FlowOptions<T> {
    fn default() -> Self {
        Self { tol: lit(1e-10), r_esc: lit(40.0), t_max: lit(500.0), h_max: lit(0.25) }
    }
}

impl<T: Real> FlowOptions<T> {
    fn control(&self, dim: Dimension) -> StepControl<T> {
        StepControl {
            rtol: self.tol,
            atol: self.tol,
            h_max: self.h_max,
            h_min: lit(1e-13),
            active: 2 * dim.as_usize(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Escaped,
    UndeterminedAtTmax,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Escaped => "escaped",
            Verdict::UndeterminedAtTmax => "undetermined",
        }
    }
}

/// Time-ordered samples of a bicharacteristic through ξ₀ (at t = 0).
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub samples: Vec<(T, PhasePoint<T>)>,
    pub energy_drift: T,
    pub verdict_fwd: Verdict,
    pub verdict_bwd: Verdict,
    pub escape_time_fwd: Option<T>,
    pub escape_time_bwd: Option<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn first(&self) -> &PhasePoint<T> {
        &self.samples[0].1
    }

    pub fn last(&self) -> &PhasePoint<T> {
        &self.samples[self.samples.len() - 1].1
    }

    /// Point nearest to time t among the samples.
    pub fn at(&self, t: T) -> &PhasePoint<T> {
        let i = self.samples.partition_point(|(s, _)| *s < t).min(self.samples.len() - 1);
        &self.samples[i].1
    }

    /// Whether r increases monotonically after the forward escape time and decreases
    /// monotonically (in t) before the backward escape time.
    pub fn monotone_after_escape(&self) -> bool {
        let rs: Vec<(T, T)> = self.samples.iter().map(|(t, p)| (*t, p.radius())).collect();
        let ok_f = match self.escape_time_fwd {
            Some(te) => rs.windows(2).filter(|w| w[0].0 >= te).all(|w| w[1].1 > w[0].1),
            None => true,
        };
        let ok_b = match self.escape_time_bwd {
            Some(te) => rs.windows(2).filter(|w| w[1].0 <= te).all(|w| w[1].1 < w[0].1),
            None => true,
        };
        ok_f && ok_b
    }

    /// CSV dump with columns t, z…, ζ…, x, τ, p.
    pub fn write_csv<W: Write>(&self, model: &ModelProblem<T>, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let two = model.dimension == Dimension::Two;
        if two {
            w.write_record(["t", "z1", "z2", "zeta1", "zeta2", "x", "tau", "p"])?;
        } else {
            w.write_record(["t", "z", "zeta", "x", "tau", "p"])?;
        }
        for (t, p) in &self.samples {
            let mut row = vec![to_f64(*t), to_f64(p.z[0])];
            if two {
                row.push(to_f64(p.z[1]));
            }
            row.push(to_f64(p.zeta[0]));
            if two {
                row.push(to_f64(p.zeta[1]));
            }
            row.extend([to_f64(p.x), to_f64(p.tau), to_f64(model.symbol(p))]);
            w.write_record(row.iter().map(|v| format!("{v:.12e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Escape test in time direction `dir` (+1 forward, −1 backward): r > R_esc, r moving
/// outwards in that direction, and τ^2 >= λ^2/2.
pub fn has_escaped<T: Real>(model: &ModelProblem<T>, pt: &PhasePoint<T>, dir: T, r_esc: T) -> bool {
    // ṙ = −2τ for every model, so the outward condition is dir·τ < 0.
    pt.radius() > r_esc && dir * pt.tau < T::zero() && pt.tau * pt.tau >= model.lambda2() / lit(2.0)
}

/// Integrates H_p (dir = +1) or −H_p (dir = −1) in the flow parameter from `s0` to `s1`,
/// projecting every accepted state back onto the energy level of `y0` by one Newton step
/// along ∇p.
fn advance<T: Real, O: FnMut(T, &State<T>) -> Control>(
    model: &ModelProblem<T>,
    y0: State<T>,
    s0: T,
    s1: T,
    dir: T,
    ctl: &StepControl<T>,
    observe: O,
) -> Result<(T, State<T>), rk::Underflow<T>> {
    let p0 = model.symbol_euclidean([y0[0], y0[1]], [y0[2], y0[3]]);
    let project = |y: &mut State<T>| {
        let g = model.field_vec(y);
        // ∇p = (∂_z p, ∂_ζ p) = (−ζ̇, ż).
        let grad = [-g[2], -g[3], g[0], g[1]];
        let n2: T = grad.iter().map(|v| *v * *v).sum();
        if n2 > lit(1e-24) {
            let dp = model.symbol_euclidean([y[0], y[1]], [y[2], y[3]]) - p0;
            for i in 0..4 {
                y[i] = y[i] - dp * grad[i] / n2;
            }
        }
    };
    rk::integrate_projected(|y: &State<T>| model.field_vec(y).map(|v| v * dir), project, y0, s0, s1, ctl, observe)
}

struct Leg<T> {
    samples: Vec<(T, PhasePoint<T>)>,
    escape: Option<T>,
    drift: T,
    underflow: Option<T>,
}

fn run_leg<T: Real>(
    model: &ModelProblem<T>,
    start: &PhasePoint<T>,
    t_end: T,
    opts: &FlowOptions<T>,
    stop_on_escape: bool,
) -> Leg<T> {
    let dim = model.dimension;
    let p0 = model.symbol(start);
    let dir = if t_end >= T::zero() { T::one() } else { -T::one() };
    let mut samples = vec![(T::zero(), *start)];
    let mut escape = None;
    let mut drift = T::zero();
    let res = advance(
        model,
        start.state(),
        T::zero(),
        t_end,
        T::one(),
        &opts.control(dim),
        |t, s| {
            let pt = PhasePoint::from_state(dim, s);
            drift = drift.max((model.symbol(&pt) - p0).abs());
            samples.push((t, pt));
            if escape.is_none() && has_escaped(model, &pt, dir, opts.r_esc) {
                escape = Some(t);
                if stop_on_escape {
                    return Control::Stop;
                }
            }
            Control::Continue
        },
    );
    Leg { samples, escape, drift, underflow: res.err().map(|u| u.t) }
}

fn to_f64_traj<T: Real>(t: &Trajectory<T>) -> Trajectory<f64> {
    let cv = |p: &PhasePoint<T>| PhasePoint {
        dimension: p.dimension,
        z: [to_f64(p.z[0]), to_f64(p.z[1])],
        zeta: [to_f64(p.zeta[0]), to_f64(p.zeta[1])],
        x: to_f64(p.x),
        y: [to_f64(p.y[0]), to_f64(p.y[1])],
        tau: to_f64(p.tau),
        mu: to_f64(p.mu),
    };
    Trajectory {
        samples: t.samples.iter().map(|(s, p)| (to_f64(*s), cv(p))).collect(),
        energy_drift: to_f64(t.energy_drift),
        verdict_fwd: t.verdict_fwd,
        verdict_bwd: t.verdict_bwd,
        escape_time_fwd: t.escape_time_fwd.map(to_f64),
        escape_time_bwd: t.escape_time_bwd.map(to_f64),
    }
}

/// Integrates the flow through ξ₀ over `t_span = (t_a, t_b)` with t_a <= 0 <= t_b.
pub fn integrate_flow<T: Real>(
    model: &ModelProblem<T>,
    xi0: &PhasePoint<T>,
    t_span: (T, T),
    opts: &FlowOptions<T>,
) -> Result<Trajectory<T>, FlowError> {
    if !(opts.tol > T::zero()) {
        return Err(FlowError::InvalidTolerance);
    }
    let (ta, tb) = (t_span.0.min(T::zero()), t_span.1.max(T::zero()));
    let fwd = run_leg(model, xi0, tb, opts, false);
    let bwd = run_leg(model, xi0, ta, opts, false);
    let mut samples: Vec<(T, PhasePoint<T>)> = bwd.samples.into_iter().skip(1).rev().collect();
    samples.extend(fwd.samples);
    let traj = Trajectory {
        samples,
        energy_drift: fwd.drift.max(bwd.drift),
        verdict_fwd: verdict(fwd.escape),
        verdict_bwd: verdict(bwd.escape),
        escape_time_fwd: fwd.escape,
        escape_time_bwd: bwd.escape,
    };
    if let Some(t) = fwd.underflow.or(bwd.underflow) {
        return Err(FlowError::StepUnderflow { t: to_f64(t), partial: Box::new(to_f64_traj(&traj)) });
    }
    Ok(traj)
}

fn verdict<T>(e: Option<T>) -> Verdict {
    if e.is_some() {
        Verdict::Escaped
    } else {
        Verdict::UndeterminedAtTmax
    }
}

/// Forward and backward escape verdicts within `opts.t_max`.
pub fn classify_point<T: Real>(
    model: &ModelProblem<T>,
    xi0: &PhasePoint<T>,
    opts: &FlowOptions<T>,
) -> Result<(Verdict, Verdict), FlowError> {
    if !(opts.tol > T::zero()) {
        return Err(FlowError::InvalidTolerance);
    }
    let mut out = [Verdict::UndeterminedAtTmax; 2];
    for (k, end) in [opts.t_max, -opts.t_max].into_iter().enumerate() {
        let leg = run_leg(model, xi0, end, opts, true);
        if let Some(t) = leg.underflow {
            let traj = Trajectory {
                samples: leg.samples,
                energy_drift: leg.drift,
                verdict_fwd: Verdict::UndeterminedAtTmax,
                verdict_bwd: Verdict::UndeterminedAtTmax,
                escape_time_fwd: None,
                escape_time_bwd: None,
            };
            return Err(FlowError::StepUnderflow { t: to_f64(t), partial: Box::new(to_f64_traj(&traj)) });
        }
        out[k] = verdict(leg.escape);
    }
    Ok((out[0], out[1]))
}

/// Sampling of the energy slab {|p − λ^2| < δ, r <= r_max}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSpec<T> {
    pub count: usize,
    pub r_max: T,
    pub flow: FlowOptions<T>,
}

impl<T: Real> SampleSpec<T> {
    pub fn new(count: usize) -> Self {
        let flow = FlowOptions::default();
        Self { count, r_max: flow.r_esc, flow }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ScanSample<T> {
    pub point: PhasePoint<T>,
    pub energy: T,
    pub fwd: Verdict,
    pub bwd: Verdict,
}

#[derive(Clone, Debug)]
pub struct NonTrappingVerdict<T> {
    pub window: (T, T),
    pub sampled_points: usize,
    pub trapped_witnesses: Vec<PhasePoint<T>>,
    pub is_nontrapping_empirical: bool,
    pub samples: Vec<ScanSample<T>>,
}

impl<T: Real> NonTrappingVerdict<T> {
    /// CSV with one row per sample: index, position, momentum, energy, verdicts.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "z1", "z2", "zeta1", "zeta2", "p", "forward", "backward"])?;
        for (i, s) in self.samples.iter().enumerate() {
            let p = &s.point;
            let mut row = vec![i.to_string()];
            row.extend([p.z[0], p.z[1], p.zeta[0], p.zeta[1], s.energy].iter().map(|v| format!("{:.12e}", to_f64(*v))));
            row.push(s.fwd.as_str().into());
            row.push(s.bwd.as_str().into());
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deterministic Halton points of the energy slab, skipping classically forbidden draws.
pub fn slab_samples<T: Real>(model: &ModelProblem<T>, count: usize, r_max: T) -> Vec<(PhasePoint<T>, T)> {
    let mut out = Vec::with_capacity(count);
    let lam2 = model.lambda2();
    let (lo, w) = (lam2 - model.delta, lit::<T>(2.0) * model.delta);
    let mut index = 1u64;
    while out.len() < count && index < 1000 * count as u64 + 1000 {
        let u = halton::point4(index);
        index += 1;
        let u: [T; 4] = u.map(lit);
        let e = lo + w * u[1];
        match model.dimension {
            Dimension::One => {
                let z = r_max * (lit::<T>(2.0) * u[0] - T::one());
                let v = model.potential.value(z);
                if e <= v {
                    continue;
                }
                let k = (e - v).sqrt();
                let k = if u[2] < lit(0.5) { k } else { -k };
                out.push((model.point([z, T::zero()], [k, T::zero()]), e));
            }
            Dimension::Two => {
                let r = r_max * u[0].sqrt();
                let th = T::TAU() * u[2];
                let phi = T::TAU() * u[3];
                let z = [r * th.cos(), r * th.sin()];
                let v = model.potential.value(r);
                if e <= v {
                    continue;
                }
                let k = (e - v).sqrt();
                let hh = model.metric_factor(z);
                let (a, b) = (k * phi.cos(), k * hh.sqrt() * phi.sin());
                let (c, s) = (th.cos(), th.sin());
                let zeta = [a * c - b * s, a * s + b * c];
                out.push((model.point(z, zeta), e));
            }
        }
    }
    out
}

/// Classifies a low-discrepancy sample of the energy slab. Samples fan out across the rayon
/// pool and are merged by index.
pub fn nontrapping_scan<T: Real>(model: &ModelProblem<T>, spec: &SampleSpec<T>) -> NonTrappingVerdict<T> {
    let pts = slab_samples(model, spec.count, spec.r_max);
    let samples: Vec<ScanSample<T>> = pts
        .par_iter()
        .map(|(pt, e)| {
            let (fwd, bwd) = classify_point(model, pt, &spec.flow)
                .unwrap_or((Verdict::UndeterminedAtTmax, Verdict::UndeterminedAtTmax));
            ScanSample { point: *pt, energy: *e, fwd, bwd }
        })
        .collect();
    let trapped: Vec<PhasePoint<T>> = samples
        .iter()
        .filter(|s| s.fwd != Verdict::Escaped || s.bwd != Verdict::Escaped)
        .map(|s| s.point)
        .collect();
    NonTrappingVerdict {
        window: (model.lambda2() - model.delta, model.lambda2() + model.delta),
        sampled_points: samples.len(),
        is_nontrapping_empirical: trapped.is_empty(),
        trapped_witnesses: trapped,
        samples,
    }
}

/// Smallest T such that τ(exp(−tH_p)ξ) > τ_target and x(exp(−tH_p)ξ) < x_target for all
/// sampled t in (T, T + 2]. The transition is refined by bisection.
pub fn time_to_incoming<T: Real>(
    model: &ModelProblem<T>,
    xi: &PhasePoint<T>,
    x_target: T,
    tau_target: T,
    opts: &FlowOptions<T>,
) -> Result<T, FlowError> {
    let dim = model.dimension;
    let good = |p: &PhasePoint<T>| p.tau > tau_target && p.x < x_target;
    let margin = lit::<T>(2.0);
    // Backward flow in s = −t, as a forward integration of −H_p.
    let ctl = opts.control(dim);
    let mut last_bad: Option<(T, State<T>)> = if good(xi) { None } else { Some((T::zero(), xi.state())) };
    let mut first_good_after: Option<T> = if good(xi) { Some(T::zero()) } else { None };
    let mut done = false;
    let res = advance(model, xi.state(), T::zero(), opts.t_max, -T::one(), &ctl, |s, y| {
        let pt = PhasePoint::from_state(dim, y);
        if good(&pt) {
            if first_good_after.is_none() {
                first_good_after = Some(s);
            }
            let since = last_bad.map(|(t, _)| t).unwrap_or(T::zero());
            if s - since >= margin {
                done = true;
                return Control::Stop;
            }
        } else {
            last_bad = Some((s, *y));
            first_good_after = None;
        }
        Control::Continue
    });
    if res.is_err() || !done {
        return Err(FlowError::NotReached { t_max: to_f64(opts.t_max) });
    }
    let (s_bad, y_bad) = match last_bad {
        None => return Ok(T::zero()),
        Some(v) => v,
    };
    let s_good = first_good_after.expect("good sample after the last bad one");
    // Bisection on [s_bad, s_good] by re-integration from the bad sample.
    let (mut a, mut b) = (s_bad, s_good);
    let fine = StepControl { rtol: opts.tol, atol: opts.tol, ..ctl };
    for _ in 0..60 {
        let mid = (a + b) / lit(2.0);
        let (_, y) = advance(model, y_bad, s_bad, mid, -T::one(), &fine, |_, _| Control::Continue)
            .map_err(|_| FlowError::NotReached { t_max: to_f64(opts.t_max) })?;
        if good(&PhasePoint::from_state(dim, &y)) {
            b = mid;
        } else {
            a = mid;
        }
        if b - a <= lit::<T>(1e-12) * (T::one() + b) {
            break;
        }
    }
    Ok(b)
}

/// State after flowing for time t (any sign).
pub fn flow_for<T: Real>(
    model: &ModelProblem<T>,
    start: &PhasePoint<T>,
    t: T,
    opts: &FlowOptions<T>,
) -> Result<PhasePoint<T>, FlowError> {
    let ctl = opts.control(model.dimension);
    let (_, y) = advance(model, start.state(), T::zero(), t, T::one(), &ctl, |_, _| Control::Continue)
    .map_err(|u| FlowError::StepUnderflow { t: to_f64(u.t), partial: Box::new(empty_traj()) })?;
    Ok(PhasePoint::from_state(model.dimension, &y))
}

/// Accepted states of the flow from `start` over [0, t_end] (either sign), starting with
/// (0, start).
pub fn orbit<T: Real>(
    model: &ModelProblem<T>,
    start: &State<T>,
    t_end: T,
    opts: &FlowOptions<T>,
) -> Result<Vec<(T, State<T>)>, FlowError> {
    let mut out = vec![(T::zero(), *start)];
    let ctl = opts.control(model.dimension);
    advance(model, *start, T::zero(), t_end, T::one(), &ctl, |t, y| {
        out.push((t, *y));
        Control::Continue
    })
    .map_err(|u| FlowError::StepUnderflow { t: to_f64(u.t), partial: Box::new(empty_traj()) })?;
    Ok(out)
}

/// Packed state after flowing `y` for time t (any sign).
pub fn advance_state<T: Real>(
    model: &ModelProblem<T>,
    y: &State<T>,
    t: T,
    opts: &FlowOptions<T>,
) -> Result<State<T>, FlowError> {
    let ctl = opts.control(model.dimension);
    advance(model, *y, T::zero(), t, T::one(), &ctl, |_, _| Control::Continue)
        .map(|(_, y)| y)
        .map_err(|u| FlowError::StepUnderflow { t: to_f64(u.t), partial: Box::new(empty_traj()) })
}

fn empty_traj() -> Trajectory<f64> {
    Trajectory {
        samples: Vec::new(),
        energy_drift: 0.0,
        verdict_fwd: Verdict::UndeterminedAtTmax,
        verdict_bwd: Verdict::UndeterminedAtTmax,
        escape_time_fwd: None,
        escape_time_bwd: None,
    }
}
