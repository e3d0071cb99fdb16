//! Escape function q = q₋ + C″q_∂ + Cq_∘ + C′q₊ and the grid certificate of its sign
//! conditions.

pub mod boundary;
pub mod constants;
pub mod cutoffs;
pub mod tubes;
pub mod verify;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{nontrapping_scan, FlowError, SampleSpec};
use crate::geometry::{ModelProblem, PhasePoint};
use crate::scalar::{lit, to_f64, Real};

pub use boundary::{eval_boundary_q, BoundaryKind, BoundaryPieces};
pub use constants::{boundary_constants, BoundaryConstants};
pub use cutoffs::{build_cutoffs, CutoffFamily};
pub use tubes::{build_tubes, eval_q_circ, k_grid, Tube, TubeCollection, TubeOptions};
pub use verify::{
    flow_consistency, flow_difference, verification_grid, verify_proposition, verify_samples, write_slice_csv, FlowConsistency, GridSpec,
    PropositionReport,
};

/// A grid point reported in diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Witness {
    pub z: [f64; 2],
    pub zeta: [f64; 2],
    pub x: f64,
    pub tau: f64,
    pub p: f64,
    /// The offending quantity at the point.
    pub value: f64,
}

impl Witness {
    pub fn new<T: Real>(model: &ModelProblem<T>, pt: &PhasePoint<T>, value: f64) -> Self {
        Self {
            z: pt.z.map(to_f64),
            zeta: pt.zeta.map(to_f64),
            x: to_f64(pt.x),
            tau: to_f64(pt.tau),
            p: to_f64(model.symbol(pt)),
            value,
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "z=({:.6}, {:.6}) zeta=({:.6}, {:.6}) x={:.4e} tau={:.6} p={:.6} value={:.4e}",
            self.z[0], self.z[1], self.zeta[0], self.zeta[1], self.x, self.tau, self.p, self.value
        )
    }
}

fn list(ws: &[Witness]) -> String {
    ws.iter().map(|w| format!("\n  {w}")).collect()
}

#[derive(Debug, Error)]
pub enum EscapeError {
    #[error("epsilon = {0} must lie in (0, 1/4)")]
    InvalidEpsilon(f64),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("tubes and assembly are implemented for dimension 1 only")]
    UnsupportedDimension,
    #[error("model is trapping on the energy window ({} witnesses){}", .0.len(), list(.0))]
    Trapping(Vec<Witness>),
    #[error("flow: {0}")]
    Flow(#[from] FlowError),
    #[error("tube cover incomplete after refinement: {count} uncovered points{}", list(.uncovered))]
    Covering { uncovered: Vec<Witness>, count: usize },
    #[error(
        "late portion of the tube at {seed} meets K' with T = {incoming_time}; increase the time margin"
    )]
    Disjointness { seed: Witness, incoming_time: f64 },
    #[error("cascade failed at {stage}{}", list(.witnesses))]
    Cascade { stage: String, witnesses: Vec<Witness> },
    #[error("proposition violated: {reason}{}", list(.witnesses))]
    PropositionViolated { reason: String, witnesses: Vec<Witness> },
}

/// Construction knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscapeOptions<T> {
    /// Fraction of the energy window on which ψ ≡ 1.
    pub plateau_fraction: T,
    pub tubes: TubeOptions<T>,
    /// Grid on which the constants C, C″, C′ are tuned.
    pub cascade_grid: GridSpec,
    /// Points of the non-trapping pre-check.
    pub scan_count: usize,
}

impl<T: Real> Default for EscapeOptions<T> {
    fn default() -> Self {
        Self {
            plateau_fraction: lit(0.8),
            tubes: TubeOptions::default(),
            cascade_grid: GridSpec { n_z: 640, n_e: 20, x_min: 1e-3 },
            scan_count: 400,
        }
    }
}

/// Values and H_p values of the four pieces at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pieces<T> {
    pub minus: (T, T),
    pub partial: (T, T),
    pub circ: (T, T),
    pub plus: (T, T),
}

/// The assembled escape function.
#[derive(Clone, Debug, PartialEq)]
pub struct EscapeFunction<T> {
    pub model: ModelProblem<T>,
    pub eps: T,
    pub c: T,
    pub c_prime: T,
    pub c_second: T,
    pub boundary: BoundaryPieces<T>,
    pub tubes: TubeCollection<T>,
    /// Measured c₂, c₃ and c₄ (`None` when the region has no grid points).
    pub c2: Option<T>,
    pub c3: Option<T>,
    pub c4: Option<T>,
}

impl<T: Real> EscapeFunction<T> {
    pub fn cutoffs(&self) -> &CutoffFamily<T> {
        &self.boundary.cutoffs
    }

    pub fn constants(&self) -> &BoundaryConstants<T> {
        &self.boundary.constants
    }

    pub fn pieces(&self, pt: &PhasePoint<T>) -> Result<Pieces<T>, EscapeError> {
        let m = &self.model;
        Ok(Pieces {
            minus: self.boundary.eval(BoundaryKind::Minus, m, pt),
            partial: self.boundary.eval(BoundaryKind::Partial, m, pt),
            circ: self.tubes.eval(m, pt)?,
            plus: self.boundary.eval(BoundaryKind::Plus, m, pt),
        })
    }

    /// (q, H_p q) at a point.
    pub fn eval(&self, pt: &PhasePoint<T>) -> Result<(T, T), EscapeError> {
        Ok(self.combine(&self.pieces(pt)?))
    }

    pub fn combine(&self, p: &Pieces<T>) -> (T, T) {
        combine(p, self.c, self.c_second, self.c_prime)
    }

    /// ψ(p) at a point.
    pub fn psi(&self, pt: &PhasePoint<T>) -> T {
        self.boundary.cutoffs.psi(self.model.symbol(pt)).0
    }
}

fn combine<T: Real>(p: &Pieces<T>, c: T, c2: T, c1: T) -> (T, T) {
    (
        p.minus.0 + c2 * p.partial.0 + c * p.circ.0 + c1 * p.plus.0,
        p.minus.1 + c2 * p.partial.1 + c * p.circ.1 + c1 * p.plus.1,
    )
}

/// A grid point with its ψ value and piece evaluations.
#[derive(Clone, Copy, Debug)]
pub struct Sample<T> {
    pub point: PhasePoint<T>,
    pub psi: T,
    pub pieces: Pieces<T>,
}

/// Evaluates the pieces on grid points with ψ > 0, in parallel and in input order.
pub fn sample_pieces<T: Real>(
    boundary: &BoundaryPieces<T>,
    tubes: &TubeCollection<T>,
    model: &ModelProblem<T>,
    pts: &[PhasePoint<T>],
) -> Result<Vec<Sample<T>>, EscapeError> {
    let out: Vec<Result<Option<Sample<T>>, EscapeError>> = pts
        .par_iter()
        .map(|pt| {
            let psi = boundary.cutoffs.psi(model.symbol(pt)).0;
            if psi == T::zero() {
                return Ok(None);
            }
            Ok(Some(Sample {
                point: *pt,
                psi,
                pieces: Pieces {
                    minus: boundary.eval(BoundaryKind::Minus, model, pt),
                    partial: boundary.eval(BoundaryKind::Partial, model, pt),
                    circ: tubes.eval(model, pt)?,
                    plus: boundary.eval(BoundaryKind::Plus, model, pt),
                },
            }))
        })
        .collect();
    let mut samples = Vec::with_capacity(out.len());
    for s in out {
        if let Some(s) = s? {
            samples.push(s);
        }
    }
    Ok(samples)
}

/// Minimum of `f` over the samples passing `keep`, with its arg-min.
fn min_over<T: Real>(
    samples: &[Sample<T>],
    keep: impl Fn(&Sample<T>) -> bool,
    f: impl Fn(&Sample<T>) -> T,
) -> Option<(T, usize)> {
    let mut best: Option<(T, usize)> = None;
    for (i, s) in samples.iter().enumerate() {
        if keep(s) {
            let v = f(s);
            if best.map_or(true, |(b, _)| v < b) {
                best = Some((v, i));
            }
        }
    }
    best
}

fn worst<T: Real>(
    model: &ModelProblem<T>,
    samples: &[Sample<T>],
    keep: impl Fn(&Sample<T>) -> bool,
    f: impl Fn(&Sample<T>) -> T,
    n: usize,
) -> Vec<Witness> {
    let mut v: Vec<(T, usize)> = samples.iter().enumerate().filter(|(_, s)| keep(s)).map(|(i, s)| (f(s), i)).collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    v.iter().take(n).map(|(val, i)| Witness::new(model, &samples[*i].point, to_f64(*val))).collect()
}

const MAX_HALVINGS: usize = 60;

/// Builds q for a non-trapping 1D model with default options.
pub fn assemble_escape<T: Real>(model: &ModelProblem<T>, eps: T) -> Result<EscapeFunction<T>, EscapeError> {
    assemble_escape_with(model, eps, &EscapeOptions::default())
}

pub fn assemble_escape_with<T: Real>(
    model: &ModelProblem<T>,
    eps: T,
    opts: &EscapeOptions<T>,
) -> Result<EscapeFunction<T>, EscapeError> {
    if !(eps > T::zero() && eps < lit(0.25)) {
        return Err(EscapeError::InvalidEpsilon(to_f64(eps)));
    }
    if model.dimension != crate::geometry::Dimension::One {
        return Err(EscapeError::UnsupportedDimension);
    }
    let scan = nontrapping_scan(model, &SampleSpec { flow: opts.tubes.flow, ..SampleSpec::new(opts.scan_count) });
    if !scan.is_nontrapping_empirical {
        return Err(EscapeError::Trapping(
            scan.trapped_witnesses.iter().take(20).map(|p| Witness::new(model, p, 0.0)).collect(),
        ));
    }
    let constants = boundary_constants(model)?;
    let cutoffs = build_cutoffs(model.lambda, constants.c1, model.delta, opts.plateau_fraction);
    let boundary = BoundaryPieces { cutoffs, constants, eps };
    let tubes = build_tubes(model, constants.x0, cutoffs.psi, &opts.tubes)?;
    let grid = verification_grid(model, constants.x0, &opts.cascade_grid);
    let samples = sample_pieces(&boundary, &tubes, model, &grid)?;
    let (c, c_second, c_prime, c2, c3, c4) = cascade(model, &boundary, &samples)?;
    Ok(EscapeFunction { model: model.clone(), eps, c, c_prime, c_second, boundary, tubes, c2, c3, c4 })
}

type CascadeOut<T> = (T, T, T, Option<T>, Option<T>, Option<T>);

/// Chooses C, C″, C′ by successive halving on the sampled pieces.
pub fn cascade<T: Real>(
    model: &ModelProblem<T>,
    boundary: &BoundaryPieces<T>,
    samples: &[Sample<T>],
) -> Result<CascadeOut<T>, EscapeError> {
    let eps = boundary.eps;
    let x0 = boundary.constants.x0;
    let l = model.lambda;
    let half = lit::<T>(0.5);
    let w_in = |s: &Sample<T>| s.point.x.powf(-T::one() + eps) / s.psi;
    let w_out = |s: &Sample<T>| s.point.x.powf(-T::one() - eps) / s.psi;
    let near = |s: &Sample<T>| s.point.x <= x0 * half;
    let r1 = |s: &Sample<T>| near(s) && s.point.tau >= lit::<T>(2.0 / 3.0) * l;
    let r2 = |s: &Sample<T>| !near(s) || s.point.tau >= -lit::<T>(0.75) * l;

    let c2 = min_over(samples, r1, |s| -w_in(s) * s.pieces.minus.1).map(|v| v.0);
    let c3 = min_over(samples, |s| near(s) && s.point.tau <= -lit::<T>(2.0 / 3.0) * l, |s| {
        -w_out(s) * s.pieces.plus.1
    })
    .map(|v| v.0);
    let c4 = min_over(samples, |s| near(s) && s.point.tau.abs() < lit::<T>(0.75) * l, |s| {
        -w_in(s) * s.pieces.partial.1
    })
    .map(|v| v.0);

    let mut c = T::one();
    if let Some(c2v) = c2 {
        if !(c2v > T::zero()) {
            return Err(EscapeError::Cascade {
                stage: format!("c2 = {:e} is not positive", to_f64(c2v)),
                witnesses: worst(model, samples, r1, |s| -w_in(s) * s.pieces.minus.1, 10),
            });
        }
        let stage1 = |c: T| min_over(samples, r1, |s| -w_in(s) * (s.pieces.minus.1 + c * s.pieces.circ.1)).unwrap().0;
        let mut n = 0;
        while stage1(c) < half * c2v {
            n += 1;
            if n > MAX_HALVINGS {
                return Err(EscapeError::Cascade {
                    stage: "C on {x <= x0/2, tau >= 2 lambda/3}".into(),
                    witnesses: worst(model, samples, r1, |s| -w_in(s) * (s.pieces.minus.1 + c * s.pieces.circ.1), 10),
                });
            }
            c = c * half;
        }
    }

    let f2 = |c: T, cs: T, s: &Sample<T>| {
        -w_in(s) * (s.pieces.minus.1 + c * s.pieces.circ.1 + cs * s.pieces.partial.1)
    };
    let mut c_second = T::one();
    if let Some((m, _)) = min_over(samples, r2, |s| f2(c, T::zero(), s)) {
        let floor = half * m;
        if !(floor > T::zero()) {
            return Err(EscapeError::Cascade {
                stage: format!("no positive floor on {{x >= x0/2}} u {{tau >= -3 lambda/4}} (min {:e})", to_f64(m)),
                witnesses: worst(model, samples, r2, |s| f2(c, T::zero(), s), 10),
            });
        }
        let mut n = 0;
        while min_over(samples, r2, |s| f2(c, c_second, s)).unwrap().0 < floor {
            n += 1;
            if n > MAX_HALVINGS {
                return Err(EscapeError::Cascade {
                    stage: "C'' on {x >= x0/2} u {tau >= -3 lambda/4}".into(),
                    witnesses: worst(model, samples, r2, |s| f2(c, c_second, s), 10),
                });
            }
            c_second = c_second * half;
        }
    }

    let f3 = |cp: T, s: &Sample<T>| -w_out(s) * combine(&s.pieces, c, c_second, cp).1;
    let mut c_prime = T::one();
    let mut n = 0;
    while min_over(samples, |_| true, |s| f3(c_prime, s)).map_or(false, |v| !(v.0 > T::zero())) {
        n += 1;
        if n > MAX_HALVINGS {
            return Err(EscapeError::Cascade {
                stage: "C' on the whole grid".into(),
                witnesses: worst(model, samples, |_| true, |s| f3(c_prime, s), 10),
            });
        }
        c_prime = c_prime * half;
    }
    Ok((c, c_second, c_prime, c2, c3, c4))
}
