use std::io::Write;

use rayon::prelude::*;

use super::{discretize, weighted_resolvent_norm_with, Boundary, BoxGrid, FdOrder, PowerOptions, ResolventError};
use crate::flow::{nontrapping_scan, SampleSpec};
use crate::geometry::ModelProblem;
use crate::scalar::{lit, to_f64, Real};

/// How the spectral shift t is tied to h.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TRule<T> {
    /// Absorbing layer of the given strength, t = 0.
    Cap { strength: T },
    /// Dirichlet box with t = fraction·h.
    DirichletFraction(T),
}

impl<T: Real> TRule<T> {
    pub fn name(&self) -> &'static str {
        match self {
            TRule::Cap { .. } => "cap",
            TRule::DirichletFraction(_) => "dirichlet",
        }
    }

    pub fn t(&self, h: T) -> T {
        match *self {
            TRule::Cap { .. } => T::zero(),
            TRule::DirichletFraction(f) => f * h,
        }
    }

    pub fn boundary(&self) -> Boundary<T> {
        match *self {
            TRule::Cap { strength } => Boundary::Cap { strength },
            TRule::DirichletFraction(_) => Boundary::Dirichlet,
        }
    }
}

impl<T: Real> Default for TRule<T> {
    fn default() -> Self {
        TRule::Cap { strength: T::one() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions<T> {
    pub half_length: T,
    /// Grid points per wavelength 2πh/λ; N is the next power of two.
    pub ppw: T,
    pub order: FdOrder,
    /// Offsets added to λ² for the uniformity check (0 must be among them for the slope).
    pub lambda2_offsets: Vec<T>,
    pub power: PowerOptions<T>,
    /// Flow samples used to decide whether the model traps.
    pub scan_samples: usize,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl<T: Real> SweepOptions<T> {
    /// Offsets ±δ/2 around λ², inside the plateau of the energy cutoff.
    pub fn for_model(model: &ModelProblem<T>) -> Self {
        let d = model.delta * lit(0.5);
        Self {
            half_length: lit(200.0),
            ppw: lit(50.0),
            order: FdOrder::Fourth,
            lambda2_offsets: vec![-d, T::zero(), d],
            power: PowerOptions::default(),
            scan_samples: 400,
            jobs: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRow<T> {
    pub h: T,
    pub t: T,
    pub lambda2: T,
    pub s: T,
    pub norm: T,
    pub iterations: usize,
    pub n: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport<T> {
    pub model: String,
    pub s: T,
    pub h_values: Vec<T>,
    pub mode: &'static str,
    pub lambda2: T,
    /// Cells ordered by h, then by λ² offset.
    pub rows: Vec<ScalingRow<T>>,
    /// Least-squares slope of log n against log(1/h) at the central λ².
    pub slope: T,
    /// Root-mean-square residual of that fit.
    pub residual: T,
    /// max/min of the norms over the λ² offsets, per h.
    pub uniformity: Vec<T>,
    /// The flow scan found trapped samples in the energy window.
    pub trapping: bool,
    /// Some power iteration did not converge; those rows hold the last iterate.
    pub partial: bool,
}

impl<T: Real> ScalingReport<T> {
    /// Norms at the central λ², one per h.
    pub fn central_norms(&self) -> Vec<T> {
        self.rows.iter().filter(|r| r.lambda2 == self.lambda2).map(|r| r.norm).collect()
    }

    pub fn max_uniformity(&self) -> T {
        self.uniformity.iter().fold(T::zero(), |a, &b| a.max(b))
    }

    /// CSV rows h, t, lambda2, s, norm, iterations, mode.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["h", "t", "lambda2", "s", "norm", "iterations", "mode", "n", "converged"])?;
        for r in &self.rows {
            let mut rec: Vec<String> = [r.h, r.t, r.lambda2, r.s, r.norm].iter().map(|v| format!("{:.12e}", to_f64(*v))).collect();
            rec.push(r.iterations.to_string());
            rec.push(self.mode.to_string());
            rec.push(r.n.to_string());
            rec.push(r.converged.to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Slope and RMS residual of the least-squares line through (x, y).
pub fn least_squares_slope<T: Real>(x: &[T], y: &[T]) -> (T, T) {
    let n = lit::<T>(x.len() as f64);
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let sxx: T = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let ss: T = x.iter().zip(y).map(|(&a, &b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (ss / n).sqrt())
}

/// Weighted resolvent norms over h and λ², with the fitted h exponent.
pub fn h_sweep<T: Real>(
    model: &ModelProblem<T>,
    lambda2: T,
    h_list: &[T],
    t_rule: TRule<T>,
    s: T,
    opts: &SweepOptions<T>,
) -> Result<ScalingReport<T>, ResolventError> {
    if h_list.len() < 2 || h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ResolventError::Config("h values must be strictly decreasing, at least two".into()));
    }
    if opts.half_length < lit(40.0) {
        return Err(ResolventError::Config("the box must have L >= 40 to hold the weight's mass".into()));
    }
    if !opts.lambda2_offsets.iter().any(|o| *o == T::zero()) {
        return Err(ResolventError::Config("lambda^2 offsets must include 0".into()));
    }
    let verdict = nontrapping_scan(model, &SampleSpec::new(opts.scan_samples));
    let cells: Vec<(usize, T)> = h_list
        .iter()
        .enumerate()
        .flat_map(|(i, _)| opts.lambda2_offsets.iter().map(move |&o| (i, lambda2 + o)))
        .collect();
    let lam_max = opts.lambda2_offsets.iter().fold(lambda2, |a, &o| a.max(lambda2 + o)).sqrt();
    let run = |&(i, l2): &(usize, T)| -> Result<ScalingRow<T>, ResolventError> {
        let h = h_list[i];
        let grid = BoxGrid::resolving(opts.half_length, h, lam_max, opts.ppw, opts.order);
        let op = discretize(model, h, &grid, t_rule.boundary())?;
        let t = t_rule.t(h);
        let row = |norm, iterations, converged| ScalingRow { h, t, lambda2: l2, s, norm, iterations, n: grid.n, converged };
        match weighted_resolvent_norm_with(&op, l2, t, s, s, &opts.power) {
            Ok(e) => Ok(row(e.value, e.iterations, true)),
            Err(ResolventError::NotConverged { iterations, last }) => {
                Ok(row(lit(last.last().copied().unwrap_or(f64::NAN)), iterations, false))
            }
            Err(e) => Err(e),
        }
    };
    let rows: Vec<ScalingRow<T>> = if opts.jobs == 0 {
        cells.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| ResolventError::Config(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run).collect::<Result<_, _>>())?
    };
    let k = opts.lambda2_offsets.len();
    let (xs, ys): (Vec<T>, Vec<T>) = rows
        .iter()
        .filter(|r| r.lambda2 == lambda2)
        .map(|r| ((T::one() / r.h).ln(), r.norm.ln()))
        .unzip();
    let (slope, residual) = least_squares_slope(&xs, &ys);
    let uniformity = rows
        .chunks(k)
        .map(|c| {
            let hi = c.iter().fold(T::zero(), |a, r| a.max(r.norm));
            let lo = c.iter().fold(T::infinity(), |a, r| a.min(r.norm));
            hi / lo
        })
        .collect();
    Ok(ScalingReport {
        model: model.potential.name().to_string(),
        s,
        h_values: h_list.to_vec(),
        mode: t_rule.name(),
        lambda2,
        partial: rows.iter().any(|r| !r.converged),
        rows,
        slope,
        residual,
        uniformity,
        trapping: !verdict.is_nontrapping_empirical,
    })
}
