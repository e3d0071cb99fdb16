//! Finite-difference P = h²D² + V on a box, shifted solves and weighted resolvent norms.

mod calculus;
mod oracle;
mod sweep;

pub use calculus::{
    function_of_operator, nonchar_bound, spectral_distance, CalculusMethod, HsQuadrature, NoncharReport, OperatorFunction, MAX_DENSE,
};
pub use oracle::{analytic_free_resolvent_norm, OracleOptions, OracleValue};
pub use sweep::{h_sweep, least_squares_slope, ScalingReport, ScalingRow, SweepOptions, TRule};

use num_complex::Complex;
use thiserror::Error;

use crate::geometry::{Dimension, ModelProblem};
use crate::linalg::{largest_singular_value, norm2, start_vector, BandLu, BandMatrix, LinalgError};
use crate::scalar::{bracket, from_usize, lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolventError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("the resolvent solvers are one-dimensional; dimension 2 is not supported")]
    UnsupportedDimension,
    #[error("shift {0} is not allowed for this boundary treatment")]
    InvalidShift(String),
    #[error("singular shifted operator (zero pivot at row {0})")]
    Singular(usize),
    #[error("residual {ratio:.3e} exceeds 1e-10 relative")]
    Residual { ratio: f64 },
    #[error("power iteration did not converge in {iterations} steps (last {last:?})")]
    NotConverged { iterations: usize, last: Vec<f64> },
}

impl From<LinalgError> for ResolventError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular(k) => ResolventError::Singular(k),
            LinalgError::NotConverged { iterations, last } => ResolventError::NotConverged { iterations, last },
        }
    }
}

/// Finite-difference order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FdOrder {
    Second,
    Fourth,
}

impl FdOrder {
    pub fn as_usize(self) -> usize {
        match self {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
        }
    }

    fn half_width(self) -> usize {
        self.as_usize() / 2
    }
}

/// Box boundary treatment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary<T> {
    Dirichlet,
    /// Complex absorbing potential −iW on the outer 20% of the box, W = strength·u² with
    /// u ∈ [0, 1] the depth into the layer.
    Cap { strength: T },
}

impl<T: Real> Boundary<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Cap { .. } => "cap",
        }
    }
}

/// Uniform interior grid z_i = −L + (i+1)Δz, i < N, Δz = 2L/(N+1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxGrid<T> {
    pub half_length: T,
    pub n: usize,
    pub order: FdOrder,
}

impl<T: Real> BoxGrid<T> {
    pub fn dz(&self) -> T {
        lit::<T>(2.0) * self.half_length / from_usize::<T>(self.n + 1)
    }

    /// Smallest power-of-two N with at least `ppw` points per wavelength 2πh/λ.
    pub fn resolving(half_length: T, h: T, lambda: T, ppw: T, order: FdOrder) -> Self {
        let need = lit::<T>(2.0) * half_length * ppw * lambda / (lit::<T>(2.0) * T::PI() * h);
        let n = (to_f64(need).ceil() as usize).next_power_of_two();
        Self { half_length, n, order }
    }
}

/// Banded P − iW on the box.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator<T> {
    pub h: T,
    pub grid: BoxGrid<T>,
    pub boundary: Boundary<T>,
    pub z: Vec<T>,
    pub potential: Vec<T>,
    /// W >= 0, zero in Dirichlet mode.
    pub absorber: Vec<T>,
    /// Off-diagonal stencil weights h²c_k/Δz² for offsets k = 1..=order/2.
    stencil_off: Vec<T>,
    stencil_diag: T,
}

/// Fraction of the box, from the centre, that is free of the absorbing layer.
pub const CAP_INNER_FRACTION: f64 = 0.8;

pub fn discretize<T: Real>(
    model: &ModelProblem<T>,
    h: T,
    grid: &BoxGrid<T>,
    boundary: Boundary<T>,
) -> Result<DiscreteOperator<T>, ResolventError> {
    if model.dimension != Dimension::One {
        return Err(ResolventError::UnsupportedDimension);
    }
    if !(h > T::zero()) || !(grid.half_length > T::zero()) || grid.n < 8 {
        return Err(ResolventError::Config("need h > 0, L > 0 and N >= 8".into()));
    }
    let dz = grid.dz();
    let wavelength = lit::<T>(2.0) * T::PI() * h / model.lambda;
    if dz * lit::<T>(10.0) > wavelength {
        return Err(ResolventError::Config(format!(
            "grid under-resolves h = {}: dz = {:.4e} but 2 pi h / lambda = {:.4e} needs >= 10 points",
            to_f64(h),
            to_f64(dz),
            to_f64(wavelength)
        )));
    }
    if let Boundary::Cap { strength } = boundary {
        if !(strength > T::zero()) {
            return Err(ResolventError::Config("absorber strength must be positive".into()));
        }
    }
    let l = grid.half_length;
    let z: Vec<T> = (0..grid.n).map(|i| -l + from_usize::<T>(i + 1) * dz).collect();
    let potential = z.iter().map(|&s| model.potential.value(s)).collect();
    let inner = lit::<T>(CAP_INNER_FRACTION) * l;
    let absorber = z
        .iter()
        .map(|&s| match boundary {
            Boundary::Dirichlet => T::zero(),
            Boundary::Cap { strength } => {
                let u = ((s.abs() - inner) / (l - inner)).max(T::zero());
                strength * u * u
            }
        })
        .collect();
    let c = h * h / (dz * dz);
    let (diag, off) = match grid.order {
        FdOrder::Second => (lit::<T>(2.0) * c, vec![-c]),
        FdOrder::Fourth => {
            let t = c / lit::<T>(12.0);
            (lit::<T>(30.0) * t, vec![lit::<T>(-16.0) * t, t])
        }
    };
    Ok(DiscreteOperator { h, grid: *grid, boundary, z, potential, absorber, stencil_off: off, stencil_diag: diag })
}

impl<T: Real> DiscreteOperator<T> {
    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn dz(&self) -> T {
        self.grid.dz()
    }

    /// True when P is real symmetric (Dirichlet, real V).
    pub fn is_self_adjoint(&self) -> bool {
        matches!(self.boundary, Boundary::Dirichlet)
    }

    /// Entry (i, j) of P − iW.
    pub fn entry(&self, i: usize, j: usize) -> Complex<T> {
        let k = i.abs_diff(j);
        if k == 0 {
            Complex::new(self.stencil_diag + self.potential[i], -self.absorber[i])
        } else if k <= self.stencil_off.len() {
            Complex::new(self.stencil_off[k - 1], T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    }

    /// Dense real symmetric matrix of P (Dirichlet only), row-major.
    pub fn dense_real(&self) -> Result<Vec<T>, ResolventError> {
        if !self.is_self_adjoint() {
            return Err(ResolventError::Config("dense real matrix needs the Dirichlet boundary".into()));
        }
        let n = self.n();
        let mut m = vec![T::zero(); n * n];
        let b = self.grid.order.half_width();
        for i in 0..n {
            for j in i.saturating_sub(b)..=(i + b).min(n - 1) {
                m[i * n + j] = self.entry(i, j).re;
            }
        }
        Ok(m)
    }

    pub fn apply(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.n();
        let b = self.grid.order.half_width();
        (0..n)
            .map(|i| {
                let mut s = self.entry(i, i) * u[i];
                for k in 1..=b {
                    let w = self.stencil_off[k - 1];
                    if i >= k {
                        s = s + u[i - k] * w;
                    }
                    if i + k < n {
                        s = s + u[i + k] * w;
                    }
                }
                s
            })
            .collect()
    }

    /// Band matrix of P − iW − w.
    pub fn shifted(&self, w: Complex<T>) -> BandMatrix<T> {
        let n = self.n();
        let b = self.grid.order.half_width();
        let mut m = BandMatrix::zeros(n, b, b);
        for i in 0..n {
            for j in i.saturating_sub(b)..=(i + b).min(n - 1) {
                let mut v = self.entry(i, j);
                if i == j {
                    v = v - w;
                }
                m.set(i, j, v);
            }
        }
        m
    }

    /// Factors P − (λ² + it). The absorbing layer only admits t >= 0; with the Dirichlet
    /// boundary t = 0 works unless λ² hits an eigenvalue.
    pub fn factor_shift(&self, lambda2: T, t: T) -> Result<ShiftedOperator<'_, T>, ResolventError> {
        if let Boundary::Cap { .. } = self.boundary {
            if t < T::zero() {
                return Err(ResolventError::InvalidShift("t < 0 with the absorbing layer".into()));
            }
        }
        let w = Complex::new(lambda2, t);
        let lu = self.shifted(w).factor()?;
        Ok(ShiftedOperator { op: self, w, lu })
    }

    /// Weight ⟨z⟩^{−s}; in cap mode it is cut off outside the absorber-free region.
    pub fn weight(&self, s: T) -> Vec<T> {
        let inner = lit::<T>(CAP_INNER_FRACTION) * self.grid.half_length;
        self.z
            .iter()
            .map(|&z| match self.boundary {
                Boundary::Cap { .. } if z.abs() > inner => T::zero(),
                _ => bracket(z).powf(-s),
            })
            .collect()
    }
}

/// A factored P − w.
#[derive(Clone, Debug)]
pub struct ShiftedOperator<'a, T> {
    pub op: &'a DiscreteOperator<T>,
    pub w: Complex<T>,
    lu: BandLu<T>,
}

impl<T: Real> ShiftedOperator<'_, T> {
    pub fn solve(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        self.lu.solve(f)
    }

    /// Solves with (P − w)*; P − iW is complex symmetric, so the factors are reused.
    pub fn solve_adjoint(&self, f: &[Complex<T>]) -> Vec<Complex<T>> {
        self.lu.solve_adjoint_symmetric(f)
    }

    /// ‖(P − w)u − f‖ / ‖f‖.
    pub fn residual(&self, u: &[Complex<T>], f: &[Complex<T>]) -> T {
        let pu = self.op.apply(u);
        let r: Vec<Complex<T>> = pu.iter().zip(u).zip(f).map(|((p, x), y)| p - x * self.w - y).collect();
        norm2(&r) / norm2(f)
    }
}

/// u = (P − λ² − it)^{-1} f with the residual certified to 1e-10.
pub fn solve_shifted<T: Real>(
    op: &DiscreteOperator<T>,
    lambda2: T,
    t: T,
    f: &[Complex<T>],
) -> Result<Vec<Complex<T>>, ResolventError> {
    let s = op.factor_shift(lambda2, t)?;
    let mut u = s.solve(f);
    let tol = lit::<T>(1e-10).max(T::epsilon() * lit(1e3));
    let mut r = s.residual(&u, f);
    if !(r <= tol) {
        // One step of iterative refinement.
        let pu = op.apply(&u);
        let res: Vec<Complex<T>> = pu.iter().zip(&u).zip(f).map(|((p, x), y)| y - (p - x * s.w)).collect();
        let du = s.solve(&res);
        u.iter_mut().zip(du).for_each(|(a, b)| *a = *a + b);
        r = s.residual(&u, f);
    }
    if !(r <= tol) {
        return Err(ResolventError::Residual { ratio: to_f64(r) });
    }
    Ok(u)
}

/// Power-iteration settings for resolvent norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for PowerOptions<T> {
    fn default() -> Self {
        Self { tol: lit(1e-4), max_iter: 500 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate<T> {
    pub value: T,
    pub iterations: usize,
}

/// ‖W R(λ² + it) W′‖ with W = ⟨z⟩^{−s} and W′ = ⟨z⟩^{−s_source}, by power iteration.
pub fn weighted_resolvent_norm_with<T: Real>(
    op: &DiscreteOperator<T>,
    lambda2: T,
    t: T,
    s: T,
    s_source: T,
    opts: &PowerOptions<T>,
) -> Result<NormEstimate<T>, ResolventError> {
    let shifted = op.factor_shift(lambda2, t)?;
    let wl = op.weight(s);
    let wr = op.weight(s_source);
    let scale = |w: &[T], v: &[Complex<T>]| -> Vec<Complex<T>> { v.iter().zip(w).map(|(a, b)| a * *b).collect() };
    let est = largest_singular_value(
        start_vector(op.n()),
        |v| scale(&wl, &shifted.solve(&scale(&wr, v))),
        |v| scale(&wr, &shifted.solve_adjoint(&scale(&wl, v))),
        opts.tol,
        opts.max_iter,
    )?;
    Ok(NormEstimate { value: est.value, iterations: est.iterations })
}

/// ‖⟨z⟩^{−s} R(λ² + it) ⟨z⟩^{−s}‖.
pub fn weighted_resolvent_norm<T: Real>(
    op: &DiscreteOperator<T>,
    lambda2: T,
    t: T,
    s: T,
) -> Result<NormEstimate<T>, ResolventError> {
    weighted_resolvent_norm_with(op, lambda2, t, s, s, &PowerOptions::default())
}
