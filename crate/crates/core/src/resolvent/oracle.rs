use num_complex::Complex;

use super::{ResolventError, CAP_INNER_FRACTION};
use crate::linalg::{largest_singular_value, start_vector};
use crate::scalar::{bracket, from_usize, lit, to_f64, Real};

/// Quadrature settings for the free-kernel oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions<T> {
    /// The kernel is truncated to |z|, |z′| <= half_width.
    pub half_width: T,
    /// Quadrature points per wavelength 2πh/λ.
    pub ppw: T,
    pub tol: T,
    pub max_iter: usize,
    /// Repeat on a grid twice as fine and report the change.
    pub certify: bool,
}

impl<T: Real> Default for OracleOptions<T> {
    /// Matches the absorber-free part of a box with L = 200.
    fn default() -> Self {
        Self { half_width: lit(200.0 * CAP_INNER_FRACTION), ppw: lit(40.0), tol: lit(1e-7), max_iter: 4000, certify: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleValue<T> {
    pub value: T,
    /// Value on the doubled grid (equal to `value` when not certified).
    pub refined: T,
    /// |refined − value| / refined.
    pub change: T,
    pub points: usize,
}

impl<T: Real> OracleValue<T> {
    /// Grid doubling moved the value by less than 0.5%.
    pub fn certified(&self) -> bool {
        self.change < lit(0.005)
    }
}

/// ‖⟨z⟩^{−s} R₀(λ² + it) ⟨z⟩^{−s}‖ for the free operator h²D² on the line, from the kernel
/// (i/(2h√w)) e^{i√w|z−z′|/h} sampled on a midpoint grid.
pub fn analytic_free_resolvent_norm<T: Real>(
    lambda2: T,
    t: T,
    h: T,
    s: T,
    opts: &OracleOptions<T>,
) -> Result<OracleValue<T>, ResolventError> {
    if !(lambda2 > T::zero()) || !(h > T::zero()) || !(opts.half_width > T::zero()) {
        return Err(ResolventError::Config("oracle needs lambda^2 > 0, h > 0 and a positive width".into()));
    }
    if t < T::zero() {
        return Err(ResolventError::InvalidShift("the oracle uses the outgoing kernel, t >= 0".into()));
    }
    let wavelength = lit::<T>(2.0) * T::PI() * h / lambda2.sqrt();
    let m = (to_f64(lit::<T>(2.0) * opts.half_width * opts.ppw / wavelength).ceil() as usize).max(16);
    let value = kernel_norm(lambda2, t, h, s, opts, m)?;
    if !opts.certify {
        return Ok(OracleValue { value, refined: value, change: T::zero(), points: m });
    }
    let refined = kernel_norm(lambda2, t, h, s, opts, 2 * m)?;
    Ok(OracleValue { value, refined, change: (refined - value).abs() / refined, points: m })
}

fn kernel_norm<T: Real>(lambda2: T, t: T, h: T, s: T, opts: &OracleOptions<T>, m: usize) -> Result<T, ResolventError> {
    let zw = opts.half_width;
    let dz = lit::<T>(2.0) * zw / from_usize::<T>(m);
    let weight: Vec<T> = (0..m)
        .map(|i| bracket(-zw + (from_usize::<T>(i) + lit(0.5)) * dz).powf(-s))
        .collect();
    let k = Complex::new(lambda2, t).sqrt();
    let a: Complex<T> = (Complex::<T>::i() * k * (dz / h)).exp();
    let c: Complex<T> = Complex::<T>::i() * dz / (k * (lit::<T>(2.0) * h));
    let apply = |v: &[Complex<T>], a: Complex<T>, c: Complex<T>| -> Vec<Complex<T>> {
        let x: Vec<Complex<T>> = v.iter().zip(&weight).map(|(u, w)| u * *w).collect();
        let mut out = vec![Complex::new(T::zero(), T::zero()); m];
        let mut acc = Complex::new(T::zero(), T::zero());
        for i in 0..m {
            acc = acc * a + x[i];
            out[i] = acc;
        }
        acc = Complex::new(T::zero(), T::zero());
        for i in (0..m).rev() {
            acc = acc * a + x[i];
            out[i] = (out[i] + acc - x[i]) * c * weight[i];
        }
        out
    };
    let est = largest_singular_value(
        start_vector(m),
        |v| apply(v, a, c),
        |v| apply(v, a.conj(), c.conj()),
        opts.tol,
        opts.max_iter,
    )?;
    Ok(est.value)
}
