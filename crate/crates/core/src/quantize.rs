//! Left quantization Op_h(a) on a periodic grid, commutator and Gårding checks, weighted norms.
//!
//! Symbols are finite sums of products f(z) g(ζ). This keeps every Op(a) an FFT sandwich and
//! closes the class under Poisson brackets.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::{hermitian_eigen, largest_singular_value_floor, norm2, start_vector, LinalgError};
use crate::scalar::{bracket, from_usize, lit, to_f64, Real};
use crate::smooth::ramp_down;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("aliasing: h*pi*N/L = {span:.4} is below 4 x momentum support {support:.4}")]
    Aliasing { span: f64, support: f64 },
    #[error("symbol factor has no derivative; Poisson brackets need differentiable factors")]
    NotDifferentiable,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Periodic grid z_i = −L + iΔz, Δz = 2L/N, with dual momenta ζ_m = hπm/L.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridQuantization<T> {
    pub half_length: T,
    pub n: usize,
    pub h: T,
}

impl<T: Real> GridQuantization<T> {
    pub fn new(half_length: T, n: usize, h: T) -> Result<Self, QuantizeError> {
        if !(half_length > T::zero()) || !(h > T::zero()) {
            return Err(QuantizeError::InvalidGrid("L and h must be positive".into()));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(QuantizeError::InvalidGrid(format!("N = {n} must be a power of two >= 4")));
        }
        Ok(Self { half_length, n, h })
    }

    pub fn dz(&self) -> T {
        lit::<T>(2.0) * self.half_length / from_usize(self.n)
    }

    pub fn z(&self, i: usize) -> T {
        -self.half_length + from_usize::<T>(i) * self.dz()
    }

    pub fn z_values(&self) -> Vec<T> {
        (0..self.n).map(|i| self.z(i)).collect()
    }

    /// Momentum of DFT bin m (FFT order).
    pub fn zeta(&self, m: usize) -> T {
        let k = if m < self.n / 2 { m as f64 } else { m as f64 - self.n as f64 };
        self.h * T::PI() * lit::<T>(k) / self.half_length
    }

    pub fn zeta_values(&self) -> Vec<T> {
        (0..self.n).map(|m| self.zeta(m)).collect()
    }

    /// h·πN/L, the full momentum span of the grid.
    pub fn momentum_span(&self) -> T {
        self.h * T::PI() * from_usize::<T>(self.n) / self.half_length
    }

    /// Enforces h·πN/L >= 4·support.
    pub fn check_aliasing(&self, support: T) -> Result<(), QuantizeError> {
        let span = self.momentum_span();
        if span < lit::<T>(4.0) * support {
            return Err(QuantizeError::Aliasing { span: to_f64(span), support: to_f64(support) });
        }
        Ok(())
    }

    /// At least eight points per wavelength 2πh/λ.
    pub fn resolves(&self, lambda: T) -> bool {
        self.dz() <= lit::<T>(2.0) * T::PI() * self.h / (lit::<T>(8.0) * lambda)
    }

    /// Discrete L² norm (Δz Σ|u|²)^{1/2}.
    pub fn l2_norm(&self, u: &[Complex<T>]) -> T {
        (u.iter().map(|v| v.norm_sqr()).sum::<T>() * self.dz()).sqrt()
    }

    fn fft(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut b = u.to_vec();
        T::fft(&mut b, false);
        b
    }

    fn ifft(&self, mut b: Vec<Complex<T>>) -> Vec<Complex<T>> {
        T::fft(&mut b, true);
        let s = T::one() / from_usize::<T>(self.n);
        b.iter_mut().for_each(|v| *v = *v * s);
        b
    }

    /// g(hD) u, a Fourier multiplier.
    pub fn multiplier(&self, u: &[Complex<T>], g: impl Fn(T) -> T) -> Vec<Complex<T>> {
        let mut b = self.fft(u);
        for (m, v) in b.iter_mut().enumerate() {
            *v = *v * g(self.zeta(m));
        }
        self.ifft(b)
    }
}

type Fun<T> = Arc<dyn Fn(T) -> (T, T) + Send + Sync>;

/// A scalar factor with its derivative.
#[derive(Clone)]
pub struct Factor<T> {
    f: Fun<T>,
    constant: Option<T>,
    differentiable: bool,
}

impl<T> fmt::Debug for Factor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.constant.is_some() { "Factor(const)" } else { "Factor(fn)" })
    }
}

impl<T: Real> Factor<T> {
    /// `f` returns value and derivative.
    pub fn new(f: impl Fn(T) -> (T, T) + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), constant: None, differentiable: true }
    }

    /// Value only; such factors cannot enter a Poisson bracket.
    pub fn values(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(move |s| (f(s), T::nan())), constant: None, differentiable: false }
    }

    pub fn constant(c: T) -> Self {
        Self { f: Arc::new(move |_| (c, T::zero())), constant: Some(c), differentiable: true }
    }

    pub fn identity() -> Self {
        Self::new(|s| (s, T::one()))
    }

    pub fn square() -> Self {
        Self::new(|s| (s * s, lit::<T>(2.0) * s))
    }

    pub fn gaussian() -> Self {
        Self::new(|s| {
            let e = (-s * s).exp();
            (e, lit::<T>(-2.0) * s * e)
        })
    }

    pub fn sin_squared() -> Self {
        Self::new(|s| {
            let (sn, cs) = s.sin_cos();
            (sn * sn, lit::<T>(2.0) * sn * cs)
        })
    }

    pub fn eval(&self, s: T) -> (T, T) {
        (self.f)(s)
    }

    pub fn value(&self, s: T) -> T {
        (self.f)(s).0
    }

    fn derivative(&self) -> Self {
        if self.constant.is_some() {
            return Self::constant(T::zero());
        }
        let f = self.f.clone();
        Self { f: Arc::new(move |s| (f(s).1, T::nan())), constant: None, differentiable: false }
    }

    fn times(&self, other: &Self) -> Self {
        match (self.constant, other.constant) {
            (Some(a), Some(b)) => Self::constant(a * b),
            _ => {
                let (f, g) = (self.f.clone(), other.f.clone());
                Self {
                    f: Arc::new(move |s| {
                        let (a, da) = f(s);
                        let (b, db) = g(s);
                        (a * b, da * b + a * db)
                    }),
                    constant: None,
                    differentiable: self.differentiable && other.differentiable,
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Term<T> {
    coef: T,
    z: Factor<T>,
    zeta: Factor<T>,
}

/// a(z, ζ) = Σ c_j f_j(z) g_j(ζ).
#[derive(Clone, Debug)]
pub struct Symbol<T> {
    terms: Vec<Term<T>>,
    /// Effective momentum support |ζ| <= s, used for the aliasing guard.
    pub momentum_support: Option<T>,
}

impl<T: Real> Symbol<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new(), momentum_support: Some(T::zero()) }
    }

    pub fn constant(c: T) -> Self {
        Self::product(Factor::constant(c), Factor::constant(T::one()))
    }

    pub fn product(z: Factor<T>, zeta: Factor<T>) -> Self {
        Self { terms: vec![Term { coef: T::one(), z, zeta }], momentum_support: None }
    }

    pub fn of_z(z: Factor<T>) -> Self {
        let s = Self::product(z, Factor::constant(T::one()));
        s.with_momentum_support(T::zero())
    }

    pub fn of_zeta(zeta: Factor<T>) -> Self {
        Self::product(Factor::constant(T::one()), zeta)
    }

    pub fn with_momentum_support(mut self, s: T) -> Self {
        self.momentum_support = Some(s);
        self
    }

    pub fn eval(&self, z: T, zeta: T) -> T {
        self.terms.iter().map(|t| t.coef * t.z.value(z) * t.zeta.value(zeta)).sum()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Poisson bracket {a, b} = ∂_ζa ∂_z b − ∂_z a ∂_ζ b = H_a b.
    pub fn poisson(&self, other: &Self) -> Result<Self, QuantizeError> {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                if !(a.z.differentiable && a.zeta.differentiable && b.z.differentiable && b.zeta.differentiable) {
                    return Err(QuantizeError::NotDifferentiable);
                }
                let c = a.coef * b.coef;
                if a.zeta.constant.is_none() && b.z.constant.is_none() {
                    terms.push(Term { coef: c, z: a.z.times(&b.z.derivative()), zeta: a.zeta.derivative().times(&b.zeta) });
                }
                if a.z.constant.is_none() && b.zeta.constant.is_none() {
                    terms.push(Term { coef: -c, z: a.z.derivative().times(&b.z), zeta: a.zeta.times(&b.zeta.derivative()) });
                }
            }
        }
        let support = match (self.momentum_support, other.momentum_support) {
            (Some(a), Some(b)) => Some(a.min(b)),
            _ => None,
        };
        Ok(Self { terms, momentum_support: support })
    }
}

fn join<T: Real>(a: Option<T>, b: Option<T>) -> Option<T> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.max(b)),
        _ => None,
    }
}

impl<T: Real> Add for Symbol<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self.momentum_support = join(self.momentum_support, rhs.momentum_support);
        self.terms.extend(rhs.terms);
        self
    }
}

impl<T: Real> Neg for Symbol<T> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.terms.iter_mut().for_each(|t| t.coef = -t.coef);
        self
    }
}

impl<T: Real> Sub for Symbol<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<T: Real> Mul<T> for Symbol<T> {
    type Output = Self;
    fn mul(mut self, c: T) -> Self {
        self.terms.iter_mut().for_each(|t| t.coef = t.coef * c);
        self
    }
}

#[derive(Clone, Debug)]
struct Sampled<T> {
    coef: T,
    /// None for a constant factor.
    z: Option<Vec<T>>,
    zeta: Option<Vec<T>>,
    zeta_const: T,
    z_const: T,
}

/// Op_h(a) on the grid: u ↦ Σ c_j f_j(z) g_j(hD) u.
#[derive(Clone, Debug)]
pub struct GridOperator<T> {
    pub grid: GridQuantization<T>,
    terms: Vec<Sampled<T>>,
}

/// Left quantization of a symbol.
pub fn quantize<T: Real>(a: &Symbol<T>, q: &GridQuantization<T>) -> Result<GridOperator<T>, QuantizeError> {
    if let Some(s) = a.momentum_support {
        q.check_aliasing(s)?;
    }
    let zs = q.z_values();
    let ks = q.zeta_values();
    let terms = a
        .terms
        .iter()
        .map(|t| Sampled {
            coef: t.coef,
            z: t.z.constant.is_none().then(|| zs.iter().map(|&z| t.z.value(z)).collect()),
            zeta: t.zeta.constant.is_none().then(|| ks.iter().map(|&k| t.zeta.value(k)).collect()),
            z_const: t.z.constant.unwrap_or(T::one()),
            zeta_const: t.zeta.constant.unwrap_or(T::one()),
        })
        .collect();
    Ok(GridOperator { grid: *q, terms })
}

impl<T: Real> GridOperator<T> {
    pub fn size(&self) -> usize {
        self.grid.n
    }

    fn run(&self, u: &[Complex<T>], adjoint: bool) -> Vec<Complex<T>> {
        let n = self.grid.n;
        let mut out = vec![Complex::new(T::zero(), T::zero()); n];
        let u_hat = if adjoint { None } else { Some(self.grid.fft(u)) };
        for t in &self.terms {
            let c = t.coef * t.z_const * t.zeta_const;
            // Op(f g) = f·g(hD); its adjoint is g(hD)·f for real f, g.
            let v: Vec<Complex<T>> = if adjoint {
                let fu: Vec<Complex<T>> = match &t.z {
                    Some(f) => u.iter().zip(f).map(|(a, b)| a * *b).collect(),
                    None => u.to_vec(),
                };
                match &t.zeta {
                    Some(g) => {
                        let mut b = self.grid.fft(&fu);
                        b.iter_mut().zip(g).for_each(|(a, s)| *a = *a * *s);
                        self.grid.ifft(b)
                    }
                    None => fu,
                }
            } else {
                let gu = match &t.zeta {
                    Some(g) => {
                        let mut b = u_hat.clone().unwrap();
                        b.iter_mut().zip(g).for_each(|(a, s)| *a = *a * *s);
                        self.grid.ifft(b)
                    }
                    None => u.to_vec(),
                };
                match &t.z {
                    Some(f) => gu.iter().zip(f).map(|(a, b)| a * *b).collect(),
                    None => gu,
                }
            };
            out.iter_mut().zip(v).for_each(|(o, x)| *o = *o + x * c);
        }
        out
    }

    pub fn apply(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        self.run(u, false)
    }

    pub fn apply_adjoint(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        self.run(u, true)
    }

    /// (A + A*)/2 applied to u.
    pub fn apply_symmetrized(&self, u: &[Complex<T>]) -> Vec<Complex<T>> {
        let half = lit::<T>(0.5);
        self.apply(u).into_iter().zip(self.apply_adjoint(u)).map(|(a, b)| (a + b) * half).collect()
    }

    /// Dense row-major matrix of the operator (or of its symmetrization).
    pub fn matrix(&self, symmetrized: bool) -> Vec<Complex<T>> {
        let n = self.grid.n;
        let mut m = vec![Complex::new(T::zero(), T::zero()); n * n];
        let mut e = vec![Complex::new(T::zero(), T::zero()); n];
        for j in 0..n {
            e[j] = Complex::new(T::one(), T::zero());
            let col = if symmetrized { self.apply_symmetrized(&e) } else { self.apply(&e) };
            for i in 0..n {
                m[i * n + j] = col[i];
            }
            e[j] = Complex::new(T::zero(), T::zero());
        }
        m
    }
}

/// Smooth momentum band Π = χ(hD), χ = 1 on |ζ| <= plateau, 0 beyond support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandLimit<T> {
    pub plateau: T,
    pub support: T,
}

impl<T: Real> Default for BandLimit<T> {
    fn default() -> Self {
        Self { plateau: lit(2.0), support: lit(3.0) }
    }
}

impl<T: Real> BandLimit<T> {
    pub fn apply(&self, q: &GridQuantization<T>, u: &[Complex<T>]) -> Vec<Complex<T>> {
        q.multiplier(u, |k| ramp_down(k.abs(), self.plateau, self.support).0)
    }
}

/// Power iteration settings for operator norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for NormOptions<T> {
    fn default() -> Self {
        Self { tol: lit(1e-6), max_iter: 500 }
    }
}

/// ‖((i/h)[Op(a), Op(b)] − Op({a, b})) Π‖ on L², by power iteration.
pub fn commutator_defect<T: Real>(
    a: &Symbol<T>,
    b: &Symbol<T>,
    q: &GridQuantization<T>,
    band: &BandLimit<T>,
    opts: &NormOptions<T>,
) -> Result<T, QuantizeError> {
    q.check_aliasing(band.support)?;
    let pb = a.poisson(b)?;
    // The grid guard is applied to the band, not to the (possibly unbounded) symbols.
    let strip = |s: &Symbol<T>| Symbol { terms: s.terms.clone(), momentum_support: None };
    let (oa, ob, oc) = (quantize(&strip(a), q)?, quantize(&strip(b), q)?, quantize(&strip(&pb), q)?);
    let ih = Complex::new(T::zero(), T::one() / q.h);
    let defect = |u: &[Complex<T>], adj: bool| -> Vec<Complex<T>> {
        let (ab, ba, c) = if adj {
            // D* = (−i/h)(B*A* − A*B*) − C*.
            (oa.apply_adjoint(&ob.apply_adjoint(u)), ob.apply_adjoint(&oa.apply_adjoint(u)), oc.apply_adjoint(u))
        } else {
            (oa.apply(&ob.apply(u)), ob.apply(&oa.apply(u)), oc.apply(u))
        };
        let sign = if adj { -ih } else { ih };
        let com: Vec<Complex<T>> = if adj {
            ba.iter().zip(&ab).map(|(x, y)| (x - y) * sign).collect()
        } else {
            ab.iter().zip(&ba).map(|(x, y)| (x - y) * sign).collect()
        };
        com.iter().zip(c).map(|(x, y)| x - y).collect()
    };
    // Rounding level of the cancellation in D, from the sizes of its three parts.
    let v0 = band.apply(q, &start_vector(q.n));
    let nv = norm2(&v0);
    let scale = (norm2(&oa.apply(&ob.apply(&v0))) + norm2(&ob.apply(&oa.apply(&v0)))) / (q.h * nv)
        + norm2(&oc.apply(&v0)) / nv;
    let floor = lit::<T>(64.0) * T::epsilon() * scale;
    let est = largest_singular_value_floor(
        start_vector(q.n),
        |u| defect(&band.apply(q, u), false),
        |u| band.apply(q, &defect(u, true)),
        opts.tol,
        floor,
        opts.max_iter,
    )?;
    Ok(est.value)
}

/// Smallest eigenvalue of (Op(a) + Op(a)*)/2 by a dense Hermitian eigensolve.
pub fn garding_floor<T: Real>(a: &Symbol<T>, q: &GridQuantization<T>) -> Result<T, QuantizeError> {
    if q.n > 2048 {
        return Err(QuantizeError::InvalidGrid("dense eigensolve needs N <= 2048".into()));
    }
    let op = quantize(a, q)?;
    let m = op.matrix(true);
    let (vals, _) = hermitian_eigen(q.n, &m);
    Ok(vals[0])
}

/// ‖⟨hD⟩^m ⟨z⟩^s u‖_{L²}.
pub fn weighted_norm<T: Real>(u: &[Complex<T>], m: T, s: T, q: &GridQuantization<T>) -> T {
    let w: Vec<Complex<T>> = u.iter().zip(q.z_values()).map(|(v, z)| *v * bracket(z).powf(s)).collect();
    if m == T::zero() {
        return q.l2_norm(&w);
    }
    q.l2_norm(&q.multiplier(&w, |k| bracket(k).powf(m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let q = GridQuantization::<f64>::new(4.0, 8, 0.5).unwrap();
        assert_eq!(q.z(0), -4.0);
        assert_eq!(q.dz(), 1.0);
        assert!((q.zeta(1) - 0.5 * std::f64::consts::PI / 4.0).abs() < 1e-15);
        assert!(q.zeta(7) < 0.0);
        assert!(GridQuantization::<f64>::new(4.0, 12, 0.5).is_err());
    }

    #[test]
    fn poisson_bracket_of_linear_momentum() {
        // {ζ, f(z)} = f′(z).
        let a = Symbol::<f64>::of_zeta(Factor::identity());
        let b = Symbol::of_z(Factor::gaussian());
        let c = a.poisson(&b).unwrap();
        for z in [-1.0, 0.3, 2.0] {
            assert!((c.eval(z, 0.7) - (-2.0 * z * (-z * z as f64).exp())).abs() < 1e-14);
        }
        assert_eq!(a.poisson(&a).unwrap().eval(0.2, 0.3), 0.0);
    }
}
