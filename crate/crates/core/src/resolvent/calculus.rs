use num_complex::Complex;
use rayon::prelude::*;

use super::{DiscreteOperator, ResolventError};
use crate::linalg::{largest_singular_value, start_vector, symmetric_eigen};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::smooth::ramp_down;

/// Largest N for which the dense eigensolve is attempted.
pub const MAX_DENSE: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CalculusMethod<T> {
    /// Spectral mapping through the dense eigendecomposition.
    Eigen,
    /// Almost-analytic extension of order `order` integrated against shifted solves on a
    /// `nodes` × `nodes` box over `support` × (0, height]; `support` must contain supp f.
    HelfferSjostrand { order: usize, nodes: usize, support: (T, T), height: T },
}

impl<T: Real> CalculusMethod<T> {
    /// Order 4 with 200² nodes and height 1/50 of the support width.
    pub fn helffer_sjostrand(support: (T, T)) -> Self {
        CalculusMethod::HelfferSjostrand { order: 4, nodes: 200, support, height: (support.1 - support.0) / lit::<T>(50.0) }
    }
}

/// f(P), either as a dense row-major matrix or as the quadrature sum applied on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorFunction<T> {
    pub n: usize,
    repr: Repr<T>,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr<T> {
    Dense(Vec<T>),
    Quadrature { quad: HsQuadrature<T>, op: DiscreteOperator<T> },
}

impl<T: Real> OperatorFunction<T> {
    /// The matrix, when it was formed.
    pub fn dense(&self) -> Option<&[T]> {
        match &self.repr {
            Repr::Dense(d) => Some(d),
            Repr::Quadrature { .. } => None,
        }
    }

    /// f(P)v. The quadrature form costs one shifted solve per node.
    pub fn apply(&self, v: &[T]) -> Result<Vec<T>, ResolventError> {
        match &self.repr {
            Repr::Dense(d) => Ok(d.chunks(self.n).map(|row| row.iter().zip(v).map(|(a, b)| *a * *b).sum()).collect()),
            Repr::Quadrature { quad, op } => {
                let rhs: Vec<Complex<T>> = v.iter().map(|&x| Complex::new(x, T::zero())).collect();
                let n = self.n;
                quad.nodes
                    .par_iter()
                    .zip(quad.weights.par_iter())
                    .try_fold(
                        || vec![T::zero(); n],
                        |mut acc, (&z, &c)| -> Result<Vec<T>, ResolventError> {
                            let mut u = rhs.clone();
                            op.shifted(z).factor()?.solve_in_place(&mut u);
                            acc.iter_mut().zip(&u).for_each(|(a, x)| *a = *a + (c * x).re);
                            Ok(acc)
                        },
                    )
                    .try_reduce(
                        || vec![T::zero(); n],
                        |mut a, b| {
                            a.iter_mut().zip(b).for_each(|(x, y)| *x = *x + y);
                            Ok(a)
                        },
                    )
            }
        }
    }
}

/// ‖F − G‖ for two functions of the same self-adjoint P. Both are diagonal in the eigenbasis
/// {v_j} of P, so the norm is max_j |f_j − g_j| with f_j read off from F applied to Σ r_j v_j.
/// Two probe weightings r are used; their disagreement would expose a non-diagonal part.
pub fn spectral_distance<T: Real>(
    op: &DiscreteOperator<T>,
    a: &OperatorFunction<T>,
    b: &OperatorFunction<T>,
) -> Result<T, ResolventError> {
    let n = op.n();
    if n > MAX_DENSE {
        return Err(ResolventError::Config(format!("dense eigensolve limited to N <= {MAX_DENSE}")));
    }
    let (_, vecs) = symmetric_eigen(n, &op.dense_real()?);
    let mut worst = T::zero();
    let mut first: Option<Vec<T>> = None;
    for probe in 0..2 {
        let r: Vec<T> = (0..n).map(|j| T::one() + from_usize::<T>(probe * j) / from_usize::<T>(n)).collect();
        let u: Vec<T> = (0..n).map(|i| (0..n).map(|j| vecs[i * n + j] * r[j]).sum()).collect();
        let (fa, fb) = (a.apply(&u)?, b.apply(&u)?);
        let diff: Vec<T> = (0..n)
            .map(|j| (0..n).map(|i| vecs[i * n + j] * (fa[i] - fb[i])).sum::<T>() / r[j])
            .collect();
        if let Some(d0) = &first {
            let spread = diff.iter().zip(d0).fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()));
            worst = worst.max(spread);
        }
        worst = worst.max(diff.iter().fold(T::zero(), |m, x| m.max(x.abs())));
        first = Some(diff);
    }
    Ok(worst)
}

/// Quadrature nodes z and weights c with f(σ) ≈ Re Σ c/(σ − z) for real σ.
#[derive(Clone, Debug, PartialEq)]
pub struct HsQuadrature<T> {
    pub nodes: Vec<Complex<T>>,
    pub weights: Vec<Complex<T>>,
}

impl<T: Real> HsQuadrature<T> {
    /// Midpoint rule for (2/π) ∫∫_{y>0} ∂̄f̃; derivatives of f by FFT on the periodic support.
    pub fn new<F: Fn(T) -> T>(f: &F, order: usize, nodes: usize, support: (T, T), height: T) -> Self {
        let (a, b) = support;
        let width = b - a;
        let dx = width / from_usize::<T>(nodes);
        let dy = height / from_usize::<T>(nodes);
        let xs: Vec<T> = (0..nodes).map(|i| a + (from_usize::<T>(i) + lit(0.5)) * dx).collect();
        let derivs = spectral_derivatives(&xs.iter().map(|&x| f(x)).collect::<Vec<_>>(), width, order + 1);
        let mut fact = vec![T::one(); order + 1];
        for k in 1..=order {
            fact[k] = fact[k - 1] * from_usize::<T>(k);
        }
        let scale = lit::<T>(2.0) / T::PI() * dx * dy;
        let mut zs = Vec::with_capacity(nodes * nodes);
        let mut ws = Vec::with_capacity(nodes * nodes);
        for j in 0..nodes {
            let y = (from_usize::<T>(j) + lit(0.5)) * dy;
            let (chi, dchi) = ramp_down(y, height * lit(0.5), height);
            let iy = Complex::new(T::zero(), y);
            let mut pw = vec![Complex::new(T::one(), T::zero()); order + 1];
            for k in 1..=order {
                pw[k] = pw[k - 1] * iy;
            }
            for (i, &x) in xs.iter().enumerate() {
                let top = pw[order] * (derivs[order + 1][i] * chi / fact[order]);
                let mut taylor = Complex::new(T::zero(), T::zero());
                for k in 0..=order {
                    taylor = taylor + pw[k] * (derivs[k][i] / fact[k]);
                }
                let dbar: Complex<T> = (top + Complex::<T>::i() * taylor * dchi) * lit::<T>(0.5);
                if dbar.norm() == T::zero() {
                    continue;
                }
                zs.push(Complex::new(x, y));
                ws.push(dbar * scale);
            }
        }
        Self { nodes: zs, weights: ws }
    }

    /// The scalar function the quadrature actually applies.
    pub fn eval(&self, sigma: T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, c)| (c / (Complex::new(sigma, T::zero()) - z)).re)
            .sum()
    }
}

/// f and its first `count` derivatives from samples of a smooth periodic function on an
/// interval of length `width`.
fn spectral_derivatives<T: Real>(samples: &[T], width: T, count: usize) -> Vec<Vec<T>> {
    let n = samples.len();
    let mut spec: Vec<Complex<T>> = samples.iter().map(|&v| Complex::new(v, T::zero())).collect();
    T::fft(&mut spec, false);
    let inv_n = T::one() / from_usize::<T>(n);
    let mut out = vec![samples.to_vec()];
    for k in 1..=count {
        let mut buf: Vec<Complex<T>> = spec
            .iter()
            .enumerate()
            .map(|(m, c)| {
                // The Nyquist mode has no well-defined derivative on a real grid.
                if 2 * m == n {
                    return Complex::new(T::zero(), T::zero());
                }
                let mm = if 2 * m < n { from_usize::<T>(m) } else { from_usize::<T>(m) - from_usize::<T>(n) };
                let ik = Complex::new(T::zero(), lit::<T>(2.0) * T::PI() * mm / width);
                c * ik.powu(k as u32) * inv_n
            })
            .collect();
        T::fft(&mut buf, true);
        out.push(buf.iter().map(|c| c.re).collect());
    }
    out
}

/// f(P) for the self-adjoint (Dirichlet) discretization. The eigen method forms the matrix;
/// the quadrature is kept as nodes and applied on demand.
pub fn function_of_operator<T: Real, F: Fn(T) -> T + Sync>(
    op: &DiscreteOperator<T>,
    f: &F,
    method: CalculusMethod<T>,
) -> Result<OperatorFunction<T>, ResolventError> {
    if !op.is_self_adjoint() {
        return Err(ResolventError::Config("the functional calculus needs the Dirichlet boundary".into()));
    }
    let n = op.n();
    match method {
        CalculusMethod::Eigen => {
            if n > MAX_DENSE {
                return Err(ResolventError::Config(format!("dense eigensolve limited to N <= {MAX_DENSE}")));
            }
            let (vals, vecs) = symmetric_eigen(n, &op.dense_real()?);
            let fv: Vec<T> = vals.iter().map(|&s| f(s)).collect();
            let mut data = vec![T::zero(); n * n];
            for i in 0..n {
                for j in i..n {
                    let v: T = (0..n).map(|k| vecs[i * n + k] * fv[k] * vecs[j * n + k]).sum();
                    data[i * n + j] = v;
                    data[j * n + i] = v;
                }
            }
            Ok(OperatorFunction { n, repr: Repr::Dense(data) })
        }
        CalculusMethod::HelfferSjostrand { order, nodes, support, height } => {
            if !(support.1 > support.0) || !(height > T::zero()) || nodes < 8 {
                return Err(ResolventError::Config("quadrature box must be non-degenerate".into()));
            }
            check_refinement(f, order, nodes, support, height)?;
            let quad = HsQuadrature::new(f, order, nodes, support, height);
            Ok(OperatorFunction { n, repr: Repr::Quadrature { quad, op: op.clone() } })
        }
    }
}

/// Compares the scalar quadrature against the one with doubled nodes.
fn check_refinement<T: Real, F: Fn(T) -> T>(
    f: &F,
    order: usize,
    nodes: usize,
    support: (T, T),
    height: T,
) -> Result<(), ResolventError> {
    let coarse = HsQuadrature::new(f, order, nodes, support, height);
    let fine = HsQuadrature::new(f, order, 2 * nodes, support, height);
    let (a, b) = support;
    let w = b - a;
    let samples = 401;
    let mut worst = T::zero();
    for k in 0..samples {
        let s = a - w + lit::<T>(3.0) * w * from_usize::<T>(k) / from_usize::<T>(samples - 1);
        worst = worst.max((coarse.eval(s) - fine.eval(s)).abs());
    }
    if worst > lit(1e-5) {
        return Err(ResolventError::Config(format!(
            "Helffer-Sjostrand quadrature not converged: node doubling moves f by {:.3e}",
            to_f64(worst)
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoncharReport<T> {
    /// sup over t of ‖(I − ψ(P))(P − λ² − it)^{-1}‖.
    pub bound: T,
    /// sup over t and real σ of |1 − ψ(σ)|/|σ − λ² − it|.
    pub scalar_bound: T,
    /// (t, operator norm, scalar sup) per t.
    pub per_t: Vec<(T, T, T)>,
}

/// Operator norms of (I − ψ(P)) R(λ² + it), with I − ψ(P) from the eigendecomposition and R
/// from banded solves.
pub fn nonchar_bound<T: Real, F: Fn(T) -> T + Sync>(
    op: &DiscreteOperator<T>,
    psi: &F,
    lambda2: T,
    t_list: &[T],
) -> Result<NoncharReport<T>, ResolventError> {
    let n = op.n();
    let g = function_of_operator(op, &|s: T| T::one() - psi(s), CalculusMethod::Eigen)?;
    let g: Vec<Complex<T>> = g.dense().unwrap_or_default().iter().map(|&v| Complex::new(v, T::zero())).collect();
    let matvec = |m: &[Complex<T>], v: &[Complex<T>], adjoint: bool| -> Vec<Complex<T>> {
        (0..n)
            .map(|i| {
                (0..n).fold(Complex::new(T::zero(), T::zero()), |s, k| {
                    if adjoint {
                        s + m[k * n + i].conj() * v[k]
                    } else {
                        s + m[i * n + k] * v[k]
                    }
                })
            })
            .collect()
    };
    let mut per_t = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let shifted = op.factor_shift(lambda2, t)?;
        let est = largest_singular_value(
            start_vector(n),
            |v| matvec(&g, &shifted.solve(v), false),
            |v| shifted.solve_adjoint(&matvec(&g, v, true)),
            lit(1e-10),
            20_000,
        )?;
        per_t.push((t, est.value, scalar_sup(psi, lambda2, t, op)));
    }
    let bound = per_t.iter().fold(T::zero(), |m, p| m.max(p.1));
    let scalar_bound = per_t.iter().fold(T::zero(), |m, p| m.max(p.2));
    Ok(NoncharReport { bound, scalar_bound, per_t })
}

/// sup over σ in [0, max spectrum] of |1 − ψ(σ)|/|σ − λ² − it| by dense sampling.
fn scalar_sup<T: Real, F: Fn(T) -> T>(psi: &F, lambda2: T, t: T, op: &DiscreteOperator<T>) -> T {
    let top = op.stencil_diag.abs() * lit(4.0) + op.potential.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let lo = op.potential.iter().fold(T::zero(), |m, &v| m.min(v));
    let samples = 400_000usize;
    (0..=samples)
        .map(|k| {
            let s = lo + (top - lo) * from_usize::<T>(k) / from_usize::<T>(samples);
            (T::one() - psi(s)).abs() / Complex::new(s - lambda2, -t).norm()
        })
        .fold(T::zero(), |m, v| m.max(v))
}
