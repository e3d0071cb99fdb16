//! Banded LU, dense Hermitian eigensolves and power iterations.

use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{from_usize, lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular matrix: zero pivot in column {0}")]
    Singular(usize),
    #[error("power iteration not converged after {iterations} steps (last estimates {last:?})")]
    NotConverged { iterations: usize, last: Vec<f64> },
}

/// Complex band matrix with `kl` sub- and `ku` super-diagonals.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    // Row i keeps columns i - kl ..= i + ku + kl; the extra kl columns absorb pivoting fill-in.
    data: Vec<Complex<T>>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![Complex::new(T::zero(), T::zero()); n * (2 * kl + ku + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// Entry (i, j); zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        if j + self.kl < i || j > i + self.ku {
            return Complex::new(T::zero(), T::zero());
        }
        self.data[self.idx(i, j)]
    }

    /// Sets entry (i, j), which must lie in the band.
    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn matvec(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with partial pivoting.
    pub fn factor(&self) -> Result<BandLu<T>, LinalgError> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut a = self.clone();
        let mut piv = vec![0usize; n];
        let mut mult = vec![Complex::new(T::zero(), T::zero()); n * kl.max(1)];
        let reach = kl + ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.data[a.idx(k, k)].norm();
            for i in k + 1..=last {
                let v = a.data[a.idx(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(LinalgError::Singular(k));
            }
            piv[k] = p;
            let cmax = (k + reach).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    let (u, v) = (a.idx(k, c), a.idx(p, c));
                    a.data.swap(u, v);
                }
            }
            let d = a.data[a.idx(k, k)];
            for i in k + 1..=last {
                let l = a.data[a.idx(i, k)] / d;
                mult[k * kl + (i - k - 1)] = l;
                if l == Complex::new(T::zero(), T::zero()) {
                    continue;
                }
                for c in k + 1..=cmax {
                    let u = a.data[a.idx(k, c)];
                    let j = a.idx(i, c);
                    a.data[j] = a.data[j] - l * u;
                }
            }
        }
        Ok(BandLu { a, piv, mult })
    }
}

/// Factors of a band matrix.
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    a: BandMatrix<T>,
    piv: Vec<usize>,
    mult: Vec<Complex<T>>,
}

impl<T: Real> BandLu<T> {
    pub fn solve(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [Complex<T>]) {
        let a = &self.a;
        let (n, kl) = (a.n, a.kl);
        let reach = a.kl + a.ku;
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] = x[i] - self.mult[k * kl + (i - k - 1)] * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..=(k + reach).min(n - 1) {
                s = s - a.data[a.idx(k, c)] * x[c];
            }
            x[k] = s / a.data[a.idx(k, k)];
        }
    }

    /// Solves with the conjugate transpose, valid when the factored matrix is complex symmetric.
    pub fn solve_adjoint_symmetric(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut x: Vec<Complex<T>> = b.iter().map(|v| v.conj()).collect();
        self.solve_in_place(&mut x);
        x.iter_mut().for_each(|v| *v = v.conj());
        x
    }
}

/// Eigenvalues (ascending) and row-major eigenvectors (column k is the k-th vector) of a
/// Hermitian row-major matrix. The eigensolve runs in double precision.
pub fn hermitian_eigen<T: Real>(n: usize, a: &[Complex<T>]) -> (Vec<T>, Vec<Complex<T>>) {
    let m = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let v = a[i * n + j];
        Complex::new(to_f64(v.re), to_f64(v.im))
    });
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&k| lit::<T>(eig.eigenvalues[k])).collect();
    let mut vecs = vec![Complex::new(T::zero(), T::zero()); n * n];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            let v = eig.eigenvectors[(i, k)];
            vecs[i * n + col] = Complex::new(lit(v.re), lit(v.im));
        }
    }
    (vals, vecs)
}

/// Same for a real symmetric row-major matrix.
pub fn symmetric_eigen<T: Real>(n: usize, a: &[T]) -> (Vec<T>, Vec<T>) {
    let m = DMatrix::<f64>::from_fn(n, n, |i, j| to_f64(a[i * n + j]));
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&k| lit::<T>(eig.eigenvalues[k])).collect();
    let mut vecs = vec![T::zero(); n * n];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vecs[i * n + col] = lit(eig.eigenvectors[(i, k)]);
        }
    }
    (vals, vecs)
}

pub fn norm2<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// Deterministic start vector with weight on every grid frequency.
pub fn start_vector<T: Real>(n: usize) -> Vec<Complex<T>> {
    let g = lit::<T>(0.618_033_988_749_894_9);
    (0..n)
        .map(|i| {
            let t = from_usize::<T>(i + 1) * g;
            let f = t - t.floor();
            Complex::new(lit::<T>(0.5) + f, (lit::<T>(7.0) * t).sin() * lit(0.25))
        })
        .collect()
}

/// Outcome of a power iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerEstimate<T> {
    pub value: T,
    pub iterations: usize,
}

/// Largest singular value of A from iterates of A*A.
pub fn largest_singular_value<T, F, G>(
    start: Vec<Complex<T>>,
    apply: F,
    apply_adjoint: G,
    tol: T,
    max_iter: usize,
) -> Result<PowerEstimate<T>, LinalgError>
where
    T: Real,
    F: FnMut(&[Complex<T>]) -> Vec<Complex<T>>,
    G: FnMut(&[Complex<T>]) -> Vec<Complex<T>>,
{
    largest_singular_value_floor(start, apply, apply_adjoint, tol, T::zero(), max_iter)
}

/// As [`largest_singular_value`]; changes below `abs_tol` also count as converged, which
/// settles estimates that sit at rounding level.
pub fn largest_singular_value_floor<T, F, G>(
    start: Vec<Complex<T>>,
    mut apply: F,
    mut apply_adjoint: G,
    tol: T,
    abs_tol: T,
    max_iter: usize,
) -> Result<PowerEstimate<T>, LinalgError>
where
    T: Real,
    F: FnMut(&[Complex<T>]) -> Vec<Complex<T>>,
    G: FnMut(&[Complex<T>]) -> Vec<Complex<T>>,
{
    let mut v = start;
    let nv = norm2(&v);
    v.iter_mut().for_each(|z| *z = *z / nv);
    let mut prev = T::zero();
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let av = apply(&v);
        let sigma = norm2(&av);
        history.push(to_f64(sigma));
        if sigma == T::zero() {
            return Ok(PowerEstimate { value: T::zero(), iterations: it });
        }
        if it > 1 && (sigma - prev).abs() <= (tol * sigma).max(abs_tol) {
            return Ok(PowerEstimate { value: sigma, iterations: it });
        }
        prev = sigma;
        let w = apply_adjoint(&av);
        let nw = norm2(&w);
        if nw == T::zero() {
            return Ok(PowerEstimate { value: sigma, iterations: it });
        }
        v = w.into_iter().map(|z| z / nw).collect();
    }
    let k = history.len().saturating_sub(5);
    Err(LinalgError::NotConverged { iterations: max_iter, last: history[k..].to_vec() })
}

/// Spectral radius of a Hermitian A, i.e. its operator norm, by iterating A itself.
pub fn hermitian_norm<T, F>(start: Vec<Complex<T>>, mut apply: F, tol: T, max_iter: usize) -> Result<PowerEstimate<T>, LinalgError>
where
    T: Real,
    F: FnMut(&[Complex<T>]) -> Vec<Complex<T>>,
{
    let mut v = start;
    let nv = norm2(&v);
    v.iter_mut().for_each(|z| *z = *z / nv);
    let mut prev = T::zero();
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let av = apply(&v);
        let lam = norm2(&av);
        history.push(to_f64(lam));
        if lam == T::zero() {
            return Ok(PowerEstimate { value: T::zero(), iterations: it });
        }
        if it > 1 && (lam - prev).abs() <= tol * lam {
            return Ok(PowerEstimate { value: lam, iterations: it });
        }
        prev = lam;
        v = av.into_iter().map(|z| z / lam).collect();
    }
    let k = history.len().saturating_sub(5);
    Err(LinalgError::NotConverged { iterations: max_iter, last: history[k..].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn band_lu_matches_dense_solution() {
        let n = 9;
        let mut m = BandMatrix::<f64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = if i == j { c(0.1, 0.3) } else { c(1.0 / (1.0 + (i + 2 * j) as f64), -0.2 * (i as f64 - j as f64)) };
                m.set(i, j, v);
            }
        }
        let x: Vec<_> = (0..n).map(|i| c(i as f64 - 3.0, 0.5 * i as f64)).collect();
        let b = m.matvec(&x);
        let y = m.factor().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-12, "{u} vs {v}");
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let m = BandMatrix::<f64>::zeros(3, 1, 1);
        assert_eq!(m.factor().unwrap_err(), LinalgError::Singular(0));
    }

    #[test]
    fn singular_value_of_a_diagonal_map() {
        let d = [3.0, -5.0, 1.0, 4.0];
        let f = |v: &[Complex<f64>]| v.iter().zip(d).map(|(z, s)| z * s).collect::<Vec<_>>();
        let r = largest_singular_value(start_vector(4), f, f, 1e-12, 500).unwrap();
        assert!((r.value - 5.0).abs() < 1e-9);
        let h = hermitian_norm(start_vector(4), f, 1e-12, 500).unwrap();
        assert!((h.value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn eigen_of_a_small_hermitian_matrix() {
        let a = [c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)];
        let (vals, _) = hermitian_eigen(2, &a);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }
}
