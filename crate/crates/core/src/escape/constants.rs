//! Collar constants M, c₁, ε₁, x₀ estimated on dense grids.

use crate::geometry::{Dimension, ModelProblem, PhasePoint};
use crate::scalar::{from_usize, lit, to_f64, Real};

use super::EscapeError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryConstants<T> {
    pub m: T,
    pub c1: T,
    pub eps1: T,
    pub x0: T,
    pub delta1: T,
}

/// Remainder coefficients of p and H_p in the collar:
/// p = τ² + g_∂ + x^γ r, ẋ = x²(2τ + x^γ a), τ̇ = −x(2g_∂ + x^γ b).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Remainders<T> {
    pub a: T,
    pub b: T,
    pub r: T,
}

pub fn remainders<T: Real>(model: &ModelProblem<T>, pt: &PhasePoint<T>) -> Remainders<T> {
    let two = lit::<T>(2.0);
    let x = pt.x;
    let xg = x.powf(model.gamma);
    let g = model.g_boundary(pt.y, pt.mu);
    let f = model.pushforward_field(pt.z, pt.zeta);
    Remainders {
        a: (f.x_dot / (x * x) - two * pt.tau) / xg,
        b: -(f.tau_dot / x + two * g) / xg,
        r: (model.symbol(pt) - pt.tau * pt.tau - g) / xg,
    }
}

/// Sample points of {p <= 2λ²} in the collar 0 < x <= 1.
fn collar_samples<T: Real>(model: &ModelProblem<T>, refine: usize) -> Vec<PhasePoint<T>> {
    let e_max = lit::<T>(2.0) * model.lambda2();
    let k = model.momentum_bound(e_max);
    let n_x = 200 * refine;
    let xs: Vec<T> = (0..n_x)
        .map(|i| {
            let u = from_usize::<T>(i) / from_usize::<T>(n_x - 1);
            lit::<T>(10.0).powf(lit::<T>(-6.0) * (T::one() - u))
        })
        .collect();
    let mut out = Vec::new();
    match model.dimension {
        Dimension::One => {
            let n_t = 200 * refine + 1;
            for &x in &xs {
                for side in [-T::one(), T::one()] {
                    for j in 0..n_t {
                        let tau = k * (lit::<T>(2.0) * from_usize::<T>(j) / from_usize::<T>(n_t - 1) - T::one());
                        let pt = PhasePoint::from_scattering(Dimension::One, x, [side, T::zero()], tau, T::zero())
                            .expect("collar point");
                        if model.symbol(&pt) <= e_max {
                            out.push(pt);
                        }
                    }
                }
            }
        }
        Dimension::Two => {
            let n_th = 16 * refine;
            let n_m = 24 * refine + 1;
            for &x in xs.iter().step_by(2) {
                for i in 0..n_th {
                    let th = T::TAU() * from_usize::<T>(i) / from_usize::<T>(n_th);
                    for j in 0..n_m {
                        let tau = k * (lit::<T>(2.0) * from_usize::<T>(j) / from_usize::<T>(n_m - 1) - T::one());
                        for l in 0..n_m {
                            let mu = k * (lit::<T>(2.0) * from_usize::<T>(l) / from_usize::<T>(n_m - 1) - T::one());
                            let pt = PhasePoint::from_scattering(Dimension::Two, x, [th.cos(), th.sin()], tau, mu)
                                .expect("collar point");
                            if model.symbol(&pt) <= e_max {
                                out.push(pt);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Infimum of g_∂ over {|p − λ²| <= δ, x < ε₁, |τ| <= 7λ/8} together with the minimum of
/// −x⁻¹τ̇ on the same set, from a grid in (x, E, τ).
fn boundary_window_inf<T: Real>(model: &ModelProblem<T>, eps1: T) -> (T, T) {
    let l2 = model.lambda2();
    let tau_max = lit::<T>(0.875) * model.lambda;
    let (n_x, n_e, n_t) = (120, 9, 121);
    let mut g_inf = T::infinity();
    let mut rate_inf = T::infinity();
    for i in 0..n_x {
        let u = from_usize::<T>(i) / from_usize::<T>(n_x - 1);
        let x = eps1 * lit::<T>(10.0).powf(lit::<T>(-6.0) * u);
        let v = model.potential.value(T::one() / x);
        let (_, dv) = model.potential.eval(T::one() / x);
        for j in 0..n_e {
            let e = l2 - model.delta + lit::<T>(2.0) * model.delta * from_usize::<T>(j) / from_usize::<T>(n_e - 1);
            for k in 0..n_t {
                let tau = tau_max * (lit::<T>(2.0) * from_usize::<T>(k) / from_usize::<T>(n_t - 1) - T::one());
                let g = e - tau * tau - v;
                g_inf = g_inf.min(g);
                rate_inf = rate_inf.min(lit::<T>(2.0) * g - dv / x);
            }
        }
    }
    (g_inf, rate_inf)
}

/// Estimates M, ε₁, c₁ and x₀ for the model.
pub fn boundary_constants<T: Real>(model: &ModelProblem<T>) -> Result<BoundaryConstants<T>, EscapeError> {
    boundary_constants_refined(model, 1)
}

/// As [`boundary_constants`] on a grid refined `refine` times in every direction.
pub fn boundary_constants_refined<T: Real>(
    model: &ModelProblem<T>,
    refine: usize,
) -> Result<BoundaryConstants<T>, EscapeError> {
    let l2 = model.lambda2();
    let half = lit::<T>(0.5);
    let pts = collar_samples(model, refine.max(1));
    let mut sup_ab = T::zero();
    let mut sup_r = T::zero();
    // (x, −H_p(x⁻¹τ)) on the mid-energy band.
    let mut rates = Vec::new();
    for pt in &pts {
        let rem = remainders(model, pt);
        sup_ab = sup_ab.max(rem.a.abs() + rem.b.abs());
        sup_r = sup_r.max(rem.r.abs());
        let p = model.symbol(pt);
        if p > half * l2 && p < lit::<T>(2.0) * l2 {
            let f = model.pushforward_field(pt.z, pt.zeta);
            rates.push((pt.x, -f.rate_of_tau_over_x(pt.x, pt.tau)));
        }
    }
    let m = lit::<T>(1.5) * sup_ab.max(sup_r);
    let gamma = model.gamma;

    let mut chosen = None;
    let mut eps1 = T::one();
    for _ in 0..30 {
        let monotone = rates.iter().filter(|(x, _)| *x <= eps1).all(|(_, r)| *r >= half * l2);
        if monotone {
            let c1 = match model.dimension {
                Dimension::One => {
                    let rem = m * eps1.powf(gamma);
                    if rem <= lit::<T>(15.0 / 64.0) * l2 {
                        Some(lit::<T>(0.99) * (lit::<T>(30.0 / 64.0) * l2 - rem))
                    } else {
                        None
                    }
                }
                Dimension::Two => {
                    let (g_inf, rate_inf) = boundary_window_inf(model, eps1);
                    let c1 = lit::<T>(0.99) * g_inf.min(rate_inf);
                    if c1 > T::zero() && m * eps1.powf(gamma) <= half * c1 {
                        Some(c1)
                    } else {
                        None
                    }
                }
            };
            if let Some(c1) = c1 {
                chosen = Some((eps1, c1));
                break;
            }
        }
        eps1 = eps1 * half;
    }
    let (eps1, c1) = chosen.ok_or_else(|| {
        EscapeError::Construction(format!(
            "no collar width eps1 >= {:e} gives a positive boundary constant c1 (M = {:.4e}); \
             reduce the energy half-width delta or the collar width",
            to_f64(eps1),
            to_f64(m)
        ))
    })?;
    if !(c1 > T::zero()) {
        return Err(EscapeError::Construction(format!(
            "boundary constant c1 = {:e} is not positive; reduce delta or eps1",
            to_f64(c1)
        )));
    }
    let inv_g = T::one() / gamma;
    let x0 = (model.lambda / (lit::<T>(6.0) * (m + T::one())))
        .powf(inv_g)
        .min((c1 / (lit::<T>(2.0) * (m + T::one()))).powf(inv_g))
        .min(eps1);
    Ok(BoundaryConstants { m, c1, eps1, x0, delta1: model.delta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_line_has_no_remainder() {
        let m = ModelProblem::<f64>::free_line(0.15);
        let c = boundary_constants(&m).unwrap();
        assert!(c.m < 1e-8);
        assert_eq!(c.eps1, 1.0);
        assert!((c.c1 - 0.99 * 30.0 / 64.0).abs() < 1e-8);
        assert!((c.x0 - 1.0 / 6.0).abs() < 1e-8);
    }
}
