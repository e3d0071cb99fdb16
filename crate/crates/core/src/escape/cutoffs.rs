//! The cutoffs χ₋, χ₊, χ_∂, ρ and the energy cutoff ψ.

use crate::scalar::{lit, Real};
use crate::smooth::{ramp_down, ramp_up, PlateauBump};

/// Cutoff family for energy scale λ, boundary constant c₁ and energy window δ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffFamily<T> {
    pub lambda: T,
    pub c1: T,
    /// Exponential rate 6λ/c₁ of χ_∂.
    pub kappa: T,
    pub psi: PlateauBump<T>,
}

/// Builds the cutoffs. `plateau_fraction` is the fraction of (λ²−δ, λ²+δ) on which ψ ≡ 1.
pub fn build_cutoffs<T: Real>(lambda: T, c1: T, delta: T, plateau_fraction: T) -> CutoffFamily<T> {
    assert!(lambda > T::zero() && c1 > T::zero(), "cutoffs need positive λ and c₁");
    assert!(delta > T::zero() && plateau_fraction > T::zero() && plateau_fraction < T::one());
    CutoffFamily {
        lambda,
        c1,
        kappa: lit::<T>(6.0) * lambda / c1,
        psi: PlateauBump::with_fraction(lambda * lambda, delta, plateau_fraction),
    }
}

impl<T: Real> CutoffFamily<T> {
    /// χ₋: zero below 3λ/8, one above 5λ/8, nondecreasing.
    pub fn chi_minus(&self, tau: T) -> (T, T) {
        let l = self.lambda;
        ramp_up(tau, lit::<T>(0.375) * l, lit::<T>(0.625) * l)
    }

    /// χ₊(τ) = χ₋(−τ).
    pub fn chi_plus(&self, tau: T) -> (T, T) {
        let (v, d) = self.chi_minus(-tau);
        (v, -d)
    }

    /// χ_∂(s) = e^{κ(s − 3λ/4)} U(s) D(s) with U rising on (−55λ/64, −13λ/16) and D falling
    /// on (3λ/4, 55λ/64), so χ_∂′ >= κ χ_∂ on (−7λ/8, 3λ/4).
    pub fn chi_partial(&self, s: T) -> (T, T) {
        let l = self.lambda;
        let lo = -lit::<T>(55.0 / 64.0) * l;
        let hi = lit::<T>(55.0 / 64.0) * l;
        if s <= lo || s >= hi {
            return (T::zero(), T::zero());
        }
        let (u, du) = ramp_up(s, lo, -lit::<T>(13.0 / 16.0) * l);
        let (d, dd) = ramp_down(s, lit::<T>(0.75) * l, hi);
        let e = (self.kappa * (s - lit::<T>(0.75) * l)).exp();
        let v = e * u * d;
        (v, self.kappa * v + e * (du * d + u * dd))
    }

    /// ρ: one on [0, 1/2], zero from 7/8 on, nonincreasing.
    pub fn rho(&self, s: T) -> (T, T) {
        ramp_down(s, lit(0.5), lit(0.875))
    }

    /// ψ(E) and ψ′(E).
    pub fn psi(&self, e: T) -> (T, T) {
        self.psi.eval(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_values() {
        let c = build_cutoffs(1.0f64, 15.0 / 64.0, 0.25, 0.8);
        assert_eq!(c.chi_minus(0.2).0, 0.0);
        assert_eq!(c.chi_minus(0.9).0, 1.0);
        assert_eq!(c.chi_plus(-0.9).0, 1.0);
        assert_eq!(c.rho(0.3).0, 1.0);
        assert_eq!(c.rho(1.1).0, 0.0);
        assert!(c.chi_partial(-0.75).0 > 0.0);
        assert_eq!(c.psi(1.0).0, 1.0);
    }

    #[test]
    fn single_precision_family() {
        let c = build_cutoffs(1.0f32, 0.5, 0.25, 0.8);
        assert_eq!(c.chi_minus(0.9).0, 1.0f32);
        assert!(c.chi_partial(0.0).0 > 0.0);
    }
}
