//! Smooth step functions built from exp(-1/s).

use crate::scalar::Real;

/// C-infinity step: 0 for u <= 0, 1 for u >= 1, with value and derivative.
#[inline]
pub fn step<T: Real>(u: T) -> (T, T) {
    let one = T::one();
    if u <= T::zero() {
        return (T::zero(), T::zero());
    }
    if u >= one {
        return (one, T::zero());
    }
    let g = one / u - one / (one - u);
    let s = one / (one + g.exp());
    let w = one / (u * u) + one / ((one - u) * (one - u));
    (s, s * (one - s) * w)
}

/// Step rising from 0 at `a` to 1 at `b` (a < b), as value and derivative in `s`.
#[inline]
pub fn ramp_up<T: Real>(s: T, a: T, b: T) -> (T, T) {
    let w = b - a;
    let (v, d) = step((s - a) / w);
    (v, d / w)
}

/// Step falling from 1 at `a` to 0 at `b` (a < b).
#[inline]
pub fn ramp_down<T: Real>(s: T, a: T, b: T) -> (T, T) {
    let (v, d) = ramp_up(s, a, b);
    (T::one() - v, -d)
}

/// Smooth bump equal to 1 on [c - plateau, c + plateau] and 0 outside (c - support, c + support).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauBump<T> {
    pub center: T,
    pub plateau: T,
    pub support: T,
}

impl<T: Real> PlateauBump<T> {
    pub fn new(center: T, plateau: T, support: T) -> Self {
        assert!(
            plateau >= T::zero() && support > plateau,
            "plateau bump needs 0 <= plateau < support"
        );
        Self { center, plateau, support }
    }

    pub fn value(&self, s: T) -> T {
        self.eval(s).0
    }

    pub fn eval(&self, s: T) -> (T, T) {
        let d = s - self.center;
        let (l, dl) = ramp_up(d, -self.support, -self.plateau);
        let (r, dr) = ramp_down(d, self.plateau, self.support);
        (l * r, dl * r + l * dr)
    }

    pub fn lower(&self) -> T {
        self.center - self.support
    }

    pub fn upper(&self) -> T {
        self.center + self.support
    }

    /// Bump on an interval with a plateau covering `fraction` of it.
    pub fn with_fraction(center: T, half_width: T, fraction: T) -> Self {
        Self::new(center, half_width * fraction, half_width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_limits_and_midpoint() {
        assert_eq!(step(-1.0f64), (0.0, 0.0));
        assert_eq!(step(2.0f64), (1.0, 0.0));
        assert!((step(0.5f64).0 - 0.5).abs() < 1e-15);
        let (v, _) = step(0.5f32);
        assert!((v - 0.5).abs() < 1e-6);
    }

    #[test]
    fn step_derivative_matches_difference() {
        for &u in &[0.05f64, 0.2, 0.5, 0.71, 0.93] {
            let e = 1e-6;
            let fd = (step(u + e).0 - step(u - e).0) / (2.0 * e);
            let (_, d) = step(u);
            assert!((fd - d).abs() < 1e-6 * (1.0 + d.abs()), "u={u} fd={fd} d={d}");
        }
    }

    #[test]
    fn bump_plateau_and_support() {
        let b = PlateauBump::new(1.0f64, 0.25, 0.5);
        assert_eq!(b.value(1.2), 1.0);
        assert_eq!(b.value(1.6), 0.0);
        assert_eq!(b.value(0.4), 0.0);
        assert!(b.value(1.4) > 0.0 && b.value(1.4) < 1.0);
    }
}
