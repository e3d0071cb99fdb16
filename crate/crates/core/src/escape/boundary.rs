//! Collar pieces q₋, q₊, q_∂ of the escape function.

use crate::geometry::{ModelProblem, PhasePoint};
use crate::scalar::{lit, Real};

use super::constants::BoundaryConstants;
use super::cutoffs::CutoffFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Minus,
    Plus,
    Partial,
}

impl BoundaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryKind::Minus => "minus",
            BoundaryKind::Plus => "plus",
            BoundaryKind::Partial => "partial",
        }
    }
}

/// Everything the collar pieces depend on.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPieces<T> {
    pub cutoffs: CutoffFamily<T>,
    pub constants: BoundaryConstants<T>,
    pub eps: T,
}

impl<T: Real> BoundaryPieces<T> {
    /// x^α χ(τ) ψ(p) ρ(x/x₀) and its H_p derivative, with α = −ε for q₋, q_∂ and +ε for q₊.
    pub fn eval(&self, kind: BoundaryKind, model: &ModelProblem<T>, pt: &PhasePoint<T>) -> (T, T) {
        let zero = (T::zero(), T::zero());
        let x0 = self.constants.x0;
        let x = pt.x;
        if x >= lit::<T>(0.875) * x0 {
            return zero;
        }
        let (psi, _) = self.cutoffs.psi(model.symbol(pt));
        if psi == T::zero() {
            return zero;
        }
        let (chi, dchi) = match kind {
            BoundaryKind::Minus => self.cutoffs.chi_minus(pt.tau),
            BoundaryKind::Plus => self.cutoffs.chi_plus(pt.tau),
            BoundaryKind::Partial => self.cutoffs.chi_partial(pt.tau),
        };
        if chi == T::zero() && dchi == T::zero() {
            return zero;
        }
        let alpha = match kind {
            BoundaryKind::Plus => self.eps,
            _ => -self.eps,
        };
        let (rho, drho) = self.cutoffs.rho(x / x0);
        let xa = x.powf(alpha);
        let f = model.pushforward_field(pt.z, pt.zeta);
        // H_p(x^α ρ) χ + x^α ρ H_p χ, with ψ(p) constant along the flow.
        let d_xrho = (alpha * xa / x * rho + xa * drho / x0) * f.x_dot;
        let hq = psi * (d_xrho * chi + xa * rho * dchi * f.tau_dot);
        (psi * xa * chi * rho, hq)
    }
}

/// Value and H_p derivative of one collar piece.
pub fn eval_boundary_q<T: Real>(
    kind: BoundaryKind,
    model: &ModelProblem<T>,
    pieces: &BoundaryPieces<T>,
    pt: &PhasePoint<T>,
) -> (T, T) {
    pieces.eval(kind, model, pt)
}
