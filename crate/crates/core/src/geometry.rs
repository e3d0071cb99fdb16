//! Model problems P = h^2 Δ_g + V on the line and on warped planes, their principal
//! symbol, scattering coordinates near infinity and the Hamilton vector field.
//!
//! Scattering coordinates are `x = 1/r`, `y = z/|z|`, `τ = -⟨ẑ, ζ⟩` and `μ = ⟨ê_θ, ζ⟩`,
//! so outgoing trajectories have `τ < 0`. They are exact for `r >= R0`; inside `R0` the
//! boundary defining function is blended to a positive constant.

use thiserror::Error;

use crate::scalar::{bracket, lit, Real};
use crate::smooth;

/// Radius beyond which `x = 1/r` holds exactly.
pub const R0: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("scattering chart needs 0 < x <= 1, got x = {0}")]
    ChartOutOfRange(f64),
}

/// Spatial dimension of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn as_usize(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }

    pub fn from_usize(n: usize) -> Option<Self> {
        match n {
            1 => Some(Dimension::One),
            2 => Some(Dimension::Two),
            _ => None,
        }
    }
}

/// Radial (or even, on the line) potential presets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Potential<T> {
    Zero,
    /// `A <s>^{-exponent}`
    LongRangePow { amplitude: T, exponent: T },
    /// `A (e^{-(s-d)^2} + e^{-(s+d)^2})`
    DoubleBump { amplitude: T, separation: T },
    /// `-A e^{-s^2}`
    Well { amplitude: T },
}

impl<T: Real> Potential<T> {
    /// Value and derivative at the signed coordinate (1D) or radius (2D).
    pub fn eval(&self, s: T) -> (T, T) {
        let two = lit::<T>(2.0);
        match *self {
            Potential::Zero => (T::zero(), T::zero()),
            Potential::LongRangePow { amplitude, exponent } => {
                let b2 = T::one() + s * s;
                let v = amplitude * b2.powf(-exponent / two);
                (v, -exponent * s * v / b2)
            }
            Potential::DoubleBump { amplitude, separation } => {
                let a = s - separation;
                let b = s + separation;
                let ea = (-a * a).exp();
                let eb = (-b * b).exp();
                (amplitude * (ea + eb), -two * amplitude * (a * ea + b * eb))
            }
            Potential::Well { amplitude } => {
                let e = (-s * s).exp();
                (-amplitude * e, two * amplitude * s * e)
            }
        }
    }

    pub fn value(&self, s: T) -> T {
        self.eval(s).0
    }

    /// Certified lower bound of V over all of space.
    pub fn lower_bound(&self) -> T {
        let z = T::zero();
        match *self {
            Potential::Zero => z,
            Potential::LongRangePow { amplitude, .. } => amplitude.min(z),
            Potential::DoubleBump { amplitude, .. } => (lit::<T>(2.0) * amplitude).min(z),
            Potential::Well { amplitude } => (-amplitude).min(z),
        }
    }

    /// Certified upper bound of V over all of space.
    pub fn upper_bound(&self) -> T {
        let z = T::zero();
        match *self {
            Potential::Zero => z,
            Potential::LongRangePow { amplitude, .. } => amplitude.max(z),
            Potential::DoubleBump { amplitude, .. } => (lit::<T>(2.0) * amplitude).max(z),
            Potential::Well { amplitude } => (-amplitude).max(z),
        }
    }

    /// Largest decay exponent gamma with |V| <= C <s>^{-gamma}, `None` when any gamma works.
    pub fn max_decay(&self) -> Option<T> {
        match *self {
            Potential::LongRangePow { exponent, amplitude } if amplitude != T::zero() => {
                Some(exponent)
            }
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Zero => "zero",
            Potential::LongRangePow { .. } => "longrange_pow",
            Potential::DoubleBump { .. } => "double_bump",
            Potential::Well { .. } => "well",
        }
    }
}

/// Boundary metric h(θ) of the warped product dr^2 + r^2 h(θ) dθ^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryMetric<T> {
    Flat,
    /// `h(θ) = 1 + amplitude·cos(mode·θ)`, |amplitude| < 1.
    Warped { amplitude: T, mode: u32 },
}

impl<T: Real> BoundaryMetric<T> {
    /// h(θ) and h'(θ).
    pub fn eval(&self, theta: T) -> (T, T) {
        match *self {
            BoundaryMetric::Flat => (T::one(), T::zero()),
            BoundaryMetric::Warped { amplitude, mode } => {
                let k = T::from_u32(mode).unwrap();
                let (s, c) = (k * theta).sin_cos();
                (T::one() + amplitude * c, -amplitude * k * s)
            }
        }
    }

    /// Lower bound of 1/h, the factor in g_∂ >= |μ|^2 min(1/h).
    pub fn min_inverse(&self) -> T {
        match *self {
            BoundaryMetric::Flat => T::one(),
            BoundaryMetric::Warped { amplitude, .. } => T::one() / (T::one() + amplitude.abs()),
        }
    }
}

/// A model problem with its energy window.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelProblem<T> {
    pub dimension: Dimension,
    pub metric: BoundaryMetric<T>,
    pub potential: Potential<T>,
    pub gamma: T,
    pub lambda: T,
    pub delta: T,
    potential_floor: T,
}

impl<T: Real> ModelProblem<T> {
    /// Builds a model at spectral parameter `lambda2 = λ^2` with half-window `delta`.
    pub fn new(
        dimension: Dimension,
        metric: BoundaryMetric<T>,
        potential: Potential<T>,
        gamma: T,
        lambda2: T,
        delta: T,
    ) -> Result<Self, GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidModel(m.to_string()));
        if !(gamma > T::zero()) {
            return bad("gamma must be positive");
        }
        if !(lambda2 > T::zero()) {
            return bad("lambda^2 must be positive");
        }
        if !(delta > T::zero() && delta < lambda2) {
            return bad("delta must lie in (0, lambda^2)");
        }
        if let Some(g) = potential.max_decay() {
            if gamma > g {
                return bad("gamma exceeds the decay exponent of the potential");
            }
        }
        match metric {
            BoundaryMetric::Warped { amplitude, .. } => {
                if dimension == Dimension::One {
                    return bad("a warped boundary metric needs dimension 2");
                }
                if !(amplitude.abs() < T::one()) {
                    return bad("warped metric amplitude must be below 1 in magnitude");
                }
            }
            BoundaryMetric::Flat => {}
        }
        if let Potential::DoubleBump { separation, .. } = potential {
            if !(separation >= T::zero()) {
                return bad("double_bump separation must be nonnegative");
            }
        }
        Ok(Self {
            dimension,
            metric,
            potential,
            gamma,
            lambda: lambda2.sqrt(),
            delta,
            potential_floor: potential.lower_bound(),
        })
    }

    /// Free particle on the line at λ^2 = 1.
    pub fn free_line(delta: T) -> Self {
        Self::new(
            Dimension::One,
            BoundaryMetric::Flat,
            Potential::Zero,
            T::one(),
            T::one(),
            delta,
        )
        .expect("free model is valid")
    }

    pub fn lambda2(&self) -> T {
        self.lambda * self.lambda
    }

    /// Certified lower bound of V, so p >= potential_floor everywhere.
    pub fn potential_floor(&self) -> T {
        self.potential_floor
    }

    /// Bound on |ζ| over the sub-level set {p <= energy}.
    pub fn momentum_bound(&self, energy: T) -> T {
        ((energy - self.potential_floor).max(T::zero()) / self.metric.min_inverse()).sqrt()
    }

    fn dim2(&self) -> bool {
        self.dimension == Dimension::Two
    }

    /// V and ∇V at z.
    pub fn potential_at(&self, z: [T; 2]) -> (T, [T; 2]) {
        if !self.dim2() {
            let (v, d) = self.potential.eval(z[0]);
            return (v, [d, T::zero()]);
        }
        let r = z[0].hypot(z[1]);
        let (v, d) = self.potential.eval(r);
        if r == T::zero() {
            return (v, [T::zero(), T::zero()]);
        }
        (v, [d * z[0] / r, d * z[1] / r])
    }

    /// Blend β(r) between the flat interior and the warped exterior, with β'(r).
    fn blend(r: T) -> (T, T) {
        let (s, ds) = smooth::step(r * r);
        (s, lit::<T>(2.0) * r * ds)
    }

    /// Angular metric factor H(z) = 1 + β(r)(h(θ) − 1), so |ζ|_g^2 = ζ_r^2 + ζ_θ^2/H.
    pub fn metric_factor(&self, z: [T; 2]) -> T {
        if !self.dim2() || self.metric == BoundaryMetric::Flat {
            return T::one();
        }
        let (beta, _) = Self::blend(z[0].hypot(z[1]));
        let (h, _) = self.metric.eval(z[1].atan2(z[0]));
        T::one() + beta * (h - T::one())
    }

    /// w(z) = (1/H - 1)/r^2 and ∇w, the angular correction p = |ζ|^2 + L^2 w + V.
    fn angular_weight(&self, z: [T; 2]) -> (T, [T; 2]) {
        let zero = (T::zero(), [T::zero(), T::zero()]);
        if !self.dim2() || self.metric == BoundaryMetric::Flat {
            return zero;
        }
        let r = z[0].hypot(z[1]);
        let (beta, dbeta) = Self::blend(r);
        if beta == T::zero() {
            return zero;
        }
        let theta = z[1].atan2(z[0]);
        let (h, dh) = self.metric.eval(theta);
        let big_h = T::one() + beta * (h - T::one());
        let omega = T::one() / big_h - T::one();
        let omega_r = -dbeta * (h - T::one()) / (big_h * big_h);
        let omega_t = -beta * dh / (big_h * big_h);
        let r2 = r * r;
        let w = omega / r2;
        let w_r = omega_r / r2 - lit::<T>(2.0) * omega / (r2 * r);
        let w_t = omega_t / r2;
        let (ur, ut) = ([z[0] / r, z[1] / r], [-z[1] / r, z[0] / r]);
        let g = [w_r * ur[0] + w_t / r * ut[0], w_r * ur[1] + w_t / r * ut[1]];
        (w, g)
    }

    /// p = |ζ|^2_g + V in the Euclidean chart.
    pub fn symbol_euclidean(&self, z: [T; 2], zeta: [T; 2]) -> T {
        let (v, _) = self.potential_at(z);
        if !self.dim2() {
            return zeta[0] * zeta[0] + v;
        }
        let (w, _) = self.angular_weight(z);
        let l = z[0] * zeta[1] - z[1] * zeta[0];
        zeta[0] * zeta[0] + zeta[1] * zeta[1] + l * l * w + v
    }

    /// p at a phase point, evaluated in the Euclidean chart (valid everywhere).
    pub fn symbol(&self, pt: &PhasePoint<T>) -> T {
        self.symbol_euclidean(pt.z, pt.zeta)
    }

    /// Boundary metric term g_∂(y, μ) = μ^2/h(θ); zero on the line.
    pub fn g_boundary(&self, y: [T; 2], mu: T) -> T {
        if !self.dim2() {
            return T::zero();
        }
        let (h, _) = self.metric.eval(y[1].atan2(y[0]));
        mu * mu / h
    }

    /// p = τ^2 + g_∂(y, μ) + V(1/x) in the scattering chart, valid for 0 < x <= 1.
    pub fn symbol_scattering(&self, x: T, y: [T; 2], tau: T, mu: T) -> Result<T, GeometryError> {
        check_chart(x)?;
        let r = T::one() / x;
        let v = self.potential.value(if self.dim2() { r } else { r * y[0] });
        Ok(tau * tau + self.g_boundary(y, mu) + v)
    }

    /// Hamilton field (ż, ζ̇) = (∂_ζ p, -∂_z p) in the Euclidean chart.
    pub fn hamilton_field(&self, z: [T; 2], zeta: [T; 2]) -> ([T; 2], [T; 2]) {
        let two = lit::<T>(2.0);
        let (_, gv) = self.potential_at(z);
        if !self.dim2() {
            return ([two * zeta[0], T::zero()], [-gv[0], T::zero()]);
        }
        let (w, gw) = self.angular_weight(z);
        let l = z[0] * zeta[1] - z[1] * zeta[0];
        let zd = [two * zeta[0] - two * l * w * z[1], two * zeta[1] + two * l * w * z[0]];
        let dz = [
            l * l * gw[0] + two * l * w * zeta[1] + gv[0],
            l * l * gw[1] - two * l * w * zeta[0] + gv[1],
        ];
        (zd, [-dz[0], -dz[1]])
    }

    /// Hamilton field on the packed state (z1, z2, ζ1, ζ2).
    pub fn field_vec(&self, s: &[T; 4]) -> [T; 4] {
        let (zd, kd) = self.hamilton_field([s[0], s[1]], [s[2], s[3]]);
        [zd[0], zd[1], kd[0], kd[1]]
    }

    /// Scattering-chart components from the closed-form boundary expression, 0 < x <= 1.
    pub fn scattering_field(
        &self,
        x: T,
        y: [T; 2],
        tau: T,
        mu: T,
    ) -> Result<ScatteringField<T>, GeometryError> {
        check_chart(x)?;
        let two = lit::<T>(2.0);
        let r = T::one() / x;
        let (_, dv) = self.potential.eval(r);
        let x_dot = two * tau * x * x;
        if !self.dim2() {
            return Ok(ScatteringField { x_dot, tau_dot: dv, theta_dot: T::zero(), mu_dot: T::zero() });
        }
        let (h, dh) = self.metric.eval(y[1].atan2(y[0]));
        let g = mu * mu / h;
        Ok(ScatteringField {
            x_dot,
            tau_dot: -two * x * g + dv,
            theta_dot: two * x * mu / h,
            mu_dot: two * x * tau * mu + x * mu * mu * dh / (h * h),
        })
    }

    /// Scattering-chart components obtained by pushing the Euclidean field through the
    /// chart Jacobian. Valid for every r > 0, including the blended interior.
    pub fn pushforward_field(&self, z: [T; 2], zeta: [T; 2]) -> ScatteringField<T> {
        let (zd, kd) = self.hamilton_field(z, zeta);
        let (r, u, e) = polar_frame(self.dimension, z);
        let (_, dxdr) = boundary_x(r);
        let r_dot = u[0] * zd[0] + u[1] * zd[1];
        let tau = -(zeta[0] * u[0] + zeta[1] * u[1]);
        let ut_dot = [(zd[0] - r_dot * u[0]) / r, (zd[1] - r_dot * u[1]) / r];
        let tau_dot = -(kd[0] * u[0] + kd[1] * u[1]) - (zeta[0] * ut_dot[0] + zeta[1] * ut_dot[1]);
        if !self.dim2() {
            return ScatteringField { x_dot: dxdr * r_dot, tau_dot, theta_dot: T::zero(), mu_dot: T::zero() };
        }
        let theta_dot = (e[0] * zd[0] + e[1] * zd[1]) / r;
        let mu_dot = kd[0] * e[0] + kd[1] * e[1] + theta_dot * tau;
        ScatteringField { x_dot: dxdr * r_dot, tau_dot, theta_dot, mu_dot }
    }

    /// Smallest C with |p - τ^2 - g_∂| <= C x^γ over the collar points among `pts`.
    pub fn decay_certificate(&self, pts: &[PhasePoint<T>]) -> T {
        pts.iter()
            .filter(|p| p.x <= T::one())
            .map(|p| {
                let rem = self.symbol(p) - p.tau * p.tau - self.g_boundary(p.y, p.mu);
                rem.abs() / p.x.powf(self.gamma)
            })
            .fold(T::zero(), T::max)
    }

    /// Phase point from Euclidean data.
    pub fn point(&self, z: [T; 2], zeta: [T; 2]) -> PhasePoint<T> {
        PhasePoint::from_euclidean(self.dimension, z, zeta)
    }
}

fn check_chart<T: Real>(x: T) -> Result<(), GeometryError> {
    if x > T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(GeometryError::ChartOutOfRange(crate::scalar::to_f64(x)))
    }
}

/// (r, ẑ, ê_θ). On the line ẑ = (sign z, 0) with sign 0 := +1; at the origin ẑ = (1, 0).
fn polar_frame<T: Real>(dim: Dimension, z: [T; 2]) -> (T, [T; 2], [T; 2]) {
    let o = T::zero();
    match dim {
        Dimension::One => {
            let s = if z[0] < o { -T::one() } else { T::one() };
            (z[0].abs(), [s, o], [o, s])
        }
        Dimension::Two => {
            let r = z[0].hypot(z[1]);
            if r == o {
                return (r, [T::one(), o], [o, T::one()]);
            }
            let u = [z[0] / r, z[1] / r];
            (r, u, [-u[1], u[0]])
        }
    }
}

/// Boundary defining function x(r) and dx/dr: exactly 1/r for r >= R0, and
/// (r^2 + (1 - S(r^2))/4)^{-1/2} inside, which is smooth, decreasing and equal to 2 at r = 0.
pub fn boundary_x<T: Real>(r: T) -> (T, T) {
    if r >= lit(R0) {
        return (T::one() / r, -T::one() / (r * r));
    }
    let quarter = lit::<T>(0.25);
    let s = r * r;
    let (st, dst) = smooth::step(s);
    let f = s + quarter * (T::one() - st);
    let x = T::one() / f.sqrt();
    let df_dr = (T::one() - quarter * dst) * lit::<T>(2.0) * r;
    (x, -lit::<T>(0.5) * x * x * x * df_dr)
}

/// Components of H_p in the scattering chart (x, θ, τ, μ).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatteringField<T> {
    pub x_dot: T,
    pub tau_dot: T,
    pub theta_dot: T,
    pub mu_dot: T,
}

impl<T: Real> ScatteringField<T> {
    /// Coefficient of x∂_x.
    pub fn x_coefficient(&self, x: T) -> T {
        self.x_dot / x
    }

    /// Coefficient of μ·∂_μ (zero when μ = 0).
    pub fn mu_coefficient(&self, mu: T) -> T {
        if mu == T::zero() {
            T::zero()
        } else {
            self.mu_dot / mu
        }
    }

    /// H_p(x^{-1}τ) = τ̇/x - τẋ/x^2.
    pub fn rate_of_tau_over_x(&self, x: T, tau: T) -> T {
        self.tau_dot / x - tau * self.x_dot / (x * x)
    }
}

/// A phase-space point carried in both charts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint<T> {
    pub dimension: Dimension,
    pub z: [T; 2],
    pub zeta: [T; 2],
    pub x: T,
    /// Unit vector ẑ; on the line (±1, 0).
    pub y: [T; 2],
    pub tau: T,
    /// Angular momentum ⟨ê_θ, ζ⟩; zero on the line.
    pub mu: T,
}

impl<T: Real> PhasePoint<T> {
    pub fn from_euclidean(dimension: Dimension, z: [T; 2], zeta: [T; 2]) -> Self {
        let (z, zeta) = match dimension {
            Dimension::One => ([z[0], T::zero()], [zeta[0], T::zero()]),
            Dimension::Two => (z, zeta),
        };
        let (r, u, e) = polar_frame(dimension, z);
        let mu = match dimension {
            Dimension::One => T::zero(),
            Dimension::Two => zeta[0] * e[0] + zeta[1] * e[1],
        };
        Self {
            dimension,
            z,
            zeta,
            x: boundary_x(r).0,
            y: u,
            tau: -(zeta[0] * u[0] + zeta[1] * u[1]),
            mu,
        }
    }

    /// Inverse chart, exact for 0 < x <= 1. `y` is normalized; on the line only its sign is used.
    pub fn from_scattering(
        dimension: Dimension,
        x: T,
        y: [T; 2],
        tau: T,
        mu: T,
    ) -> Result<Self, GeometryError> {
        check_chart(x)?;
        let r = T::one() / x;
        match dimension {
            Dimension::One => {
                let s = if y[0] < T::zero() { -T::one() } else { T::one() };
                Ok(Self::from_euclidean(dimension, [r * s, T::zero()], [-tau * s, T::zero()]))
            }
            Dimension::Two => {
                let n = y[0].hypot(y[1]);
                let u = [y[0] / n, y[1] / n];
                let e = [-u[1], u[0]];
                let z = [r * u[0], r * u[1]];
                let zeta = [-tau * u[0] + mu * e[0], -tau * u[1] + mu * e[1]];
                Ok(Self::from_euclidean(dimension, z, zeta))
            }
        }
    }

    pub fn radius(&self) -> T {
        self.z[0].hypot(self.z[1])
    }

    pub fn theta(&self) -> T {
        self.y[1].atan2(self.y[0])
    }

    pub fn state(&self) -> [T; 4] {
        [self.z[0], self.z[1], self.zeta[0], self.zeta[1]]
    }

    pub fn from_state(dimension: Dimension, s: &[T; 4]) -> Self {
        Self::from_euclidean(dimension, [s[0], s[1]], [s[2], s[3]])
    }

    /// ⟨z⟩ = (1 + |z|^2)^{1/2}.
    pub fn japanese_bracket(&self) -> T {
        bracket(self.radius())
    }
}
