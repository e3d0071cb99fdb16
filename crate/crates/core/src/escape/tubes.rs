//! Flow-out tubes q_ξ = χ_ξ(t) φ_ξ(σ) ψ(p) covering the compact part K = {x >= x₀/4} of the
//! energy window. A point has flow coordinates (t, σ) when exp(tH_p) carries it to σ on the
//! transversal Σ through the seed ξ.

use rayon::prelude::*;

use crate::flow::rk::State;
use crate::flow::{advance_state, orbit, time_to_incoming, FlowError, FlowOptions};
use crate::geometry::{Dimension, ModelProblem, PhasePoint};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::smooth::{ramp_down, ramp_up, PlateauBump};

use super::{EscapeError, Witness};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubeOptions<T> {
    /// Radius of the transversal discs; `None` means 0.05λ.
    pub disc_radius: Option<T>,
    /// Minimum (z samples, energy samples) of the seeding grid on K; the z step is also capped
    /// at λ/2 so that consecutive seeds on an orbit are a quarter time unit apart. Certification
    /// grids double both counts.
    pub seed_grid: (usize, usize),
    pub max_refinements: usize,
    pub flow: FlowOptions<T>,
}

impl<T: Real> Default for TubeOptions<T> {
    fn default() -> Self {
        Self {
            disc_radius: None,
            seed_grid: (48, 12),
            max_refinements: 3,
            flow: FlowOptions { tol: lit(1e-12), ..FlowOptions::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tube<T> {
    pub seed: PhasePoint<T>,
    /// Unit normal of Σ, H_p(ξ)/|H_p(ξ)|.
    pub normal: State<T>,
    /// T_ξ: the backward flow is incoming (x < x₀/2, τ > 2λ/3) from here on.
    pub incoming_time: T,
    pub radius: T,
    /// Exponential rate of χ_ξ, 1/(T_ξ + 2).
    pub growth: T,
    lo: State<T>,
    hi: State<T>,
}

fn dot<T: Real>(a: &State<T>, b: &State<T>) -> T {
    (0..4).map(|i| a[i] * b[i]).sum()
}

fn dist<T: Real>(a: &State<T>, b: &State<T>) -> T {
    (0..4).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<T>().sqrt()
}

impl<T: Real> Tube<T> {
    /// χ_ξ(t) = e^{θt} U(t) D(t), U rising on (−15/16, −1/2), D falling on (T + 2/3, T + 31/16).
    pub fn chi(&self, t: T) -> (T, T) {
        let tt = self.incoming_time;
        let (a, b) = (lit::<T>(-15.0 / 16.0), tt + lit::<T>(31.0 / 16.0));
        if t <= a || t >= b {
            return (T::zero(), T::zero());
        }
        let (u, du) = ramp_up(t, a, lit(-0.5));
        let (d, dd) = ramp_down(t, tt + lit::<T>(2.0 / 3.0), b);
        let e = (self.growth * t).exp();
        let v = e * u * d;
        (v, self.growth * v + e * (du * d + u * dd))
    }

    /// φ_ξ(σ): one within radius/2 of the seed, zero beyond 15/16 of the radius.
    pub fn phi(&self, sigma: &State<T>) -> T {
        ramp_down(dist(sigma, &self.seed.state()) / self.radius, lit(0.5), lit(15.0 / 16.0)).0
    }

    fn offset(&self, y: &State<T>) -> T {
        let s = self.seed.state();
        (0..4).map(|i| (y[i] - s[i]) * self.normal[i]).sum()
    }

    fn contains(&self, y: &State<T>) -> bool {
        (0..4).all(|i| y[i] >= self.lo[i] && y[i] <= self.hi[i])
    }

    fn window_end(&self) -> T {
        self.incoming_time + lit(2.0)
    }

    /// Direction spanning the disc in the (z, ζ) plane of the line.
    fn disc_direction(&self) -> State<T> {
        let n = self.normal;
        let e = [-n[2], T::zero(), n[0], T::zero()];
        let l = dot(&e, &e).sqrt();
        e.map(|v| v / l)
    }

    fn disc_samples(&self) -> Vec<State<T>> {
        let e = self.disc_direction();
        let s = self.seed.state();
        [-15.0 / 16.0, -0.5, 0.0, 0.5, 15.0 / 16.0]
            .iter()
            .map(|&a| {
                let c = lit::<T>(a) * self.radius;
                [s[0] + c * e[0], s[1] + c * e[1], s[2] + c * e[2], s[3] + c * e[3]]
            })
            .collect()
    }

    /// Flow coordinates (t, σ) along the sampled orbit of a point, with t in the tube window
    /// (−1, T + 2) and σ inside the disc. `samples` is sorted by flow time.
    fn flow_coordinates(
        &self,
        model: &ModelProblem<T>,
        samples: &[(T, State<T>)],
        opts: &FlowOptions<T>,
    ) -> Result<Option<(T, State<T>)>, FlowError> {
        let (t_lo, t_hi) = (-T::one(), self.window_end());
        for w in samples.windows(2) {
            let ((sa, ya), (sb, yb)) = (w[0], w[1]);
            if sb <= t_lo || sa >= t_hi {
                continue;
            }
            let fa = self.offset(&ya);
            let fb = self.offset(&yb);
            let hit = if fa == T::zero() {
                Some((sa, ya))
            } else if fa * fb < T::zero() {
                Some(self.refine(model, sa, ya, fa, sb, yb, fb, opts)?)
            } else {
                None
            };
            if let Some((t, sigma)) = hit {
                if t > t_lo && t < t_hi && dist(&sigma, &self.seed.state()) < self.radius {
                    return Ok(Some((t, sigma)));
                }
            }
        }
        Ok(None)
    }

    /// Illinois iteration for the crossing of Σ between two bracketing samples.
    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        model: &ModelProblem<T>,
        s0: T,
        y0: State<T>,
        f0: T,
        s1: T,
        y1: State<T>,
        f1: T,
        opts: &FlowOptions<T>,
    ) -> Result<(T, State<T>), FlowError> {
        let (mut a, mut fa, mut b, mut fb) = (s0, f0, s1, f1);
        let mut best = if f0.abs() < f1.abs() { (s0, y0) } else { (s1, y1) };
        let mut side = 0i8;
        for _ in 0..80 {
            let c = (a * fb - b * fa) / (fb - fa);
            let yc = advance_state(model, &y0, c - s0, opts)?;
            let fc = self.offset(&yc);
            best = (c, yc);
            if fc == T::zero() || (b - a).abs() <= lit::<T>(1e-13) || fc.abs() <= lit::<T>(1e-15) {
                break;
            }
            if fc * fb < T::zero() {
                a = b;
                fa = fb;
                b = c;
                fb = fc;
                side = 0;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa = fa / lit(2.0);
                }
                side = 1;
            }
        }
        Ok(best)
    }
}

/// The finite tube cover and its certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeCollection<T> {
    pub tubes: Vec<Tube<T>>,
    pub psi: PlateauBump<T>,
    pub x0: T,
    pub lambda: T,
    /// Points of the finest certification grid, all covered.
    pub certified_points: usize,
    /// Certification rounds used.
    pub refinements: usize,
    pub flow: FlowOptions<T>,
    lo: State<T>,
    hi: State<T>,
}

impl<T: Real> TubeCollection<T> {
    fn in_union(&self, y: &State<T>) -> bool {
        !self.tubes.is_empty() && (0..4).all(|i| y[i] >= self.lo[i] && y[i] <= self.hi[i])
    }

    /// Orbit of y over [−1, s_max], sorted by flow time.
    fn orbit_window(&self, model: &ModelProblem<T>, y: &State<T>, s_max: T) -> Result<Vec<(T, State<T>)>, FlowError> {
        let back = orbit(model, y, -T::one(), &self.flow)?;
        let fwd = orbit(model, y, s_max, &self.flow)?;
        let mut out: Vec<_> = back.into_iter().skip(1).rev().collect();
        out.extend(fwd);
        Ok(out)
    }

    fn candidates(&self, y: &State<T>) -> Vec<&Tube<T>> {
        if !self.in_union(y) {
            return Vec::new();
        }
        self.tubes.iter().filter(|t| t.contains(y)).collect()
    }

    /// q_∘ = Σ_j q_ξj and H_p q_∘ at a point.
    pub fn eval(&self, model: &ModelProblem<T>, pt: &PhasePoint<T>) -> Result<(T, T), EscapeError> {
        let (psi, _) = self.psi.eval(model.symbol(pt));
        let y = pt.state();
        if psi == T::zero() {
            return Ok((T::zero(), T::zero()));
        }
        let cands = self.candidates(&y);
        if cands.is_empty() {
            return Ok((T::zero(), T::zero()));
        }
        let s_max = cands.iter().map(|t| t.window_end()).fold(T::zero(), T::max);
        let samples = self.orbit_window(model, &y, s_max)?;
        let (mut v, mut h) = (T::zero(), T::zero());
        for tube in cands {
            if let Some((t, sigma)) = tube.flow_coordinates(model, &samples, &self.flow)? {
                let (c, dc) = tube.chi(t);
                let ph = tube.phi(&sigma);
                v = v + c * ph;
                h = h - dc * ph;
            }
        }
        Ok((v * psi, h * psi))
    }

    /// Contribution (q_ξj, H_p q_ξj) of the j-th tube alone.
    pub fn eval_tube(&self, j: usize, model: &ModelProblem<T>, pt: &PhasePoint<T>) -> Result<(T, T), EscapeError> {
        let tube = &self.tubes[j];
        let (psi, _) = self.psi.eval(model.symbol(pt));
        let y = pt.state();
        if psi == T::zero() || !tube.contains(&y) {
            return Ok((T::zero(), T::zero()));
        }
        let samples = self.orbit_window(model, &y, tube.window_end())?;
        Ok(match tube.flow_coordinates(model, &samples, &self.flow)? {
            Some((t, sigma)) => {
                let (c, dc) = tube.chi(t);
                let ph = tube.phi(&sigma);
                (c * ph * psi, -dc * ph * psi)
            }
            None => (T::zero(), T::zero()),
        })
    }

    /// True when the point lies in some U′_ξ: flow time in [−1/2, T + 1/2] and σ within half
    /// the disc radius.
    pub fn covers(&self, model: &ModelProblem<T>, pt: &PhasePoint<T>) -> Result<bool, EscapeError> {
        self.covers_shrunk(model, pt, T::one())
    }

    /// As [`covers`](Self::covers) with U′ shrunk by `s`: time in [−s/2, T + s/2], σ within
    /// s·radius/2. Seeding uses s < 1 so certification grids have slack.
    fn covers_shrunk(&self, model: &ModelProblem<T>, pt: &PhasePoint<T>, s: T) -> Result<bool, EscapeError> {
        let y = pt.state();
        let cands = self.candidates(&y);
        if cands.is_empty() {
            return Ok(false);
        }
        let half = lit::<T>(0.5);
        let s_max = cands.iter().map(|t| t.window_end()).fold(T::zero(), T::max);
        let samples = self.orbit_window(model, &y, s_max)?;
        for tube in cands {
            if let Some((t, sigma)) = tube.flow_coordinates(model, &samples, &self.flow)? {
                let inner = t >= -s * half && t <= tube.incoming_time + s * half;
                if inner && dist(&sigma, &tube.seed.state()) <= s * tube.radius * half {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn push(&mut self, tube: Tube<T>) {
        if self.tubes.is_empty() {
            self.lo = tube.lo;
            self.hi = tube.hi;
        } else {
            for i in 0..4 {
                self.lo[i] = self.lo[i].min(tube.lo[i]);
                self.hi[i] = self.hi[i].max(tube.hi[i]);
            }
        }
        self.tubes.push(tube);
    }
}

/// Grid on K: z uniform in |z| <= 4/x₀, energies at the midpoints of 2δ/n_e cells, both signs.
pub fn k_grid<T: Real>(model: &ModelProblem<T>, x0: T, n_z: usize, n_e: usize) -> Vec<PhasePoint<T>> {
    let zmax = lit::<T>(4.0) / x0;
    let l2 = model.lambda2();
    let mut out = Vec::with_capacity(2 * n_z * n_e);
    for j in 0..n_e {
        let e = l2 - model.delta
            + lit::<T>(2.0) * model.delta * (from_usize::<T>(j) + lit(0.5)) / from_usize::<T>(n_e);
        for sign in [T::one(), -T::one()] {
            for i in 0..n_z {
                let z = zmax * (lit::<T>(2.0) * (from_usize::<T>(i) + lit(0.5)) / from_usize::<T>(n_z) - T::one());
                let k2 = e - model.potential.value(z);
                if k2 > T::zero() {
                    out.push(model.point([z, T::zero()], [sign * k2.sqrt(), T::zero()]));
                }
            }
        }
    }
    out
}

fn make_tube<T: Real>(
    model: &ModelProblem<T>,
    seed: &PhasePoint<T>,
    x0: T,
    radius: T,
    psi: &PlateauBump<T>,
    flow: &FlowOptions<T>,
) -> Result<Tube<T>, EscapeError> {
    let lambda = model.lambda;
    let tau_in = lit::<T>(2.0 / 3.0) * lambda;
    let t_in = time_to_incoming(model, seed, x0 / lit(2.0), tau_in, flow)?;
    let f = model.field_vec(&seed.state());
    let nf = dot(&f, &f).sqrt();
    let mut tube = Tube {
        seed: *seed,
        normal: f.map(|v| v / nf),
        incoming_time: t_in,
        radius,
        growth: T::one() / (t_in + lit(2.0)),
        lo: seed.state(),
        hi: seed.state(),
    };
    let half = lit::<T>(0.5);
    let mut attempts = 0;
    loop {
        let tt = tube.incoming_time;
        let mut late_ok = true;
        let mut lo = seed.state();
        let mut hi = seed.state();
        for sigma in tube.disc_samples() {
            let back = orbit(model, &sigma, -(tt + lit(2.0)), flow)?;
            let fwd = orbit(model, &sigma, T::one(), flow)?;
            for (_, y) in back.iter().chain(fwd.iter()) {
                for i in 0..4 {
                    lo[i] = lo[i].min(y[i]);
                    hi[i] = hi[i].max(y[i]);
                }
            }
            if psi.value(model.symbol_euclidean([sigma[0], sigma[1]], [sigma[2], sigma[3]])) == T::zero() {
                continue;
            }
            for (s, y) in &back {
                if *s <= -(tt + half) {
                    let p = PhasePoint::from_state(model.dimension, y);
                    if !(p.x < x0 * half && p.tau > tau_in) {
                        late_ok = false;
                    }
                }
            }
        }
        let pad = lit::<T>(2.0) * radius;
        tube.lo = lo.map(|v| v - pad);
        tube.hi = hi.map(|v| v + pad);
        if late_ok {
            return Ok(tube);
        }
        attempts += 1;
        if attempts > 8 {
            return Err(EscapeError::Disjointness {
                seed: Witness::new(model, seed, 0.0),
                incoming_time: to_f64(tube.incoming_time),
            });
        }
        tube.incoming_time = tube.incoming_time + half;
        tube.growth = T::one() / (tube.incoming_time + lit(2.0));
    }
}

/// Greedy tube cover of K, certified on successively finer grids.
pub fn build_tubes<T: Real>(
    model: &ModelProblem<T>,
    x0: T,
    psi: PlateauBump<T>,
    opts: &TubeOptions<T>,
) -> Result<TubeCollection<T>, EscapeError> {
    if model.dimension != Dimension::One {
        return Err(EscapeError::UnsupportedDimension);
    }
    let radius = opts.disc_radius.unwrap_or(lit::<T>(0.05) * model.lambda);
    let mut coll = TubeCollection {
        tubes: Vec::new(),
        psi,
        x0,
        lambda: model.lambda,
        certified_points: 0,
        refinements: 0,
        flow: opts.flow,
        lo: [T::zero(); 4],
        hi: [T::zero(); 4],
    };
    let (n_z, n_e) = opts.seed_grid;
    let span = lit::<T>(8.0) / (x0 * lit::<T>(0.5) * model.lambda);
    let n_z = n_z.max(to_f64(span.ceil()) as usize);
    let mut pending = k_grid(model, x0, n_z, n_e);
    let mut level = 0;
    loop {
        // Points furthest along the flow first: their tubes cover the whole backward history.
        let progress = |p: &PhasePoint<T>| if p.zeta[0] < T::zero() { -p.z[0] } else { p.z[0] };
        pending.sort_by(|a, b| progress(b).partial_cmp(&progress(a)).unwrap_or(std::cmp::Ordering::Equal));
        for pt in &pending {
            if !coll.covers_shrunk(model, pt, lit(0.7))? {
                let tube = make_tube(model, pt, x0, radius, &psi, &opts.flow)?;
                coll.push(tube);
            }
        }
        level += 1;
        let grid = k_grid(model, x0, n_z << level, n_e << level);
        let flags: Vec<Result<bool, EscapeError>> = grid.par_iter().map(|pt| coll.covers(model, pt)).collect();
        let mut uncovered = Vec::new();
        for (pt, f) in grid.iter().zip(flags) {
            if !f? {
                uncovered.push(*pt);
            }
        }
        coll.certified_points = grid.len();
        coll.refinements = level;
        if uncovered.is_empty() {
            return Ok(coll);
        }
        if level >= opts.max_refinements {
            return Err(EscapeError::Covering {
                uncovered: uncovered.iter().take(20).map(|p| Witness::new(model, p, 0.0)).collect(),
                count: uncovered.len(),
            });
        }
        pending = uncovered;
    }
}

/// q_∘ and H_p q_∘ at a point.
pub fn eval_q_circ<T: Real>(
    tubes: &TubeCollection<T>,
    model: &ModelProblem<T>,
    pt: &PhasePoint<T>,
) -> Result<(T, T), EscapeError> {
    tubes.eval(model, pt)
}
