//! Dormand–Prince 5(4) with FSAL and PI-free step control.

use crate::scalar::{lit, Real};

pub type State<T> = [T; 4];

#[derive(Clone, Copy, Debug)]
pub struct StepControl<T> {
    pub rtol: T,
    pub atol: T,
    pub h_max: T,
    pub h_min: T,
    /// Number of leading state components that carry error (the rest are inert).
    pub active: usize,
}

/// What the observer wants after an accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Underflow<T> {
    pub t: T,
    pub state: State<T>,
}

#[inline]
fn comb<T: Real>(y: &State<T>, h: T, ks: &[&State<T>], cs: &[f64]) -> State<T> {
    let mut out = *y;
    for (k, &c) in ks.iter().zip(cs) {
        if c == 0.0 {
            continue;
        }
        let hc = h * lit::<T>(c);
        for i in 0..4 {
            out[i] = out[i] + hc * k[i];
        }
    }
    out
}

/// Integrates `f` from `t0` towards `t1` (either direction), calling `observe` after every
/// accepted step. Returns the final time and state, stopping early when the observer asks.
pub fn integrate<T, F, O>(
    f: F,
    y0: State<T>,
    t0: T,
    t1: T,
    ctl: &StepControl<T>,
    observe: O,
) -> Result<(T, State<T>), Underflow<T>>
where
    T: Real,
    F: Fn(&State<T>) -> State<T>,
    O: FnMut(T, &State<T>) -> Control,
{
    integrate_projected(f, |_: &mut State<T>| {}, y0, t0, t1, ctl, observe)
}

/// As [`integrate`], applying `project` to every accepted state (e.g. a projection back onto
/// a conserved level set) before it is observed and used for the next step.
pub fn integrate_projected<T, F, P, O>(
    f: F,
    project: P,
    y0: State<T>,
    t0: T,
    t1: T,
    ctl: &StepControl<T>,
    mut observe: O,
) -> Result<(T, State<T>), Underflow<T>>
where
    T: Real,
    F: Fn(&State<T>) -> State<T>,
    P: Fn(&mut State<T>),
    O: FnMut(T, &State<T>) -> Control,
{
    let dir = if t1 >= t0 { T::one() } else { -T::one() };
    let mut t = t0;
    let mut y = y0;
    if t == t1 {
        return Ok((t, y));
    }
    let mut k1 = f(&y);
    let mut h = initial_step(&y, &k1, ctl).min((t1 - t0).abs());
    let (safety, fmin, fmax) = (lit::<T>(0.9), lit::<T>(0.2), lit::<T>(5.0));
    let fifth = lit::<T>(0.2);
    loop {
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = h * dir;
        let k2 = f(&comb(&y, hs, &[&k1], &[1.0 / 5.0]));
        let k3 = f(&comb(&y, hs, &[&k1, &k2], &[3.0 / 40.0, 9.0 / 40.0]));
        let k4 = f(&comb(&y, hs, &[&k1, &k2, &k3], &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0]));
        let k5 = f(&comb(
            &y,
            hs,
            &[&k1, &k2, &k3, &k4],
            &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        ));
        let k6 = f(&comb(
            &y,
            hs,
            &[&k1, &k2, &k3, &k4, &k5],
            &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        ));
        let y5 = comb(
            &y,
            hs,
            &[&k1, &k3, &k4, &k5, &k6],
            &[35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        );
        let k7 = f(&y5);
        let e = comb(
            &[T::zero(); 4],
            hs,
            &[&k1, &k3, &k4, &k5, &k6, &k7],
            &[
                71.0 / 57600.0,
                -71.0 / 16695.0,
                71.0 / 1920.0,
                -17253.0 / 339200.0,
                22.0 / 525.0,
                -1.0 / 40.0,
            ],
        );
        let mut err = T::zero();
        for i in 0..ctl.active {
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(y5[i].abs());
            let r = (e[i] / sc).abs();
            // NaN must reject the step, so no f64::max here.
            if r.is_nan() || r > err {
                err = r;
                if r.is_nan() {
                    break;
                }
            }
        }
        if err <= T::one() && err.is_finite() {
            t = if last { t1 } else { t + hs };
            y = y5;
            project(&mut y);
            k1 = if y == y5 { k7 } else { f(&y) };
            if observe(t, &y) == Control::Stop || last {
                return Ok((t, y));
            }
            let fac = if err == T::zero() { fmax } else { (safety * err.powf(-fifth)).min(fmax).max(fmin) };
            h = (h * fac).min(ctl.h_max);
        } else {
            let fac = if err.is_finite() { (safety * err.powf(-fifth)).max(fmin) } else { fmin };
            h = h * fac;
            if h < ctl.h_min {
                return Err(Underflow { t, state: y });
            }
        }
    }
}

fn initial_step<T: Real>(y: &State<T>, k: &State<T>, ctl: &StepControl<T>) -> T {
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for i in 0..ctl.active {
        let sc = ctl.atol + ctl.rtol * y[i].abs();
        d0 = d0 + (y[i] / sc).powi(2);
        d1 = d1 + (k[i] / sc).powi(2);
    }
    let h = if d1 <= lit(1e-10) || d0 <= lit(1e-10) {
        lit(1e-6)
    } else {
        lit::<T>(0.01) * (d0 / d1).sqrt()
    };
    h.min(ctl.h_max).max(ctl.h_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(tol: f64) -> StepControl<f64> {
        StepControl { rtol: tol, atol: tol, h_max: 1.0, h_min: 1e-14, active: 2 }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let f = |y: &State<f64>| [y[1], -y[0], 0.0, 0.0];
        let tp = 2.0 * std::f64::consts::PI;
        let (t, y) = integrate(f, [1.0, 0.0, 0.0, 0.0], 0.0, tp, &ctl(1e-12), |_, _| Control::Continue).unwrap();
        assert_eq!(t, tp);
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
        let (_, y) = integrate(f, [1.0, 0.0, 0.0, 0.0], 0.0, -tp / 4.0, &ctl(1e-12), |_, _| Control::Continue).unwrap();
        assert!(y[0].abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn observer_can_stop() {
        let f = |_: &State<f64>| [1.0, 0.0, 0.0, 0.0];
        let (t, y) = integrate(f, [0.0; 4], 0.0, 100.0, &ctl(1e-8), |_, y| {
            if y[0] > 3.0 { Control::Stop } else { Control::Continue }
        })
        .unwrap();
        assert!(t > 3.0 && t < 100.0 && (y[0] - t).abs() < 1e-12);
    }

    #[test]
    fn blow_up_reports_underflow() {
        let f = |y: &State<f64>| [y[0] * y[0], 0.0, 0.0, 0.0];
        let r = integrate(f, [1.0, 0.0, 0.0, 0.0], 0.0, 2.0, &ctl(1e-10), |_, _| Control::Continue);
        let u = r.unwrap_err();
        assert!(u.t < 1.0 && u.t > 0.9);
    }
}
