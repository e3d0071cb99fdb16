//! Scalar abstraction shared by every numerical routine in the crate.

use std::cell::RefCell;
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftPlanner;

/// Floating-point type the toolkit is generic over. Implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon scaled tolerance used by iterative refinements.
    fn tiny() -> Self {
        Self::epsilon() * lit(16.0)
    }

    /// In-place unnormalized DFT (`inverse` selects the e^{+i} sign).
    fn fft(buf: &mut [Complex<Self>], inverse: bool);
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn fft(buf: &mut [Complex<Self>], inverse: bool) {
                thread_local! {
                    static PLANNER: RefCell<FftPlanner<$t>> = RefCell::new(FftPlanner::new());
                }
                let plan = PLANNER.with(|p| {
                    let mut p = p.borrow_mut();
                    if inverse {
                        p.plan_fft_inverse(buf.len())
                    } else {
                        p.plan_fft_forward(buf.len())
                    }
                });
                plan.process(buf);
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("literal representable")
}

/// Converts a count into `T`.
#[inline(always)]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable")
}

/// Lossy conversion to `f64` for reporting.
#[inline(always)]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Japanese bracket <s> = sqrt(1 + s^2).
#[inline]
pub fn bracket<T: Real>(s: T) -> T {
    (T::one() + s * s).sqrt()
}
