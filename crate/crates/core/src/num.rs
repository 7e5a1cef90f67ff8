//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01};

/// Floating point scalar used for times and masses: `f32` or `f64`.
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
    /// One draw from the unit-rate exponential law.
    fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw from the open interval (0, 1).
    fn sample_open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` constant. Panics only for values the type cannot represent.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("constant representable in scalar type")
    }

    fn from_count(count: u64) -> Self {
        Self::from_u64(count).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance for "sums to one" checks: 1e-12, widened for low precision types.
    fn probability_tolerance() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(64.0))
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn sample_exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Exp1.sample(rng)
            }

            fn sample_open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Mean and standard error of the mean of a slice of values.
pub(crate) fn mean_and_se<T: Real>(values: impl ExactSizeIterator<Item = T> + Clone) -> (T, T) {
    let k = values.len();
    if k == 0 {
        return (T::nan(), T::nan());
    }
    let kt = T::from_count(k as u64);
    let mean = values.clone().sum::<T>() / kt;
    if k < 2 {
        return (mean, T::zero());
    }
    let ss: T = values.map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (kt - T::one());
    (mean, (var / kt).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_se_of_constant_is_zero_spread() {
        let v = [2.5f64; 10];
        let (m, se) = mean_and_se(v.iter().copied());
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn mean_and_se_matches_hand_computation() {
        let v = [1.0f64, 2.0, 3.0, 4.0];
        let (m, se) = mean_and_se(v.iter().copied());
        assert_eq!(m, 2.5);
        // s^2 = 5/3, se = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn probability_tolerance_is_precision_aware() {
        assert_eq!(f64::probability_tolerance(), 1e-12);
        assert!(f32::probability_tolerance() > 1e-7);
    }
}
