//! Numeric traits the engine is generic over.
//!
//! Hidden weights are stored in any signed primitive integer wide enough
//! for the configured bit width `B`. Real-valued inputs (encoders, frame
//! cost) are generic over [`num_traits::Float`]. Hyperparameters that feed
//! comparisons in the training path are turned into exact rationals once
//! and then into integer cut-offs.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{AsPrimitive, Float, FromPrimitive, PrimInt, Signed};

use crate::error::{Error, Result};

/// Storage type for hidden integer weights.
pub trait Stability:
    PrimInt + Signed + AsPrimitive<i64> + FromPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Largest `B` this type can hold.
    const MAX_BITS: u32;

    #[inline]
    fn widen(self) -> i64 {
        self.as_()
    }

    /// Narrows a value already known to lie inside the B-bit range.
    #[inline]
    fn narrow(v: i64) -> Self {
        Self::from_i64(v).expect("value inside configured bit range")
    }
}

macro_rules! impl_stability {
    ($($t:ty),*) => {$(
        impl Stability for $t {
            const MAX_BITS: u32 = <$t>::BITS;
        }
    )*};
}

impl_stability!(i8, i16, i32, i64);

/// Inclusive range of a `B`-bit two's-complement integer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitRange {
    pub bits: u32,
    pub min: i64,
    pub max: i64,
}

impl BitRange {
    pub fn new<S: Stability>(bits: u32) -> Result<Self> {
        if bits < 2 || bits > S::MAX_BITS {
            return Err(Error::Config(format!(
                "hidden weight width B={bits} must be in 2..={}",
                S::MAX_BITS
            )));
        }
        let half = 1i64 << (bits - 1);
        Ok(Self {
            bits,
            min: -half,
            max: half - 1,
        })
    }

    /// Clamps `v`; the flag reports whether clamping happened.
    #[inline]
    pub fn saturate(&self, v: i64) -> (i64, bool) {
        if v > self.max {
            (self.max, true)
        } else if v < self.min {
            (self.min, true)
        } else {
            (v, false)
        }
    }
}

const MAX_DENOM: i64 = 1 << 24;

/// Best rational approximation of a configured real hyperparameter, with
/// denominator at most 2^24.
///
/// Decimal literals such as 0.05 or 0.3 are recovered exactly; the bounds
/// keep the cut-off products inside i64.
pub fn to_ratio<F: Float>(x: F) -> Result<Ratio<i64>> {
    let v = x
        .to_f64()
        .ok_or_else(|| Error::Config("hyperparameter not representable".into()))?;
    if !v.is_finite() || v.abs() > MAX_DENOM as f64 {
        return Err(Error::Config(format!(
            "hyperparameter {v} has no usable rational form"
        )));
    }
    // continued-fraction convergents h/k of |v|
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut rest = v.abs();
    for _ in 0..64 {
        let a = rest.floor();
        let (h2, k2) = (a as i64 * h1 + h0, a as i64 * k1 + k0);
        if k2 > MAX_DENOM {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = rest - a;
        if frac <= f64::EPSILON
            || (h1 as f64 / k1 as f64 - v.abs()).abs() <= f64::EPSILON * v.abs().max(1.0)
        {
            break;
        }
        rest = 1.0 / frac;
    }
    let numer = if v < 0.0 { -h1 } else { h1 };
    Ok(Ratio::new(numer, k1))
}

/// Smallest integer strictly greater than every integer `m` with `m < q·k`.
///
/// For integer `m`: `m < q·k  ⇔  m < ceil(q·k)`.
pub fn strict_upper_cutoff(q: Ratio<i64>, k: usize) -> i64 {
    (q * Ratio::from_integer(k as i64)).ceil().to_integer()
}

/// Largest integer `m` with `m ≤ q·k`.
pub fn inclusive_cutoff(q: Ratio<i64>, k: usize) -> i64 {
    (q * Ratio::from_integer(k as i64)).floor().to_integer()
}
