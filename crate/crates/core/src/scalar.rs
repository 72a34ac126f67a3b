//! Floating-point scalar abstraction.
//!
//! Every geometric and regression quantity in this crate is generic over a
//! [`Scalar`], so the same pipeline runs in `f32` (the on-disk grid payload
//! type) or `f64` (when tighter tolerances matter). Concrete aliases for the
//! common instantiations live at the crate root.

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Serialize
    + DeserializeOwned
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the working scalar type.
///
/// Panics only if the scalar type cannot represent any finite `f64`, which
/// does not happen for the two implementors.
#[inline]
pub(crate) fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 converts to scalar")
}

/// Coordinate of the sample point of row/column `idx`: the cell `[idx, idx+1)`
/// is sampled at its midpoint `idx + 0.5`.
#[inline]
pub(crate) fn sample_coord<T: Scalar>(idx: usize) -> T {
    cast::<T>(idx as f64 + 0.5)
}

/// Index of the unit cell `[k, k+1)` containing coordinate `x`, or `None` when
/// `x` is not finite or falls outside `[0, len)`.
#[inline]
pub(crate) fn containing_cell<T: Scalar>(x: T, len: usize) -> Option<usize> {
    if !x.is_finite() {
        return None;
    }
    let cell = x.floor().to_i64()?;
    if cell < 0 || (cell as u64) >= len as u64 {
        None
    } else {
        Some(cell as usize)
    }
}

/// Inclusive range of cell indices whose sample points fall inside the
/// half-open coordinate interval `[lo, hi)`, clamped to `[0, len)`. Empty
/// ranges yield `None`.
pub(crate) fn sample_range<T: Scalar>(lo: T, hi: T, len: usize) -> Option<(usize, usize)> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return None;
    }
    let half = cast::<T>(0.5);
    // Smallest k with k + 0.5 >= lo, largest k with k + 0.5 < hi.
    let first = (lo - half).ceil();
    let last = (hi - half).ceil() - T::one();
    let first = first.to_i64()?.max(0);
    let last = last.to_i64()?.min(len as i64 - 1);
    if first > last {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_coord_is_cell_midpoint() {
        assert_eq!(sample_coord::<f64>(0), 0.5);
        assert_eq!(sample_coord::<f64>(7), 7.5);
    }

    #[test]
    fn containing_cell_half_open() {
        assert_eq!(containing_cell(0.0f64, 4), Some(0));
        assert_eq!(containing_cell(0.999f64, 4), Some(0));
        assert_eq!(containing_cell(1.0f64, 4), Some(1));
        assert_eq!(containing_cell(4.0f64, 4), None);
        assert_eq!(containing_cell(-0.25f64, 4), None);
        assert_eq!(containing_cell(f64::NAN, 4), None);
    }

    #[test]
    fn sample_range_boundaries() {
        // Samples at k + 0.5; [1.0, 4.0) covers 1.5, 2.5, 3.5.
        assert_eq!(sample_range(1.0f64, 4.0, 10), Some((1, 3)));
        // Exactly-on-sample lower bound is included, upper excluded.
        assert_eq!(sample_range(1.5f64, 3.5, 10), Some((1, 2)));
        // Degenerate and out-of-grid intervals.
        assert_eq!(sample_range(2.0f64, 2.0, 10), None);
        assert_eq!(sample_range(12.0f64, 14.0, 10), None);
        assert_eq!(sample_range(8.0f64, 14.0, 10), Some((8, 9)));
    }
}
