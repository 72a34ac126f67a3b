//! Axis-aligned rectangles in center/size form and the overlap measures used
//! by box filtering and word clustering.
//!
//! The global coordinate convention: x grows with column index, y grows with
//! row index, and the pixel at `(row i, col j)` occupies the half-open unit
//! square `[j, j+1) x [i, i+1)` with its sample point at `(j+0.5, i+0.5)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Rejected rectangle parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RectError {
    #[error("rect width and height must be positive and finite, got w={w} h={h}")]
    InvalidSize { w: f64, h: f64 },
    #[error("rect center must be finite, got cx={cx} cy={cy}")]
    InvalidCenter { cx: f64, cy: f64 },
}

/// Axis-aligned rectangle stored as center plus size, matching the form the
/// network regresses. Corner coordinates are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect<T> {
    cx: T,
    cy: T,
    w: T,
    h: T,
}

impl<T: Scalar> Rect<T> {
    /// Build a rectangle, rejecting non-finite centers and non-positive or
    /// non-finite sizes. Degenerate sizes are an error rather than being
    /// clamped so that encoder bugs surface at the source.
    pub fn new(cx: T, cy: T, w: T, h: T) -> Result<Self, RectError> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(RectError::InvalidCenter {
                cx: cx.to_f64().unwrap_or(f64::NAN),
                cy: cy.to_f64().unwrap_or(f64::NAN),
            });
        }
        if !(w.is_finite() && h.is_finite()) || w <= T::zero() || h <= T::zero() {
            return Err(RectError::InvalidSize {
                w: w.to_f64().unwrap_or(f64::NAN),
                h: h.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Build from corner coordinates; `right > left` and `bottom > top`.
    pub fn from_corners(left: T, top: T, right: T, bottom: T) -> Result<Self, RectError> {
        let two = T::one() + T::one();
        Self::new(
            (left + right) / two,
            (top + bottom) / two,
            right - left,
            bottom - top,
        )
    }

    pub fn cx(&self) -> T {
        self.cx
    }

    pub fn cy(&self) -> T {
        self.cy
    }

    pub fn w(&self) -> T {
        self.w
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn left(&self) -> T {
        let two = T::one() + T::one();
        self.cx - self.w / two
    }

    pub fn right(&self) -> T {
        let two = T::one() + T::one();
        self.cx + self.w / two
    }

    pub fn top(&self) -> T {
        let two = T::one() + T::one();
        self.cy - self.h / two
    }

    pub fn bottom(&self) -> T {
        let two = T::one() + T::one();
        self.cy + self.h / two
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// Area of the intersection with `other`; zero when disjoint.
    pub fn intersection_area(&self, other: &Self) -> T {
        let dx = self.right().min(other.right()) - self.left().max(other.left());
        let dy = self.bottom().min(other.bottom()) - self.top().max(other.top());
        if dx > T::zero() && dy > T::zero() {
            dx * dy
        } else {
            T::zero()
        }
    }

    /// Smallest rectangle containing both `self` and `other`.
    pub fn union_bound(&self, other: &Self) -> Self {
        let left = self.left().min(other.left());
        let top = self.top().min(other.top());
        let right = self.right().max(other.right());
        let bottom = self.bottom().max(other.bottom());
        // Unions of valid rects are valid.
        Self::from_corners(left, top, right, bottom).expect("union of valid rects")
    }

    /// Point reflection through `center`: same size, mirrored position.
    pub fn reflect_through(&self, center: (T, T)) -> Self {
        let two = T::one() + T::one();
        Self {
            cx: two * center.0 - self.cx,
            cy: two * center.1 - self.cy,
            w: self.w,
            h: self.h,
        }
    }

    /// Swap the two axes, mapping `(x, y)` to `(y, x)`.
    pub fn transpose(&self) -> Self {
        Self {
            cx: self.cy,
            cy: self.cx,
            w: self.h,
            h: self.w,
        }
    }

    /// Convert every component to a different scalar type.
    pub fn convert<U: Scalar>(&self) -> Rect<U> {
        let c = |v: T| U::from_f64(v.to_f64().expect("scalar to f64")).expect("f64 to scalar");
        Rect {
            cx: c(self.cx),
            cy: c(self.cy),
            w: c(self.w),
            h: c(self.h),
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Rect<T> {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw<T> {
            cx: T,
            cy: T,
            w: T,
            h: T,
        }
        let raw = Raw::deserialize(deserializer)?;
        Rect::new(raw.cx, raw.cy, raw.w, raw.h).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union of two rectangles, in `[0, 1]`.
///
/// Clamped to the declared range: recomputing corners from center/size can
/// overshoot the exact ratio by an ulp in containment cases.
pub fn iou<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> T {
    let inter = a.intersection_area(b);
    if inter <= T::zero() {
        return T::zero();
    }
    (inter / (a.area() + b.area() - inter)).min(T::one())
}

/// Intersection area divided by the area of the smaller rectangle, in `[0, 1]`.
pub fn overlap_fraction_of_smaller<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> T {
    let inter = a.intersection_area(b);
    if inter <= T::zero() {
        return T::zero();
    }
    (inter / a.area().min(b.area())).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(cx: f64, cy: f64, w: f64, h: f64) -> Rect<f64> {
        Rect::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(Rect::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(Rect::new(f64::INFINITY, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn corner_accessors() {
        let a = r(1.0, 2.0, 4.0, 6.0);
        assert_eq!(a.left(), -1.0);
        assert_eq!(a.right(), 3.0);
        assert_eq!(a.top(), -1.0);
        assert_eq!(a.bottom(), 5.0);
        assert_eq!(a.area(), 24.0);
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = r(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let far = r(100.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &far), 0.0);
    }

    #[test]
    fn iou_hand_computed_overlap() {
        // Unit squares of side 2 sharing a 1x2 strip: intersection 2, union 6.
        let a = r(1.0, 1.0, 2.0, 2.0);
        let b = r(2.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_fraction_cases() {
        let a = r(1.0, 1.0, 2.0, 2.0);
        assert_eq!(overlap_fraction_of_smaller(&a, &a), 1.0);

        // Same pair as the IoU case: intersection 2 over the smaller area 4.
        let b = r(2.0, 1.0, 2.0, 2.0);
        assert!((overlap_fraction_of_smaller(&a, &b) - 0.5).abs() < 1e-12);

        // Full containment saturates at 1 regardless of the size ratio.
        let big = r(2.0, 1.0, 4.0, 2.0);
        assert_eq!(overlap_fraction_of_smaller(&a, &big), 1.0);
        let inner = r(1.0, 1.0, 0.5, 0.5);
        let outer = r(1.2, 1.1, 4.0, 4.0);
        assert_eq!(overlap_fraction_of_smaller(&inner, &outer), 1.0);
    }

    #[test]
    fn reflection_arithmetic() {
        let c = r(0.0, 0.0, 2.0, 2.0);
        let m = c.reflect_through((3.0, 0.0));
        assert_eq!(m.cx(), 6.0);
        assert_eq!(m.cy(), 0.0);
        assert_eq!(m.w(), 2.0);
        let u = c.union_bound(&m);
        assert_eq!(u.left(), -1.0);
        assert_eq!(u.right(), 7.0);
        assert_eq!((u.cx(), u.cy(), u.w(), u.h()), (3.0, 0.0, 8.0, 2.0));
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let a = r(1.5, -2.0, 3.0, 4.0);
        let json = serde_json::to_string(&a).unwrap();
        let back: Rect<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        let bad: Result<Rect<f64>, _> =
            serde_json::from_str(r#"{"cx":0.0,"cy":0.0,"w":-1.0,"h":1.0}"#);
        assert!(bad.is_err());
    }

    fn arb_rect() -> impl Strategy<Value = Rect<f64>> {
        (
            -50.0f64..50.0,
            -50.0f64..50.0,
            0.01f64..40.0,
            0.01f64..40.0,
        )
            .prop_map(|(cx, cy, w, h)| Rect::new(cx, cy, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded_and_below_fraction(a in arb_rect(), b in arb_rect()) {
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            let frac = overlap_fraction_of_smaller(&a, &b);
            prop_assert!((0.0..=1.0).contains(&frac));
            prop_assert!(ab <= frac + 1e-12);
        }

        #[test]
        fn iou_self_is_one(a in arb_rect()) {
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
