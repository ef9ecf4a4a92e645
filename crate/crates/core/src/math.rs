//! Planar vector helpers and angle utilities.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[S; 2]", into = "[S; 2]")]
pub struct Vec2<S: Real> {
    pub x: S,
    pub y: S,
}

impl<S: Real> From<[S; 2]> for Vec2<S> {
    fn from(a: [S; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl<S: Real> From<Vec2<S>> for [S; 2] {
    fn from(v: Vec2<S>) -> Self {
        [v.x, v.y]
    }
}

impl<S: Real> Vec2<S> {
    #[inline]
    pub fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero())
    }

    /// Unit vector at `angle` radians.
    #[inline]
    pub fn from_angle(angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    #[inline]
    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> S {
        self.x * o.y - self.y * o.x
    }

    /// `w × self` for a scalar angular rate `w`.
    #[inline]
    pub fn cross_scalar(w: S, v: Self) -> Self {
        Self::new(-w * v.y, w * v.x)
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn length_squared(self) -> S {
        self.dot(self)
    }

    #[inline]
    pub fn length(self) -> S {
        self.x.hypot(self.y)
    }

    /// Rotates by the angle whose (sin, cos) is given.
    #[inline]
    pub fn rotate_sc(self, sin: S, cos: S) -> Self {
        Self::new(cos * self.x - sin * self.y, sin * self.x + cos * self.y)
    }

    /// Inverse of [`Vec2::rotate_sc`].
    #[inline]
    pub fn unrotate_sc(self, sin: S, cos: S) -> Self {
        Self::new(cos * self.x + sin * self.y, -sin * self.x + cos * self.y)
    }

    #[inline]
    pub fn rotate(self, angle: S) -> Self {
        let (s, c) = angle.sin_cos();
        self.rotate_sc(s, c)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<S: Real> Add for Vec2<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<S: Real> AddAssign for Vec2<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x = self.x + o.x;
        self.y = self.y + o.y;
    }
}

impl<S: Real> Sub for Vec2<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<S: Real> SubAssign for Vec2<S> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x = self.x - o.x;
        self.y = self.y - o.y;
    }
}

impl<S: Real> Mul<S> for Vec2<S> {
    type Output = Self;
    #[inline]
    fn mul(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<S: Real> Neg for Vec2<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle<S: Real>(a: S) -> S {
    let pi = S::PI();
    let two_pi = pi + pi;
    if a > -pi && a <= pi {
        return a;
    }
    let mut r = a - two_pi * ((a + pi) / two_pi).floor();
    // r is now in [−π, π); map the lower endpoint onto +π.
    if r <= -pi {
        r = r + two_pi;
    }
    if r > pi {
        r = r - two_pi;
    }
    r
}

/// Absolute wrapped difference between two angles, in [0, π].
pub fn angdist<S: Real>(a: S, b: S) -> S {
    wrap_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_keeps_upper_endpoint() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5 - 4.0 * PI) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn angdist_across_seam() {
        let d = angdist(PI - 0.01, -PI + 0.01);
        assert!((d - 0.02).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn wrap_range(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((w - a) / (2.0 * PI)).fract().abs() < 1e-9
                || (1.0 - ((w - a) / (2.0 * PI)).fract().abs()) < 1e-9);
        }

        #[test]
        fn angdist_symmetric(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let d1 = angdist(a, b);
            let d2 = angdist(b, a);
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!(d1 <= PI);
        }
    }
}
