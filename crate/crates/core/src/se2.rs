//! Planar rigid motions: poses in SE(2) and twists in se(2).
//!
//! Twists are stored as `[v_x, v_y, omega]`, i.e. the same ordering as the
//! rows of a local connection (forward, lateral, rotational).

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Position and heading of a planar frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

pub fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Quarter-turn `J (x, y) = (-y, x)`.
#[inline]
pub fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

#[inline]
pub fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        x: 0.0,
        y: 0.0,
        alpha: 0.0,
    };

    pub fn new(x: f64, y: f64, alpha: f64) -> Self {
        Self { x, y, alpha }
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.alpha)
    }

    /// `self * other`: express `other` (given relative to `self`) in the outer frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let t = self.rotation() * other.translation() + self.translation();
        Pose::new(t.x, t.y, self.alpha + other.alpha)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Pose::new(t.x, t.y, -self.alpha)
    }

    /// Map a point given in this frame into the outer frame.
    pub fn transform_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation()
    }

    /// Map a point given in the outer frame into this frame.
    pub fn inverse_transform_point(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.rotation().transpose() * (p - self.translation())
    }

    /// Same pose with the heading wrapped into `(-pi, pi]`.
    pub fn normalized(&self) -> Pose {
        Pose::new(self.x, self.y, wrap_angle(self.alpha))
    }

    /// Group exponential of a twist.
    pub fn exp(twist: &Vector3<f64>) -> Pose {
        let w = twist.z;
        let (a, b) = if w.abs() < 1e-6 {
            let w2 = w * w;
            (1.0 - w2 / 6.0 + w2 * w2 / 120.0, w / 2.0 - w * w2 / 24.0)
        } else {
            (w.sin() / w, (1.0 - w.cos()) / w)
        };
        let v = Matrix2::new(a, -b, b, a) * Vector2::new(twist.x, twist.y);
        Pose::new(v.x, v.y, w)
    }

    /// Adjoint action on a twist: the twist seen from the outer frame.
    pub fn adjoint(&self, twist: &Vector3<f64>) -> Vector3<f64> {
        let v = self.rotation() * Vector2::new(twist.x, twist.y) - twist.z * perp(self.translation());
        Vector3::new(v.x, v.y, twist.z)
    }

    /// Left-invariant differential `T_e L_g` applied to a body twist.
    pub fn world_velocity(&self, twist: &Vector3<f64>) -> Vector3<f64> {
        let v = self.rotation() * Vector2::new(twist.x, twist.y);
        Vector3::new(v.x, v.y, twist.z)
    }
}

/// se(2) bracket `[(v1, w1), (v2, w2)] = (w1 J v2 - w2 J v1, 0)`.
pub fn bracket(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let va = Vector2::new(a.x, a.y);
    let vb = Vector2::new(b.x, b.y);
    let v = a.z * perp(vb) - b.z * perp(va);
    Vector3::new(v.x, v.y, 0.0)
}
