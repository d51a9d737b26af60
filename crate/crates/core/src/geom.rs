//! Rigid-transform algebra.
//!
//! A [`Motor`] is stored as a unit dual quaternion: the real part carries the
//! rotation and the dual part carries the translation as `0.5 · t · real`.
//! All math runs in `f64`; the network and file layers narrow to `f32`.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used by [`Motor::is_valid`] and [`Pose::is_valid`].
pub const MANIFOLD_EPS: f64 = 1e-6;

/// Inputs further than this from unit norm are rejected rather than renormalized.
pub const INPUT_NORM_EPS: f64 = 1e-4;

const DEGENERATE_BLEND_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate interpolation: blended rotation has norm {0:e}")]
    DegenerateInterpolation(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or zero for a zero vector.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec3::ZERO
        }
    }

    #[inline]
    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn min_components(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_components(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn max_abs_component(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Some unit vector perpendicular to `self` (which must be non-zero).
    pub fn any_perpendicular(self) -> Vec3 {
        let a = if self.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
        self.cross(a).normalized()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Quaternion `w + xi + yj + zk` (Hamilton convention).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        q.to_array()
    }
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const ZERO: Quat = Quat { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    #[inline]
    pub fn pure(v: Vec3) -> Self {
        Quat::new(0.0, v.x, v.y, v.z)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    #[inline]
    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        self.scale(1.0 / n)
    }

    /// Rotate `v` by this (unit) quaternion.
    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle in radians between two unit quaternions, in `[0, π]`.
    pub fn angle_to(self, o: Quat) -> f64 {
        // atan2 form stays accurate for tiny angles where acos loses precision
        let r = self.conjugate() * o;
        2.0 * Vec3::new(r.x, r.y, r.z).norm().atan2(r.w.abs())
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(self, o: Quat, t: f64) -> Quat {
        let mut b = o;
        let mut d = self.dot(o);
        if d < 0.0 {
            b = -b;
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            return (self.scale(1.0 - t) + b.scale(t)).normalized();
        }
        let theta = d.acos();
        let s = theta.sin();
        let wa = ((1.0 - t) * theta).sin() / s;
        let wb = (t * theta).sin() / s;
        (self.scale(wa) + b.scale(wb)).normalized()
    }

    /// Row-major 3×3 rotation matrix.
    pub fn to_rotation_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Inverse of [`Quat::to_rotation_matrix`] (Shepperd's method).
    pub fn from_rotation_matrix(m: &[[f64; 3]; 3]) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s)
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new((m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s)
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new((m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s)
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new((m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s)
        };
        q.normalized()
    }
}

impl Add for Quat {
    type Output = Quat;
    #[inline]
    fn add(self, o: Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quat {
    type Output = Quat;
    #[inline]
    fn sub(self, o: Quat) -> Quat {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quat {
    type Output = Quat;
    #[inline]
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quat {
    type Output = Quat;
    #[inline]
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Position plus orientation; the interchange form for scene objects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Quat::IDENTITY };

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Pose { position, orientation }
    }

    pub fn from_position(position: Vec3) -> Self {
        Pose { position, orientation: Quat::IDENTITY }
    }

    pub fn is_valid(&self) -> bool {
        (self.orientation.norm() - 1.0).abs() <= MANIFOLD_EPS && self.position.is_finite()
    }

    /// `self ∘ local`: express a pose given in this frame in the parent frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        Pose { position: self.position + self.orientation.rotate(local.position), orientation: (self.orientation * local.orientation).normalized() }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }
}

/// Rigid transform as a unit dual quaternion (8 coefficients).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motor {
    pub real: Quat,
    pub dual: Quat,
}

impl Default for Motor {
    fn default() -> Self {
        Motor::IDENTITY
    }
}

impl Motor {
    pub const IDENTITY: Motor = Motor { real: Quat::IDENTITY, dual: Quat::ZERO };

    /// Build from a pose. Orientations within [`INPUT_NORM_EPS`] of unit length
    /// are renormalized; anything further off is rejected.
    pub fn from_pose(p: &Pose) -> Result<Motor, GeomError> {
        let n = p.orientation.norm();
        if !n.is_finite() || (n - 1.0).abs() > INPUT_NORM_EPS {
            return Err(GeomError::InvalidInput(format!("orientation norm {n} is not unit")));
        }
        if !p.position.is_finite() {
            return Err(GeomError::InvalidInput("non-finite position".into()));
        }
        let real = if n == 1.0 { p.orientation } else { p.orientation.scale(1.0 / n) };
        let dual = (Quat::pure(p.position) * real).scale(0.5);
        Ok(Motor { real, dual })
    }

    pub fn from_translation(t: Vec3) -> Motor {
        Motor { real: Quat::IDENTITY, dual: Quat::pure(t * 0.5) }
    }

    pub fn from_rotation(q: Quat) -> Motor {
        Motor { real: q.normalized(), dual: Quat::ZERO }
    }

    pub fn translation(&self) -> Vec3 {
        (self.dual * self.real.conjugate()).vector() * 2.0
    }

    pub fn rotation(&self) -> Quat {
        self.real
    }

    pub fn to_pose(&self) -> Pose {
        Pose { position: self.translation(), orientation: self.real }
    }

    /// Rotate then translate.
    pub fn apply(&self, point: Vec3) -> Vec3 {
        self.real.rotate(point) + self.translation()
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Motor) -> Motor {
        Motor { real: self.real * other.real, dual: self.real * other.dual + self.dual * other.real }
    }

    pub fn is_valid(&self) -> bool {
        (self.real.norm() - 1.0).abs() <= MANIFOLD_EPS && self.real.dot(self.dual).abs() <= MANIFOLD_EPS
    }

    /// Negated coefficients; represents the same rigid transform.
    pub fn negated(&self) -> Motor {
        Motor { real: -self.real, dual: -self.dual }
    }

    /// Project an arbitrary 8-vector back onto the unit-motor manifold.
    pub fn renormalized(&self) -> Result<Motor, GeomError> {
        let n = self.real.norm();
        if !(n >= DEGENERATE_BLEND_EPS) {
            return Err(GeomError::DegenerateInterpolation(n));
        }
        let real = self.real.scale(1.0 / n);
        let dual = self.dual.scale(1.0 / n);
        let dual = dual - real.scale(real.dot(dual));
        Ok(Motor { real, dual })
    }

    /// Blend towards `b` by `t`: shortest-arc sign flip, coefficient-wise
    /// linear blend, then renormalization onto the manifold.
    pub fn interpolate(&self, b: &Motor, t: f64) -> Result<Motor, GeomError> {
        if t == 0.0 {
            return Ok(*self);
        }
        if t == 1.0 {
            return Ok(*b);
        }
        let b = if self.real.dot(b.real) < 0.0 { b.negated() } else { *b };
        let s = 1.0 - t;
        Motor { real: self.real.scale(s) + b.real.scale(t), dual: self.dual.scale(s) + b.dual.scale(t) }.renormalized()
    }

    /// Coefficients in wire order: real (w,x,y,z) then dual (w,x,y,z).
    pub fn to_array(&self) -> [f64; 8] {
        let (r, d) = (self.real, self.dual);
        [r.w, r.x, r.y, r.z, d.w, d.x, d.y, d.z]
    }

    pub fn from_array(a: [f64; 8]) -> Motor {
        Motor { real: Quat::new(a[0], a[1], a[2], a[3]), dual: Quat::new(a[4], a[5], a[6], a[7]) }
    }

    pub fn to_f32_array(&self) -> [f32; 8] {
        self.to_array().map(|c| c as f32)
    }

    pub fn from_f32_array(a: [f32; 8]) -> Motor {
        Motor::from_array(a.map(f64::from))
    }

    /// The motor as it survives a round-trip through an `f32` wire slot.
    pub fn to_f32_precision(&self) -> Motor {
        Motor::from_f32_array(self.to_f32_array())
    }

    /// Largest absolute coefficient difference.
    pub fn max_coefficient_diff(&self, o: &Motor) -> f64 {
        self.to_array().iter().zip(o.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Same as [`Motor::max_coefficient_diff`] but treats `m` and `-m` as equal.
    pub fn max_coefficient_diff_up_to_sign(&self, o: &Motor) -> f64 {
        self.max_coefficient_diff(o).min(self.max_coefficient_diff(&o.negated()))
    }

    /// Row-major 3×4 affine matrix `[R | t]`.
    pub fn to_affine_3x4(&self) -> [[f64; 4]; 3] {
        let r = self.real.to_rotation_matrix();
        let t = self.translation();
        [[r[0][0], r[0][1], r[0][2], t.x], [r[1][0], r[1][1], r[1][2], t.y], [r[2][0], r[2][1], r[2][2], t.z]]
    }

    pub fn from_affine_3x4(m: &[[f64; 4]; 3]) -> Motor {
        let r = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        let q = Quat::from_rotation_matrix(&r);
        let t = Vec3::new(m[0][3], m[1][3], m[2][3]);
        Motor { real: q, dual: (Quat::pure(t) * q).scale(0.5) }
    }

    /// Whether moving from `self` to `o` exceeds a publishing threshold.
    pub fn differs_from(&self, o: &Motor, translation_m: f64, rotation_rad: f64) -> bool {
        self.translation().distance(o.translation()) > translation_m || self.real.angle_to(o.real) > rotation_rad
    }
}

/// Free-function spellings of the core operations.
pub fn motor_from_pose(p: &Pose) -> Result<Motor, GeomError> {
    Motor::from_pose(p)
}

pub fn motor_to_pose(m: &Motor) -> Pose {
    m.to_pose()
}

pub fn motor_interpolate(a: &Motor, b: &Motor, t: f64) -> Result<Motor, GeomError> {
    a.interpolate(b, t)
}

pub fn motor_apply(m: &Motor, point: Vec3) -> Vec3 {
    m.apply(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    /// Homogeneous 4×4 matrix route: rotation matrix + translation column.
    fn matrix_apply(p: &Pose, x: Vec3) -> Vec3 {
        let m = p.orientation.to_rotation_matrix();
        let v = [x.x, x.y, x.z];
        let mut out = [p.position.x, p.position.y, p.position.z];
        for i in 0..3 {
            for j in 0..3 {
                out[i] += m[i][j] * v[j];
            }
        }
        Vec3::new(out[0], out[1], out[2])
    }

    fn arb_unit_quat() -> impl Strategy<Value = Quat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| Quat::new(w, x, y, z).normalized())
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (arb_unit_quat(), -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(q, x, y, z)| Pose::new(Vec3::new(x, y, z), q))
    }

    #[test]
    fn identity_pose_is_identity_motor() {
        let m = Motor::from_pose(&Pose::IDENTITY).unwrap();
        assert_eq!(m, Motor::IDENTITY);
    }

    #[test]
    fn translation_lands_in_dual_part() {
        let m = Motor::from_pose(&Pose::from_position(Vec3::new(2.0, 0.0, 0.0))).unwrap();
        assert_eq!(m.dual, Quat::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(m.real, Quat::IDENTITY);
    }

    #[test]
    fn motor_agrees_with_matrix_route() {
        let p = Pose::new(Vec3::new(0.3, -1.2, 2.0), Quat::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 1.1));
        let m = Motor::from_pose(&p).unwrap();
        for x in [Vec3::ZERO, Vec3::X, Vec3::new(-3.0, 0.5, 7.0)] {
            assert!(m.apply(x).distance(matrix_apply(&p, x)) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_unit_orientation() {
        let p = Pose::new(Vec3::ZERO, Quat::new(1.001, 0.0, 0.0, 0.0));
        assert!(matches!(Motor::from_pose(&p), Err(GeomError::InvalidInput(_))));
        // inside the 1e-4 band we renormalize
        let p = Pose::new(Vec3::ZERO, Quat::new(1.00005, 0.0, 0.0, 0.0));
        assert!(Motor::from_pose(&p).unwrap().is_valid());
    }

    #[test]
    fn apply_examples() {
        let x = Vec3::new(0.2, -4.0, 9.0);
        assert_eq!(Motor::IDENTITY.apply(x), x);
        assert_eq!(Motor::from_translation(Vec3::new(1.0, 2.0, 3.0)).apply(Vec3::ZERO), Vec3::new(1.0, 2.0, 3.0));
        let rz = Motor::from_rotation(Quat::from_axis_angle(Vec3::Z, FRAC_PI_2));
        assert!(rz.apply(Vec3::X).distance(Vec3::Y) < 1e-6);
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let a = Motor::IDENTITY;
        let b = Motor::from_translation(Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(a.interpolate(&b, 0.0).unwrap(), a);
        let mid = a.interpolate(&b, 0.5).unwrap();
        assert!(mid.translation().distance(Vec3::new(1.0, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn interpolate_rotation_tracks_slerp() {
        let a = Motor::IDENTITY;
        let b = Motor::from_rotation(Quat::from_axis_angle(Vec3::Z, FRAC_PI_2));
        let mid = a.interpolate(&b, 0.5).unwrap();
        let slerp = Quat::IDENTITY.slerp(b.real, 0.5);
        assert!(mid.real.angle_to(slerp).to_degrees() < 1.0);
        assert!(mid.real.angle_to(Quat::from_axis_angle(Vec3::Z, FRAC_PI_4)).to_degrees() < 1.0);
    }

    #[test]
    fn interpolate_takes_short_arc() {
        let a = Motor::from_rotation(Quat::from_axis_angle(Vec3::Y, 0.2));
        let b = Motor::from_rotation(Quat::from_axis_angle(Vec3::Y, 0.4)).negated();
        let mid = a.interpolate(&b, 0.5).unwrap();
        assert!(mid.real.angle_to(Quat::from_axis_angle(Vec3::Y, 0.3)) < 1e-9);
    }

    #[test]
    fn orthogonal_tie_keeps_sign_and_zero_real_is_degenerate() {
        let a = Motor::IDENTITY;
        let b = Motor { real: Quat::new(0.0, 1.0, 0.0, 0.0), dual: Quat::ZERO };
        let mid = a.interpolate(&b, 0.5).unwrap();
        assert!(mid.is_valid());
        assert!(mid.real.x > 0.0);
        let zero = Motor { real: Quat::ZERO, dual: Quat::ZERO };
        assert!(matches!(zero.renormalized(), Err(GeomError::DegenerateInterpolation(_))));
    }

    #[test]
    fn affine_round_trip() {
        let p = Pose::new(Vec3::new(1.0, 2.0, -3.0), Quat::from_axis_angle(Vec3::new(0.0, 1.0, 1.0), 2.5));
        let m = Motor::from_pose(&p).unwrap();
        let back = Motor::from_affine_3x4(&m.to_affine_3x4());
        assert!(m.max_coefficient_diff_up_to_sign(&back) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn pose_motor_round_trip(p in arb_pose()) {
            let m = Motor::from_pose(&p).unwrap();
            prop_assert!(m.is_valid());
            let back = m.to_pose();
            prop_assert!(back.position.distance(p.position) < 1e-6);
            prop_assert!(back.orientation.angle_to(p.orientation) < 1e-6);
        }

        #[test]
        fn interpolation_stays_on_manifold(a in arb_pose(), b in arb_pose(), t in 0.0..=1.0f64) {
            let (ma, mb) = (Motor::from_pose(&a).unwrap(), Motor::from_pose(&b).unwrap());
            match ma.interpolate(&mb, t) {
                Ok(m) => prop_assert!(m.is_valid()),
                Err(GeomError::DegenerateInterpolation(_)) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }

    proptest! {
        #[test]
        fn interpolation_is_continuous(a in arb_pose(), b in arb_pose(), t in 0.0..0.999f64, x in -1.0..1.0f64) {
            let (ma, mb) = (Motor::from_pose(&a).unwrap(), Motor::from_pose(&b).unwrap());
            let dt = 1e-3;
            let point = Vec3::new(x, 0.5, -x);
            let p0 = ma.interpolate(&mb, t).unwrap().apply(point);
            let p1 = ma.interpolate(&mb, t + dt).unwrap().apply(point);
            // arc length bound: translation span plus the rotation sweep of the point
            let bound = a.position.distance(b.position)
                + std::f64::consts::PI * (point.norm() + a.position.norm().max(b.position.norm()))
                + 1.0;
            prop_assert!(p0.distance(p1) < 10.0 * dt * bound);
        }
    }
}
