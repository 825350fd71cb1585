//! 3-vector / 3×3-matrix algebra and the line-of-sight frame.
//!
//! Frame convention: for right ascension `α` and declination `δ`
//!
//! ```text
//! ê^ρ = ( cos δ cos α,  cos δ sin α,  sin δ)
//! ê^α = (-sin α,        cos α,        0    )
//! ê^δ = (-sin δ cos α, -sin δ sin α,  cos δ)
//! ```
//!
//! so that `ê^α × ê^δ = ê^ρ`, `ê^δ × ê^ρ = ê^α`, `ê^ρ × ê^α = ê^δ`.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Degeneracy, OdError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de>"))]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> From<[T; 3]> for Vec3<T> {
    fn from([x, y, z]: [T; 3]) -> Self {
        Vec3 { x, y, z }
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    /// Unit vector along the `k`-th axis (0, 1, 2).
    pub fn axis(k: usize) -> Self {
        let mut v = Self::zero();
        match k {
            0 => v.x = T::one(),
            1 => v.y = T::one(),
            2 => v.z = T::one(),
            _ => panic!("axis index {k} out of range"),
        }
        v
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn normalize(&self) -> Self {
        *self / self.norm()
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3::new(
            U::of(self.x.to_f64_lossy()),
            U::of(self.y.to_f64_lossy()),
            U::of(self.z.to_f64_lossy()),
        )
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// 3×3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn zero() -> Self {
        Mat3 { m: [[T::zero(); 3]; 3] }
    }

    pub fn identity() -> Self {
        let mut a = Self::zero();
        for i in 0..3 {
            a.m[i][i] = T::one();
        }
        a
    }

    pub fn from_rows(r0: Vec3<T>, r1: Vec3<T>, r2: Vec3<T>) -> Self {
        Mat3 { m: [r0.to_array(), r1.to_array(), r2.to_array()] }
    }

    pub fn from_cols(c0: Vec3<T>, c1: Vec3<T>, c2: Vec3<T>) -> Self {
        Self::from_rows(c0, c1, c2).transpose()
    }

    pub fn row(&self, i: usize) -> Vec3<T> {
        self.m[i].into()
    }

    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut p = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                p.m[i][j] = self.row(i).dot(&o.col(j));
            }
        }
        p
    }

    pub fn scale(&self, s: T) -> Self {
        let mut a = *self;
        a.m.iter_mut().flatten().for_each(|x| *x *= s);
        a
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut a = *self;
        for i in 0..3 {
            for j in 0..3 {
                a.m[i][j] += o.m[i][j];
            }
        }
        a
    }

    pub fn det(&self) -> T {
        triple(&self.row(0), &self.row(1), &self.row(2))
    }

    pub fn max_abs(&self) -> T {
        self.m.iter().flatten().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }
}

/// Orthonormal topocentric frame `(ê^ρ, ê^α, ê^δ)` at one line of sight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosFrame<T> {
    pub e_rho: Vec3<T>,
    pub e_alpha: Vec3<T>,
    pub e_delta: Vec3<T>,
}

/// Builds the line-of-sight frame; see the module docs for the convention.
pub fn los_basis<T: Real>(alpha: T, delta: T) -> Result<LosFrame<T>> {
    if !(delta.abs() < T::FRAC_PI_2() - T::of(1e-12)) {
        return Err(OdError::DegenerateGeometry(Degeneracy::PoleSingularity));
    }
    let (sa, ca) = alpha.sin_cos();
    let (sd, cd) = delta.sin_cos();
    Ok(LosFrame {
        e_rho: Vec3::new(cd * ca, cd * sa, sd),
        e_alpha: Vec3::new(-sa, ca, T::zero()),
        e_delta: Vec3::new(-sd * ca, -sd * sa, cd),
    })
}

/// Skew-symmetric matrix with `hat(u)·w = u × w`.
pub fn hat<T: Real>(u: &Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    Mat3 {
        m: [[z, -u.z, u.y], [u.z, z, -u.x], [-u.y, u.x, z]],
    }
}

/// Scalar triple product `a·(b×c)`.
#[inline]
pub fn triple<T: Real>(a: &Vec3<T>, b: &Vec3<T>, c: &Vec3<T>) -> T {
    a.dot(&b.cross(c))
}

/// Spherical coordinates `(α, δ, ρ)` of a vector, with `α ∈ [-π, π)`.
pub fn to_spherical<T: Real>(v: &Vec3<T>) -> (T, T, T) {
    let rho = v.norm();
    let delta = (v.z / rho).asin();
    let mut alpha = v.y.atan2(v.x);
    if alpha >= T::PI() {
        alpha -= T::TAU();
    }
    (alpha, delta, rho)
}
