//! Dense polynomial arithmetic: univariate [`Poly1`], bivariate [`Poly2`] in
//! `(t, ρ)` and 3-vectors of bivariate polynomials [`PVec3`].
//!
//! Coefficients are stored in ascending powers. Products are exact expansions;
//! nothing here trims or rounds.

use std::ops::{Add, Mul, Neg, Sub};

use crate::geom3::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Poly1<T> {
    /// `c[k]` multiplies `x^k`.
    pub c: Vec<T>,
}

impl<T: Real> Poly1<T> {
    pub fn new(c: Vec<T>) -> Self {
        if c.is_empty() {
            return Self::zero();
        }
        Poly1 { c }
    }

    pub fn zero() -> Self {
        Poly1 { c: vec![T::zero()] }
    }

    pub fn constant(v: T) -> Self {
        Poly1 { c: vec![v] }
    }

    /// Index of the highest nonzero coefficient (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.c.iter().rposition(|x| *x != T::zero()).unwrap_or(0)
    }

    pub fn coeff(&self, k: usize) -> T {
        self.c.get(k).copied().unwrap_or_else(T::zero)
    }

    pub fn eval(&self, x: T) -> T {
        self.c.iter().rev().fold(T::zero(), |acc, &a| acc * x + a)
    }

    pub fn derivative(&self) -> Self {
        if self.c.len() <= 1 {
            return Self::zero();
        }
        Poly1::new(self.c.iter().enumerate().skip(1).map(|(k, &a)| a * T::of(k as f64)).collect())
    }

    pub fn scale(&self, s: T) -> Self {
        Poly1 { c: self.c.iter().map(|&a| a * s).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.c.iter().fold(T::zero(), |m, a| m.max(a.abs()))
    }
}

impl<T: Real> Add for &Poly1<T> {
    type Output = Poly1<T>;
    fn add(self, o: &Poly1<T>) -> Poly1<T> {
        let n = self.c.len().max(o.c.len());
        Poly1::new((0..n).map(|k| self.coeff(k) + o.coeff(k)).collect())
    }
}

impl<T: Real> Sub for &Poly1<T> {
    type Output = Poly1<T>;
    fn sub(self, o: &Poly1<T>) -> Poly1<T> {
        let n = self.c.len().max(o.c.len());
        Poly1::new((0..n).map(|k| self.coeff(k) - o.coeff(k)).collect())
    }
}

impl<T: Real> Mul for &Poly1<T> {
    type Output = Poly1<T>;
    fn mul(self, o: &Poly1<T>) -> Poly1<T> {
        let mut c = vec![T::zero(); self.c.len() + o.c.len() - 1];
        for (i, &a) in self.c.iter().enumerate() {
            for (j, &b) in o.c.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly1 { c }
    }
}

/// Bivariate polynomial, `c[i][j]` multiplies `t^i ρ^j`. Rows share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2<T> {
    pub c: Vec<Vec<T>>,
}

impl<T: Real> Poly2<T> {
    pub fn zero() -> Self {
        Poly2 { c: vec![vec![T::zero()]] }
    }

    pub fn constant(v: T) -> Self {
        Poly2 { c: vec![vec![v]] }
    }

    /// `Σ_j p_j ρ^j`, no `t` dependence.
    pub fn from_rho(p: &[T]) -> Self {
        if p.is_empty() {
            return Self::zero();
        }
        Poly2 { c: vec![p.to_vec()] }
    }

    /// `t`.
    pub fn t() -> Self {
        Poly2 { c: vec![vec![T::zero()], vec![T::one()]] }
    }

    /// `ρ`.
    pub fn rho() -> Self {
        Poly2 { c: vec![vec![T::zero(), T::one()]] }
    }

    fn with_shape(nt: usize, nr: usize) -> Self {
        Poly2 { c: vec![vec![T::zero(); nr]; nt] }
    }

    fn nt(&self) -> usize {
        self.c.len()
    }

    fn nr(&self) -> usize {
        self.c[0].len()
    }

    pub fn coeff(&self, i: usize, j: usize) -> T {
        self.c.get(i).and_then(|r| r.get(j)).copied().unwrap_or_else(T::zero)
    }

    pub fn eval(&self, t: T, rho: T) -> T {
        self.c
            .iter()
            .rev()
            .fold(T::zero(), |acc, row| acc * t + row.iter().rev().fold(T::zero(), |a, &b| a * rho + b))
    }

    /// Coefficient of `t^i`, a polynomial in `ρ`.
    pub fn t_coeff(&self, i: usize) -> Poly1<T> {
        match self.c.get(i) {
            Some(r) => Poly1::new(r.clone()),
            None => Poly1::zero(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Poly2 { c: self.c.iter().map(|r| r.iter().map(|&a| a * s).collect()).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.c.iter().flatten().fold(T::zero(), |m, a| m.max(a.abs()))
    }

    pub fn d_t(&self) -> Self {
        if self.nt() <= 1 {
            return Self::zero();
        }
        Poly2 { c: self.c.iter().enumerate().skip(1).map(|(i, r)| r.iter().map(|&a| a * T::of(i as f64)).collect()).collect() }
    }

    pub fn d_rho(&self) -> Self {
        if self.nr() <= 1 {
            return Self::zero();
        }
        Poly2 {
            c: self.c.iter().map(|r| r.iter().enumerate().skip(1).map(|(j, &a)| a * T::of(j as f64)).collect()).collect(),
        }
    }

    /// Largest coefficient magnitude among monomials for which `keep(i, j)` is false.
    pub fn max_abs_outside(&self, keep: impl Fn(usize, usize) -> bool) -> T {
        let mut m = T::zero();
        for (i, r) in self.c.iter().enumerate() {
            for (j, a) in r.iter().enumerate() {
                if !keep(i, j) {
                    m = m.max(a.abs());
                }
            }
        }
        m
    }

    fn combine(&self, o: &Self, f: impl Fn(T, T) -> T) -> Self {
        let (nt, nr) = (self.nt().max(o.nt()), self.nr().max(o.nr()));
        let mut out = Self::with_shape(nt, nr);
        for i in 0..nt {
            for j in 0..nr {
                out.c[i][j] = f(self.coeff(i, j), o.coeff(i, j));
            }
        }
        out
    }
}

impl<T: Real> Add for &Poly2<T> {
    type Output = Poly2<T>;
    fn add(self, o: &Poly2<T>) -> Poly2<T> {
        self.combine(o, |a, b| a + b)
    }
}

impl<T: Real> Sub for &Poly2<T> {
    type Output = Poly2<T>;
    fn sub(self, o: &Poly2<T>) -> Poly2<T> {
        self.combine(o, |a, b| a - b)
    }
}

impl<T: Real> Neg for &Poly2<T> {
    type Output = Poly2<T>;
    fn neg(self) -> Poly2<T> {
        self.scale(-T::one())
    }
}

impl<T: Real> Mul for &Poly2<T> {
    type Output = Poly2<T>;
    fn mul(self, o: &Poly2<T>) -> Poly2<T> {
        let mut out = Poly2::with_shape(self.nt() + o.nt() - 1, self.nr() + o.nr() - 1);
        for (i1, r1) in self.c.iter().enumerate() {
            for (j1, &a) in r1.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (i2, r2) in o.c.iter().enumerate() {
                    for (j2, &b) in r2.iter().enumerate() {
                        out.c[i1 + i2][j1 + j2] += a * b;
                    }
                }
            }
        }
        out
    }
}

/// 3-vector with [`Poly2`] components.
#[derive(Debug, Clone, PartialEq)]
pub struct PVec3<T> {
    pub x: Poly2<T>,
    pub y: Poly2<T>,
    pub z: Poly2<T>,
}

impl<T: Real> PVec3<T> {
    pub fn constant(v: Vec3<T>) -> Self {
        PVec3 { x: Poly2::constant(v.x), y: Poly2::constant(v.y), z: Poly2::constant(v.z) }
    }

    /// `v · p`: a fixed direction with polynomial magnitude.
    pub fn along(v: Vec3<T>, p: &Poly2<T>) -> Self {
        PVec3 { x: p.scale(v.x), y: p.scale(v.y), z: p.scale(v.z) }
    }

    pub fn scale(&self, p: &Poly2<T>) -> Self {
        PVec3 { x: &self.x * p, y: &self.y * p, z: &self.z * p }
    }

    pub fn dot(&self, o: &Self) -> Poly2<T> {
        &(&(&self.x * &o.x) + &(&self.y * &o.y)) + &(&self.z * &o.z)
    }

    pub fn dot_vec(&self, v: &Vec3<T>) -> Poly2<T> {
        &(&self.x.scale(v.x) + &self.y.scale(v.y)) + &self.z.scale(v.z)
    }

    pub fn norm_squared(&self) -> Poly2<T> {
        self.dot(self)
    }

    pub fn eval(&self, t: T, rho: T) -> Vec3<T> {
        Vec3::new(self.x.eval(t, rho), self.y.eval(t, rho), self.z.eval(t, rho))
    }
}

impl<T: Real> Add for &PVec3<T> {
    type Output = PVec3<T>;
    fn add(self, o: &PVec3<T>) -> PVec3<T> {
        PVec3 { x: &self.x + &o.x, y: &self.y + &o.y, z: &self.z + &o.z }
    }
}

impl<T: Real> Sub for &PVec3<T> {
    type Output = PVec3<T>;
    fn sub(self, o: &PVec3<T>) -> PVec3<T> {
        PVec3 { x: &self.x - &o.x, y: &self.y - &o.y, z: &self.z - &o.z }
    }
}
