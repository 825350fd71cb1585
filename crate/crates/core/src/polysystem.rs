//! The polynomial system in the unknowns `(ρ̇₁, ξ₁, ζ₁, ρ₂, ρ̇₂, z₂)` and its
//! reduction to one univariate polynomial of degree 8 in `ρ₂`.
//!
//! With `ξ₁ = ρ₁α̇₁cos δ₁`, `ζ₁ = ρ₁δ̇₁` and `ê^⊥₂ = α̇₂cos δ₂ ê^α₂ + δ̇₂ ê^δ₂`:
//!
//! ```text
//! ṙ₁ = q̇₁ + ρ̇₁ê^ρ₁ + ξ₁ê^α₁ + ζ₁ê^δ₁
//! r₂ = q₂ + ρ₂ê^ρ₂,   ṙ₂ = q̇₂ + ρ̇₂ê^ρ₂ + ρ₂ê^⊥₂
//! c₁ = D₁ρ̇₁ + N₁ξ₁ + O₁ζ₁ + P₁
//! c₂ = D₂ρ̇₂ + E₂ρ₂² + F₂ρ₂ + G₂
//! ```
//!
//! The generators are, with `W = D₁ × D₂`,
//!
//! ```text
//! 𝔮₁ = (c₁-c₂)·W       𝔮₂ = (c₁-c₂)·(D₁×W)       𝔮₃ = (c₁-c₂)·(D₂×W)
//! 𝔮₄ = μ(L₁-L̃₂)·D₁     𝔮₅ = μ(L₁-L̃₂)·D₂          𝔮₆ = μ(L₁-L̃₂)·(r₁×ê^ρ₂)
//! 𝔮₇ = ℰ₁ - Ẽ₂
//! μL̃₂ = (|ṙ₂|² - z₂)r₂ - (ṙ₂·r₂)ṙ₂,   Ẽ₂ = |ṙ₂|²/2 - z₂
//! ```
//!
//! `𝔮₁..𝔮₃` are linear in `(ρ̇₁, ρ̇₂, ξ₁, ζ₁)`, which eliminates three of them
//! and forces `c₁ ≡ c₂`. One tangential variable stays free; it is called `t`
//! here. `t = ζ₁` unless `|Q⁽¹⁾₀₁₀| > |Q⁽¹⁾₁₀₀|`, in which case `t = ξ₁`.
//! Substituting and using `𝔮₇` to remove `z₂` gives
//!
//! ```text
//! q̃₅ = a₁(ρ₂) t + a₀(ρ₂)             deg a₁ = 2, deg a₀ = 4
//! p₆ = P₂₀ t² + b₁(ρ₂) t + b₀(ρ₂)    deg b₁ = 2, deg b₀ = 4
//! 𝔳  = a₁a₀b₁ - a₀²P₂₀ - b₀a₁²       deg 𝔳 = 8
//! ```
//!
//! The Q coefficients are those of `J = N₁ξ₁ + O₁ζ₁ - E₂ρ₂² - F₂ρ₂ + P₁ - G₂`
//! dotted with `W`, `D₁×W` and `D₂×W`. Since `D₂·(D₁×W) = -|W|²` and
//! `D₁·(D₂×W) = |W|²`, the eliminated rates are
//! `ρ̇₂ = -(Q⁽²⁾ terms)/|W|²` and `ρ̇₁ = -(Q⁽³⁾ terms)/|W|²`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Degeneracy, OdError, Result};
use crate::geom3::{los_basis, LosFrame, Vec3};
use crate::observations::ODInput;
use crate::poly::{PVec3, Poly1, Poly2};
use crate::scalar::Real;

/// Relative size of the genericity thresholds on `|W|²` and the pivots.
pub const GENERICITY_EPS: f64 = 1e-12;

/// Known data of one problem, converted to the working scalar.
#[derive(Debug, Clone, Copy)]
pub struct Problem<T> {
    pub mu: T,
    pub q1: Vec3<T>,
    pub q1dot: Vec3<T>,
    pub q2: Vec3<T>,
    pub q2dot: Vec3<T>,
    pub rho1: T,
    pub r1: Vec3<T>,
    pub frame1: LosFrame<T>,
    pub frame2: LosFrame<T>,
    /// `ê^⊥₂ = α̇₂cos δ₂ ê^α₂ + δ̇₂ ê^δ₂`.
    pub e_perp2: Vec3<T>,
    pub alphadot2_cos: T,
    pub deltadot2: T,
}

impl<T: Real> Problem<T> {
    pub fn from_input(input: &ODInput) -> Result<Self> {
        let c = |x: f64| T::of(x);
        let cv = |v: Vec3<f64>| v.cast::<T>();
        let frame1 = los_basis(c(input.p1.alpha), c(input.p1.delta))?;
        let frame2 = los_basis(c(input.a2.alpha), c(input.a2.delta))?;
        let q1 = cv(input.obs1.q);
        let rho1 = c(input.p1.rho);
        let alphadot2_cos = c(input.a2.alpha_dot) * c(input.a2.delta).cos();
        let deltadot2 = c(input.a2.delta_dot);
        Ok(Problem {
            mu: c(input.mu),
            q1,
            q1dot: cv(input.obs1.qdot),
            q2: cv(input.obs2.q),
            q2dot: cv(input.obs2.qdot),
            rho1,
            r1: q1 + frame1.e_rho * rho1,
            frame1,
            frame2,
            e_perp2: frame2.e_alpha * alphadot2_cos + frame2.e_delta * deltadot2,
            alphadot2_cos,
            deltadot2,
        })
    }

    /// Position and velocity at both epochs for given unknowns.
    pub fn states(&self, u: &Unknowns<T>) -> Kinematics<T> {
        let (f1, f2) = (&self.frame1, &self.frame2);
        Kinematics {
            r1: self.r1,
            r1dot: self.q1dot + f1.e_rho * u.rhodot1 + f1.e_alpha * u.xi1 + f1.e_delta * u.zeta1,
            r2: self.q2 + f2.e_rho * u.rho2,
            r2dot: self.q2dot + f2.e_rho * u.rhodot2 + self.e_perp2 * u.rho2,
        }
    }

    /// Typical magnitude of `|q₁||q₂|`, floored to avoid zero thresholds.
    fn obs_scale(&self) -> T {
        (self.q1.norm() * self.q2.norm()).max(T::of(1e-300))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unknowns<T> {
    pub rhodot1: T,
    pub xi1: T,
    pub zeta1: T,
    pub rho2: T,
    pub rhodot2: T,
    pub z2: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics<T> {
    pub r1: Vec3<T>,
    pub r1dot: Vec3<T>,
    pub r2: Vec3<T>,
    pub r2dot: Vec3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de>"))]
pub struct GeometrySet<T> {
    pub d1: Vec3<T>,
    pub d2: Vec3<T>,
    pub w12: Vec3<T>,
    pub n1: Vec3<T>,
    pub o1: Vec3<T>,
    pub p1vec: Vec3<T>,
    pub e2: Vec3<T>,
    pub f2: Vec3<T>,
    pub g2: Vec3<T>,
}

pub fn build_geometry<T: Real>(p: &Problem<T>) -> GeometrySet<T> {
    let (f1, f2) = (&p.frame1, &p.frame2);
    let d1 = p.q1.cross(&f1.e_rho);
    let d2 = p.q2.cross(&f2.e_rho);
    GeometrySet {
        d1,
        d2,
        w12: d1.cross(&d2),
        n1: p.r1.cross(&f1.e_alpha),
        o1: p.r1.cross(&f1.e_delta),
        p1vec: p.r1.cross(&p.q1dot),
        e2: f2.e_delta * p.alphadot2_cos - f2.e_alpha * p.deltadot2,
        f2: p.q2.cross(&f2.e_alpha) * p.alphadot2_cos + p.q2.cross(&f2.e_delta) * p.deltadot2 + f2.e_rho.cross(&p.q2dot),
        g2: p.q2.cross(&p.q2dot),
    }
}

/// Coefficients of one linear generator in `(ξ₁, ζ₁, ρ₂², ρ₂, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QRow<T> {
    pub c100: T,
    pub c010: T,
    pub c002: T,
    pub c001: T,
    pub c000: T,
}

impl<T: Real> QRow<T> {
    fn project(g: &GeometrySet<T>, axis: &Vec3<T>) -> Self {
        QRow {
            c100: g.n1.dot(axis),
            c010: g.o1.dot(axis),
            c002: -g.e2.dot(axis),
            c001: -g.f2.dot(axis),
            c000: (g.p1vec - g.g2).dot(axis),
        }
    }

    /// `c₀₀₂ρ² + c₀₀₁ρ + c₀₀₀`.
    fn rest(&self, rho: T) -> T {
        (self.c002 * rho + self.c001) * rho + self.c000
    }

    fn rest_poly(&self) -> Poly2<T> {
        Poly2::from_rho(&[self.c000, self.c001, self.c002])
    }
}

/// Which tangential component of `ṙ₁` is eliminated by `𝔮₁ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pivot {
    /// Eliminate `ξ₁`; `ζ₁` stays free.
    EliminateXi,
    /// Eliminate `ζ₁`; `ξ₁` stays free.
    EliminateZeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de>"))]
pub struct EliminationCoeffs<T> {
    pub q1: QRow<T>,
    pub q2: QRow<T>,
    pub q3: QRow<T>,
    /// `|W₁₂|²`.
    pub w2: T,
    pub pivot: Pivot,
}

pub fn build_elimination<T: Real>(p: &Problem<T>, g: &GeometrySet<T>) -> Result<EliminationCoeffs<T>> {
    let e = EliminationCoeffs {
        q1: QRow::project(g, &g.w12),
        q2: QRow::project(g, &g.d1.cross(&g.w12)),
        q3: QRow::project(g, &g.d2.cross(&g.w12)),
        w2: g.w12.norm_squared(),
        pivot: Pivot::EliminateXi,
    };
    let s = p.obs_scale();
    let eps = T::of(GENERICITY_EPS);
    if !(e.w2 >= eps * s * s) {
        return Err(OdError::DegenerateGeometry(Degeneracy::SmallW12));
    }
    let (a, b) = (e.q1.c100.abs(), e.q1.c010.abs());
    if !(a.max(b) >= eps * p.r1.norm() * s) {
        return Err(OdError::DegenerateGeometry(Degeneracy::SmallPivot));
    }
    let pivot = if b > a { Pivot::EliminateZeta } else { Pivot::EliminateXi };
    Ok(EliminationCoeffs { pivot, ..e })
}

/// Values of the four eliminated or free linear unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangential<T> {
    pub xi1: T,
    pub zeta1: T,
    pub rhodot1: T,
    pub rhodot2: T,
}

/// Back-substitution from the free tangential variable and `ρ₂`.
pub fn eliminate_linear<T: Real>(e: &EliminationCoeffs<T>, free: T, rho2: T) -> Tangential<T> {
    eliminate_with_pivot(e, e.pivot, free, rho2)
}

/// As [`eliminate_linear`] with the pivot chosen by the caller.
pub fn eliminate_with_pivot<T: Real>(e: &EliminationCoeffs<T>, pivot: Pivot, free: T, rho2: T) -> Tangential<T> {
    let (xi1, zeta1) = match pivot {
        Pivot::EliminateXi => (-(e.q1.c010 * free + e.q1.rest(rho2)) / e.q1.c100, free),
        Pivot::EliminateZeta => (free, -(e.q1.c100 * free + e.q1.rest(rho2)) / e.q1.c010),
    };
    let rhodot2 = -(e.q2.c100 * xi1 + e.q2.c010 * zeta1 + e.q2.rest(rho2)) / e.w2;
    let rhodot1 = -(e.q3.c100 * xi1 + e.q3.c010 * zeta1 + e.q3.rest(rho2)) / e.w2;
    Tangential { xi1, zeta1, rhodot1, rhodot2 }
}

/// The eliminated unknowns as polynomials in `(t, ρ₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForms<T> {
    pub xi1: Poly2<T>,
    pub zeta1: Poly2<T>,
    pub rhodot1: Poly2<T>,
    pub rhodot2: Poly2<T>,
}

fn linear_forms<T: Real>(e: &EliminationCoeffs<T>) -> LinearForms<T> {
    let t = Poly2::t();
    let (xi1, zeta1) = match e.pivot {
        Pivot::EliminateXi => {
            let xi = (&t.scale(e.q1.c010) + &e.q1.rest_poly()).scale(-T::one() / e.q1.c100);
            (xi, t)
        }
        Pivot::EliminateZeta => {
            let zeta = (&t.scale(e.q1.c100) + &e.q1.rest_poly()).scale(-T::one() / e.q1.c010);
            (t, zeta)
        }
    };
    let rate = |q: &QRow<T>| {
        (&(&xi1.scale(q.c100) + &zeta1.scale(q.c010)) + &q.rest_poly()).scale(-T::one() / e.w2)
    };
    LinearForms { rhodot2: rate(&e.q2), rhodot1: rate(&e.q3), xi1, zeta1 }
}

/// `q̃₅ = a₁t + a₀` and `p₆ = P₂₀t² + b₁t + b₀`, coefficients ascending in `ρ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de>"))]
pub struct BivariatePair<T> {
    /// `(P⁽⁵⁾₁₀, P⁽⁵⁾₁₁, P⁽⁵⁾₁₂)`.
    pub a1: [T; 3],
    /// `(P⁽⁵⁾₀₀, …, P⁽⁵⁾₀₄)`.
    pub a0: [T; 5],
    /// `P⁽⁶⁾₂₀`.
    pub p20: T,
    /// `(P⁽⁶⁾₁₀, P⁽⁶⁾₁₁, P⁽⁶⁾₁₂)`.
    pub b1: [T; 3],
    /// `(P⁽⁶⁾₀₀, …, P⁽⁶⁾₀₄)`.
    pub b0: [T; 5],
    /// Largest dropped coefficient of `q̃₅` relative to its largest kept one.
    pub leak5: T,
    /// Same for `p₆`.
    pub leak6: T,
}

impl<T: Real> BivariatePair<T> {
    pub fn a1_poly(&self) -> Poly1<T> {
        Poly1::new(self.a1.to_vec())
    }
    pub fn a0_poly(&self) -> Poly1<T> {
        Poly1::new(self.a0.to_vec())
    }
    pub fn b1_poly(&self) -> Poly1<T> {
        Poly1::new(self.b1.to_vec())
    }
    pub fn b0_poly(&self) -> Poly1<T> {
        Poly1::new(self.b0.to_vec())
    }

    pub fn q5(&self, t: T, rho: T) -> T {
        self.a1_poly().eval(rho) * t + self.a0_poly().eval(rho)
    }

    pub fn p6(&self, t: T, rho: T) -> T {
        (self.p20 * t + self.b1_poly().eval(rho)) * t + self.b0_poly().eval(rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de>"))]
pub struct ResultantPoly<T> {
    /// `𝔳(ρ₂) = Σ vᵢ ρ₂ⁱ`.
    pub v: [T; 9],
}

impl<T: Real> ResultantPoly<T> {
    pub fn poly(&self) -> Poly1<T> {
        Poly1::new(self.v.to_vec())
    }

    pub fn eval(&self, rho: T) -> T {
        self.poly().eval(rho)
    }

    /// Degree after discarding leading coefficients below `rel·max|vᵢ|`.
    pub fn degree(&self, rel: T) -> usize {
        let m = self.v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        self.v.iter().rposition(|x| x.abs() > rel * m).unwrap_or(0)
    }
}

pub fn resultant<T: Real>(pair: &BivariatePair<T>) -> ResultantPoly<T> {
    let (a1, a0, b1, b0) = (pair.a1_poly(), pair.a0_poly(), pair.b1_poly(), pair.b0_poly());
    let v = &(&(&(&a1 * &a0) * &b1) - &(&a0 * &a0).scale(pair.p20)) - &(&b0 * &(&a1 * &a1));
    let mut out = [T::zero(); 9];
    for (k, c) in v.c.iter().enumerate().take(9) {
        out[k] = *c;
    }
    ResultantPoly { v: out }
}

/// Everything derived from one [`Problem`].
#[derive(Debug, Clone)]
pub struct CoefficientSet<T> {
    pub geometry: GeometrySet<T>,
    pub elimination: EliminationCoeffs<T>,
    pub forms: LinearForms<T>,
    /// `z₂ = -h₇ = |ṙ₂|²/2 - |ṙ₁|²/2 + μ/|r₁|` in `(t, ρ₂)`.
    pub z2: Poly2<T>,
    /// Full expansions before support extraction.
    pub q5_full: Poly2<T>,
    pub p6_full: Poly2<T>,
    pub pair: BivariatePair<T>,
    pub resultant: ResultantPoly<T>,
}

impl<T: Real> CoefficientSet<T> {
    /// All six unknowns at a point `(t, ρ₂)` of the reduced system.
    pub fn unknowns_at(&self, t: T, rho2: T) -> Unknowns<T> {
        let f = &self.forms;
        Unknowns {
            rhodot1: f.rhodot1.eval(t, rho2),
            xi1: f.xi1.eval(t, rho2),
            zeta1: f.zeta1.eval(t, rho2),
            rho2,
            rhodot2: f.rhodot2.eval(t, rho2),
            z2: self.z2.eval(t, rho2),
        }
    }

    /// The free variable carried by `u` under the chosen pivot.
    pub fn free_of(&self, u: &Unknowns<T>) -> T {
        match self.elimination.pivot {
            Pivot::EliminateXi => u.zeta1,
            Pivot::EliminateZeta => u.xi1,
        }
    }
}

/// Expands `q̃₅` and `p₆` from the linear forms.
pub fn build_bivariate<T: Real>(
    p: &Problem<T>,
    g: &GeometrySet<T>,
    e: &EliminationCoeffs<T>,
) -> (LinearForms<T>, Poly2<T>, Poly2<T>, Poly2<T>, BivariatePair<T>) {
    let forms = linear_forms(e);
    let (f1, f2) = (&p.frame1, &p.frame2);
    let rho = Poly2::rho();
    let half = T::of(0.5);

    let r1dot = &(&(&PVec3::constant(p.q1dot) + &PVec3::along(f1.e_rho, &forms.rhodot1))
        + &PVec3::along(f1.e_alpha, &forms.xi1))
        + &PVec3::along(f1.e_delta, &forms.zeta1);
    let r2 = &PVec3::constant(p.q2) + &PVec3::along(f2.e_rho, &rho);
    let r2dot = &(&PVec3::constant(p.q2dot) + &PVec3::along(f2.e_rho, &forms.rhodot2)) + &PVec3::along(p.e_perp2, &rho);

    let mu_r1 = p.mu / p.r1.norm();
    let v1sq = r1dot.norm_squared();
    let v2sq = r2dot.norm_squared();
    let mu_l1 = &PVec3::along(p.r1, &(&v1sq - &Poly2::constant(mu_r1))) - &r1dot.scale(&r1dot.dot_vec(&p.r1));
    // μL̃₂ without its -z₂r₂ term
    let mu_l2 = &r2.scale(&v2sq) - &r2dot.scale(&r2dot.dot(&r2));
    let diff = &mu_l1 - &mu_l2;
    let z2 = &(&v2sq - &v1sq).scale(half) + &Poly2::constant(mu_r1);

    // r₂·D₂ ≡ 0, so z₂ does not enter 𝔮₅
    let q5 = diff.dot_vec(&g.d2);
    let k6 = p.r1.cross(&f2.e_rho);
    let p6 = &diff.dot_vec(&k6) + &(&z2 * &r2.dot_vec(&k6));

    let in5 = |i: usize, j: usize| (i == 1 && j <= 2) || (i == 0 && j <= 4);
    let in6 = |i: usize, j: usize| (i == 2 && j == 0) || in5(i, j);
    let leak = |q: &Poly2<T>, keep: &dyn Fn(usize, usize) -> bool| {
        let kept = q.max_abs_outside(|i, j| !keep(i, j));
        let dropped = q.max_abs_outside(keep);
        if kept > T::zero() {
            dropped / kept
        } else {
            dropped
        }
    };
    let pair = BivariatePair {
        a1: [q5.coeff(1, 0), q5.coeff(1, 1), q5.coeff(1, 2)],
        a0: [q5.coeff(0, 0), q5.coeff(0, 1), q5.coeff(0, 2), q5.coeff(0, 3), q5.coeff(0, 4)],
        p20: p6.coeff(2, 0),
        b1: [p6.coeff(1, 0), p6.coeff(1, 1), p6.coeff(1, 2)],
        b0: [p6.coeff(0, 0), p6.coeff(0, 1), p6.coeff(0, 2), p6.coeff(0, 3), p6.coeff(0, 4)],
        leak5: leak(&q5, &in5),
        leak6: leak(&p6, &in6),
    };
    (forms, z2, q5, p6, pair)
}

/// Runs the whole chain from a problem to the resultant.
pub fn build<T: Real>(p: &Problem<T>) -> Result<CoefficientSet<T>> {
    let geometry = build_geometry(p);
    let elimination = build_elimination(p, &geometry)?;
    let (forms, z2, q5_full, p6_full, pair) = build_bivariate(p, &geometry, &elimination);
    let resultant = resultant(&pair);
    Ok(CoefficientSet { geometry, elimination, forms, z2, q5_full, p6_full, pair, resultant })
}

impl<T: Real> BivariatePair<T> {
    pub fn to_f64(&self) -> BivariatePair<f64> {
        let c = |x: &T| x.to_f64_lossy();
        BivariatePair {
            a1: self.a1.each_ref().map(c),
            a0: self.a0.each_ref().map(c),
            p20: c(&self.p20),
            b1: self.b1.each_ref().map(c),
            b0: self.b0.each_ref().map(c),
            leak5: c(&self.leak5),
            leak6: c(&self.leak6),
        }
    }
}

/// [`build`] at `f64`, with the bivariate pair and the resultant recomputed
/// in double-double and rounded. The expansion of `q̃₅` and `p₆` cancels
/// heavily, so the `f64` resultant can carry relative root errors near
/// `1e-7` at large `ρ₂`; the rounded double-double one is limited by the
/// final rounding of its nine coefficients.
pub fn build_extended(input: &ODInput) -> Result<CoefficientSet<f64>> {
    let mut set = build(&Problem::<f64>::from_input(input)?)?;
    if let Ok(hi) = Problem::<twofloat::TwoFloat>::from_input(input).and_then(|p| build(&p)) {
        if hi.elimination.pivot == set.elimination.pivot {
            set.pair = hi.pair.to_f64();
            set.resultant = ResultantPoly { v: hi.resultant.v.each_ref().map(|x| x.to_f64_lossy()) };
        }
    }
    Ok(set)
}

/// Direct evaluation of `𝔮₁..𝔮₇` at a point.
pub fn generators<T: Real>(p: &Problem<T>, g: &GeometrySet<T>, u: &Unknowns<T>) -> [T; 7] {
    let k = p.states(u);
    let dc = k.r1.cross(&k.r1dot) - k.r2.cross(&k.r2dot);
    let dl = mu_laplace(p.mu, &k.r1, &k.r1dot) - mu_laplace_tilde(u.z2, &k.r2, &k.r2dot);
    let half = T::of(0.5);
    [
        dc.dot(&g.w12),
        dc.dot(&g.d1.cross(&g.w12)),
        dc.dot(&g.d2.cross(&g.w12)),
        dl.dot(&g.d1),
        dl.dot(&g.d2),
        dl.dot(&p.r1.cross(&p.frame2.e_rho)),
        half * k.r1dot.norm_squared() - p.mu / k.r1.norm() - (half * k.r2dot.norm_squared() - u.z2),
    ]
}

/// `μL = (|ṙ|² - μ/|r|)r - (ṙ·r)ṙ`.
pub fn mu_laplace<T: Real>(mu: T, r: &Vec3<T>, v: &Vec3<T>) -> Vec3<T> {
    *r * (v.norm_squared() - mu / r.norm()) - *v * v.dot(r)
}

/// `μL̃ = (|ṙ|² - z)r - (ṙ·r)ṙ`.
pub fn mu_laplace_tilde<T: Real>(z: T, r: &Vec3<T>, v: &Vec3<T>) -> Vec3<T> {
    *r * (v.norm_squared() - z) - *v * v.dot(r)
}

/// Closed forms of `(q̃₄, q̃₅, q̃₆)`, valid where `c₁ = c₂`.
pub fn closed_forms<T: Real>(p: &Problem<T>, g: &GeometrySet<T>, u: &Unknowns<T>) -> [T; 3] {
    let k = p.states(u);
    let c1 = k.r1.cross(&k.r1dot);
    let c2 = k.r2.cross(&k.r2dot);
    let dv = k.r1dot - k.r2dot;
    let r1d2 = p.r1.dot(&g.d2);
    [
        c1.dot(&p.frame1.e_rho) * p.r1.dot(&dv) + k.r2.dot(&g.d1) * u.z2,
        c2.dot(&p.frame2.e_rho) * k.r2.dot(&dv) - r1d2 * p.mu / p.r1.norm(),
        c2.dot(&p.frame2.e_rho) * p.r1.dot(&dv) - r1d2 * u.z2,
    ]
}

/// Largest normalised value of `q̃₄(r₁·D₂) + q̃₆(r₂·D₁)` over the given `(t, ρ₂)`
/// points, with `z₂` taken from `𝔮₇ = 0`.
pub fn redundancy_check<T: Real>(p: &Problem<T>, set: &CoefficientSet<T>, points: &[(T, T)]) -> Result<T> {
    let g = &set.geometry;
    let r1d2 = p.r1.dot(&g.d2);
    if !(r1d2.abs() >= T::of(GENERICITY_EPS) * p.r1.norm() * p.q2.norm()) {
        return Err(OdError::DegenerateGeometry(Degeneracy::SmallR1D2));
    }
    let mut worst = T::zero();
    for &(t, rho) in points {
        let u = set.unknowns_at(t, rho);
        let k = p.states(&u);
        let c1 = k.r1.cross(&k.r1dot);
        let c2 = k.r2.cross(&k.r2dot);
        let dv = k.r1dot - k.r2dot;
        let r2d1 = k.r2.dot(&g.d1);
        // the four products whose sum must vanish
        let terms = [
            c1.dot(&p.frame1.e_rho) * p.r1.dot(&dv) * r1d2,
            r2d1 * u.z2 * r1d2,
            c2.dot(&p.frame2.e_rho) * p.r1.dot(&dv) * r2d1,
            -r1d2 * u.z2 * r2d1,
        ];
        let [q4, _, q6] = closed_forms(p, g, &u);
        let scale = terms.iter().fold(T::zero(), |s, x| s + x.abs());
        if scale > T::zero() {
            worst = worst.max((q4 * r1d2 + q6 * r2d1).abs() / scale);
        }
    }
    Ok(worst)
}

/// Flat JSON-friendly record of a coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDump {
    pub geometry: BTreeMap<String, [f64; 3]>,
    pub q: BTreeMap<String, f64>,
    pub w2: f64,
    pub pivot: Pivot,
    pub p5: BTreeMap<String, f64>,
    pub p6: BTreeMap<String, f64>,
    pub leak5: f64,
    pub leak6: f64,
    pub v: Vec<f64>,
}

impl CoefficientDump {
    pub fn from_set(s: &CoefficientSet<f64>) -> Self {
        let g = &s.geometry;
        let geometry = [
            ("D1", g.d1),
            ("D2", g.d2),
            ("W12", g.w12),
            ("N1", g.n1),
            ("O1", g.o1),
            ("P1vec", g.p1vec),
            ("E2", g.e2),
            ("F2", g.f2),
            ("G2", g.g2),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_array()))
        .collect();
        let mut q = BTreeMap::new();
        let e = &s.elimination;
        for (k, row) in [(1, &e.q1), (2, &e.q2), (3, &e.q3)] {
            for (suffix, val) in [("100", row.c100), ("010", row.c010), ("002", row.c002), ("001", row.c001), ("000", row.c000)] {
                q.insert(format!("Q{k}_{suffix}"), val);
            }
        }
        let pr = &s.pair;
        let mut p5 = BTreeMap::new();
        let mut p6 = BTreeMap::new();
        for j in 0..3 {
            p5.insert(format!("P5_1{j}"), pr.a1[j]);
            p6.insert(format!("P6_1{j}"), pr.b1[j]);
        }
        for j in 0..5 {
            p5.insert(format!("P5_0{j}"), pr.a0[j]);
            p6.insert(format!("P6_0{j}"), pr.b0[j]);
        }
        p6.insert("P6_20".into(), pr.p20);
        CoefficientDump {
            geometry,
            q,
            w2: e.w2,
            pivot: e.pivot,
            p5,
            p6,
            leak5: pr.leak5,
            leak6: pr.leak6,
            v: s.resultant.v.to_vec(),
        }
    }
}
