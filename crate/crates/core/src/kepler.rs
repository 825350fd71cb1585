//! Two-body machinery: first integrals, element conversion and universal-variable
//! propagation for elliptic and hyperbolic orbits.
//!
//! Angle conventions for degenerate orbits: when `e < 1e-10` the argument of
//! pericenter is set to 0 and the anomaly is measured from the node; when
//! `sin i < 1e-10` the node is set to 0 and measured from the x axis. For
//! hyperbolic orbits `a < 0` and `ell` is the hyperbolic mean anomaly
//! `e sinh H - H`, which is not wrapped.

use serde::{Deserialize, Serialize};

use crate::error::{OdError, Result};
use crate::geom3::Vec3;
use crate::observations::ODInput;
use crate::scalar::Real;

const ECC_ZERO: f64 = 1e-10;
const SIN_I_ZERO: f64 = 1e-10;
const UNIVERSAL_TOL: f64 = 1e-13;
const UNIVERSAL_MAX_ITER: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de>"))]
pub struct CartesianState<T> {
    pub r: Vec3<T>,
    pub v: Vec3<T>,
    pub epoch: T,
    pub mu: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerianElements<T> {
    pub a: T,
    pub e: T,
    pub i: T,
    #[serde(rename = "Omega")]
    pub omega_node: T,
    pub omega: T,
    pub ell: T,
    pub epoch: T,
    pub mu: T,
}

/// Angular momentum `c`, energy `ℰ` and the (dimensionless) Laplace-Lenz vector `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrals<T> {
    pub c: Vec3<T>,
    pub energy: T,
    pub laplace: Vec3<T>,
}

impl<T: Real> CartesianState<T> {
    pub fn new(r: Vec3<T>, v: Vec3<T>, epoch: T, mu: T) -> Self {
        CartesianState { r, v, epoch, mu }
    }
}

pub fn integrals<T: Real>(s: &CartesianState<T>) -> Integrals<T> {
    let rn = s.r.norm();
    let v2 = s.v.norm_squared();
    let c = s.r.cross(&s.v);
    let energy = v2 / T::of(2.0) - s.mu / rn;
    let mu_l = s.r * (v2 - s.mu / rn) - s.v * s.v.dot(&s.r);
    Integrals { c, energy, laplace: mu_l / s.mu }
}

pub fn elements_from_cartesian<T: Real>(s: &CartesianState<T>) -> Result<KeplerianElements<T>> {
    let Integrals { c, energy, laplace } = integrals(s);
    let cn = c.norm();
    if !(cn >= T::of(1e-12)) {
        return Err(OdError::DegenerateOrbit(format!("angular momentum {:e}", cn.to_f64_lossy())));
    }
    let e = laplace.norm();
    if (e - T::one()).abs() < T::of(1e-12) {
        return Err(OdError::DegenerateOrbit("parabolic orbit".into()));
    }
    let a = -s.mu / (T::of(2.0) * energy);
    let c_hat = c / cn;
    let i = c_hat.z.max(-T::one()).min(T::one()).acos();

    let node = Vec3::new(-c.y, c.x, T::zero());
    let (n_hat, omega_node) = if i.sin() < T::of(SIN_I_ZERO) {
        (Vec3::axis(0), T::zero())
    } else {
        let n = node.normalize();
        (n, n.y.atan2(n.x).wrap_two_pi())
    };
    let m_hat = c_hat.cross(&n_hat);

    let (p_hat, omega) = if e < T::of(ECC_ZERO) {
        (n_hat, T::zero())
    } else {
        let e_hat = laplace / e;
        let w = e_hat.dot(&m_hat).atan2(e_hat.dot(&n_hat)).wrap_two_pi();
        (e_hat, w)
    };
    let q_hat = c_hat.cross(&p_hat);
    let f = s.r.dot(&q_hat).atan2(s.r.dot(&p_hat));

    let ell = if e < T::one() {
        let ea = ((T::one() - e * e).sqrt() * f.sin()).atan2(e + f.cos());
        (ea - e * ea.sin()).wrap_two_pi()
    } else {
        let sh = (e * e - T::one()).sqrt() * f.sin() / (T::one() + e * f.cos());
        let h = sh.asinh();
        e * h.sinh() - h
    };

    Ok(KeplerianElements { a, e, i, omega_node, omega, ell, epoch: s.epoch, mu: s.mu })
}

/// Solves `E - e sin E = M` (elliptic) or `e sinh H - H = M` (hyperbolic).
fn eccentric_anomaly<T: Real>(e: T, m: T) -> Result<T> {
    let tol = T::of(1e-15);
    if e < T::one() {
        let m = m.wrap_pi();
        let mut x = if e < T::of(0.8) { m } else { T::PI().copysign(m) };
        for _ in 0..100 {
            let dx = (x - e * x.sin() - m) / (T::one() - e * x.cos());
            x -= dx;
            if dx.abs() <= tol * (T::one() + x.abs()) {
                return Ok(x);
            }
        }
        Err(OdError::NoConvergence { what: "elliptic Kepler equation", iterations: 100 })
    } else {
        let mut x = (m / e).asinh();
        for _ in 0..100 {
            let dx = (e * x.sinh() - x - m) / (e * x.cosh() - T::one());
            x -= dx;
            if dx.abs() <= tol * (T::one() + x.abs()) {
                return Ok(x);
            }
        }
        Err(OdError::NoConvergence { what: "hyperbolic Kepler equation", iterations: 100 })
    }
}

pub fn cartesian_from_elements<T: Real>(el: &KeplerianElements<T>) -> Result<CartesianState<T>> {
    let (a, e) = (el.a, el.e);
    let p = a * (T::one() - e * e);
    if !(p > T::zero()) || (e - T::one()).abs() < T::of(1e-12) {
        return Err(OdError::DegenerateOrbit("semilatus rectum not positive".into()));
    }
    let (sf, cf) = if e < T::one() {
        let ea = eccentric_anomaly(e, el.ell)?;
        let (s, c) = ea.sin_cos();
        let d = T::one() - e * c;
        ((T::one() - e * e).sqrt() * s / d, (c - e) / d)
    } else {
        let h = eccentric_anomaly(e, el.ell)?;
        let d = e * h.cosh() - T::one();
        ((e * e - T::one()).sqrt() * h.sinh() / d, (e - h.cosh()) / d)
    };
    let rn = p / (T::one() + e * cf);
    let vs = (el.mu / p).sqrt();

    let (so, co) = el.omega_node.sin_cos();
    let (si, ci) = el.i.sin_cos();
    let (sw, cw) = el.omega.sin_cos();
    let n_hat = Vec3::new(co, so, T::zero());
    let m_hat = Vec3::new(-so * ci, co * ci, si);
    let p_hat = n_hat * cw + m_hat * sw;
    let q_hat = m_hat * cw - n_hat * sw;

    let r = p_hat * (rn * cf) + q_hat * (rn * sf);
    let v = p_hat * (-vs * sf) + q_hat * (vs * (e + cf));
    Ok(CartesianState { r, v, epoch: el.epoch, mu: el.mu })
}

/// Stumpff functions `C(ψ)`, `S(ψ)`.
pub fn stumpff<T: Real>(psi: T) -> (T, T) {
    if psi.abs() < T::one() {
        // C = Σ (-ψ)^k/(2k+2)!, S = Σ (-ψ)^k/(2k+3)!
        let (mut c, mut s) = (T::zero(), T::zero());
        let mut term_c = T::of(0.5);
        let mut term_s = T::of(1.0 / 6.0);
        for k in 0..12 {
            c += term_c;
            s += term_s;
            let kk = T::of(k as f64);
            term_c = term_c * (-psi) / ((T::of(2.0) * kk + T::of(3.0)) * (T::of(2.0) * kk + T::of(4.0)));
            term_s = term_s * (-psi) / ((T::of(2.0) * kk + T::of(4.0)) * (T::of(2.0) * kk + T::of(5.0)));
        }
        (c, s)
    } else if psi > T::zero() {
        let sq = psi.sqrt();
        ((T::one() - sq.cos()) / psi, (sq - sq.sin()) / (psi * sq))
    } else {
        let sq = (-psi).sqrt();
        ((sq.cosh() - T::one()) / (-psi), (sq.sinh() - sq) / (-psi * sq))
    }
}

/// Two-body propagation by `dt` days with the universal anomaly.
pub fn propagate<T: Real>(s: &CartesianState<T>, dt: T) -> Result<CartesianState<T>> {
    if dt == T::zero() {
        return Ok(*s);
    }
    let mu = s.mu;
    let smu = mu.sqrt();
    let r0 = s.r.norm();
    let sigma0 = s.r.dot(&s.v) / smu;
    let alpha = T::of(2.0) / r0 - s.v.norm_squared() / mu;
    let target = smu * dt;

    // F(χ) = σ₀χ²C + (1-αr₀)χ³S + r₀χ - √μ·dt, strictly increasing with F' = r.
    let eval = |x: T| {
        let psi = alpha * x * x;
        let (c, sf) = stumpff(psi);
        let terms = [sigma0 * x * x * c, (T::one() - alpha * r0) * x * x * x * sf, r0 * x, -target];
        let f = terms[0] + terms[1] + terms[2] + terms[3];
        let noise = terms.iter().fold(T::zero(), |m, t| m + t.abs()) * T::epsilon() * T::of(16.0);
        let df = sigma0 * x * (T::one() - psi * sf) + (T::one() - alpha * r0) * x * x * c + r0;
        (f, df, c, sf, noise)
    };

    let sign = dt.signum();
    let mut guess = if alpha > T::zero() {
        smu * dt * alpha
    } else {
        let a = T::one() / alpha;
        let num = -T::of(2.0) * mu * alpha * dt;
        let den = s.r.dot(&s.v) + sign * (-mu * a).sqrt() * (T::one() - r0 * alpha);
        sign * (-a).sqrt() * (num / den).ln()
    };
    if !guess.is_finite() || guess * sign <= T::zero() {
        guess = target / r0;
    }
    // bracket [lo, hi] with F(lo) ≤ 0 ≤ F(hi) in the direction of dt
    let (mut lo, mut hi) = (T::zero(), guess);
    let mut grow = 0;
    while eval(hi).0 * sign < T::zero() {
        lo = hi;
        hi = hi * T::of(2.0);
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return Err(OdError::NoConvergence { what: "universal anomaly bracket", iterations: grow });
        }
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }

    let mut x = guess.max(lo).min(hi);
    let mut checkpoint = hi - lo;
    for iter in 0..UNIVERSAL_MAX_ITER {
        let (f, df, _, _, noise) = eval(x);
        // at the rounding floor of F further steps only chase noise
        let settled = f.abs() <= noise;
        if f < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - f / df;
        let stalled = iter % 4 == 3 && hi - lo > checkpoint / T::of(2.0);
        if iter % 4 == 3 {
            checkpoint = hi - lo;
        }
        if !(next > lo && next < hi) || stalled {
            next = (lo + hi) / T::of(2.0);
        }
        let step = next - x;
        x = next;
        if settled {
            x -= step;
        }
        if settled || step.abs() <= T::of(UNIVERSAL_TOL) * (T::one() + x.abs()) {
            let (_, rn, c, sf, _) = eval(x);
            let x2 = x * x;
            let f = T::one() - x2 * c / r0;
            let g = dt - x2 * x * sf / smu;
            let r = s.r * f + s.v * g;
            let fdot = smu / (rn * r0) * (alpha * x2 * x * sf - x);
            let gdot = T::one() - x2 * c / rn;
            let v = s.r * fdot + s.v * gdot;
            return Ok(CartesianState { r, v, epoch: s.epoch + dt, mu });
        }
    }
    Err(OdError::NoConvergence { what: "universal Kepler equation", iterations: UNIVERSAL_MAX_ITER })
}

/// Light-time corrected epochs `(t₁ - ρ₁/c, t̄₂ - ρ₂/c)`; the raw epochs when
/// the input disables the correction.
pub fn light_corrected_epochs(input: &ODInput, rho2: f64) -> (f64, f64) {
    if !input.light_time {
        return (input.p1.epoch, input.a2.epoch);
    }
    (input.p1.epoch - input.p1.rho / input.c_light, input.a2.epoch - rho2 / input.c_light)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observations::MU_SUN;
    use proptest::prelude::*;

    const MU: f64 = MU_SUN;

    fn st(r: [f64; 3], v: [f64; 3]) -> CartesianState<f64> {
        CartesianState::new(r.into(), v.into(), 0.0, MU)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn circular_integrals() {
        let s = st([1.0, 0.0, 0.0], [0.0, MU.sqrt(), 0.0]);
        let ig = integrals(&s);
        assert!(rel(ig.energy, -MU / 2.0) < 1e-15);
        assert!(ig.laplace.norm() < 1e-15);
        assert!((ig.c - Vec3::new(0.0, 0.0, MU.sqrt())).norm() < 1e-17);
    }

    #[test]
    fn element_roundtrip_elliptic() {
        let el = KeplerianElements { a: 1.0, e: 0.1, i: 0.2, omega_node: 0.3, omega: 0.4, ell: 0.5, epoch: 0.0, mu: MU };
        let back = elements_from_cartesian(&cartesian_from_elements(&el).unwrap()).unwrap();
        for (x, y) in [(el.a, back.a), (el.e, back.e), (el.i, back.i), (el.omega_node, back.omega_node), (el.omega, back.omega), (el.ell, back.ell)] {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn element_roundtrip_hyperbolic() {
        let s = st([1.0, 0.2, 0.1], [0.002, 0.03, 0.004]);
        assert!(integrals(&s).energy > 0.0);
        let el = elements_from_cartesian(&s).unwrap();
        assert!(el.e > 1.0 && el.a < 0.0);
        let back = cartesian_from_elements(&el).unwrap();
        assert!((back.r - s.r).norm() < 1e-10);
        assert!((back.v - s.v).norm() < 1e-10 * 0.03);
    }

    #[test]
    fn equatorial_circular_convention() {
        let s = st([0.0, 1.0, 0.0], [-MU.sqrt(), 0.0, 0.0]);
        let el = elements_from_cartesian(&s).unwrap();
        assert_eq!(el.omega_node, 0.0);
        assert_eq!(el.omega, 0.0);
        assert!((el.ell - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let back = cartesian_from_elements(&el).unwrap();
        assert!((back.r - s.r).norm() < 1e-12);
    }

    #[test]
    fn rectilinear_rejected() {
        let s = st([1.0, 0.0, 0.0], [0.01, 0.0, 0.0]);
        assert!(matches!(elements_from_cartesian(&s), Err(OdError::DegenerateOrbit(_))));
    }

    #[test]
    fn propagate_zero_and_period() {
        let s = st([1.0, 0.0, 0.0], [0.0, MU.sqrt(), 0.0]);
        assert_eq!(propagate(&s, 0.0).unwrap(), s);
        let period = std::f64::consts::TAU / MU.sqrt();
        let back = propagate(&s, period).unwrap();
        assert!((back.r - s.r).norm() < 1e-9);
        let quarter = propagate(&s, period / 4.0).unwrap();
        assert!((quarter.r - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn propagate_matches_element_advance() {
        let el = KeplerianElements { a: 2.2, e: 0.6, i: 0.5, omega_node: 1.0, omega: 2.0, ell: 0.3, epoch: 0.0, mu: MU };
        let s = cartesian_from_elements(&el).unwrap();
        let dt = 123.4;
        let n = (MU / el.a.powi(3)).sqrt();
        let advanced = cartesian_from_elements(&KeplerianElements { ell: el.ell + n * dt, epoch: dt, ..el }).unwrap();
        let prop = propagate(&s, dt).unwrap();
        assert!((prop.r - advanced.r).norm() < 1e-10);
        assert!((prop.v - advanced.v).norm() < 1e-12);
        assert_eq!(prop.epoch, dt);
    }

    #[test]
    fn light_time_epochs() {
        let text = r#"{"t1": 10.0, "alpha1": 0.1, "delta1": 0.0, "rho1": 0.0001, "t2bar": 20.0, "alpha2": 0.2,
            "delta2": 0.1, "alphadot2": 0.0, "deltadot2": 0.0, "obs1": {"q": [1,0,0], "qdot": [0,0.017,0]},
            "obs2": {"q": [0,1,0], "qdot": [-0.017,0,0]}}"#;
        let mut inp = crate::observations::parse_json(text, &Default::default()).unwrap();
        let c = inp.c_light;
        let (t1, t2) = light_corrected_epochs(&inp, c);
        assert!((t1 - (10.0 - 0.0001 / c)).abs() < 1e-15);
        assert!((t2 - 19.0).abs() < 1e-12);
        inp.p1.rho = 0.0;
        assert_eq!(light_corrected_epochs(&inp, 1.0).0, 10.0);
        inp.light_time = false;
        assert_eq!(light_corrected_epochs(&inp, 1.0), (10.0, 20.0));
    }

    #[test]
    fn f32_instantiation() {
        let s = CartesianState::<f32>::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0172, 0.001), 0.0, 0.0172 * 0.0172);
        let p = propagate(&s, 10.0).unwrap();
        assert!((integrals(&p).energy - integrals(&s).energy).abs() < 1e-5 * integrals(&s).energy.abs());
    }

    fn state_strategy() -> impl Strategy<Value = CartesianState<f64>> {
        (
            prop::array::uniform3(-2.0..2.0f64),
            prop::array::uniform3(-0.04..0.04f64),
        )
            .prop_filter("nondegenerate", |(r, v)| {
                let r = Vec3::from(*r);
                let v = Vec3::from(*v);
                r.norm() > 0.2 && r.cross(&v).norm() > 1e-4
            })
            .prop_map(|(r, v)| st(r, v))
    }

    fn elements_strategy() -> impl Strategy<Value = KeplerianElements<f64>> {
        (0.5..4.0f64, 0.01..0.95f64, 0.01..3.1f64, 0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU, 0.0..std::f64::consts::TAU)
            .prop_map(|(a, e, i, o, w, l)| KeplerianElements { a, e, i, omega_node: o, omega: w, ell: l, epoch: 0.0, mu: MU })
    }

    proptest! {
        #[test]
        fn lemma_identity(s in state_strategy()) {
            let ig = integrals(&s);
            let lhs = MU * MU * ig.laplace.norm_squared();
            let rhs = 2.0 * ig.energy * ig.c.norm_squared() + MU * MU;
            prop_assert!((lhs - rhs).abs() <= 1e-11 * (MU * MU + (2.0 * ig.energy * ig.c.norm_squared()).abs()));
        }

        #[test]
        fn laplace_norm_is_eccentricity(s in state_strategy()) {
            let ig = integrals(&s);
            let el = elements_from_cartesian(&s).unwrap();
            prop_assert!((ig.laplace.norm() - el.e).abs() < 1e-10);
        }

        #[test]
        fn cartesian_roundtrip(s in state_strategy()) {
            prop_assume!((integrals(&s).laplace.norm() - 1.0).abs() > 1e-3);
            let back = cartesian_from_elements(&elements_from_cartesian(&s).unwrap()).unwrap();
            prop_assert!((back.r - s.r).norm() < 1e-10 * s.r.norm().max(1.0));
            prop_assert!((back.v - s.v).norm() < 1e-10 * s.v.norm().max(0.01));
        }

        #[test]
        fn elements_roundtrip(el in elements_strategy()) {
            let back = elements_from_cartesian(&cartesian_from_elements(&el).unwrap()).unwrap();
            prop_assert!((back.a - el.a).abs() < 1e-10 * el.a);
            prop_assert!((back.e - el.e).abs() < 1e-10);
            prop_assert!((back.i - el.i).abs() < 1e-10);
            prop_assert!((back.omega_node - el.omega_node).wrap_pi().abs() < 1e-10);
            prop_assert!((back.omega - el.omega).wrap_pi().abs() < 1e-9);
            prop_assert!((back.ell - el.ell).wrap_pi().abs() < 1e-9);
        }

        #[test]
        fn propagation_conserves_integrals(s in state_strategy(), dt in -1e4..1e4f64) {
            let e = integrals(&s).laplace.norm();
            prop_assume!(e <= 0.99 || e >= 1.01);
            let p = propagate(&s, dt).unwrap();
            let (a, b) = (integrals(&s), integrals(&p));
            let escale = a.energy.abs() + MU / s.r.norm();
            prop_assert!((a.energy - b.energy).abs() <= 1e-10 * escale);
            // near-radial escapes have |c| much smaller than the products forming it
            let cscale = s.r.norm() * s.v.norm() + p.r.norm() * p.v.norm();
            prop_assert!((a.c - b.c).norm() <= 1e-12 * cscale);
            prop_assert!((a.laplace - b.laplace).norm() <= 1e-10 * (1.0 + a.laplace.norm()));
        }

        #[test]
        fn forward_backward(s in state_strategy(), dt in -400.0..400.0f64) {
            let e = integrals(&s).laplace.norm();
            prop_assume!(e <= 0.99 || e >= 1.01);
            let p = propagate(&propagate(&s, dt).unwrap(), -dt).unwrap();
            prop_assert!((p.r - s.r).norm() < 1e-10 * s.r.norm().max(1.0));
        }
    }
}
