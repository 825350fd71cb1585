//! Full pipeline for one input: coefficients, roots of `𝔳`, back-substitution,
//! residuals of the complete 8-equation system, physical filters and orbital
//! elements at both light-corrected epochs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::geom3::Vec3;
use crate::kepler::{elements_from_cartesian, integrals, light_corrected_epochs, CartesianState, KeplerianElements};
use crate::observations::{to_json, ODInput};
use crate::polysystem::{self, eliminate_linear, generators, mu_laplace, mu_laplace_tilde, BivariatePair, CoefficientSet, Pivot, Problem, Unknowns};
use crate::rootfind::{all_roots, filter_real_positive, RootFilter, RootSet};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol_im: f64,
    pub tol_dup: f64,
    /// Largest normalised residual of an accepted candidate.
    pub tol_accept: f64,
    /// Largest element mismatch between the two epochs (relative on `a`, absolute otherwise).
    pub tol_elem: f64,
    /// `|a₁(ρ₂)|` below this fraction of its coefficient scale is a near-singular pivot.
    pub pivot_eps: f64,
    pub cluster_rel: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol_im: 1e-7, tol_dup: 1e-9, tol_accept: 1e-6, tol_elem: 1e-6, pivot_eps: 1e-10, cluster_rel: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateFlags {
    pub real: bool,
    pub rho2_pos: bool,
    pub z2_pos: bool,
    pub near_singular_pivot: bool,
    /// Another real root of `𝔳` lies within `cluster_rel·ρ₂`; the two
    /// solutions are then poorly separated by the data.
    pub clustered: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub rho2: f64,
    pub zeta1: f64,
    pub xi1: f64,
    pub rhodot1: f64,
    pub rhodot2: f64,
    pub z2: f64,
    /// Largest entry of `residuals`.
    pub residual_full: f64,
    pub residuals: [f64; 8],
    pub flags: CandidateFlags,
    pub t1_tilde: f64,
    pub t2_tilde: f64,
    pub state1: CartesianState<f64>,
    pub state2: CartesianState<f64>,
    pub elements1: Option<KeplerianElements<f64>>,
    pub elements2: Option<KeplerianElements<f64>>,
    pub element_gap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl CandidateSolution {
    pub fn unknowns(&self) -> Unknowns<f64> {
        Unknowns {
            rhodot1: self.rhodot1,
            xi1: self.xi1,
            zeta1: self.zeta1,
            rho2: self.rho2,
            rhodot2: self.rhodot2,
            z2: self.z2,
        }
    }

    pub fn accepted(&self) -> bool {
        self.flags.accepted
    }
}

/// Everything produced while solving one input.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub coefficients: CoefficientSet<f64>,
    pub roots: RootSet<f64>,
    pub candidates: Vec<CandidateSolution>,
}

pub fn solve(input: &ODInput) -> Result<Vec<CandidateSolution>> {
    Ok(solve_with(input, &SolverConfig::default())?.candidates)
}

pub fn solve_with(input: &ODInput, cfg: &SolverConfig) -> Result<SolveOutcome> {
    let problem = Problem::<f64>::from_input(input)?;
    let coefficients = polysystem::build_extended(input)?;
    let roots = all_roots(&coefficients.resultant.v)?;
    let filter = RootFilter { tol_im: cfg.tol_im, tol_dup: cfg.tol_dup };
    let reals = filter_real_positive(&roots, &filter);
    let mut candidates: Vec<CandidateSolution> = reals
        .iter()
        .map(|&rho| {
            let mut c = back_substitute(input, &problem, &coefficients, rho, cfg);
            c.flags.clustered = reals.iter().any(|&o| o != rho && (o - rho).abs() <= cfg.cluster_rel * rho);
            c
        })
        .collect();
    candidates.sort_by(|a, b| a.rho2.total_cmp(&b.rho2));
    Ok(SolveOutcome { coefficients, roots, candidates })
}

/// Magnitude of the coefficients of a polynomial in `ρ` evaluated at `ρ`.
fn poly_scale(c: &[f64], rho: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * rho.abs() + a.abs())
}

/// Unknowns at `(t, ρ₂)` by direct substitution, `z₂` from the energy equation.
fn unknowns_direct(problem: &Problem<f64>, set: &CoefficientSet<f64>, t: f64, rho2: f64) -> Unknowns<f64> {
    let tg = eliminate_linear(&set.elimination, t, rho2);
    let mut u = Unknowns { rhodot1: tg.rhodot1, xi1: tg.xi1, zeta1: tg.zeta1, rho2, rhodot2: tg.rhodot2, z2: 0.0 };
    let k = problem.states(&u);
    u.z2 = 0.5 * k.r2dot.norm_squared() - 0.5 * k.r1dot.norm_squared() + problem.mu / k.r1.norm();
    u
}

/// Newton on `(q̃₅, p₆) = 0` in `(t, ρ₂)` keeping only improving steps. The
/// residuals come from `f`, the Jacobian from the coefficient forms.
fn newton_pair(pair: &BivariatePair<f64>, mut t: f64, mut rho: f64, f: impl Fn(f64, f64) -> (f64, f64)) -> (f64, f64) {
    let (a1, b1) = (pair.a1_poly(), pair.b1_poly());
    let (da1, da0, db1, db0) = (a1.derivative(), pair.a0_poly().derivative(), b1.derivative(), pair.b0_poly().derivative());
    let norm = |t: f64, r: f64| {
        let s5 = poly_scale(&pair.a1, r) * t.abs() + poly_scale(&pair.a0, r);
        let s6 = pair.p20.abs() * t * t + poly_scale(&pair.b1, r) * t.abs() + poly_scale(&pair.b0, r);
        let (f5, f6) = f(t, r);
        (f5 / s5).hypot(f6 / s6)
    };
    let mut best = norm(t, rho);
    for _ in 0..8 {
        let (f5, f6) = f(t, rho);
        let j11 = a1.eval(rho);
        let j12 = da1.eval(rho) * t + da0.eval(rho);
        let j21 = 2.0 * pair.p20 * t + b1.eval(rho);
        let j22 = db1.eval(rho) * t + db0.eval(rho);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dt = (f5 * j22 - j12 * f6) / det;
        let dr = (j11 * f6 - j21 * f5) / det;
        let (nt, nr) = (t - dt, rho - dr);
        let n = norm(nt, nr);
        if !(n < best) {
            break;
        }
        best = n;
        t = nt;
        rho = nr;
    }
    (t, rho)
}

/// Damped Gauss-Newton in `(t, ρ₂)` on all eight normalised residuals. The
/// pair `(q̃₅, p₆)` can be nearly singular at a root where the full system is
/// not, which leaves the resultant root short of full accuracy.
fn polish_full(problem: &Problem<f64>, set: &CoefficientSet<f64>, mut t: f64, mut rho: f64) -> (f64, f64) {
    let res = |t: f64, r: f64| residuals_of(problem, &unknowns_direct(problem, set, t, r));
    let cost = |f: &[f64; 8]| f.iter().map(|x| x * x).sum::<f64>();
    let mut f = res(t, rho);
    let mut c = cost(&f);
    let mut lambda = 1e-12;
    for _ in 0..12 {
        if !(c > 0.0) {
            break;
        }
        let (ht, hr) = (1e-7 * (t.abs() + 1e-4), 1e-7 * rho.abs());
        let (fp, fm) = (res(t + ht, rho), res(t - ht, rho));
        let (gp, gm) = (res(t, rho + hr), res(t, rho - hr));
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..8 {
            let jt = (fp[i] - fm[i]) / (2.0 * ht) * ht;
            let jr = (gp[i] - gm[i]) / (2.0 * hr) * hr;
            a11 += jt * jt;
            a12 += jt * jr;
            a22 += jr * jr;
            b1 -= jt * f[i];
            b2 -= jr * f[i];
        }
        let mut improved = false;
        for _ in 0..6 {
            let (d11, d22) = (a11 * (1.0 + lambda), a22 * (1.0 + lambda));
            let det = d11 * d22 - a12 * a12;
            if !(det > 0.0) {
                lambda *= 100.0;
                continue;
            }
            let nt = t + (b1 * d22 - a12 * b2) / det * ht;
            let nr = rho + (d11 * b2 - a12 * b1) / det * hr;
            let nf = res(nt, nr);
            let nc = cost(&nf);
            if nc < c {
                (t, rho, f, c) = (nt, nr, nf, nc);
                lambda = (lambda * 0.1).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 100.0;
        }
        if !improved {
            break;
        }
    }
    (t, rho)
}

fn back_substitute(input: &ODInput, problem: &Problem<f64>, set: &CoefficientSet<f64>, rho0: f64, cfg: &SolverConfig) -> CandidateSolution {
    let pair = &set.pair;
    let a1 = pair.a1_poly().eval(rho0);
    let near_singular = a1.abs() < cfg.pivot_eps * poly_scale(&pair.a1, rho0);
    let mut diagnostic = None;
    let (t, rho2) = if near_singular {
        // a₀ vanishes with a₁ here, so take t from p₆ = 0 alone
        diagnostic = Some(format!("near-singular pivot: |a1(rho2)| = {:e}", a1.abs()));
        let (p, q, r) = (pair.p20, pair.b1_poly().eval(rho0), pair.b0_poly().eval(rho0));
        let disc = q * q - 4.0 * p * r;
        let t = if p == 0.0 {
            -r / q
        } else if disc >= 0.0 {
            let s = -0.5 * (q + disc.sqrt().copysign(q));
            let (x1, x2) = (s / p, r / s);
            if pair.q5(x1, rho0).abs() <= pair.q5(x2, rho0).abs() { x1 } else { x2 }
        } else {
            -q / (2.0 * p)
        };
        (t, rho0)
    } else {
        let (t, rho) = newton_pair(pair, -pair.a0_poly().eval(rho0) / a1, rho0, |t, r| (pair.q5(t, r), pair.p6(t, r)));
        // the expanded coefficients carry rounding; finish on the generators themselves
        let (t, rho) = newton_pair(pair, t, rho, |t, r| {
            let g = generators(problem, &set.geometry, &unknowns_direct(problem, set, t, r));
            (g[4], g[5])
        });
        polish_full(problem, set, t, rho)
    };

    let u = unknowns_direct(problem, set, t, rho2);
    debug_assert!(match set.elimination.pivot {
        Pivot::EliminateXi => u.zeta1 == t,
        Pivot::EliminateZeta => u.xi1 == t,
    });

    let residuals = residuals_of(problem, &u);
    let residual_full = residuals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let k = problem.states(&u);
    let (t1_tilde, t2_tilde) = light_corrected_epochs(input, rho2);
    let state1 = CartesianState::new(k.r1, k.r1dot, t1_tilde, input.mu);
    let state2 = CartesianState::new(k.r2, k.r2dot, t2_tilde, input.mu);
    let el1 = elements_from_cartesian(&state1).ok();
    let el2 = elements_from_cartesian(&state2).ok();
    let element_gap = match (&el1, &el2) {
        (Some(a), Some(b)) => element_gap(a, b),
        _ => f64::INFINITY,
    };

    let mut flags = CandidateFlags {
        real: true,
        rho2_pos: rho2 > 0.0,
        z2_pos: u.z2 > 0.0,
        near_singular_pivot: near_singular,
        clustered: false,
        accepted: false,
    };
    flags.accepted = flags.real
        && flags.rho2_pos
        && flags.z2_pos
        && !near_singular
        && residual_full <= cfg.tol_accept
        && element_gap <= cfg.tol_elem;

    CandidateSolution {
        rho2,
        zeta1: u.zeta1,
        xi1: u.xi1,
        rhodot1: u.rhodot1,
        rhodot2: u.rhodot2,
        z2: u.z2,
        residual_full,
        residuals,
        flags,
        t1_tilde,
        t2_tilde,
        state1,
        state2,
        elements1: el1,
        elements2: el2,
        element_gap,
        diagnostic,
    }
}

/// Largest of `|Δa|/|a|`, `|Δe|`, `|Δi|`, `|ΔΩ|`, `|Δω|`, angles wrapped to `(-π, π]`.
pub fn element_gap(a: &KeplerianElements<f64>, b: &KeplerianElements<f64>) -> f64 {
    [
        (a.a - b.a).abs() / b.a.abs(),
        (a.e - b.e).abs(),
        (a.i - b.i).abs(),
        (a.omega_node - b.omega_node).wrap_pi().abs(),
        (a.omega - b.omega).wrap_pi().abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Normalised residuals of the eight equations: three angular-momentum rows
/// over `|c₁|+|c₂|`, three Laplace-Lenz rows over `μ`, the energy row over
/// `|ℰ₁|+|Ẽ₂|` and `(z₂²|r₂|² - μ²)/μ²`.
pub fn residuals_full(input: &ODInput, cand: &CandidateSolution) -> Result<[f64; 8]> {
    let problem = Problem::<f64>::from_input(input)?;
    Ok(residuals_of(&problem, &cand.unknowns()))
}

fn residuals_of(p: &Problem<f64>, u: &Unknowns<f64>) -> [f64; 8] {
    let k = p.states(u);
    let c1 = k.r1.cross(&k.r1dot);
    let c2 = k.r2.cross(&k.r2dot);
    let dc = (c1 - c2) / (c1.norm() + c2.norm());
    let dl: Vec3<f64> = (mu_laplace(p.mu, &k.r1, &k.r1dot) - mu_laplace_tilde(u.z2, &k.r2, &k.r2dot)) / p.mu;
    let e1 = integrals(&CartesianState::new(k.r1, k.r1dot, 0.0, p.mu)).energy;
    let e2 = 0.5 * k.r2dot.norm_squared() - u.z2;
    let mu2 = p.mu * p.mu;
    [
        dc.x,
        dc.y,
        dc.z,
        dl.x,
        dl.y,
        dl.z,
        (e1 - e2) / (e1.abs() + e2.abs()),
        (u.z2 * u.z2 * k.r2.norm_squared() - mu2) / mu2,
    ]
}

/// SHA-256 of the canonical JSON form of an input.
pub fn input_hash(input: &ODInput) -> String {
    let text = to_json(input).unwrap_or_default();
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Machine-readable record of one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub input_sha256: String,
    pub config: SolverConfig,
    pub pivot: Pivot,
    pub resultant_degree: usize,
    pub candidates: Vec<CandidateSolution>,
}

impl SolveReport {
    pub fn new(input: &ODInput, cfg: &SolverConfig, out: &SolveOutcome) -> Self {
        SolveReport {
            input_sha256: input_hash(input),
            config: *cfg,
            pivot: out.coefficients.elimination.pivot,
            resultant_degree: out.roots.degree,
            candidates: out.candidates.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_input;
    use crate::geom3::to_spherical;
    use crate::kepler::{cartesian_from_elements, propagate};
    use crate::observations::{Attributable, ObserverState, TopocentricPosition, C_LIGHT, MU_SUN};

    /// Noiseless data from one two-body orbit, observer on a circular 1 au orbit.
    fn synthetic(light_time: bool) -> (ODInput, Unknowns<f64>) {
        let mu = MU_SUN;
        let el = KeplerianElements { a: 1.6, e: 0.3, i: 0.3, omega_node: 1.0, omega: 2.0, ell: 0.4, epoch: 0.0, mu };
        let s1 = cartesian_from_elements(&el).unwrap();
        let (t1, t2) = (0.0, 25.0);
        let s2 = propagate(&s1, t2 - t1).unwrap();
        let n = mu.sqrt();
        let obs = |t: f64| ObserverState {
            q: Vec3::new((n * t + 0.3).cos(), (n * t + 0.3).sin(), 0.0),
            qdot: Vec3::new(-n * (n * t + 0.3).sin(), n * (n * t + 0.3).cos(), 0.0),
            epoch: t,
        };
        let (o1, o2) = (obs(t1), obs(t2));
        let (a1, d1, rho1) = to_spherical(&(s1.r - o1.q));
        let los2 = s2.r - o2.q;
        let (a2, d2, rho2) = to_spherical(&los2);
        let f2 = crate::geom3::los_basis(a2, d2).unwrap();
        let dlos = s2.v - o2.qdot;
        let rhodot2 = dlos.dot(&f2.e_rho);
        let alphadot2 = dlos.dot(&f2.e_alpha) / (rho2 * d2.cos());
        let deltadot2 = dlos.dot(&f2.e_delta) / rho2;
        let f1 = crate::geom3::los_basis(a1, d1).unwrap();
        let dlos1 = s1.v - o1.qdot;
        let input = ODInput {
            p1: TopocentricPosition { alpha: a1, delta: d1, rho: rho1, epoch: t1 },
            a2: Attributable { alpha: a2, delta: d2, alpha_dot: alphadot2, delta_dot: deltadot2, epoch: t2 },
            obs1: o1,
            obs2: o2,
            mu,
            c_light: C_LIGHT,
            light_time,
            gamma_p1: None,
            gamma_a2: None,
        };
        let truth = Unknowns {
            rhodot1: dlos1.dot(&f1.e_rho),
            xi1: dlos1.dot(&f1.e_alpha),
            zeta1: dlos1.dot(&f1.e_delta),
            rho2,
            rhodot2,
            z2: mu / s2.r.norm(),
        };
        (input, truth)
    }

    #[test]
    fn noiseless_fixture_recovers_truth() {
        let (input, truth) = synthetic(false);
        let cands = solve(&input).unwrap();
        assert!(cands.len() <= 8);
        let hits: Vec<_> = cands.iter().filter(|c| c.accepted() && (c.rho2 - truth.rho2).abs() <= 1e-8 * truth.rho2).collect();
        assert_eq!(hits.len(), 1, "{cands:#?}");
        let c = hits[0];
        assert!((c.zeta1 - truth.zeta1).abs() < 1e-8 * 0.02);
        assert!((c.xi1 - truth.xi1).abs() < 1e-8 * 0.02);
        assert!(c.element_gap <= 1e-8);
        assert!(c.residual_full <= 1e-8);
        // accepted candidates satisfy the positive z₂ branch
        for c in cands.iter().filter(|c| c.accepted()) {
            let r2 = c.state2.r.norm();
            assert!((c.z2 * r2 - input.mu).abs() <= 1e-6 * input.mu);
        }
        assert!(cands.windows(2).all(|w| w[0].rho2 <= w[1].rho2));
    }

    #[test]
    fn truth_residuals_vanish() {
        let (input, truth) = synthetic(false);
        let p = Problem::<f64>::from_input(&input).unwrap();
        let r = residuals_of(&p, &truth);
        assert!(r.iter().all(|x| x.abs() <= 1e-10), "{r:?}");
    }

    #[test]
    fn residuals_grow_with_perturbation() {
        let (input, truth) = synthetic(false);
        let p = Problem::<f64>::from_input(&input).unwrap();
        let mut last = 0.0;
        for k in 1..6 {
            let mut u = truth;
            u.rho2 += 1e-3 * k as f64 / 5.0;
            let r = residuals_of(&p, &u).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn z2_sign_flip() {
        let (input, truth) = synthetic(false);
        let p = Problem::<f64>::from_input(&input).unwrap();
        let a = residuals_of(&p, &truth);
        let b = residuals_of(&p, &Unknowns { z2: -truth.z2, ..truth });
        assert!((a[7] - b[7]).abs() < 1e-15);
        assert!((a[3] - b[3]).abs() + (a[4] - b[4]).abs() + (a[5] - b[5]).abs() > 1e-3);
    }

    #[test]
    fn light_time_shifts_epochs_only() {
        let (input, truth) = synthetic(true);
        let cands = solve(&input).unwrap();
        let c = cands.iter().find(|c| (c.rho2 - truth.rho2).abs() <= 1e-8 * truth.rho2).unwrap();
        assert!((c.t1_tilde - (input.p1.epoch - input.p1.rho / C_LIGHT)).abs() < 1e-15);
        assert!((c.t2_tilde - (input.a2.epoch - c.rho2 / C_LIGHT)).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_data_still_solves() {
        for seed in 0..10 {
            let out = solve_with(&random_input(seed), &SolverConfig::default()).unwrap();
            assert!(!out.roots.roots.is_empty());
            assert!(out.candidates.len() <= 8);
        }
    }

    #[test]
    fn deterministic_and_serialisable() {
        let (input, _) = synthetic(false);
        let cfg = SolverConfig::default();
        let a = SolveReport::new(&input, &cfg, &solve_with(&input, &cfg).unwrap());
        let b = SolveReport::new(&input, &cfg, &solve_with(&input, &cfg).unwrap());
        let (ja, jb) = (serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(ja, jb);
        assert_eq!(a.input_sha256.len(), 64);
        let back: SolveReport = serde_json::from_str(&ja).unwrap();
        assert_eq!(back.candidates.len(), a.candidates.len());
    }

    #[test]
    fn residuals_from_input_match() {
        let (input, _) = synthetic(false);
        for c in solve(&input).unwrap() {
            assert_eq!(residuals_full(&input, &c).unwrap(), c.residuals);
        }
    }
}
