//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing libtest capture) and then asserts the same verdict.

use std::io::Write;
use std::time::Instant;

use nalgebra::SMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kepod::geom3::Vec3;
use kepod::harness::{generate_case, run_batch, summarize, BatchConfig, HarnessConfig, NoiseModel, STAT_COLUMNS};
use kepod::kepler::{integrals, CartesianState};
use kepod::observations::{Attributable, ODInput, ObserverState, TopocentricPosition, C_LIGHT, MU_SUN};
use kepod::oracle::{multi_start, one_sided_gap, scan_roots, DEFAULT_RHO2_MAX, DEFAULT_SCAN_POINTS, SCAN_RHO2_MIN};
use kepod::polysystem::{build, build_extended, redundancy_check, Problem};
use kepod::scalar::Real;
use twofloat::TwoFloat;
use kepod::rootfind::{all_roots, filter_real_positive, RootFilter};
use kepod::select::{jacobian_chain, phi, phi_partials, predicted_p1, s_tilde_of, select_with_cov, Metric, PhiPoint, DEFAULT_CHI3_THRESHOLD};
use kepod::solver::{solve_with, CandidateSolution, SolverConfig};
use kepod::OdError;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2} [{verdict}] {name}: {detail}");
}

/// Data with no underlying orbit: observer near 1 au, random lines of sight.
fn generic_input(seed: u64) -> ODInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0000);
    let mut observer = |t: f64| {
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r: f64 = rng.random_range(0.98..1.02);
        let z = rng.random_range(-1e-4..1e-4);
        let v = 0.0172 / r.sqrt();
        ObserverState { q: Vec3::new(r * th.cos(), r * th.sin(), z), qdot: Vec3::new(-v * th.sin(), v * th.cos(), 0.0), epoch: t }
    };
    let (obs1, obs2) = (observer(0.0), observer(20.0));
    ODInput {
        p1: TopocentricPosition { alpha: rng.random_range(-3.0..3.0), delta: rng.random_range(-1.0..1.0), rho: rng.random_range(0.1..2.0), epoch: 0.0 },
        a2: Attributable {
            alpha: rng.random_range(-3.0..3.0),
            delta: rng.random_range(-1.0..1.0),
            alpha_dot: rng.random_range(-0.02..0.02),
            delta_dot: rng.random_range(-0.02..0.02),
            epoch: 20.0,
        },
        obs1,
        obs2,
        mu: MU_SUN,
        c_light: C_LIGHT,
        light_time: false,
        gamma_p1: None,
        gamma_a2: None,
    }
}

fn abs_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x.abs() + a.abs())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn criterion_01_exact_recovery() {
    let start = Instant::now();
    let cfg = BatchConfig { n_cases: 1000, retry: false, ..Default::default() };
    let out = run_batch(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = |r: &kepod::harness::CaseResult| r.rho2_best_rel_err.is_some_and(|e| e <= 1e-8);
    let n_ok = out.rows.iter().filter(|r| ok(r)).count();
    let failures: Vec<_> = out.rows.iter().filter(|r| !ok(r)).collect();
    let unflagged = failures.iter().filter(|r| !(r.failure.starts_with("degenerate:") || r.failure == "near_singular_pivot")).count();
    let frac = n_ok as f64 / out.rows.len() as f64;
    let pass = frac >= 0.99 && unflagged == 0;
    report(
        1,
        "exact recovery",
        pass,
        &format!("{n_ok}/{} within 1e-8 ({:.2}%), {} failures, {unflagged} without a degeneracy flag, {elapsed:.1} s", out.rows.len(), 100.0 * frac, failures.len()),
    );
    assert!(pass);
}

/// `Σ|cₖ||x|ᵏ` at any `Real` precision.
fn abs_eval_t<T: Real>(c: &[T], x: T) -> T {
    c.iter().rev().fold(T::zero(), |acc, &ck| acc * x.abs() + ck.abs())
}

/// The identity `𝔳 = -a₁²·p₆(-a₀/a₁)` is checked on the double-double pair and
/// resultant, at each companion root Newton-polished in double-double. At an
/// `f64` root the evaluation cannot beat `eps·Σ|𝔳 terms|/a₁²`, which exceeds any
/// fixed tolerance as `a₁ → 0`; that figure is reported alongside.
#[test]
fn criterion_02_resultant_degree_and_consistency() {
    let (mut deg8, mut n, mut n_roots) = (0, 0, 0);
    let (mut worst, mut worst_f64, mut worst_shift) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..200 {
        let input = generic_input(seed);
        let set = match build_extended(&input) {
            Ok(s) => s,
            Err(OdError::DegenerateGeometry(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        let hi = build(&Problem::<TwoFloat>::from_input(&input).unwrap()).unwrap();
        assert_eq!(hi.elimination.pivot, set.elimination.pivot);
        n += 1;
        if set.resultant.degree(1e-12) == 8 {
            deg8 += 1;
        }
        let (p, ph) = (&set.pair, &hi.pair);
        let v = hi.resultant.poly();
        let dv = v.derivative();
        let roots = all_roots(&set.resultant.v).unwrap();
        for &rho in &roots.real_roots {
            let a1 = p.a1_poly().eval(rho);
            if a1.abs() <= 1e-8 * abs_eval(&p.a1, rho) {
                continue;
            }
            n_roots += 1;
            let t = -p.a0_poly().eval(rho) / a1;
            let scale = p.p20.abs() * t * t + abs_eval(&p.b1, rho) * t.abs() + abs_eval(&p.b0, rho);
            worst_f64 = worst_f64.max(p.p6(t, rho).abs() / scale);

            let mut x = TwoFloat::from(rho);
            // linear convergence on double roots needs the longer budget
            for _ in 0..200 {
                let d = dv.eval(x);
                if d == TwoFloat::from(0.0) {
                    break;
                }
                let step = v.eval(x) / d;
                x -= step;
                if step.abs() <= TwoFloat::from(1e-30) * x.abs() {
                    break;
                }
            }
            worst_shift = worst_shift.max((x - TwoFloat::from(rho)).abs().to_f64_lossy() / rho.abs().max(1.0));
            let t = -ph.a0_poly().eval(x) / ph.a1_poly().eval(x);
            let scale = ph.p20.abs() * t * t + abs_eval_t(&ph.b1, x) * t.abs() + abs_eval_t(&ph.b0, x);
            let e = (ph.p6(t, x).abs() / scale).to_f64_lossy();
            worst = worst.max(e);
        }
    }
    let frac = deg8 as f64 / n as f64;
    let pass = frac >= 0.95 && worst <= 1e-8;
    report(
        2,
        "resultant degree and consistency",
        pass,
        &format!(
            "deg 8 in {deg8}/{n}; max normalised |p6| {worst:.2e} over {n_roots} real roots (plain f64 evaluation {worst_f64:.2e}, polish shift {worst_shift:.1e})"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_integral_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let r = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        if r.norm() < 0.1 {
            continue;
        }
        let v = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let ig = integrals(&CartesianState::new(r, v, 0.0, MU_SUN));
        let mu2 = MU_SUN * MU_SUN;
        let lhs = mu2 * ig.laplace.norm_squared() - 2.0 * ig.energy * ig.c.norm_squared() - mu2;
        worst = worst.max(lhs.abs() / (mu2 + (2.0 * ig.energy * ig.c.norm_squared()).abs()));
    }
    let pass = worst <= 1e-11;
    report(3, "integral identity", pass, &format!("max relative residual {worst:.2e} over 1e4 states"));
    assert!(pass);
}

#[test]
fn criterion_04_redundancy() {
    let (mut worst, mut n, mut skipped) = (0.0f64, 0, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..60u64 {
        if n == 50 {
            break;
        }
        let input = generic_input(1000 + seed);
        let problem = Problem::<f64>::from_input(&input).unwrap();
        let Ok(set) = build_extended(&input) else {
            skipped += 1;
            continue;
        };
        let points: Vec<(f64, f64)> = (0..100).map(|_| (rng.random_range(-0.03..0.03), rng.random_range(0.01..5.0))).collect();
        match redundancy_check(&problem, &set, &points) {
            Ok(r) => {
                worst = worst.max(r);
                n += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    let pass = n == 50 && worst <= 1e-9;
    report(4, "redundancy identity", pass, &format!("max normalised residual {worst:.2e} over {n} inputs x 100 points ({skipped} degenerate skipped)"));
    assert!(pass);
}

#[test]
fn criterion_05_oracle_equivalence() {
    let (mut scan_gap, mut newton_gap, mut n_sol, mut n_roots) = (0.0f64, 0.0f64, 0, 0);
    for seed in 0..50u64 {
        let input = generic_input(2000 + seed);
        let set = build_extended(&input).unwrap();
        let rs = all_roots(&set.resultant.v).unwrap();
        let pair = &set.pair;
        let a1 = pair.a1_poly();
        let companion: Vec<f64> = filter_real_positive(&rs, &RootFilter::default())
            .into_iter()
            .filter(|x| *x > SCAN_RHO2_MIN && *x <= DEFAULT_RHO2_MAX && a1.eval(*x).abs() > 1e-8 * abs_eval(&pair.a1, *x))
            .collect();
        let scan = scan_roots(&input, DEFAULT_RHO2_MAX, DEFAULT_SCAN_POINTS).unwrap();
        scan_gap = scan_gap.max(one_sided_gap(&scan.roots, &companion)).max(one_sided_gap(&companion, &scan.roots));
        n_roots += companion.len();
        let sols = multi_start(&input, 20, seed).unwrap();
        let rhos: Vec<f64> = sols.iter().map(|s| s.rho2()).collect();
        newton_gap = newton_gap.max(one_sided_gap(&rhos, &rs.real_roots));
        n_sol += sols.len();
    }
    let pass = scan_gap <= 1e-7 && newton_gap <= 1e-7;
    report(
        5,
        "oracle equivalence",
        pass,
        &format!("bracket/companion set gap {scan_gap:.2e} ({n_roots} roots); multi-start Newton gap {newton_gap:.2e} ({n_sol} solutions)"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_element_equality() {
    let cfg = HarnessConfig::default();
    let noisy = HarnessConfig { noise: NoiseModel { sigma_angle: 1e-6, sigma_rate: 1e-6, sigma_rho: 1e-6 }, ..Default::default() };
    let (mut worst, mut n) = (0.0f64, 0);
    for (h, count) in [(&cfg, 300u64), (&noisy, 100)] {
        for i in 0..count {
            let case = generate_case(h, i).unwrap();
            let Ok(out) = solve_with(&case.input, &SolverConfig::default()) else { continue };
            for c in out.candidates.iter().filter(|c| c.accepted()) {
                worst = worst.max(c.element_gap);
                n += 1;
            }
        }
    }
    let pass = n > 0 && worst <= 1e-8;
    report(6, "element equality", pass, &format!("max element mismatch {worst:.2e} over {n} accepted candidates"));
    assert!(pass);
}

/// Row-wise relative error of `a` against `f` after scaling columns by `h`.
fn row_rel_err<const R: usize, const C: usize>(a: &SMatrix<f64, R, C>, f: &SMatrix<f64, R, C>, h: &[f64; C]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..R {
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for j in 0..C {
            num = num.max(((a[(i, j)] - f[(i, j)]) * h[j]).abs());
            den = den.max((a[(i, j)] * h[j]).abs());
        }
        if den > 0.0 {
            worst = worst.max(num / den);
        } else {
            worst = worst.max(num);
        }
    }
    worst
}

fn partials_fd_error(p: &PhiPoint) -> f64 {
    let d = phi_partials(p);
    let mut worst = 0.0f64;
    for blk in 0..4 {
        let base = [p.r1, p.v1, p.r2, p.v2][blk];
        let h = 1e-6 * base.norm();
        let (mut fd4, mut fd5) = ([0.0; 3], [0.0; 3]);
        for k in 0..3 {
            let shift = |s: f64| {
                let mut q = *p;
                let v = match blk {
                    0 => &mut q.r1,
                    1 => &mut q.v1,
                    2 => &mut q.r2,
                    _ => &mut q.v2,
                };
                *v += Vec3::axis(k) * s;
                phi(&q)
            };
            let (fp, fm) = (shift(h), shift(-h));
            fd4[k] = (fp[3] - fm[3]) / (2.0 * h);
            fd5[k] = (fp[4] - fm[4]) / (2.0 * h);
        }
        worst = worst.max((d.d4[blk] - Vec3::from(fd4)).norm() / d.d4[blk].norm());
        worst = worst.max((d.d5[blk] - Vec3::from(fd5)).norm() / d.d5[blk].norm());
    }
    worst
}

fn nearest_accepted(cands: &[CandidateSolution], rho2: f64) -> Option<&CandidateSolution> {
    cands
        .iter()
        .filter(|c| c.accepted() && (c.rho2 - rho2).abs() <= 1e-3 * rho2)
        .min_by(|a, b| (a.rho2 - rho2).abs().total_cmp(&(b.rho2 - rho2).abs()))
}

/// Quantities whose D-derivatives the covariance chain provides.
struct ChainValues {
    s: [f64; 5],
    att1: [f64; 6],
    att2: [f64; 6],
    car1: [f64; 6],
    car2: [f64; 6],
    p1: [f64; 3],
}

fn chain_values(input: &ODInput, c: &CandidateSolution) -> ChainValues {
    let s = s_tilde_of(input, c);
    let d = input.data_vector();
    let st = |x: &CartesianState<f64>| [x.r.x, x.r.y, x.r.z, x.v.x, x.v.y, x.v.z];
    ChainValues {
        s,
        att1: [d[0], d[1], s[0], s[1], d[2], s[2]],
        att2: [d[3], d[4], d[5], d[6], s[3], s[4]],
        car1: st(&c.state1),
        car2: st(&c.state2),
        p1: predicted_p1(input, c).unwrap(),
    }
}

impl ChainValues {
    /// All outputs in one vector; right ascension is unwrapped around `alpha0`.
    fn flat(&self, alpha0: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(32);
        v.extend_from_slice(&self.s);
        v.extend_from_slice(&self.att1);
        v.extend_from_slice(&self.att2);
        v.extend_from_slice(&self.car1);
        v.extend_from_slice(&self.car2);
        v.extend_from_slice(&[alpha0 + (self.p1[0] - alpha0).wrap_pi(), self.p1[1], self.p1[2]]);
        v
    }
}

/// Ridders' extrapolation of a vector-valued derivative: central differences
/// at geometrically shrinking steps, Richardson-combined, keeping the entry
/// with the smallest estimated error. Steps at which `f` has no value are
/// skipped by restarting from a smaller initial step.
fn ridders(f: impl Fn(f64) -> Option<Vec<f64>>, h0: f64) -> Option<Vec<f64>> {
    const CON2: f64 = 1.4 * 1.4;
    const NTAB: usize = 16;
    let central = |h: f64| Some(f(h)?.iter().zip(f(-h)?).map(|(p, m)| (p - m) / (2.0 * h)).collect::<Vec<f64>>());
    let gap = |a: &[f64], b: &[f64]| {
        let big = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / (x.abs() + 1e-10 * big + f64::MIN_POSITIVE)).fold(0.0f64, f64::max)
    };
    let mut h = h0;
    let first = loop {
        if let Some(d) = central(h) {
            break d;
        }
        h /= 4.0;
        if h < h0 * 1e-4 {
            return None;
        }
    };
    let mut table: Vec<Vec<Vec<f64>>> = vec![vec![first.clone()]];
    let (mut best, mut err) = (first, f64::INFINITY);
    for i in 1..NTAB {
        h /= 1.4;
        let Some(d) = central(h) else { break };
        let mut row = vec![d];
        let mut fac = CON2;
        for j in 1..=i {
            let prev = &table[i - 1][j - 1];
            let next: Vec<f64> = row[j - 1].iter().zip(prev).map(|(a, b)| (a * fac - b) / (fac - 1.0)).collect();
            fac *= CON2;
            let e = gap(&next, &row[j - 1]).max(gap(&next, prev));
            if e <= err {
                err = e;
                best = next.clone();
            }
            row.push(next);
        }
        let diverging = gap(&row[i], &table[i - 1][i - 1]) >= 2.0 * err;
        table.push(row);
        if diverging {
            break;
        }
    }
    Some(best)
}

/// Largest row-wise relative error of the chain blocks against derivatives of
/// re-solved perturbed problems.
fn chain_fd_error(input: &ODInput, c: &CandidateSolution) -> Option<f64> {
    let b = jacobian_chain(input, c).ok()?;
    let d0 = input.data_vector();
    let scale = [1.0, 1.0, d0[2].abs().max(1e-3), 1.0, 1.0, d0[5].abs().max(1e-3), d0[6].abs().max(1e-3)];
    let alpha0 = predicted_p1(input, c).ok()?[0];
    let mut fs = SMatrix::<f64, 5, 7>::zeros();
    let mut fa1 = SMatrix::<f64, 6, 7>::zeros();
    let mut fa2 = SMatrix::<f64, 6, 7>::zeros();
    let mut fc1 = SMatrix::<f64, 6, 7>::zeros();
    let mut fc2 = SMatrix::<f64, 6, 7>::zeros();
    let mut fp = SMatrix::<f64, 3, 7>::zeros();
    for j in 0..7 {
        let eval = |dx: f64| {
            let mut d = d0;
            d[j] += dx;
            let inp = input.with_data_vector(&d);
            let out = solve_with(&inp, &SolverConfig::default()).ok()?;
            Some(chain_values(&inp, nearest_accepted(&out.candidates, c.rho2)?).flat(alpha0))
        };
        let col = ridders(eval, 1e-5 * scale[j])?;
        let mut k = 0;
        let mut fill = |rows: usize, out: &mut dyn FnMut(usize, f64)| {
            for i in 0..rows {
                out(i, col[k]);
                k += 1;
            }
        };
        fill(5, &mut |i, x| fs[(i, j)] = x);
        fill(6, &mut |i, x| fa1[(i, j)] = x);
        fill(6, &mut |i, x| fa2[(i, j)] = x);
        fill(6, &mut |i, x| fc1[(i, j)] = x);
        fill(6, &mut |i, x| fc2[(i, j)] = x);
        fill(3, &mut |i, x| fp[(i, j)] = x);
    }
    let errs = [
        row_rel_err(&b.ds_dd, &fs, &scale),
        row_rel_err(&b.datt1_dd, &fa1, &scale),
        row_rel_err(&b.datt2_dd, &fa2, &scale),
        row_rel_err(&b.dcar1_dd, &fc1, &scale),
        row_rel_err(&b.dcar2_dd, &fc2, &scale),
        row_rel_err(&b.dp1_dd, &fp, &scale),
    ];
    Some(errs.into_iter().fold(0.0, f64::max))
}

#[test]
fn criterion_07_jacobians() {
    let h = HarnessConfig { noise: NoiseModel { sigma_angle: 1e-7, sigma_rate: 1e-7, sigma_rho: 1e-7 }, ..Default::default() };
    let (mut partial_err, mut chain_err, mut n, mut chain_missing) = (0.0f64, 0.0f64, 0, 0);
    let mut i = 0;
    while n < 100 && i < 1000 {
        let case = generate_case(&h, i).unwrap();
        i += 1;
        let Ok(out) = solve_with(&case.input, &SolverConfig::default()) else { continue };
        for c in out.candidates.iter().filter(|c| c.accepted()) {
            if n == 100 {
                break;
            }
            let p = PhiPoint { r1: c.state1.r, v1: c.state1.v, r2: c.state2.r, v2: c.state2.v, q2: case.input.obs2.q, mu: case.input.mu };
            partial_err = partial_err.max(partials_fd_error(&p));
            match chain_fd_error(&case.input, c) {
                Some(e) => chain_err = chain_err.max(e),
                None => chain_missing += 1,
            }
            n += 1;
        }
    }
    let pass = n == 100 && partial_err <= 1e-6 && chain_err <= 1e-6 && chain_missing == 0;
    report(
        7,
        "jacobian suite",
        pass,
        &format!("{n} candidates; Phi partials max rel err {partial_err:.2e}; dS/dD chain max rel err {chain_err:.2e}; {chain_missing} chains not checkable"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_kick_experiment() {
    let harness = HarnessConfig { kick_max: 5f64.to_radians(), seed: 8, ..Default::default() };
    let first = run_batch(&BatchConfig { harness: harness.clone(), n_cases: 500, retry: false, ..Default::default() }).unwrap();
    let retried = run_batch(&BatchConfig { harness, n_cases: 500, retry: true, ..Default::default() }).unwrap();
    let solved: Vec<_> = first.rows.iter().filter(|r| r.solved).collect();
    let good = solved.iter().filter(|r| r.delta_traj.is_some_and(|d| d <= 1e-6)).count();
    let frac = good as f64 / solved.len() as f64;
    let unsolved = first.rows.len() - solved.len();
    let recovered = retried.rows.iter().filter(|r| r.retried && r.solved).count();
    let still: Vec<_> = retried.rows.iter().filter(|r| !r.solved).collect();
    let flagged = still.iter().all(|r| r.failure.contains("degenerate:") || r.failure.contains("near_singular_pivot"));
    let retry_ok = 2 * recovered >= unsolved || flagged;
    let pass = frac >= 0.99 && retry_ok;
    report(
        8,
        "kick experiment",
        pass,
        &format!("{good}/{} solved cases with delta <= 1e-6 ({:.2}%); {unsolved} unsolved, {recovered} recovered by retry, remaining flagged: {flagged}", solved.len(), 100.0 * frac),
    );
    assert!(pass);
}

#[test]
fn criterion_09_statistics_columns() {
    let out = run_batch(&BatchConfig { n_cases: 300, ..Default::default() }).unwrap();
    let stats = summarize(&out.rows);
    let names: Vec<&str> = stats.columns.iter().map(|c| c.name.as_str()).collect();
    let columns_ok = names == STAT_COLUMNS;
    let worst = stats.columns.iter().map(|c| c.mean.abs().max(c.std)).fold(0.0f64, f64::max);
    let scatter_ok = out.rows.iter().all(|r| r.q.is_finite() && r.upsilon.is_finite());
    let pass = columns_ok && scatter_ok && worst <= 1e-7 && stats.n_solved > 0;
    report(
        9,
        "statistics columns (synthetic substitute)",
        pass,
        &format!("columns {names:?}; q-upsilon finite for all {} rows; max |mean|/std {worst:.2e} over {} solved", out.rows.len(), stats.n_solved),
    );
    assert!(pass);
}

fn chi3_of(input: &ODInput) -> f64 {
    let Ok(out) = solve_with(input, &SolverConfig::default()) else { return f64::INFINITY };
    match select_with_cov(input, &out.candidates, Metric::Paper, DEFAULT_CHI3_THRESHOLD) {
        Ok(rep) => rep.scores.iter().find(|s| s.index == rep.chosen_index).and_then(|s| s.chi3).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    }
}

#[test]
fn criterion_10_chi3_discrimination() {
    let noise = NoiseModel { sigma_angle: 1e-6, sigma_rate: 1e-5, sigma_rho: 1e-5 };
    let h = HarnessConfig { noise, seed: 10, ..Default::default() };
    let cases: Vec<_> = (0..100).map(|i| generate_case(&h, i).unwrap()).collect();
    let mut matched: Vec<f64> = cases.iter().map(|c| chi3_of(&c.input)).collect();
    let mut mismatched: Vec<f64> = (0..100)
        .map(|i| {
            let (a, b) = (&cases[i].input, &cases[(i + 37) % 100].input);
            let mixed = ODInput { a2: b.a2, obs2: b.obs2, gamma_a2: b.gamma_a2, ..a.clone() };
            chi3_of(&mixed)
        })
        .collect();
    let no_solution = mismatched.iter().filter(|x| x.is_infinite()).count();
    let (mm, mx) = (median(&mut matched), median(&mut mismatched));
    let factor = mx / mm;
    let pass = mm < DEFAULT_CHI3_THRESHOLD && DEFAULT_CHI3_THRESHOLD < mx && factor >= 10.0;
    report(
        10,
        "chi3 discrimination",
        pass,
        &format!("median matched {mm:.3}, median mismatched {mx:.3e} ({no_solution} pairings without accepted candidates), threshold {DEFAULT_CHI3_THRESHOLD}, factor {factor:.1e}"),
    );
    assert!(pass);
}
