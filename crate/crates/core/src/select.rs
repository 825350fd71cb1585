//! Choosing among accepted candidates.
//!
//! Without covariance each candidate's orbit at `t̃₂` is propagated back to
//! `t̃₁` and compared with the observed `𝒫₁ = (α₁, δ₁, ρ₁)`. With covariance
//! the data covariance `Γ_𝒟` is mapped through the implicit-function Jacobian
//! of the reduced system
//!
//! ```text
//! Φ = (c₁ - c₂, Φ₄, Φ₅)
//! Φ₄ = [μL₁ + (ṙ₂·r₂)ṙ₂] · (q₂ × r₂)
//! Φ₅ = [-(ṙ₁·r₁)ṙ₁ - (|ṙ₂|²/2 + ℰ₁) r₂ + (ṙ₂·r₂)ṙ₂] · r₁ × (r₂ - q₂)
//! ```
//!
//! with unknowns `𝒮̃ = (α̇₁, δ̇₁, ρ̇₁, ρ₂, ρ̇₂)` and data
//! `𝒟 = (α₁, δ₁, ρ₁, α₂, δ₂, α̇₂, δ̇₂)`, then to Cartesian covariances at both
//! epochs and finally to the predicted `𝒫₁,ₚ` for the `χ₃` penalty.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{OdError, Result};
use crate::geom3::{hat, los_basis, to_spherical, Mat3, Vec3};
use crate::kepler::{propagate, CartesianState};
use crate::observations::{Mat7, ODInput, ObserverState};
use crate::scalar::Real;
use crate::solver::CandidateSolution;

pub const DEFAULT_CHI3_THRESHOLD: f64 = 5.0;
/// Relative step of the finite-difference state-transition matrix. The
/// five-point stencil reaches ~1e-11 here; two-point differences at 1e-7 stall
/// near 1e-8, which the covariance chain amplifies.
pub const STM_STEP: f64 = 3e-4;
/// `∂Φ/∂𝒮̃` with a larger condition number is treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Indices of `𝒮̃` and `𝒟` in `E_att = (α₁,δ₁,α̇₁,δ̇₁,ρ₁,ρ̇₁, α₂,δ₂,α̇₂,δ̇₂,ρ₂,ρ̇₂)`.
const S_COLS: [usize; 5] = [2, 3, 5, 10, 11];
const D_COLS: [usize; 7] = [0, 1, 4, 6, 7, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Plain Euclidean norm of `(Δα, Δδ, Δρ)` in rad, rad, au.
    #[default]
    Paper,
    /// Mahalanobis norm under `Γ_𝒫₁` when present, otherwise angles scaled by `ρ₁`.
    Weighted,
}

impl FromStr for Metric {
    type Err = OdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Metric::Paper),
            "weighted" => Ok(Metric::Weighted),
            _ => Err(OdError::Validation(format!("unknown metric {s:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Paper => "paper",
            Metric::Weighted => "weighted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    /// Index into the candidate list given to the selector.
    pub index: usize,
    /// `(α, δ, ρ)` of `r(t̃₁) - q(t₁)` from the back-propagated orbit.
    pub rho1_hat: [f64; 3],
    pub distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub metric: Metric,
    pub scores: Vec<CandidateScore>,
    pub chosen_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Candidates with `χ₃` at or below the threshold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kept: Vec<usize>,
}

/// Observed `𝒫₁` minus a predicted triple, `Δα` wrapped to `(-π, π]`.
fn p1_residual(input: &ODInput, pred: &[f64; 3]) -> Vector3<f64> {
    Vector3::new((input.p1.alpha - pred[0]).wrap_pi(), input.p1.delta - pred[1], input.p1.rho - pred[2])
}

/// Topocentric triple at `t₁` of the candidate's orbit propagated back from `t̃₂`.
pub fn predicted_p1(input: &ODInput, cand: &CandidateSolution) -> Result<[f64; 3]> {
    let s = propagate(&cand.state2, cand.t1_tilde - cand.t2_tilde)?;
    let (a, d, r) = to_spherical(&(s.r - input.obs1.q));
    Ok([a, d, r])
}

pub fn metric_distance(input: &ODInput, pred: &[f64; 3], metric: Metric) -> f64 {
    let d = p1_residual(input, pred);
    match metric {
        Metric::Paper => d.norm(),
        Metric::Weighted => {
            let mahalanobis = input
                .gamma_p1
                .and_then(|g| Matrix3::from_fn(|i, j| g[i][j]).cholesky())
                .map(|ch| d.dot(&ch.solve(&d)).max(0.0).sqrt());
            mahalanobis.unwrap_or_else(|| {
                let rho = input.p1.rho;
                Vector3::new(rho * input.p1.delta.cos() * d[0], rho * d[1], d[2]).norm()
            })
        }
    }
}

fn argmin(scores: &[CandidateScore], key: impl Fn(&CandidateScore) -> f64) -> usize {
    scores.iter().min_by(|a, b| key(a).total_cmp(&key(b)).then(a.index.cmp(&b.index))).map(|s| s.index).unwrap_or(0)
}

pub fn select_no_cov(input: &ODInput, candidates: &[CandidateSolution], metric: Metric) -> Result<SelectionReport> {
    let mut scores = Vec::new();
    for (index, c) in candidates.iter().enumerate().filter(|(_, c)| c.accepted()) {
        let rho1_hat = predicted_p1(input, c)?;
        scores.push(CandidateScore { index, rho1_hat, distance: metric_distance(input, &rho1_hat, metric), chi3: None });
    }
    if scores.is_empty() {
        return Err(OdError::NoAcceptedSolutions);
    }
    let chosen_index = argmin(&scores, |s| s.distance);
    Ok(SelectionReport { metric, scores, chosen_index, threshold: None, kept: Vec::new() })
}

/// Chooses the accepted candidate of smallest `χ₃` and keeps those below `threshold`.
pub fn select_with_cov(input: &ODInput, candidates: &[CandidateSolution], metric: Metric, threshold: f64) -> Result<SelectionReport> {
    let mut scores = Vec::new();
    for (index, c) in candidates.iter().enumerate().filter(|(_, c)| c.accepted()) {
        let bundle = jacobian_chain(input, c)?;
        let chi3 = chi3_penalty(input, c, &bundle)?;
        let distance = metric_distance(input, &bundle.p1_pred, metric);
        scores.push(CandidateScore { index, rho1_hat: bundle.p1_pred, distance, chi3: Some(chi3) });
    }
    if scores.is_empty() {
        return Err(OdError::NoAcceptedSolutions);
    }
    let chosen_index = argmin(&scores, |s| s.chi3.unwrap_or(f64::INFINITY));
    let kept = scores.iter().filter(|s| s.chi3.is_some_and(|x| x <= threshold)).map(|s| s.index).collect();
    Ok(SelectionReport { metric, scores, chosen_index, threshold: Some(threshold), kept })
}

/// Heliocentric states and `q₂` entering `Φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiPoint {
    pub r1: Vec3<f64>,
    pub v1: Vec3<f64>,
    pub r2: Vec3<f64>,
    pub v2: Vec3<f64>,
    pub q2: Vec3<f64>,
    pub mu: f64,
}

pub fn phi(p: &PhiPoint) -> [f64; 5] {
    let c = p.r1.cross(&p.v1) - p.r2.cross(&p.v2);
    let (r1n, v1s) = (p.r1.norm(), p.v1.norm_squared());
    let mu_l1 = p.r1 * (v1s - p.mu / r1n) - p.v1 * p.v1.dot(&p.r1);
    let phi4 = (mu_l1 + p.v2 * p.v2.dot(&p.r2)).dot(&p.q2.cross(&p.r2));
    let energy1 = 0.5 * v1s - p.mu / r1n;
    let y = p.v1 * (-p.v1.dot(&p.r1)) - p.r2 * (0.5 * p.v2.norm_squared() + energy1) + p.v2 * p.v2.dot(&p.r2);
    let phi5 = y.dot(&p.r1.cross(&(p.r2 - p.q2)));
    [c.x, c.y, c.z, phi4, phi5]
}

/// Gradients of `Φ₄`, `Φ₅` with respect to `r₁`, `ṙ₁`, `r₂`, `ṙ₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiPartials {
    pub d4: [Vec3<f64>; 4],
    pub d5: [Vec3<f64>; 4],
}

pub fn phi_partials(p: &PhiPoint) -> PhiPartials {
    let PhiPoint { r1, v1, r2, v2, q2, mu } = *p;
    let r1n = r1.norm();
    let w = q2.cross(&r2);
    let k1 = v1.norm_squared() - mu / r1n;
    let x = r1 * k1 - v1 * v1.dot(&r1) + v2 * v2.dot(&r2);
    let d4 = [
        w * k1 - v1 * v1.dot(&w) + r1 * (mu / r1n.powi(3) * r1.dot(&w)),
        v1 * (2.0 * r1.dot(&w)) - r1 * v1.dot(&w) - w * v1.dot(&r1),
        v2 * v2.dot(&w) + x.cross(&q2),
        r2 * v2.dot(&w) + w * v2.dot(&r2),
    ];

    let u = r2 - q2;
    let v = r1.cross(&u);
    let k = 0.5 * v2.norm_squared() + 0.5 * v1.norm_squared() - mu / r1n;
    let y = v1 * (-v1.dot(&r1)) - r2 * k + v2 * v2.dot(&r2);
    let d5 = [
        -v1 * v1.dot(&v) - r1 * (mu / r1n.powi(3) * r2.dot(&v)) + u.cross(&y),
        -r1 * v1.dot(&v) - v * v1.dot(&r1) - v1 * r2.dot(&v),
        -v * k + v2 * v2.dot(&v) + y.cross(&r1),
        -v2 * r2.dot(&v) + r2 * v2.dot(&v) + v * v2.dot(&r2),
    ];
    PhiPartials { d4, d5 }
}

fn put3(m: &mut SMatrix<f64, 5, 12>, row: usize, col: usize, a: &Mat3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            m[(row + i, col + j)] = a.m[i][j];
        }
    }
}

/// `∂Ψ/∂E_car` (5×12), columns ordered `r₁, ṙ₁, r₂, ṙ₂`.
pub fn dpsi_decar(p: &PhiPoint) -> SMatrix<f64, 5, 12> {
    let mut m = SMatrix::<f64, 5, 12>::zeros();
    put3(&mut m, 0, 0, &hat(&p.v1).scale(-1.0));
    put3(&mut m, 0, 3, &hat(&p.r1));
    put3(&mut m, 0, 6, &hat(&p.v2));
    put3(&mut m, 0, 9, &hat(&p.r2).scale(-1.0));
    let d = phi_partials(p);
    for blk in 0..4 {
        for j in 0..3 {
            m[(3, 3 * blk + j)] = d.d4[blk][j];
            m[(4, 3 * blk + j)] = d.d5[blk][j];
        }
    }
    m
}

/// Heliocentric `(r, ṙ)` from attributable elements `(α, δ, α̇, δ̇, ρ, ρ̇)`.
pub fn car_from_att(e: &[f64; 6], obs: &ObserverState) -> Result<(Vec3<f64>, Vec3<f64>)> {
    let [alpha, delta, adot, ddot, rho, rhodot] = *e;
    let f = los_basis(alpha, delta)?;
    let r = obs.q + f.e_rho * rho;
    let v = obs.qdot + f.e_rho * rhodot + f.e_alpha * (rho * adot * delta.cos()) + f.e_delta * (rho * ddot);
    Ok((r, v))
}

/// `∂(r, ṙ)/∂(α, δ, α̇, δ̇, ρ, ρ̇)`.
pub fn dcar_datt(e: &[f64; 6]) -> Result<Matrix6<f64>> {
    let [alpha, delta, adot, ddot, rho, rhodot] = *e;
    let f = los_basis(alpha, delta)?;
    let (sd, cd) = delta.sin_cos();
    let (er, ea, ed) = (f.e_rho, f.e_alpha, f.e_delta);
    let cols: [(Vec3<f64>, Vec3<f64>); 6] = [
        (
            ea * (rho * cd),
            ea * (rhodot * cd) + (ed * sd - er * cd) * (rho * adot * cd) - ea * (rho * ddot * sd),
        ),
        (ed * rho, ed * rhodot - ea * (rho * adot * sd) - er * (rho * ddot)),
        (Vec3::zero(), ea * (rho * cd)),
        (Vec3::zero(), ed * rho),
        (er, ea * (adot * cd) + ed * ddot),
        (Vec3::zero(), er),
    ];
    let mut m = Matrix6::zeros();
    for (j, (dr, dv)) in cols.iter().enumerate() {
        for i in 0..3 {
            m[(i, j)] = dr[i];
            m[(3 + i, j)] = dv[i];
        }
    }
    Ok(m)
}

/// Row permutation taking `(α, δ, ρ, α̇, δ̇, ρ̇)` to `(α, δ, α̇, δ̇, ρ, ρ̇)`.
pub fn permutation_m() -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    for (row, col) in [0, 1, 3, 4, 2, 5].into_iter().enumerate() {
        m[(row, col)] = 1.0;
    }
    m
}

/// `𝒮̃ = (α̇₁, δ̇₁, ρ̇₁, ρ₂, ρ̇₂)` of a candidate.
pub fn s_tilde_of(input: &ODInput, cand: &CandidateSolution) -> [f64; 5] {
    let (rho1, delta1) = (input.p1.rho, input.p1.delta);
    [cand.xi1 / (rho1 * delta1.cos()), cand.zeta1 / rho1, cand.rhodot1, cand.rho2, cand.rhodot2]
}

fn att_vectors(s: &[f64; 5], d: &[f64; 7]) -> ([f64; 6], [f64; 6]) {
    ([d[0], d[1], s[0], s[1], d[2], s[2]], [d[3], d[4], d[5], d[6], s[3], s[4]])
}

/// `Φ ∘ T_att→car` as a function of `(𝒮̃, 𝒟)` with the observer states of `input`.
pub fn phi_att(input: &ODInput, s: &[f64; 5], d: &[f64; 7]) -> Result<[f64; 5]> {
    let (e1, e2) = att_vectors(s, d);
    let (r1, v1) = car_from_att(&e1, &input.obs1)?;
    let (r2, v2) = car_from_att(&e2, &input.obs2)?;
    Ok(phi(&PhiPoint { r1, v1, r2, v2, q2: input.obs2.q, mu: input.mu }))
}

/// `∂Φ/∂𝒮̃` (5×5) and `∂Φ/∂𝒟` (5×7) at `(𝒮̃, 𝒟)`.
pub fn phi_jacobians(input: &ODInput, s: &[f64; 5], d: &[f64; 7]) -> Result<(SMatrix<f64, 5, 5>, SMatrix<f64, 5, 7>)> {
    let (e1, e2) = att_vectors(s, d);
    let (r1, v1) = car_from_att(&e1, &input.obs1)?;
    let (r2, v2) = car_from_att(&e2, &input.obs2)?;
    let dpsi = dpsi_decar(&PhiPoint { r1, v1, r2, v2, q2: input.obs2.q, mu: input.mu });
    let mut t = SMatrix::<f64, 12, 12>::zeros();
    t.fixed_view_mut::<6, 6>(0, 0).copy_from(&dcar_datt(&e1)?);
    t.fixed_view_mut::<6, 6>(6, 6).copy_from(&dcar_datt(&e2)?);
    let dphi = dpsi * t;
    Ok((dphi.select_columns(&S_COLS).fixed_columns::<5>(0).into_owned(), dphi.select_columns(&D_COLS).fixed_columns::<7>(0).into_owned()))
}

/// `∂𝒮̃/∂𝒟 = -(∂Φ/∂𝒮̃)⁻¹ ∂Φ/∂𝒟` and the condition number of `∂Φ/∂𝒮̃`.
pub fn implicit_jacobian(input: &ODInput, cand: &CandidateSolution) -> Result<(SMatrix<f64, 5, 7>, f64)> {
    let (a, b) = phi_jacobians(input, &s_tilde_of(input, cand), &input.data_vector())?;
    let sv = a.singular_values();
    let condition = sv.max() / sv.min();
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(OdError::SingularJacobian { condition });
    }
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(OdError::SingularJacobian { condition })?;
    Ok((-x, condition))
}

/// Five-point central-difference state-transition matrix of `propagate` over `dt`.
pub fn stm_fd(s: &CartesianState<f64>, dt: f64) -> Result<Matrix6<f64>> {
    let (hr, hv) = (STM_STEP * s.r.norm(), STM_STEP * s.v.norm());
    let mut m = Matrix6::zeros();
    for k in 0..6 {
        let (unit, h) = if k < 3 { (Vec3::axis(k), hr) } else { (Vec3::axis(k - 3), hv) };
        let at = |q: f64| {
            let shift = unit * (q * h);
            let (dr, dv) = if k < 3 { (shift, Vec3::zero()) } else { (Vec3::zero(), shift) };
            propagate(&CartesianState::new(s.r + dr, s.v + dv, s.epoch, s.mu), dt)
        };
        let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
        for i in 0..3 {
            m[(i, k)] = (8.0 * (p1.r[i] - m1.r[i]) - (p2.r[i] - m2.r[i])) / (12.0 * h);
            m[(3 + i, k)] = (8.0 * (p1.v[i] - m1.v[i]) - (p2.v[i] - m2.v[i])) / (12.0 * h);
        }
    }
    Ok(m)
}

/// Every matrix of the covariance chain for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceBundle {
    pub gamma_d: Mat7,
    pub ds_dd: SMatrix<f64, 5, 7>,
    pub condition: f64,
    /// `∂𝒱̃₁/∂𝒱₁ = diag(1/(ρ₁ cos δ₁), 1/ρ₁, 1)`.
    pub dv1t_dv1: Matrix3<f64>,
    pub datt1_dd: SMatrix<f64, 6, 7>,
    pub datt2_dd: SMatrix<f64, 6, 7>,
    pub dcar1_dd: SMatrix<f64, 6, 7>,
    pub dcar2_dd: SMatrix<f64, 6, 7>,
    pub gamma_car1: Matrix6<f64>,
    pub gamma_car2: Matrix6<f64>,
    /// Transition matrix from `t̃₂` back to `t̃₁`.
    pub stm: Matrix6<f64>,
    pub p1_pred: [f64; 3],
    /// `∂(α, δ, ρ)/∂𝒟` of the prediction, including the shift of `t̃₁ - t̃₂`
    /// through the light-time corrections.
    pub dp1_dd: SMatrix<f64, 3, 7>,
    pub gamma_p1p: Matrix3<f64>,
}

pub fn jacobian_chain(input: &ODInput, cand: &CandidateSolution) -> Result<CovarianceBundle> {
    if !cand.accepted() {
        return Err(OdError::NoAcceptedSolutions);
    }
    let gamma_d = input.gamma_d().ok_or(OdError::SingularCovariance("input carries no covariance"))?;
    let (ds_dd, condition) = implicit_jacobian(input, cand)?;
    let s = s_tilde_of(input, cand);
    let (e1, e2) = att_vectors(&s, &input.data_vector());

    let mut stacked1 = SMatrix::<f64, 6, 7>::zeros();
    stacked1.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    stacked1.fixed_view_mut::<3, 7>(3, 0).copy_from(&ds_dd.fixed_rows::<3>(0));
    let datt1_dd = permutation_m() * stacked1;

    let mut datt2_dd = SMatrix::<f64, 6, 7>::zeros();
    datt2_dd.fixed_view_mut::<4, 4>(0, 3).fill_with_identity();
    datt2_dd.fixed_view_mut::<2, 7>(4, 0).copy_from(&ds_dd.fixed_rows::<2>(3));

    let dcar1_dd = dcar_datt(&e1)? * datt1_dd;
    let dcar2_dd = dcar_datt(&e2)? * datt2_dd;
    let gamma_car1 = symmetrize(&(dcar1_dd * gamma_d * dcar1_dd.transpose()));
    let gamma_car2 = symmetrize(&(dcar2_dd * gamma_d * dcar2_dd.transpose()));

    let dt = cand.t1_tilde - cand.t2_tilde;
    let stm = stm_fd(&cand.state2, dt)?;
    let back = propagate(&cand.state2, dt)?;
    let rel = back.r - input.obs1.q;
    let (a, d, rho) = to_spherical(&rel);
    let f = los_basis(a, d)?;
    let rows = [f.e_alpha / (rho * d.cos()), f.e_delta / rho, f.e_rho];
    let jsph = SMatrix::<f64, 3, 6>::from_fn(|i, j| if j < 3 { rows[i][j] } else { 0.0 });
    // dt = (t₁ - ρ₁/c) - (t̄₂ - ρ₂/c)
    let ddt_dd = if input.light_time {
        (ds_dd.row(3) - SMatrix::<f64, 1, 7>::from_fn(|_, j| if j == 2 { 1.0 } else { 0.0 })) / input.c_light
    } else {
        SMatrix::<f64, 1, 7>::zeros()
    };
    let vback = Vector3::new(back.v.x, back.v.y, back.v.z);
    let dr_dd = stm.fixed_rows::<3>(0) * dcar2_dd + vback * ddt_dd;
    let dp1_dd = jsph.fixed_columns::<3>(0) * dr_dd;
    let gamma_p1p = symmetrize(&(dp1_dd * gamma_d * dp1_dd.transpose()));

    let (rho1, delta1) = (input.p1.rho, input.p1.delta);
    Ok(CovarianceBundle {
        gamma_d,
        ds_dd,
        condition,
        dv1t_dv1: Matrix3::from_diagonal(&Vector3::new(1.0 / (rho1 * delta1.cos()), 1.0 / rho1, 1.0)),
        datt1_dd,
        datt2_dd,
        dcar1_dd,
        dcar2_dd,
        gamma_car1,
        gamma_car2,
        stm,
        p1_pred: [a, d, rho],
        dp1_dd,
        gamma_p1p,
    })
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// `Δᵀ [C_p - C_p Γ₀ C_p] Δ` with `C_p = Γ_p⁻¹`, `Γ₀ = (C_p + Γ₁⁻¹)⁻¹`.
pub fn chi3_squared(delta: &Vector3<f64>, gamma_p: &Matrix3<f64>, gamma_1: &Matrix3<f64>) -> Result<f64> {
    let cp = gamma_p.cholesky().ok_or(OdError::SingularCovariance("predicted position covariance"))?.inverse();
    let c1 = gamma_1.cholesky().ok_or(OdError::SingularCovariance("observed position covariance"))?.inverse();
    let g0 = (cp + c1).cholesky().ok_or(OdError::SingularCovariance("combined normal matrix"))?.inverse();
    let k = cp - cp * g0 * cp;
    let chi2 = delta.dot(&(k * delta));
    if chi2 < -1e-10 {
        return Err(OdError::SingularCovariance("negative identification penalty"));
    }
    Ok(chi2.max(0.0))
}

/// Identification penalty `χ₃` (the square root of `χ₃²`).
pub fn chi3_penalty(input: &ODInput, _cand: &CandidateSolution, bundle: &CovarianceBundle) -> Result<f64> {
    let g1 = input.gamma_p1.ok_or(OdError::SingularCovariance("input carries no covariance"))?;
    let gamma_1 = Matrix3::from_fn(|i, j| g1[i][j]);
    let delta = p1_residual(input, &bundle.p1_pred);
    Ok(chi3_squared(&delta, &bundle.gamma_p1p, &gamma_1)?.sqrt())
}
