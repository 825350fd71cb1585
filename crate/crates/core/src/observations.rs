//! Input data model: one topocentric position `𝒫₁ = (α₁, δ₁, ρ₁)` at `t₁`, one
//! attributable `𝒜₂ = (α₂, δ₂, α̇₂, δ̇₂)` at `t̄₂`, observer states at both
//! epochs, physical constants and an optional block-diagonal covariance.
//!
//! All quantities are expected in one inertial frame and one uniform time
//! scale (days). Frame and time-scale conversions are the caller's business.
//!
//! JSON layout:
//!
//! ```json
//! { "units": "deg", "t1": 0.0, "alpha1": 10.0, "delta1": -5.0, "rho1": 0.3,
//!   "t2bar": 12.0, "alpha2": 14.0, "delta2": -4.0, "alphadot2": 0.2, "deltadot2": 0.05,
//!   "obs1": { "q": [1, 0, 0], "qdot": [0, 0.0172, 0] },
//!   "obs2": { "q": [0.98, 0.2, 0], "qdot": [-0.0034, 0.0168, 0] },
//!   "mu": 0.0002959122082855911, "c": 173.144632674, "light_time": true,
//!   "gamma_p1": [[..3..],[..],[..]], "gamma_a2": [[..4..],..] }
//! ```
//!
//! With `"units": "deg"` the angles are degrees, the angular rates deg/day and
//! the angular entries of the covariances are in the matching squared units.
//! `mu`, `c`, `light_time` and the covariances are optional.

use std::path::Path;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OdError, Result};
use crate::geom3::{los_basis, LosFrame, Vec3};

/// Gaussian gravitational constant, au^{3/2} day^{-1}.
pub const GAUSS_K: f64 = 0.01720209895;
/// Heliocentric `μ = k²` in au³/day².
pub const MU_SUN: f64 = GAUSS_K * GAUSS_K;
/// Speed of light in au/day.
pub const C_LIGHT: f64 = 173.144632674;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopocentricPosition {
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub epoch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attributable {
    pub alpha: f64,
    pub delta: f64,
    pub alpha_dot: f64,
    pub delta_dot: f64,
    pub epoch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub q: Vec3<f64>,
    pub qdot: Vec3<f64>,
    pub epoch: f64,
}

/// Validated solver input.
#[derive(Debug, Clone, PartialEq)]
pub struct ODInput {
    pub p1: TopocentricPosition,
    pub a2: Attributable,
    pub obs1: ObserverState,
    pub obs2: ObserverState,
    pub mu: f64,
    pub c_light: f64,
    /// When false the epochs are used as given (geometric, no light-time shift).
    pub light_time: bool,
    pub gamma_p1: Option<[[f64; 3]; 3]>,
    pub gamma_a2: Option<[[f64; 4]; 4]>,
}

pub type Mat7 = SMatrix<f64, 7, 7>;

impl ODInput {
    /// Data vector `𝒟 = (α₁, δ₁, ρ₁, α₂, δ₂, α̇₂, δ̇₂)`.
    pub fn data_vector(&self) -> [f64; 7] {
        [
            self.p1.alpha,
            self.p1.delta,
            self.p1.rho,
            self.a2.alpha,
            self.a2.delta,
            self.a2.alpha_dot,
            self.a2.delta_dot,
        ]
    }

    /// Copy of `self` with the data vector replaced.
    pub fn with_data_vector(&self, d: &[f64; 7]) -> Self {
        let mut out = self.clone();
        out.p1.alpha = d[0];
        out.p1.delta = d[1];
        out.p1.rho = d[2];
        out.a2.alpha = d[3];
        out.a2.delta = d[4];
        out.a2.alpha_dot = d[5];
        out.a2.delta_dot = d[6];
        out
    }

    /// Block-diagonal 7×7 `Γ_𝒟`, present only when both blocks are.
    pub fn gamma_d(&self) -> Option<Mat7> {
        let (p, a) = (self.gamma_p1?, self.gamma_a2?);
        let mut g = Mat7::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g[(i, j)] = p[i][j];
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                g[(3 + i, 3 + j)] = a[i][j];
            }
        }
        Some(g)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(OdError::Validation(m.to_string()));
        let d = self.data_vector();
        if d.iter().any(|x| !x.is_finite()) || !self.p1.epoch.is_finite() || !self.a2.epoch.is_finite() {
            return fail("non-finite observation value");
        }
        if !(self.p1.rho > 0.0) {
            return fail("rho1 must be positive");
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if self.p1.delta.abs() >= half_pi || self.a2.delta.abs() >= half_pi {
            return fail("declination outside (-pi/2, pi/2)");
        }
        for o in [&self.obs1, &self.obs2] {
            if !o.q.is_finite() || !o.qdot.is_finite() {
                return fail("non-finite observer state");
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return fail("mu must be positive");
        }
        if !(self.c_light > 0.0) {
            return fail("c must be positive");
        }
        if self.gamma_p1.is_some() != self.gamma_a2.is_some() {
            return fail("covariance needs both gamma_p1 and gamma_a2");
        }
        if let Some(g) = self.gamma_d() {
            check_covariance(&g)?;
        }
        Ok(())
    }
}

fn check_covariance(g: &Mat7) -> Result<()> {
    let scale = g.abs().max();
    if g.iter().any(|x| !x.is_finite()) {
        return Err(OdError::Validation("non-finite covariance".into()));
    }
    if (g - g.transpose()).abs().max() > 1e-12 * scale {
        return Err(OdError::Validation("covariance not symmetric".into()));
    }
    let eig = g.symmetric_eigenvalues();
    if eig.min() < -1e-10 * g.trace().abs() {
        return Err(OdError::Validation("covariance not positive semidefinite".into()));
    }
    Ok(())
}

/// Defaults used for absent `mu` / `c` fields.
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub default_mu: f64,
    pub default_c: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { default_mu: MU_SUN, default_c: C_LIGHT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Json,
    Csv,
}

impl InputFormat {
    /// Guess from the file extension, JSON unless it ends in `.csv`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnits {
    Deg,
    #[default]
    Rad,
}

impl AngleUnits {
    fn to_rad(self) -> f64 {
        match self {
            AngleUnits::Deg => std::f64::consts::PI / 180.0,
            AngleUnits::Rad => 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObserverRecord {
    q: [f64; 3],
    qdot: [f64; 3],
}

/// Wire form of [`ODInput`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    #[serde(default)]
    units: AngleUnits,
    t1: f64,
    alpha1: f64,
    delta1: f64,
    rho1: f64,
    t2bar: f64,
    alpha2: f64,
    delta2: f64,
    alphadot2: f64,
    deltadot2: f64,
    obs1: ObserverRecord,
    obs2: ObserverRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    light_time: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_p1: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_a2: Option<[[f64; 4]; 4]>,
}

impl InputRecord {
    pub fn into_input(self, opts: &LoadOptions) -> Result<ODInput> {
        let k = self.units.to_rad();
        let p_scale = [k, k, 1.0];
        let a_scale = [k, k, k, k];
        let gamma_p1 = self.gamma_p1.map(|g| scale_cov(g, &p_scale));
        let gamma_a2 = self.gamma_a2.map(|g| scale_cov(g, &a_scale));
        let input = ODInput {
            p1: TopocentricPosition {
                alpha: wrap_ra(self.alpha1 * k),
                delta: self.delta1 * k,
                rho: self.rho1,
                epoch: self.t1,
            },
            a2: Attributable {
                alpha: wrap_ra(self.alpha2 * k),
                delta: self.delta2 * k,
                alpha_dot: self.alphadot2 * k,
                delta_dot: self.deltadot2 * k,
                epoch: self.t2bar,
            },
            obs1: ObserverState { q: self.obs1.q.into(), qdot: self.obs1.qdot.into(), epoch: self.t1 },
            obs2: ObserverState { q: self.obs2.q.into(), qdot: self.obs2.qdot.into(), epoch: self.t2bar },
            mu: self.mu.unwrap_or(opts.default_mu),
            c_light: self.c.unwrap_or(opts.default_c),
            light_time: self.light_time.unwrap_or(true),
            gamma_p1,
            gamma_a2,
        };
        input.validate()?;
        Ok(input)
    }

    /// Radian-valued record carrying every field of `input`.
    pub fn from_input(input: &ODInput) -> Self {
        InputRecord {
            units: AngleUnits::Rad,
            t1: input.p1.epoch,
            alpha1: input.p1.alpha,
            delta1: input.p1.delta,
            rho1: input.p1.rho,
            t2bar: input.a2.epoch,
            alpha2: input.a2.alpha,
            delta2: input.a2.delta,
            alphadot2: input.a2.alpha_dot,
            deltadot2: input.a2.delta_dot,
            obs1: ObserverRecord { q: input.obs1.q.into(), qdot: input.obs1.qdot.into() },
            obs2: ObserverRecord { q: input.obs2.q.into(), qdot: input.obs2.qdot.into() },
            mu: Some(input.mu),
            c: Some(input.c_light),
            light_time: Some(input.light_time),
            gamma_p1: input.gamma_p1,
            gamma_a2: input.gamma_a2,
        }
    }
}

fn wrap_ra(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if (-PI..PI).contains(&a) {
        a
    } else {
        (a + PI).rem_euclid(TAU) - PI
    }
}

fn scale_cov<const N: usize>(g: [[f64; N]; N], s: &[f64; N]) -> [[f64; N]; N] {
    let mut out = g;
    for i in 0..N {
        for j in 0..N {
            out[i][j] = g[i][j] * s[i] * s[j];
        }
    }
    out
}

/// Flat CSV row; covariance blocks are row-major, `;`-separated, empty when absent.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    #[serde(default)]
    units: AngleUnits,
    t1: f64,
    alpha1: f64,
    delta1: f64,
    rho1: f64,
    t2bar: f64,
    alpha2: f64,
    delta2: f64,
    alphadot2: f64,
    deltadot2: f64,
    obs1_qx: f64,
    obs1_qy: f64,
    obs1_qz: f64,
    obs1_qdotx: f64,
    obs1_qdoty: f64,
    obs1_qdotz: f64,
    obs2_qx: f64,
    obs2_qy: f64,
    obs2_qz: f64,
    obs2_qdotx: f64,
    obs2_qdoty: f64,
    obs2_qdotz: f64,
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default)]
    c: Option<f64>,
    #[serde(default)]
    light_time: Option<bool>,
    #[serde(default)]
    gamma_p1: Option<String>,
    #[serde(default)]
    gamma_a2: Option<String>,
}

fn parse_block<const N: usize>(s: &Option<String>) -> Result<Option<[[f64; N]; N]>> {
    let Some(s) = s.as_deref().map(str::trim).filter(|s| !s.is_empty()) else {
        return Ok(None);
    };
    let vals: Vec<f64> = s
        .split(';')
        .map(|t| t.trim().parse::<f64>().map_err(|e| OdError::Parse(format!("covariance entry {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if vals.len() != N * N {
        return Err(OdError::Parse(format!("covariance block needs {} entries, got {}", N * N, vals.len())));
    }
    let mut out = [[0.0; N]; N];
    for (k, v) in vals.into_iter().enumerate() {
        out[k / N][k % N] = v;
    }
    Ok(Some(out))
}

fn format_block<const N: usize>(g: &Option<[[f64; N]; N]>) -> Option<String> {
    g.map(|g| g.iter().flatten().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";"))
}

impl CsvRow {
    fn into_record(self) -> Result<InputRecord> {
        Ok(InputRecord {
            units: self.units,
            t1: self.t1,
            alpha1: self.alpha1,
            delta1: self.delta1,
            rho1: self.rho1,
            t2bar: self.t2bar,
            alpha2: self.alpha2,
            delta2: self.delta2,
            alphadot2: self.alphadot2,
            deltadot2: self.deltadot2,
            obs1: ObserverRecord {
                q: [self.obs1_qx, self.obs1_qy, self.obs1_qz],
                qdot: [self.obs1_qdotx, self.obs1_qdoty, self.obs1_qdotz],
            },
            obs2: ObserverRecord {
                q: [self.obs2_qx, self.obs2_qy, self.obs2_qz],
                qdot: [self.obs2_qdotx, self.obs2_qdoty, self.obs2_qdotz],
            },
            mu: self.mu,
            c: self.c,
            light_time: self.light_time,
            gamma_p1: parse_block::<3>(&self.gamma_p1)?,
            gamma_a2: parse_block::<4>(&self.gamma_a2)?,
        })
    }

    fn from_input(i: &ODInput) -> Self {
        CsvRow {
            units: AngleUnits::Rad,
            t1: i.p1.epoch,
            alpha1: i.p1.alpha,
            delta1: i.p1.delta,
            rho1: i.p1.rho,
            t2bar: i.a2.epoch,
            alpha2: i.a2.alpha,
            delta2: i.a2.delta,
            alphadot2: i.a2.alpha_dot,
            deltadot2: i.a2.delta_dot,
            obs1_qx: i.obs1.q.x,
            obs1_qy: i.obs1.q.y,
            obs1_qz: i.obs1.q.z,
            obs1_qdotx: i.obs1.qdot.x,
            obs1_qdoty: i.obs1.qdot.y,
            obs1_qdotz: i.obs1.qdot.z,
            obs2_qx: i.obs2.q.x,
            obs2_qy: i.obs2.q.y,
            obs2_qz: i.obs2.q.z,
            obs2_qdotx: i.obs2.qdot.x,
            obs2_qdoty: i.obs2.qdot.y,
            obs2_qdotz: i.obs2.qdot.z,
            mu: Some(i.mu),
            c: Some(i.c_light),
            light_time: Some(i.light_time),
            gamma_p1: format_block(&i.gamma_p1),
            gamma_a2: format_block(&i.gamma_a2),
        }
    }
}

pub fn parse_json(text: &str, opts: &LoadOptions) -> Result<ODInput> {
    let rec: InputRecord = serde_json::from_str(text)?;
    rec.into_input(opts)
}

pub fn to_json(input: &ODInput) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InputRecord::from_input(input))?)
}

pub fn parse_csv(text: &str, opts: &LoadOptions) -> Result<Vec<ODInput>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    rdr.deserialize::<CsvRow>()
        .map(|row| row?.into_record()?.into_input(opts))
        .collect()
}

pub fn to_csv(inputs: &[ODInput]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in inputs {
        w.serialize(CsvRow::from_input(i))?;
    }
    let bytes = w.into_inner().map_err(|e| OdError::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| OdError::Parse(e.to_string()))
}

/// Loads every record of a file (one for JSON, one per row for CSV).
pub fn load_inputs(path: &Path, format: InputFormat, opts: &LoadOptions) -> Result<Vec<ODInput>> {
    let text = std::fs::read_to_string(path)?;
    match format {
        InputFormat::Json => Ok(vec![parse_json(&text, opts)?]),
        InputFormat::Csv => parse_csv(&text, opts),
    }
}

/// Loads exactly one record.
pub fn load_input(path: &Path, format: InputFormat) -> Result<ODInput> {
    let mut all = load_inputs(path, format, &LoadOptions::default())?;
    match all.len() {
        1 => Ok(all.remove(0)),
        n => Err(OdError::Parse(format!("expected one input record, found {n}"))),
    }
}

pub fn save_input(path: &Path, input: &ODInput, format: InputFormat) -> Result<()> {
    let text = match format {
        InputFormat::Json => to_json(input)?,
        InputFormat::Csv => to_csv(std::slice::from_ref(input))?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Known heliocentric position `r₁` and the line-of-sight frames at both epochs.
#[derive(Debug, Clone, Copy)]
pub struct AssembledStates {
    pub r1: Vec3<f64>,
    pub frame1: LosFrame<f64>,
    pub frame2: LosFrame<f64>,
}

pub fn assemble_states(input: &ODInput) -> Result<AssembledStates> {
    let frame1 = los_basis(input.p1.alpha, input.p1.delta)?;
    let frame2 = los_basis(input.a2.alpha, input.a2.delta)?;
    let r1 = input.obs1.q + frame1.e_rho * input.p1.rho;
    Ok(AssembledStates { r1, frame1, frame2 })
}
