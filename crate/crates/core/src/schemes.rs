//! Time-stepping schemes for the SIS model variants.
//!
//! * `euler_maruyama` — explicit Euler on either Ito drift (plain or with
//!   the `(sigma^2/2) x (N-x) (N-2x)` correction);
//! * `heun_stratonovich` — predictor/corrector consistent with the
//!   Stratonovich reading of the same diffusion;
//! * `logodds_euler` — Euler on the transformed state
//!   `J = ln(I / (N - I))`, whose equation has additive noise; the inverse
//!   sigmoid map keeps every state strictly inside `]0, N[` by construction;
//! * `wz_rk4` — classical RK4 on the random ODE whose noise is the
//!   piecewise-constant slope of a polygonal path.
//!
//! Increments always come from a [`BrownianPath`], never from a generator
//! inside the stepper, so several schemes (or two coupled models) can
//! consume one realized path. Steps that exit `[eps N, (1-eps) N]` are
//! pulled back and counted; nothing is clamped silently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::params::SisParams;
use crate::trajectory::{saturate_state, BoundaryDiag, Provenance, Trajectory};

/// Default boundary-exit guard as a fraction of `N`.
pub const CLAMP_EPSILON: f64 = 1e-12;

/// Upper cap on log-odds exponents before exponentiation; keeps the drift
/// term finite for any mesh while leaving reachable states untouched.
const LOGODDS_EXP_CAP: f64 = 700.0;

/// Which drift the stepper integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    ItoGray,
    ItoCorrected,
    Stratonovich,
}

impl Model {
    pub fn as_str(&self) -> &'static str {
        match self {
            Model::ItoGray => "ito-gray",
            Model::ItoCorrected => "ito-corrected",
            Model::Stratonovich => "stratonovich",
        }
    }
}

/// Which stepper advances the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    EulerMaruyama,
    HeunStratonovich,
    LogoddsEuler,
    WzRk4,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::EulerMaruyama => "euler-maruyama",
            Method::HeunStratonovich => "heun-stratonovich",
            Method::LogoddsEuler => "logodds-euler",
            Method::WzRk4 => "wz-rk4",
        }
    }
}

/// A validated (method, model) pairing plus the knobs shared by the
/// steppers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub method: Method,
    pub model: Model,
    #[serde(default = "default_clamp")]
    pub clamp_epsilon: f64,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
}

fn default_clamp() -> f64 {
    CLAMP_EPSILON
}

fn default_substeps() -> u32 {
    1
}

impl SchemeSpec {
    pub fn new(method: Method, model: Model) -> Self {
        SchemeSpec {
            method,
            model,
            clamp_epsilon: CLAMP_EPSILON,
            substeps: 1,
        }
    }

    /// Enforce the legal pairings: Euler-Maruyama integrates an Ito drift,
    /// Heun the Stratonovich form, the log-odds scheme either of the two
    /// equal-in-law variants, RK4 the polygonal random ODE.
    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::EulerMaruyama => {
                matches!(self.model, Model::ItoGray | Model::ItoCorrected)
            }
            Method::HeunStratonovich => matches!(self.model, Model::Stratonovich),
            Method::LogoddsEuler => {
                matches!(self.model, Model::Stratonovich | Model::ItoCorrected)
            }
            Method::WzRk4 => matches!(self.model, Model::Stratonovich),
        };
        if !ok {
            return Err(Error::InvalidArg(format!(
                "scheme {} cannot integrate model {}",
                self.method.as_str(),
                self.model.as_str()
            )));
        }
        if !(self.clamp_epsilon >= 0.0 && self.clamp_epsilon < 0.5) {
            return Err(Error::InvalidArg(format!(
                "clamp_epsilon must lie in [0, 0.5), got {}",
                self.clamp_epsilon
            )));
        }
        if self.substeps == 0 {
            return Err(Error::NonPositive("substeps"));
        }
        Ok(())
    }

    pub fn run(&self, p: &SisParams, path: &BrownianPath) -> Result<Trajectory> {
        self.validate()?;
        match self.method {
            Method::EulerMaruyama => em_with_epsilon(p, self.model, path, self.clamp_epsilon),
            Method::HeunStratonovich => heun_with_epsilon(p, path, self.clamp_epsilon),
            Method::LogoddsEuler => Ok(logodds_euler(p, path)),
            Method::WzRk4 => wz_rk4_with_epsilon(p, path, self.substeps, self.clamp_epsilon),
        }
    }
}

/// Drift of the chosen model at state `x`.
pub fn model_drift(p: &SisParams, model: Model, x: f64) -> f64 {
    let n = p.population();
    let base = p.beta() * x * (n - x) - p.mu_plus_gamma() * x;
    match model {
        Model::ItoGray | Model::Stratonovich => base,
        Model::ItoCorrected => {
            base + 0.5 * p.sigma() * p.sigma() * x * (n - x) * (n - 2.0 * x)
        }
    }
}

/// Diffusion coefficient `sigma x (N - x)` shared by all variants.
pub fn model_diffusion(p: &SisParams, x: f64) -> f64 {
    p.sigma() * x * (p.population() - x)
}

fn clamp_step(next: f64, n: f64, eps: f64, diag: &mut BoundaryDiag) -> f64 {
    let lo = eps * n;
    let hi = n - lo;
    if next < lo || next > hi {
        diag.clamps += 1;
        next.clamp(lo, hi)
    } else {
        next
    }
}

fn make_trajectory(
    p: &SisParams,
    path: &BrownianPath,
    method: String,
    states: Vec<f64>,
    log_states: Option<Vec<f64>>,
    diag: BoundaryDiag,
    substeps: Option<u32>,
) -> Trajectory {
    Trajectory {
        grid: *path.grid(),
        states,
        log_states,
        provenance: Provenance {
            method,
            params_fingerprint: p.fingerprint(),
            seed: Some(path.seed()),
            mesh: path.grid().dt(),
            substeps,
        },
        boundary: diag,
    }
}

fn em_with_epsilon(
    p: &SisParams,
    model: Model,
    path: &BrownianPath,
    eps: f64,
) -> Result<Trajectory> {
    if model == Model::Stratonovich {
        return Err(Error::InvalidArg(
            "euler-maruyama integrates the ito-gray or ito-corrected drift".into(),
        ));
    }
    let n = p.population();
    let dt = path.grid().dt();
    let mut diag = BoundaryDiag::new();
    let mut states = Vec::with_capacity(path.grid().n_knots());
    let mut x = p.i0();
    states.push(x);
    diag.observe(x);
    for k in 0..path.grid().n_cells() {
        let next = x + model_drift(p, model, x) * dt + model_diffusion(p, x) * path.increment(k);
        x = clamp_step(next, n, eps, &mut diag);
        states.push(x);
        diag.observe(x);
    }
    Ok(make_trajectory(
        p,
        path,
        format!("euler-maruyama:{}", model.as_str()),
        states,
        None,
        diag,
        None,
    ))
}

/// Euler-Maruyama on the selected Ito drift, driven by the increments of
/// `path`.
pub fn euler_maruyama(p: &SisParams, model: Model, path: &BrownianPath) -> Result<Trajectory> {
    em_with_epsilon(p, model, path, CLAMP_EPSILON)
}

fn heun_with_epsilon(p: &SisParams, path: &BrownianPath, eps: f64) -> Result<Trajectory> {
    let n = p.population();
    let dt = path.grid().dt();
    let drift = |x: f64| model_drift(p, Model::Stratonovich, x);
    let mut diag = BoundaryDiag::new();
    let mut states = Vec::with_capacity(path.grid().n_knots());
    let mut x = p.i0();
    states.push(x);
    diag.observe(x);
    for k in 0..path.grid().n_cells() {
        let db = path.increment(k);
        let predictor = x + drift(x) * dt + model_diffusion(p, x) * db;
        let next = x
            + 0.5 * (drift(x) + drift(predictor)) * dt
            + 0.5 * (model_diffusion(p, x) + model_diffusion(p, predictor)) * db;
        x = clamp_step(next, n, eps, &mut diag);
        states.push(x);
        diag.observe(x);
    }
    Ok(make_trajectory(
        p,
        path,
        "heun-stratonovich".into(),
        states,
        None,
        diag,
        None,
    ))
}

/// Heun predictor/corrector for the Stratonovich form: coefficients are
/// averaged between the step start and an Euler predictor, with the same
/// increment in both stages.
pub fn heun_stratonovich(p: &SisParams, path: &BrownianPath) -> Result<Trajectory> {
    heun_with_epsilon(p, path, CLAMP_EPSILON)
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Euler on the log-odds state `J = ln(I / (N - I))`:
/// `J' = J + (beta N - (mu+gamma) - (mu+gamma) e^J) dt + sigma N dB`.
/// The noise is additive and the sigmoid inverse confines every state to
/// `]0, N[`; the clamp counter is structurally zero.
pub fn logodds_euler(p: &SisParams, path: &BrownianPath) -> Trajectory {
    let n = p.population();
    let mg = p.mu_plus_gamma();
    let delta = p.delta();
    let amp = p.sigma() * n;
    let dt = path.grid().dt();
    let mut diag = BoundaryDiag::new();
    let mut states = Vec::with_capacity(path.grid().n_knots());
    let mut logs = Vec::with_capacity(path.grid().n_knots());
    states.push(p.i0());
    logs.push(p.i0().ln());
    diag.observe(p.i0());
    let mut j = (p.i0() / (n - p.i0())).ln();
    for k in 0..path.grid().n_cells() {
        let j_exp = if j > LOGODDS_EXP_CAP {
            diag.exp_caps += 1;
            LOGODDS_EXP_CAP
        } else {
            j
        };
        j += (delta - mg * j_exp.exp()) * dt + amp * path.increment(k);
        let state = if j >= 0.0 {
            n / (1.0 + (-j).exp())
        } else {
            let ej = j.exp();
            n * ej / (1.0 + ej)
        };
        let state = saturate_state(state, n, &mut diag);
        states.push(state);
        logs.push(n.ln() - softplus(-j));
        diag.observe(state);
    }
    make_trajectory(
        p,
        path,
        "logodds-euler".into(),
        states,
        Some(logs),
        diag,
        None,
    )
}

fn wz_rk4_with_epsilon(
    p: &SisParams,
    path: &BrownianPath,
    substeps: u32,
    eps: f64,
) -> Result<Trajectory> {
    if substeps == 0 {
        return Err(Error::NonPositive("substeps"));
    }
    let n = p.population();
    let mg = p.mu_plus_gamma();
    let dt = path.grid().dt();
    let h = dt / substeps as f64;
    let mut diag = BoundaryDiag::new();
    let mut states = Vec::with_capacity(path.grid().n_knots());
    let mut x = p.i0();
    states.push(x);
    diag.observe(x);
    for k in 0..path.grid().n_cells() {
        let rate = p.beta() + p.sigma() * path.cell_slope(k)?;
        let rhs = |v: f64| rate * v * (n - v) - mg * v;
        for _ in 0..substeps {
            let k1 = rhs(x);
            let k2 = rhs(x + 0.5 * h * k1);
            let k3 = rhs(x + 0.5 * h * k2);
            let k4 = rhs(x + h * k3);
            let next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            x = clamp_step(next, n, eps, &mut diag);
        }
        states.push(x);
        diag.observe(x);
    }
    Ok(make_trajectory(
        p,
        path,
        "wz-rk4".into(),
        states,
        None,
        diag,
        Some(substeps),
    ))
}

/// Classical RK4 on the random ODE
/// `dI/dt = (beta + sigma dB^pi/dt) I (N - I) - (mu+gamma) I`, with the
/// polygonal slope constant on each cell and `substeps` RK4 steps per cell.
/// Serves as the independent numerical check of the per-cell exact solver.
pub fn wz_rk4(p: &SisParams, path: &BrownianPath, substeps: u32) -> Result<Trajectory> {
    wz_rk4_with_epsilon(p, path, substeps, CLAMP_EPSILON)
}
