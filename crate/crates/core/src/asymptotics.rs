//! Long-run behaviour machinery: empirical Lyapunov (exponential-rate)
//! estimation, the scale density/function of the log-odds diffusion,
//! recurrence classification, and the crossing/bracketing witnesses used by
//! the ensemble experiments.
//!
//! Recurrence of the log-odds diffusion is equivalent to the scale function
//! `psi(x) = int_0^x theta` diverging at both ends of the line. Divergence
//! is an asymptotic statement, so the classifier decides analytically from
//! the sign of `delta` while a doubling test on `|psi|` over widening
//! windows provides the finite numeric cross-check (overflow of `theta`
//! counts as divergence evidence, not as an error).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SisParams;
use crate::trajectory::Trajectory;

/// Coefficients of the scale density of the log-odds diffusion:
/// `theta(y) = exp(linear_coef * y + exp_coef * (e^y - 1))` with
/// `linear_coef = -2 delta / (sigma N)^2` and
/// `exp_coef = 2 (mu+gamma) / (sigma N)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleSpec {
    pub linear_coef: f64,
    pub exp_coef: f64,
}

impl ScaleSpec {
    pub fn from_params(p: &SisParams) -> Result<Self> {
        if p.sigma() == 0.0 {
            return Err(Error::SigmaZero);
        }
        let s2n2 = (p.sigma() * p.population()).powi(2);
        Ok(ScaleSpec {
            linear_coef: -2.0 * p.delta() / s2n2,
            exp_coef: 2.0 * p.mu_plus_gamma() / s2n2,
        })
    }

    pub fn log_theta(&self, y: f64) -> f64 {
        self.linear_coef * y + self.exp_coef * y.exp_m1()
    }

    /// `theta(y)`, with `+inf` as the overflow marker above exponent 709.
    pub fn theta(&self, y: f64) -> f64 {
        let lt = self.log_theta(y);
        if lt > 709.0 {
            f64::INFINITY
        } else {
            lt.exp()
        }
    }
}

/// Scale density `theta(y)`; requires `sigma > 0`.
pub fn scale_density(p: &SisParams, y: f64) -> Result<f64> {
    Ok(ScaleSpec::from_params(p)?.theta(y))
}

fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    if !flm.is_finite() || !frm.is_finite() {
        return f64::INFINITY;
    }
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * rel_tol * (left + right).abs().max(f64::MIN_POSITIVE) {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, rel_tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, rel_tol, depth - 1)
    }
}

/// Adaptive Simpson on `[a, b]`; an infinite sample anywhere propagates as
/// the `+inf` divergence marker.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    if !fa.is_finite() || !fm.is_finite() || !fb.is_finite() {
        return f64::INFINITY;
    }
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, rel_tol, 48)
}

/// `psi(x) = int_0^x theta(y) dy` by adaptive Simpson (relative tolerance
/// `1e-8`); negative for `x < 0`, `+/-inf` when the integrand overflows
/// (the divergence indicator).
pub fn scale_function(p: &SisParams, x: f64) -> Result<f64> {
    let spec = ScaleSpec::from_params(p)?;
    Ok(scale_function_spec(&spec, x))
}

fn scale_function_spec(spec: &ScaleSpec, x: f64) -> f64 {
    let f = |y: f64| spec.theta(y);
    if x >= 0.0 {
        adaptive_simpson(&f, 0.0, x, 1e-8)
    } else {
        -adaptive_simpson(&f, x, 0.0, 1e-8)
    }
}

/// Verdict of the recurrence dichotomy for the corrected model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Recurrence {
    RecurrentOnInterior,
    TransientTowardZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecurrenceVerdict {
    pub verdict: Recurrence,
    pub psi_left_diverges: bool,
    pub psi_right_diverges: bool,
}

fn left_diverges(spec: &ScaleSpec) -> bool {
    let lc = spec.linear_coef;
    let psi = |y: f64| scale_function_spec(spec, y).abs();
    if lc == 0.0 {
        // theta(-y) -> e^{-exp_coef} > 0: linear growth. Check the measured
        // tail increment against the analytic limit rate.
        let increment = psi(-80.0) - psi(-40.0);
        return increment.is_infinite() || increment >= 0.9 * 40.0 * (-spec.exp_coef).exp();
    }
    // Doubling test on windows wide enough that exponential tail growth
    // (if any) dominates the near-origin bulk of psi.
    let y = f64::max(20.0, (spec.exp_coef + 10.0) / lc.abs());
    let (p1, p2, p3) = (psi(-y), psi(-2.0 * y), psi(-4.0 * y));
    if p2.is_infinite() || p3.is_infinite() {
        return true;
    }
    p2 >= 2.0 * p1 && p3 >= 2.0 * p2
}

fn right_diverges(spec: &ScaleSpec) -> bool {
    let psi = |y: f64| scale_function_spec(spec, y).abs();
    // Past y*, the e^y term in the exponent overwhelms the linear one.
    let y_star = ((709.0 + 40.0 * spec.linear_coef.abs()) / spec.exp_coef)
        .max(1.0)
        .ln()
        + 1.0;
    let y = y_star.max(5.0);
    let (p1, p2) = (psi(y), psi(2.0 * y));
    p2.is_infinite() || p2 >= 2.0 * p1
}

/// Recurrence dichotomy: recurrent on the interior exactly when
/// `delta >= 0`. The verdict is the analytic rule; the divergence flags
/// report the numeric doubling-test evidence for each side.
pub fn recurrence_classify(p: &SisParams) -> Result<RecurrenceVerdict> {
    let spec = ScaleSpec::from_params(p)?;
    let verdict = if p.delta() >= 0.0 {
        Recurrence::RecurrentOnInterior
    } else {
        Recurrence::TransientTowardZero
    };
    Ok(RecurrenceVerdict {
        verdict,
        psi_left_diverges: left_diverges(&spec),
        psi_right_diverges: right_diverges(&spec),
    })
}

/// Empirical exponential rate of a trajectory:
/// `(ln X(t_end) - ln X(t_burn)) / (t_end - t_burn)` with `t_burn` the knot
/// at `burn_in_fraction` of the horizon. Uses exact log-domain states when
/// the trajectory carries them.
pub fn lyapunov_estimate(traj: &Trajectory, burn_in_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(Error::InvalidArg(format!(
            "burn_in_fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    for (k, &s) in traj.states.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::NonPositiveState(k));
        }
    }
    let last = traj.states.len() - 1;
    let burn = ((burn_in_fraction * last as f64).floor() as usize).min(last - 1);
    let dt_span = traj.grid.knot(last) - traj.grid.knot(burn);
    Ok((traj.log_state(last) - traj.log_state(burn)) / dt_span)
}

/// Completed band excursions: an excursion starts below `low`, must exceed
/// `high`, and completes when the path drops below `low` again (which also
/// arms the next one). A monotone path therefore counts zero — its single
/// traversal never completes.
pub fn crossing_count(traj: &Trajectory, low: f64, high: f64) -> Result<u64> {
    if !(low > 0.0 && low < high) {
        return Err(Error::BadBand { low, high });
    }
    #[derive(PartialEq)]
    enum Phase {
        Seeking,
        Armed,
        Returning,
    }
    let mut phase = if traj.states[0] < low {
        Phase::Armed
    } else {
        Phase::Seeking
    };
    let mut count = 0u64;
    for &s in &traj.states[1..] {
        match phase {
            Phase::Seeking if s < low => phase = Phase::Armed,
            Phase::Armed if s > high => phase = Phase::Returning,
            Phase::Returning if s < low => {
                count += 1;
                phase = Phase::Armed;
            }
            _ => {}
        }
    }
    Ok(count)
}

/// Outcome of the trailing-window bracketing check around a level `xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BracketReport {
    pub total: usize,
    pub bracketing: usize,
    pub fraction: f64,
}

/// For each trajectory, test whether the trailing `window_fraction` of the
/// horizon strictly straddles `xi` (its running minimum below, its running
/// maximum above). Windows shorter than 100 steps are refused.
pub fn persistence_bracket(
    trajectories: &[Trajectory],
    xi: f64,
    window_fraction: f64,
) -> Result<BracketReport> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidArg(format!(
            "window_fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let mut bracketing = 0usize;
    for traj in trajectories {
        let cells = traj.grid.n_cells();
        let steps = ((window_fraction * cells as f64).floor() as usize).max(1);
        if steps < 100 {
            return Err(Error::WindowTooShort {
                got: steps,
                need: 100,
            });
        }
        let window = &traj.states[traj.states.len() - steps - 1..];
        let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min < xi && xi < max {
            bracketing += 1;
        }
    }
    Ok(BracketReport {
        total: trajectories.len(),
        bracketing,
        fraction: bracketing as f64 / trajectories.len().max(1) as f64,
    })
}
