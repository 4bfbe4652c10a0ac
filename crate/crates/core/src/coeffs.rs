//! General drift/removal/diffusion coefficient machinery.
//!
//! A [`CoefficientTriple`] holds the coefficients `(f, h, g_1..g_m)` of a
//! scalar equation `dX = [f(X) - h(X)] dt + sum_i g_i(X) dB_i` confined to
//! `]0, N[`. The per-capita growth function
//!
//! `eta(x) = (f(x) - h(x))/x - (1/2) sum_i g_i(x)^2 / x^2`
//!
//! decides long-run behaviour: a negative supremum forces exponential decay
//! of `X`, a positive supremum together with strict decrease of `eta` pins
//! the process around the unique zero `xi` of `eta`. The built-in SIS
//! triples carry their exact quadratic `eta`, which both speeds evaluation
//! up and cross-checks the generic numeric path.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::BrownianPath;
use crate::params::SisParams;
use crate::trajectory::{BoundaryDiag, Provenance, Trajectory};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Dead band around zero inside which a supremum is treated as "cannot
/// tell" rather than rounded into a verdict.
pub const SUP_DEAD_BAND: f64 = 1e-12;

/// Grid resolution used for validation, supremum scans and monotonicity
/// certificates.
pub const DEFAULT_GRID: usize = 4096;

/// `a x^2 + b x + c` — the closed form of `eta` for the built-in models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a * x + self.b) * x + self.c
    }

    /// Supremum of the quadratic over `[0, n]` (endpoints are the
    /// continuous extension of `eta`).
    fn sup_on(&self, n: f64) -> (f64, f64) {
        if self.a < 0.0 {
            let vertex = -self.b / (2.0 * self.a);
            if vertex > 0.0 && vertex < n {
                return (self.eval(vertex), vertex);
            }
        }
        let left = self.c;
        let right = self.eval(n);
        if left >= right {
            (left, 0.0)
        } else {
            (right, n)
        }
    }

    /// Strict decrease of the quadratic on `]0, n[`, decided from the sign
    /// of the derivative `2 a x + b`.
    fn strictly_decreasing_on(&self, n: f64) -> bool {
        if self.a > 0.0 {
            2.0 * self.a * n + self.b <= 0.0
        } else if self.a < 0.0 {
            self.b <= 0.0
        } else {
            self.b < 0.0
        }
    }

    /// Real roots, numerically stable form; `None` when the discriminant is
    /// negative or the quadratic degenerates to a constant.
    pub fn roots(&self) -> Option<(f64, f64)> {
        if self.a == 0.0 {
            if self.b == 0.0 {
                return None;
            }
            let r = -self.c / self.b;
            return Some((r, r));
        }
        let disc = self.b * self.b - 4.0 * self.a * self.c;
        if disc < 0.0 {
            return None;
        }
        let q = -0.5 * (self.b + self.b.signum() * disc.sqrt());
        let (r1, r2) = (q / self.a, self.c / q);
        Some((r1.min(r2), r1.max(r2)))
    }

    /// The unique root inside `]0, n[`, if any.
    pub fn root_in(&self, n: f64) -> Option<f64> {
        let (r1, r2) = self.roots()?;
        let inside = |r: f64| r > 0.0 && r < n;
        match (inside(r1), inside(r2)) {
            (true, false) => Some(r1),
            (false, true) => Some(r2),
            _ => None,
        }
    }
}

/// Coefficients of one scalar equation with domain cap `N`.
#[derive(Clone)]
pub struct CoefficientTriple {
    label: String,
    f: ScalarFn,
    h: ScalarFn,
    g: Vec<ScalarFn>,
    domain_cap: f64,
    eta_closed: Option<Quadratic>,
}

impl std::fmt::Debug for CoefficientTriple {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("CoefficientTriple")
            .field("label", &self.label)
            .field("m", &self.g.len())
            .field("domain_cap", &self.domain_cap)
            .field("eta_closed", &self.eta_closed)
            .finish()
    }
}

impl CoefficientTriple {
    /// User-supplied coefficients; `eta` is evaluated generically.
    pub fn new(
        label: impl Into<String>,
        f: ScalarFn,
        h: ScalarFn,
        g: Vec<ScalarFn>,
        domain_cap: f64,
    ) -> Result<Self> {
        if !(domain_cap > 0.0) {
            return Err(Error::NonPositive("domain_cap"));
        }
        Ok(CoefficientTriple {
            label: label.into(),
            f,
            h,
            g,
            domain_cap,
            eta_closed: None,
        })
    }

    /// The multiplicative-noise SIS model in its plain Ito reading:
    /// `f = beta x (N-x)`, `h = (mu+gamma) x`, `g = sigma x (N-x)`.
    pub fn ito_gray(p: &SisParams) -> Self {
        let (n, beta, mg, sigma) = (p.population(), p.beta(), p.mu_plus_gamma(), p.sigma());
        let s2 = sigma * sigma;
        CoefficientTriple {
            label: "ito-gray".into(),
            f: Arc::new(move |x| beta * x * (n - x)),
            h: Arc::new(move |x| mg * x),
            g: vec![Arc::new(move |x| sigma * x * (n - x))],
            domain_cap: n,
            eta_closed: Some(Quadratic {
                a: -0.5 * s2,
                b: s2 * n - beta,
                c: beta * n - mg - 0.5 * s2 * n * n,
            }),
        }
    }

    /// The drift-corrected model equivalent to the Stratonovich reading:
    /// `f` gains `(sigma^2/2) x (N-x) (N-2x)`.
    pub fn strat_corrected(p: &SisParams) -> Self {
        let (n, beta, mg, sigma) = (p.population(), p.beta(), p.mu_plus_gamma(), p.sigma());
        let s2 = sigma * sigma;
        CoefficientTriple {
            label: "strat-corrected".into(),
            f: Arc::new(move |x| beta * x * (n - x) + 0.5 * s2 * x * (n - x) * (n - 2.0 * x)),
            h: Arc::new(move |x| mg * x),
            g: vec![Arc::new(move |x| sigma * x * (n - x))],
            domain_cap: n,
            eta_closed: Some(Quadratic {
                a: 0.5 * s2,
                b: -(0.5 * s2 * n + beta),
                c: beta * n - mg,
            }),
        }
    }

    /// The noise-free model as a degenerate triple (one identically-zero
    /// diffusion coefficient).
    pub fn deterministic(p: &SisParams) -> Self {
        let (n, beta, mg) = (p.population(), p.beta(), p.mu_plus_gamma());
        CoefficientTriple {
            label: "deterministic".into(),
            f: Arc::new(move |x| beta * x * (n - x)),
            h: Arc::new(move |x| mg * x),
            g: vec![Arc::new(|_| 0.0)],
            domain_cap: n,
            eta_closed: Some(Quadratic {
                a: 0.0,
                b: -beta,
                c: beta * n - mg,
            }),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain_cap(&self) -> f64 {
        self.domain_cap
    }

    pub fn num_diffusions(&self) -> usize {
        self.g.len()
    }

    pub fn f_at(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn h_at(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn g_at(&self, i: usize, x: f64) -> f64 {
        (self.g[i])(x)
    }

    pub fn drift_at(&self, x: f64) -> f64 {
        (self.f)(x) - (self.h)(x)
    }

    pub fn eta_closed(&self) -> Option<Quadratic> {
        self.eta_closed
    }

    /// `eta` from the raw coefficient closures (always available; the
    /// cross-check route for models that also carry a closed form).
    pub fn eta_eval_generic(&self, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        let mut diffusion = 0.0;
        for g in &self.g {
            let ratio = g(x) / x;
            diffusion += ratio * ratio;
        }
        Ok(((self.f)(x) - (self.h)(x)) / x - 0.5 * diffusion)
    }

    /// `eta(x)` for interior `x`; uses the closed quadratic when present.
    pub fn eta_eval(&self, x: f64) -> Result<f64> {
        self.check_interior(x)?;
        match &self.eta_closed {
            Some(q) => Ok(q.eval(x)),
            None => self.eta_eval_generic(x),
        }
    }

    fn check_interior(&self, x: f64) -> Result<()> {
        if x > 0.0 && x < self.domain_cap {
            Ok(())
        } else {
            Err(Error::OutOfDomain(x))
        }
    }

    /// `eta` extended to the closed interval: the quadratic itself for the
    /// built-ins, otherwise the generic form evaluated just inside a
    /// `1e-12 N` guard.
    fn eta_extended(&self, x: f64) -> f64 {
        match &self.eta_closed {
            Some(q) => q.eval(x),
            None => {
                let guard = 1e-12 * self.domain_cap;
                let xx = x.clamp(guard, self.domain_cap - guard);
                self.eta_eval_generic(xx).expect("guarded point is interior")
            }
        }
    }
}

/// Structural validation report; the slope bounds are finite-difference
/// estimates over the scan grid (informational, not a certificate).
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub grid_size: usize,
    pub lipschitz_f: f64,
    pub lipschitz_h: f64,
    pub lipschitz_g: Vec<f64>,
}

/// Check the structural assumptions: `f`, every `g_i` vanish at both `0`
/// and `N` exactly, `h(0) = 0`, and `h > 0` on the interior grid and at
/// `N`. Failures are hard errors.
pub fn validate_coefficients(c: &CoefficientTriple, grid_size: usize) -> Result<ValidationReport> {
    if grid_size < 16 {
        return Err(Error::InvalidArg(format!(
            "validation grid must have at least 16 points, got {grid_size}"
        )));
    }
    let n = c.domain_cap();
    let violated = |condition: &str, location: f64| Error::AssumptionViolated {
        condition: condition.to_string(),
        location,
    };
    if c.f_at(0.0) != 0.0 {
        return Err(violated("f(0) = 0", 0.0));
    }
    if c.f_at(n) != 0.0 {
        return Err(violated("f(N) = 0", n));
    }
    if c.h_at(0.0) != 0.0 {
        return Err(violated("h(0) = 0", 0.0));
    }
    for i in 0..c.num_diffusions() {
        if c.g_at(i, 0.0) != 0.0 {
            return Err(violated(&format!("g_{i}(0) = 0"), 0.0));
        }
        if c.g_at(i, n) != 0.0 {
            return Err(violated(&format!("g_{i}(N) = 0"), n));
        }
    }
    for j in 1..=grid_size + 1 {
        let x = j as f64 * n / (grid_size + 1) as f64;
        if !(c.h_at(x) > 0.0) {
            return Err(violated("h > 0 on ]0, N]", x));
        }
    }

    let slope_bound = |eval: &dyn Fn(f64) -> f64| {
        let mut bound: f64 = 0.0;
        let mut prev = eval(0.0);
        for j in 1..=grid_size {
            let x = j as f64 * n / grid_size as f64;
            let cur = eval(x);
            bound = bound.max(((cur - prev) / (n / grid_size as f64)).abs());
            prev = cur;
        }
        bound
    };
    Ok(ValidationReport {
        grid_size,
        lipschitz_f: slope_bound(&|x| c.f_at(x)),
        lipschitz_h: slope_bound(&|x| c.h_at(x)),
        lipschitz_g: (0..c.num_diffusions())
            .map(|i| slope_bound(&|x| c.g_at(i, x)))
            .collect(),
    })
}

/// Summary of `eta` over `]0, N[`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaProfile {
    pub sup_value: f64,
    /// Location of the supremum in `[0, N]`; an endpoint marks a boundary
    /// limit rather than an attained maximum.
    pub sup_location: f64,
    pub root_xi: Option<f64>,
    pub strictly_decreasing: bool,
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, width: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > width {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (f(mid), mid)
}

/// Numeric supremum: dense scan plus golden-section refinement around the
/// best cell, down to a bracket of `1e-12 N`.
fn eta_sup_numeric(c: &CoefficientTriple) -> (f64, f64) {
    let n = c.domain_cap();
    let eval = |x: f64| c.eta_extended(x);
    let points = DEFAULT_GRID + 2; // endpoints included (extended eta)
    let mut best_j = 0usize;
    let mut best = f64::NEG_INFINITY;
    let xs: Vec<f64> = (0..points)
        .map(|j| j as f64 * n / (points - 1) as f64)
        .collect();
    for (j, &x) in xs.iter().enumerate() {
        let v = eval(x);
        if v > best {
            best = v;
            best_j = j;
        }
    }
    let lo = if best_j == 0 { xs[0] } else { xs[best_j - 1] };
    let hi = if best_j + 1 == points {
        xs[points - 1]
    } else {
        xs[best_j + 1]
    };
    let (refined, at) = golden_max(&eval, lo, hi, 1e-12 * n);
    if refined > best {
        (refined, at)
    } else {
        (best, xs[best_j])
    }
}

/// Supremum of `eta` over `]0, N[` (boundary limits included) and its
/// location. For triples with a closed-form `eta` the quadratic vertex rule
/// is used and the numeric scan must agree to `1e-8 (1 + |sup|)`.
pub fn eta_sup(c: &CoefficientTriple) -> (f64, f64) {
    let numeric = eta_sup_numeric(c);
    if let Some(q) = &c.eta_closed {
        let analytic = q.sup_on(c.domain_cap());
        assert!(
            (numeric.0 - analytic.0).abs() <= 1e-8 * (1.0 + analytic.0.abs()),
            "numeric eta supremum {} disagrees with closed form {}",
            numeric.0,
            analytic.0
        );
        analytic
    } else {
        numeric
    }
}

/// Grid-certified strict decrease of `eta` on `]0, N[` (derivative sign for
/// the closed-form models).
pub fn eta_strictly_decreasing(c: &CoefficientTriple) -> bool {
    if let Some(q) = &c.eta_closed {
        return q.strictly_decreasing_on(c.domain_cap());
    }
    let n = c.domain_cap();
    let points = DEFAULT_GRID + 2;
    let mut prev = c.eta_extended(0.0);
    for j in 1..points {
        let cur = c.eta_extended(j as f64 * n / (points - 1) as f64);
        if !(cur < prev) {
            return false;
        }
        prev = cur;
    }
    true
}

/// Bisection root of `eta` in `]0, N[`. Requires a positive supremum and a
/// certified strict decrease; the bracket is tightened to `1e-12 N`.
pub fn eta_root(c: &CoefficientTriple) -> Result<f64> {
    let (sup, _) = eta_sup(c);
    if !(sup > 0.0) || !eta_strictly_decreasing(c) {
        return Err(Error::NoSignChange);
    }
    let n = c.domain_cap();
    let eval = |x: f64| c.eta_extended(x);
    let (mut lo, mut hi) = (0.0, n);
    let eta_right = eval(hi);
    if !(eta_right < 0.0) {
        return Err(Error::NoSignChange);
    }
    while hi - lo > 1e-12 * n {
        let mid = 0.5 * (lo + hi);
        if eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    debug_assert!(
        eval(root).abs() <= 1e-10 * (1.0 + eta_right.abs()),
        "residual at bisection root too large: {}",
        eval(root)
    );
    if let Some(q) = &c.eta_closed {
        if let Some(exact) = q.root_in(n) {
            debug_assert!(
                (root - exact).abs() <= 1e-9 * (1.0 + exact.abs()),
                "bisection root {root} drifted from closed form {exact}"
            );
        }
    }
    Ok(root)
}

/// Long-run verdict for a coefficient triple.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Verdict {
    Extinct,
    Persistent { xi: f64 },
    Indeterminate,
}

/// The inequality values behind a verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub sup_value: f64,
    pub sup_location: f64,
    pub strictly_decreasing: bool,
    pub dead_band: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub certificate: Certificate,
}

/// Extinct iff `sup eta < 0`, persistent iff `sup eta > 0` and `eta` is
/// strictly decreasing. A supremum inside the `1e-12` dead band, or a
/// positive supremum without the monotonicity certificate, yields
/// `Indeterminate` — the threshold cases are never decided by rounding
/// noise.
pub fn classify(c: &CoefficientTriple) -> Classification {
    let (sup_value, sup_location) = eta_sup(c);
    let strictly_decreasing = eta_strictly_decreasing(c);
    let base = Certificate {
        sup_value,
        sup_location,
        strictly_decreasing,
        dead_band: SUP_DEAD_BAND,
        note: None,
    };
    if sup_value.abs() <= SUP_DEAD_BAND {
        return Classification {
            verdict: Verdict::Indeterminate,
            certificate: Certificate {
                note: Some("supremum inside dead band".into()),
                ..base
            },
        };
    }
    if sup_value < 0.0 {
        return Classification {
            verdict: Verdict::Extinct,
            certificate: base,
        };
    }
    if !strictly_decreasing {
        return Classification {
            verdict: Verdict::Indeterminate,
            certificate: Certificate {
                note: Some("eta is not certified strictly decreasing".into()),
                ..base
            },
        };
    }
    let xi = eta_root(c).expect("positive sup and strict decrease imply a root");
    Classification {
        verdict: Verdict::Persistent { xi },
        certificate: base,
    }
}

/// Full profile (supremum, monotonicity certificate, root when defined).
pub fn eta_profile(c: &CoefficientTriple) -> EtaProfile {
    let (sup_value, sup_location) = eta_sup(c);
    let strictly_decreasing = eta_strictly_decreasing(c);
    let root_xi = if sup_value > SUP_DEAD_BAND && strictly_decreasing {
        eta_root(c).ok()
    } else {
        None
    };
    EtaProfile {
        sup_value,
        sup_location,
        root_xi,
        strictly_decreasing,
    }
}

/// Euler step sequence for a coefficient triple on shared noise; the
/// building block of the ordering harness. `noise` holds one path per
/// diffusion coefficient, all on the same grid.
pub fn simulate_triple_em(
    c: &CoefficientTriple,
    start: f64,
    noise: &[BrownianPath],
) -> Result<Trajectory> {
    if noise.len() != c.num_diffusions() {
        return Err(Error::InvalidArg(format!(
            "need {} noise paths, got {}",
            c.num_diffusions(),
            noise.len()
        )));
    }
    let grid = *noise[0].grid();
    if noise.iter().any(|p| p.grid() != &grid) {
        return Err(Error::InvalidArg("noise paths live on different grids".into()));
    }
    let n = c.domain_cap();
    if !(start > 0.0 && start < n) {
        return Err(Error::OutOfDomain(start));
    }
    let dt = grid.dt();
    let eps = 1e-12 * n;
    let mut diag = BoundaryDiag::new();
    let mut states = Vec::with_capacity(grid.n_knots());
    let mut x = start;
    states.push(x);
    diag.observe(x);
    for k in 0..grid.n_cells() {
        let mut next = x + c.drift_at(x) * dt;
        for (i, path) in noise.iter().enumerate() {
            next += c.g_at(i, x) * path.increment(k);
        }
        if next < eps || next > n - eps {
            diag.clamps += 1;
            next = next.clamp(eps, n - eps);
        }
        x = next;
        states.push(x);
        diag.observe(x);
    }
    Ok(Trajectory {
        grid,
        states,
        log_states: None,
        provenance: Provenance {
            method: format!("triple-em:{}", c.label()),
            params_fingerprint: 0,
            seed: Some(noise[0].seed()),
            mesh: dt,
            substeps: None,
        },
        boundary: diag,
    })
}

/// Outcome of the shared-noise ordering run.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub paths: usize,
    pub steps_per_path: usize,
    pub violations: u64,
    pub max_excess: f64,
    pub clamps_low: u64,
    pub clamps_high: u64,
}

/// Drive `low` and `high` with identical noise from the same start and
/// count the knots where the `low` state exceeds the `high` state by more
/// than `1e-9 N`. Preconditions — identical diffusion lists and pointwise
/// drift ordering — are checked on the scan grid first.
pub fn comparison_harness(
    low: &CoefficientTriple,
    high: &CoefficientTriple,
    noise_sets: &[Vec<BrownianPath>],
    start: f64,
) -> Result<ComparisonReport> {
    if low.num_diffusions() != high.num_diffusions() {
        return Err(Error::InvalidArg(
            "triples have different numbers of diffusion coefficients".into(),
        ));
    }
    if (low.domain_cap() - high.domain_cap()).abs() != 0.0 {
        return Err(Error::InvalidArg("triples have different domain caps".into()));
    }
    let n = low.domain_cap();
    for j in 0..=DEFAULT_GRID {
        let x = j as f64 * n / DEFAULT_GRID as f64;
        for i in 0..low.num_diffusions() {
            if low.g_at(i, x) != high.g_at(i, x) {
                return Err(Error::InvalidArg(format!(
                    "diffusion coefficient g_{i} differs between triples at x={x}"
                )));
            }
        }
        let (dl, dh) = (low.drift_at(x), high.drift_at(x));
        if dl > dh + 1e-12 * (1.0 + dl.abs()) {
            return Err(Error::DriftOrderViolated {
                location: x,
                low: dl,
                high: dh,
            });
        }
    }

    let tol = 1e-9 * n;
    let mut violations = 0u64;
    let mut max_excess: f64 = 0.0;
    let mut clamps_low = 0u64;
    let mut clamps_high = 0u64;
    let mut steps = 0usize;
    for noise in noise_sets {
        let lo = simulate_triple_em(low, start, noise)?;
        let hi = simulate_triple_em(high, start, noise)?;
        steps = lo.grid.n_cells();
        clamps_low += lo.boundary.clamps;
        clamps_high += hi.boundary.clamps;
        for (a, b) in lo.states.iter().zip(hi.states.iter()) {
            let excess = a - b;
            if excess > tol {
                violations += 1;
                max_excess = max_excess.max(excess);
            }
        }
    }
    Ok(ComparisonReport {
        paths: noise_sets.len(),
        steps_per_path: steps,
        violations,
        max_excess,
        clamps_low,
        clamps_high,
    })
}
