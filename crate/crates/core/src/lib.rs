//! Simulation and verification toolkit for the stochastic SIS epidemic
//! model.
//!
//! The crate covers the full chain from model parameters to long-run
//! verdicts:
//!
//! * [`params`] — validated parameters and their closed-form thresholds;
//! * [`noise`] — Brownian paths on uniform grids with polygonal evaluation
//!   and dyadic bridge refinement;
//! * [`coeffs`] — the generic `(f, h, g_i)` coefficient framework:
//!   structural validation, the per-capita growth function `eta`, its
//!   supremum/root, extinction-persistence classification, and a
//!   shared-noise pathwise ordering harness;
//! * [`exact`] — closed-form solution evaluators (noise-free, corrected
//!   stochastic model, polygonal random ODE, piecewise-constant rates);
//! * [`schemes`] — Euler-Maruyama, Stratonovich Heun, the boundary-exact
//!   log-odds Euler scheme, and an RK4 integrator for polygonal noise;
//! * [`asymptotics`] — Lyapunov-rate estimation, scale density/function,
//!   recurrence classification, crossing and bracketing witnesses;
//! * [`ensemble`] / [`emit`] — reproducible Monte Carlo orchestration,
//!   convergence studies, and file outputs.

pub mod asymptotics;
pub mod coeffs;
pub mod emit;
pub mod ensemble;
pub mod error;
pub mod exact;
pub mod noise;
pub mod params;
pub mod rng;
pub mod schemes;
pub mod trajectory;

pub use asymptotics::{
    crossing_count, lyapunov_estimate, persistence_bracket, recurrence_classify, scale_density,
    scale_function, BracketReport, Recurrence, RecurrenceVerdict, ScaleSpec,
};
pub use coeffs::{
    classify, comparison_harness, eta_profile, eta_root, eta_strictly_decreasing, eta_sup,
    simulate_triple_em, validate_coefficients, Classification, CoefficientTriple,
    ComparisonReport, EtaProfile, Verdict,
};
pub use ensemble::{
    run_ensemble, scheme_cross_check, wz_convergence_study, ConvergenceRow, ConvergenceTable,
    EnsembleReport, ExperimentConfig, RunTiming,
};
pub use error::{Error, Result};
pub use exact::{
    deterministic_solution, stratonovich_exact, time_varying_deterministic, wong_zakai_exact,
};
pub use noise::{parse_seed, sample_path, BrownianPath, TimeGrid};
pub use params::{
    derived_constants, deterministic_limit, ito_persistence_level, validate_params,
    DerivedConstants, RawParams, SisParams,
};
pub use schemes::{
    euler_maruyama, heun_stratonovich, logodds_euler, model_diffusion, model_drift, wz_rk4,
    Method, Model, SchemeSpec,
};
pub use trajectory::{BoundaryDiag, Provenance, Trajectory};
