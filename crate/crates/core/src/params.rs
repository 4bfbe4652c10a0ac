//! Validated SIS parameters and the closed-form scalar quantities derived
//! from them: reproduction numbers, the drift gap `delta`, the deterministic
//! endemic level and the persistence level of the multiplicative-noise model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw, unvalidated parameter record as read from a config file or CLI
/// flags. Keys match the config schema (`N`, `beta`, `mu_plus_gamma`,
/// `sigma`, `i0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(rename = "N")]
    pub population: f64,
    pub beta: f64,
    pub mu_plus_gamma: f64,
    pub sigma: f64,
    pub i0: f64,
}

/// Validated SIS parameters.
///
/// The removal rates `mu` and `gamma` only ever enter through their sum, so
/// only the sum is stored. All fields are immutable after validation; derived
/// quantities are recomputed on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SisParams {
    population: f64,
    beta: f64,
    mu_plus_gamma: f64,
    sigma: f64,
    i0: f64,
}

/// Scalars derived from [`SisParams`]: `delta = beta*N - (mu+gamma)`, the
/// basic reproduction number `r0` and its noise-corrected counterpart
/// `r0_stochastic = r0 - sigma^2 N^2 / (2 (mu+gamma))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub delta: f64,
    pub r0: f64,
    pub r0_stochastic: f64,
}

/// Validate a raw record. Rejects non-positive `N`, `beta`, `mu+gamma`,
/// negative `sigma`, and any `i0` outside the open interval `]0, N[`.
/// Never clamps. `sigma = 0` is allowed: the noise-free model is the
/// degenerate case used as an oracle throughout.
pub fn validate_params(raw: RawParams) -> Result<SisParams> {
    if !(raw.population > 0.0) {
        return Err(Error::NonPositive("N"));
    }
    if !(raw.beta > 0.0) {
        return Err(Error::NonPositive("beta"));
    }
    if !(raw.mu_plus_gamma > 0.0) {
        return Err(Error::NonPositive("mu_plus_gamma"));
    }
    if !(raw.sigma >= 0.0) {
        return Err(Error::NegativeSigma);
    }
    if !(raw.i0 > 0.0 && raw.i0 < raw.population) {
        return Err(Error::InitialOutOfRange {
            i0: raw.i0,
            n: raw.population,
        });
    }
    Ok(SisParams {
        population: raw.population,
        beta: raw.beta,
        mu_plus_gamma: raw.mu_plus_gamma,
        sigma: raw.sigma,
        i0: raw.i0,
    })
}

impl SisParams {
    /// Convenience constructor; equivalent to [`validate_params`].
    pub fn new(population: f64, beta: f64, mu_plus_gamma: f64, sigma: f64, i0: f64) -> Result<Self> {
        validate_params(RawParams {
            population,
            beta,
            mu_plus_gamma,
            sigma,
            i0,
        })
    }

    pub fn population(&self) -> f64 {
        self.population
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn mu_plus_gamma(&self) -> f64 {
        self.mu_plus_gamma
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn i0(&self) -> f64 {
        self.i0
    }

    /// `delta = beta*N - (mu+gamma)`; nonnegative exactly when `r0 >= 1`.
    pub fn delta(&self) -> f64 {
        self.beta * self.population - self.mu_plus_gamma
    }

    /// Basic reproduction number `beta*N / (mu+gamma)`.
    pub fn r0(&self) -> f64 {
        self.beta * self.population / self.mu_plus_gamma
    }

    /// Reproduction number of the multiplicative-noise model interpreted in
    /// the Ito sense: `r0 - sigma^2 N^2 / (2 (mu+gamma))`.
    pub fn r0_stochastic(&self) -> f64 {
        let n2 = self.population * self.population;
        self.r0() - self.sigma * self.sigma * n2 / (2.0 * self.mu_plus_gamma)
    }

    /// Copy with a different `sigma` (still validated).
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.population, self.beta, self.mu_plus_gamma, sigma, self.i0)
    }

    /// Copy with a different initial value (still validated).
    pub fn with_i0(&self, i0: f64) -> Result<Self> {
        Self::new(self.population, self.beta, self.mu_plus_gamma, self.sigma, i0)
    }

    /// Raw record with the same values (for config echo / serialization).
    pub fn raw(&self) -> RawParams {
        RawParams {
            population: self.population,
            beta: self.beta,
            mu_plus_gamma: self.mu_plus_gamma,
            sigma: self.sigma,
            i0: self.i0,
        }
    }

    /// Order-sensitive hash of the parameter bits, recorded in trajectory
    /// provenance.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0x5343_4953_2d53_4445u64;
        for v in [
            self.population,
            self.beta,
            self.mu_plus_gamma,
            self.sigma,
            self.i0,
        ] {
            h = crate::rng::mix2(h, v.to_bits());
        }
        h
    }
}

/// All derived scalars at once.
pub fn derived_constants(p: &SisParams) -> DerivedConstants {
    DerivedConstants {
        delta: p.delta(),
        r0: p.r0(),
        r0_stochastic: p.r0_stochastic(),
    }
}

/// Long-time limit of the noise-free model: `0` when `r0 <= 1`, else
/// `N (1 - 1/r0)`.
pub fn deterministic_limit(p: &SisParams) -> f64 {
    let r0 = p.r0();
    if r0 <= 1.0 {
        0.0
    } else {
        p.population() * (1.0 - 1.0 / r0)
    }
}

/// Persistence level of the Ito-interpretation model,
/// `xi = (sqrt(beta^2 - 2 sigma^2 (mu+gamma)) - (beta - sigma^2 N)) / sigma^2`.
///
/// Evaluated in the cancellation-free form `N - 2(mu+gamma) / (beta + sqrt(..))`
/// so that the small-sigma limit reproduces `N (1 - 1/r0)` to full precision.
pub fn ito_persistence_level(p: &SisParams) -> Result<f64> {
    if p.sigma() == 0.0 {
        return Err(Error::SigmaZero);
    }
    let s2 = p.sigma() * p.sigma();
    let disc = p.beta() * p.beta() - 2.0 * s2 * p.mu_plus_gamma();
    if disc < 0.0 {
        return Err(Error::ComplexRoot);
    }
    Ok(p.population() - 2.0 * p.mu_plus_gamma() / (p.beta() + disc.sqrt()))
}
