//! Monte Carlo orchestration: experiment configs, the parallel ensemble
//! runner, and the two convergence studies.
//!
//! Reproducibility contract: every run is a pure function of its config.
//! Per-path seeds are derived by hashing `(base_seed, path_index)`, work is
//! merged by path index, and no aggregate depends on execution order, so
//! reports are byte-identical for any worker count. Wall-clock timing is
//! returned separately and never enters the report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{crossing_count, lyapunov_estimate};
use crate::error::{Error, Result};
use crate::exact::{stratonovich_exact, wong_zakai_exact};
use crate::noise::{parse_seed, sample_path, BrownianPath, TimeGrid};
use crate::params::{validate_params, RawParams, SisParams};
use crate::rng::path_seed;
use crate::schemes::{euler_maruyama, Method, Model, SchemeSpec};
use crate::trajectory::Trajectory;

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_substeps() -> u32 {
    1
}

fn default_burn_in() -> f64 {
    0.0
}

fn default_reference_extra() -> u32 {
    6
}

fn de_seed<'de, D>(d: D) -> std::result::Result<u64, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(u64),
        Str(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(n) => Ok(n),
        Repr::Str(s) => parse_seed(&s).map_err(serde::de::Error::custom),
    }
}

/// One experiment, fully specified. Unknown keys are rejected so config
/// typos fail loudly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub params: RawParams,
    pub t_end: f64,
    pub cells: usize,
    pub scheme: Method,
    pub model: Model,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    pub n_paths: usize,
    #[serde(deserialize_with = "de_seed")]
    pub base_seed: u64,
    #[serde(default)]
    pub refinement_levels: u32,
    /// Extra dyadic refinements past the finest ladder level on which the
    /// reference solution is evaluated in convergence studies.
    #[serde(default = "default_reference_extra")]
    pub reference_extra_levels: u32,
    #[serde(default)]
    pub crossing_band: Option<[f64; 2]>,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
}

impl ExperimentConfig {
    /// Parse a config from TOML or JSON text, keyed by file extension.
    pub fn from_str(text: &str, extension: &str) -> Result<Self> {
        let cfg: ExperimentConfig = match extension {
            "toml" => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            "json" => serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            other => {
                return Err(Error::Config(format!(
                    "unsupported config extension `{other}` (use .toml or .json)"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text, &ext)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (this build reads v{SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        validate_params(self.params)?;
        if !(self.t_end > 0.0) {
            return Err(Error::NonPositive("t_end"));
        }
        if self.cells == 0 {
            return Err(Error::NonPositive("cells"));
        }
        if self.n_paths == 0 {
            return Err(Error::NonPositive("n_paths"));
        }
        if self.refinement_levels > 0 && !self.cells.is_power_of_two() {
            return Err(Error::Config(
                "cells must be a power of two when refinement_levels > 0".into(),
            ));
        }
        if let Some([lo, hi]) = self.crossing_band {
            if !(lo > 0.0 && lo < hi && hi < self.params.population) {
                return Err(Error::BadBand { low: lo, high: hi });
            }
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::Config(format!(
                "burn_in_fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            )));
        }
        self.scheme_spec().validate()
    }

    pub fn scheme_spec(&self) -> SchemeSpec {
        let mut spec = SchemeSpec::new(self.scheme, self.model);
        spec.substeps = self.substeps;
        spec
    }

    pub fn sis_params(&self) -> Result<SisParams> {
        validate_params(self.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingStats {
    pub band: [f64; 2],
    pub counts: Vec<u64>,
    pub median: f64,
}

/// Aggregated Monte Carlo statistics; a pure function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub terminal_states: Vec<f64>,
    /// True when at least one terminal state sat at the floating-point
    /// floor (the analytic value was smaller than any positive f64).
    pub underflow: bool,
    pub terminal: SummaryStats,
    pub lyapunov: MeanSd,
    pub clamp_total: u64,
    pub saturation_total: u64,
    pub exp_cap_total: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub crossings: Option<CrossingStats>,
}

/// Wall-clock measurements, reported beside (never inside) the report.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunTiming {
    pub wall_seconds: f64,
    pub paths_per_sec: f64,
}

/// Linear-interpolation quantile of pre-sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn summary_stats(values: &[f64]) -> SummaryStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    SummaryStats {
        mean,
        sd: var.sqrt(),
        q05: quantile_sorted(&sorted, 0.05),
        q25: quantile_sorted(&sorted, 0.25),
        q50: quantile_sorted(&sorted, 0.50),
        q75: quantile_sorted(&sorted, 0.75),
        q95: quantile_sorted(&sorted, 0.95),
    }
}

fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanSd {
        mean,
        sd: var.sqrt(),
    }
}

struct PathSummary {
    terminal: f64,
    lyapunov: f64,
    clamps: u64,
    saturations: u64,
    exp_caps: u64,
    crossings: Option<u64>,
}

/// Run one trajectory of the configured scheme for path index `i`.
pub fn run_path(cfg: &ExperimentConfig, index: u64) -> Result<Trajectory> {
    let p = cfg.sis_params()?;
    let grid = TimeGrid::new(cfg.t_end, cfg.cells)?;
    let path = sample_path(grid, path_seed(cfg.base_seed, index));
    cfg.scheme_spec().run(&p, &path)
}

/// Run the full ensemble. Paths execute in parallel on the ambient rayon
/// pool; failures abort with the failing path index attached.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<(EnsembleReport, RunTiming)> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let summaries: Vec<PathSummary> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<PathSummary> {
            let traj = run_path(cfg, i)
                .map_err(|e| Error::NumericalAssertion(format!("path {i}: {e}")))?;
            let lyapunov = lyapunov_estimate(&traj, cfg.burn_in_fraction)
                .map_err(|e| Error::NumericalAssertion(format!("path {i}: {e}")))?;
            let crossings = match cfg.crossing_band {
                Some([lo, hi]) => Some(
                    crossing_count(&traj, lo, hi)
                        .map_err(|e| Error::NumericalAssertion(format!("path {i}: {e}")))?,
                ),
                None => None,
            };
            Ok(PathSummary {
                terminal: traj.terminal(),
                lyapunov,
                clamps: traj.boundary.clamps,
                saturations: traj.boundary.saturations,
                exp_caps: traj.boundary.exp_caps,
                crossings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let wall = start.elapsed().as_secs_f64();

    let terminal_states: Vec<f64> = summaries.iter().map(|s| s.terminal).collect();
    let lyapunovs: Vec<f64> = summaries.iter().map(|s| s.lyapunov).collect();
    let crossings = cfg.crossing_band.map(|band| {
        let counts: Vec<u64> = summaries.iter().filter_map(|s| s.crossings).collect();
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2] as f64
        } else {
            (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) as f64 / 2.0
        };
        CrossingStats {
            band,
            counts,
            median,
        }
    });
    let report = EnsembleReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        underflow: terminal_states.iter().any(|&t| t <= f64::MIN_POSITIVE),
        terminal: summary_stats(&terminal_states),
        lyapunov: mean_sd(&lyapunovs),
        clamp_total: summaries.iter().map(|s| s.clamps).sum(),
        saturation_total: summaries.iter().map(|s| s.saturations).sum(),
        exp_cap_total: summaries.iter().map(|s| s.exp_caps).sum(),
        crossings,
        terminal_states,
    };
    let timing = RunTiming {
        wall_seconds: wall,
        paths_per_sec: cfg.n_paths as f64 / wall.max(1e-12),
    };
    Ok((report, timing))
}

/// One row of a mesh-refinement table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub mesh: f64,
    pub median_error: f64,
    pub q25: f64,
    pub q75: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub label: String,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    fn from_errors(label: &str, meshes: &[f64], per_level_errors: &[Vec<f64>]) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(meshes.len());
        for (level, errors) in per_level_errors.iter().enumerate() {
            let mut sorted = errors.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let median = quantile_sorted(&sorted, 0.5);
            let observed_order = if level == 0 {
                None
            } else {
                let prev = rows[level - 1].median_error;
                let ratio = meshes[level - 1] / meshes[level];
                Some((prev / median).log2() / ratio.log2())
            };
            rows.push(ConvergenceRow {
                mesh: meshes[level],
                median_error: median,
                q25: quantile_sorted(&sorted, 0.25),
                q75: quantile_sorted(&sorted, 0.75),
                observed_order,
            });
        }
        ConvergenceTable {
            label: label.into(),
            rows,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.label)?;
        writeln!(w, "mesh,median_error,q25,q75,observed_order")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                row.mesh,
                row.median_error,
                row.q25,
                row.q75,
                row.observed_order
                    .map(|o| o.to_string())
                    .unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// The per-seed dyadic ladder shared by the studies: a base path plus its
/// successive bridge refinements up to the reference level.
fn refinement_ladder(
    grid: TimeGrid,
    seed: u64,
    ladder_levels: u32,
    reference_extra: u32,
) -> (Vec<BrownianPath>, BrownianPath) {
    let mut paths = Vec::with_capacity(ladder_levels as usize);
    let mut current = sample_path(grid, seed);
    for _ in 0..ladder_levels {
        paths.push(current.clone());
        current = current.refine_bridge();
    }
    for _ in 1..reference_extra {
        current = current.refine_bridge();
    }
    (paths, current)
}

/// Mesh ladder for the polygonal-noise solution: per seed, evaluate the
/// exact cell-wise solver on each refinement level and measure the sup-knot
/// distance to the explicit solution on the reference grid of the same
/// realized path.
pub fn wz_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    if cfg.refinement_levels < 2 {
        return Err(Error::InvalidArg(
            "refinement_levels must be at least 2 for a convergence study".into(),
        ));
    }
    let p = cfg.sis_params()?;
    let grid = TimeGrid::new(cfg.t_end, cfg.cells)?;
    let levels = cfg.refinement_levels;
    let extra = cfg.reference_extra_levels.max(1);

    let per_seed: Vec<Vec<f64>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let seed = path_seed(cfg.base_seed, i);
            let (ladder, reference) = refinement_ladder(grid, seed, levels, extra);
            let exact = stratonovich_exact(&p, &reference);
            ladder
                .iter()
                .enumerate()
                .map(|(level, path)| {
                    let wz = wong_zakai_exact(&p, path);
                    let stride = 1usize << (levels - 1 + extra - level as u32);
                    let mut sup: f64 = 0.0;
                    for k in 0..wz.states.len() {
                        sup = sup.max((wz.states[k] - exact.states[k * stride]).abs());
                    }
                    sup
                })
                .collect()
        })
        .collect();

    let meshes: Vec<f64> = (0..levels)
        .map(|l| grid.dt() / (1u64 << l) as f64)
        .collect();
    let per_level: Vec<Vec<f64>> = (0..levels as usize)
        .map(|l| per_seed.iter().map(|errs| errs[l]).collect())
        .collect();
    Ok(ConvergenceTable::from_errors(
        "wong-zakai ladder vs explicit solution",
        &meshes,
        &per_level,
    ))
}

/// Strong-error ladders for Euler-Maruyama under the two Ito drifts against
/// the explicit solution of the corrected equation on shared noise. The
/// corrected drift converges to that solution; the uncorrected one
/// stabilizes at the interpretation gap.
pub fn scheme_cross_check(
    cfg: &ExperimentConfig,
) -> Result<(ConvergenceTable, ConvergenceTable)> {
    cfg.validate()?;
    if cfg.refinement_levels < 2 {
        return Err(Error::InvalidArg(
            "refinement_levels must be at least 2 for a convergence study".into(),
        ));
    }
    let p = cfg.sis_params()?;
    let grid = TimeGrid::new(cfg.t_end, cfg.cells)?;
    let levels = cfg.refinement_levels;
    let extra = cfg.reference_extra_levels.max(1);

    let per_seed: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
            let seed = path_seed(cfg.base_seed, i);
            let (ladder, reference) = refinement_ladder(grid, seed, levels, extra);
            let target = stratonovich_exact(&p, &reference).terminal();
            let mut corrected = Vec::with_capacity(levels as usize);
            let mut gray = Vec::with_capacity(levels as usize);
            for path in &ladder {
                let em_c = euler_maruyama(&p, Model::ItoCorrected, path)?;
                let em_g = euler_maruyama(&p, Model::ItoGray, path)?;
                corrected.push((em_c.terminal() - target).abs());
                gray.push((em_g.terminal() - target).abs());
            }
            Ok((corrected, gray))
        })
        .collect::<Result<Vec<_>>>()?;

    let meshes: Vec<f64> = (0..levels)
        .map(|l| grid.dt() / (1u64 << l) as f64)
        .collect();
    let collect = |pick: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| -> Vec<Vec<f64>> {
        (0..levels as usize)
            .map(|l| per_seed.iter().map(|pair| pick(pair)[l]).collect())
            .collect()
    };
    let table_corrected = ConvergenceTable::from_errors(
        "euler-maruyama (corrected drift) vs explicit solution",
        &meshes,
        &collect(|pair| &pair.0),
    );
    let table_gray = ConvergenceTable::from_errors(
        "euler-maruyama (plain drift) vs explicit solution",
        &meshes,
        &collect(|pair| &pair.1),
    );
    Ok((table_corrected, table_gray))
}
