//! `sis` — command-line driver for the stochastic SIS toolkit.
//!
//! Subcommands: `simulate` (one trajectory, any scheme), `exact` (closed
//! forms), `wz` (polygonal-noise refinement ladder), `classify`
//! (threshold/recurrence verdicts as JSON), `ensemble` (Monte Carlo),
//! `converge` (drift-interpretation cross-check), `scale` (scale-function
//! samples).
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sis_core::ensemble::run_path;
use sis_core::{
    classify, derived_constants, deterministic_limit, deterministic_solution, emit,
    ito_persistence_level, parse_seed, recurrence_classify, run_ensemble, sample_path,
    scale_function, scheme_cross_check, stratonovich_exact, wong_zakai_exact,
    wz_convergence_study, Classification, CoefficientTriple, DerivedConstants, Error,
    ExperimentConfig, Method, Model, RawParams, SisParams, TimeGrid, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExactKind {
    Deterministic,
    Stratonovich,
    WongZakai,
}

fn method_arg(s: &str) -> Result<Method, String> {
    match s {
        "euler-maruyama" => Ok(Method::EulerMaruyama),
        "heun" | "heun-stratonovich" => Ok(Method::HeunStratonovich),
        "logodds" | "logodds-euler" => Ok(Method::LogoddsEuler),
        "wz-rk4" => Ok(Method::WzRk4),
        other => Err(format!(
            "unknown scheme `{other}` (euler-maruyama | heun | logodds | wz-rk4)"
        )),
    }
}

fn model_arg(s: &str) -> Result<Model, String> {
    match s {
        "ito-gray" => Ok(Model::ItoGray),
        "ito-corrected" | "strat-corrected" => Ok(Model::ItoCorrected),
        "stratonovich" => Ok(Model::Stratonovich),
        other => Err(format!(
            "unknown model `{other}` (ito-gray | ito-corrected | strat-corrected | stratonovich)"
        )),
    }
}

fn seed_arg(s: &str) -> Result<u64, String> {
    parse_seed(s).map_err(|e| e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "sis", version, about = "Stochastic SIS epidemic model toolkit")]
struct Cli {
    /// Experiment config file (.toml or .json); flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed, decimal or 0x-hex.
    #[arg(long, global = true, value_parser = seed_arg)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores). Reports do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Trajectory/table output format.
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,

    /// Population size N.
    #[arg(long = "N", global = true)]
    population: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    mu_plus_gamma: Option<f64>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    i0: Option<f64>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Grid cells per trajectory.
    #[arg(long, global = true)]
    cells: Option<usize>,
    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Time-stepping scheme.
    #[arg(long, global = true, value_parser = method_arg)]
    scheme: Option<Method>,
    /// Drift model for the scheme.
    #[arg(long, global = true, value_parser = model_arg)]
    model: Option<Model>,
    /// RK4 substeps per cell (wz-rk4 only).
    #[arg(long, global = true)]
    substeps: Option<u32>,
    /// Dyadic refinement levels for ladder studies.
    #[arg(long, global = true)]
    levels: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory with the configured scheme.
    Simulate {
        /// Also export the driving Brownian path as t,B CSV.
        #[arg(long)]
        emit_noise: bool,
    },
    /// Evaluate a closed-form solution on the grid.
    Exact {
        #[arg(long, value_enum, default_value_t = ExactKind::Stratonovich)]
        method: ExactKind,
    },
    /// Polygonal-noise refinement ladder against the explicit solution.
    Wz,
    /// Threshold and recurrence verdicts for the built-in models, as JSON.
    Classify,
    /// Monte Carlo ensemble with aggregated statistics.
    Ensemble {
        /// Export the first K trajectories as a fan CSV plus plot script.
        #[arg(long, default_value_t = 0, value_name = "K")]
        emit_fan: usize,
    },
    /// Euler-Maruyama drift-interpretation cross-check ladders.
    Converge,
    /// Scale-function samples over an interval.
    Scale {
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
}

fn default_config(cmd: &Command) -> ExperimentConfig {
    let params = RawParams {
        population: 100.0,
        beta: 0.5,
        mu_plus_gamma: 25.0,
        sigma: 0.02,
        i0: 10.0,
    };
    let (cells, n_paths, refinement_levels, reference_extra) = match cmd {
        Command::Wz => (16, 100, 9, 6),
        Command::Converge => (16, 200, 9, 4),
        Command::Ensemble { .. } => (1024, 100, 0, 6),
        _ => (1024, 1, 0, 6),
    };
    ExperimentConfig {
        schema_version: 1,
        params,
        t_end: 1.0,
        cells,
        scheme: Method::LogoddsEuler,
        model: Model::Stratonovich,
        substeps: 1,
        n_paths,
        base_seed: 42,
        refinement_levels,
        reference_extra_levels: reference_extra,
        crossing_band: None,
        burn_in_fraction: 0.0,
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => default_config(&cli.command),
    };
    if let Some(v) = cli.population {
        cfg.params.population = v;
    }
    if let Some(v) = cli.beta {
        cfg.params.beta = v;
    }
    if let Some(v) = cli.mu_plus_gamma {
        cfg.params.mu_plus_gamma = v;
    }
    if let Some(v) = cli.sigma {
        cfg.params.sigma = v;
    }
    if let Some(v) = cli.i0 {
        cfg.params.i0 = v;
    }
    if let Some(v) = cli.t_end {
        cfg.t_end = v;
    }
    if let Some(v) = cli.cells {
        cfg.cells = v;
    }
    if let Some(v) = cli.paths {
        cfg.n_paths = v;
    }
    if let Some(v) = cli.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = cli.scheme {
        cfg.scheme = v;
    }
    if let Some(v) = cli.model {
        cfg.model = v;
    }
    if let Some(v) = cli.substeps {
        cfg.substeps = v;
    }
    if let Some(v) = cli.levels {
        cfg.refinement_levels = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrajectoryJson<'a> {
    method: &'a str,
    seed: Option<u64>,
    mesh: f64,
    t: Vec<f64>,
    value: &'a [f64],
}

fn write_trajectory(
    dir: &std::path::Path,
    stem: &str,
    traj: &Trajectory,
    format: OutFormat,
) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    match format {
        OutFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            std::fs::write(&path, buf)?;
            Ok(path)
        }
        OutFormat::Json => {
            let path = dir.join(format!("{stem}.json"));
            let view = TrajectoryJson {
                method: &traj.provenance.method,
                seed: traj.provenance.seed,
                mesh: traj.provenance.mesh,
                t: traj.grid.knots().collect(),
                value: &traj.states,
            };
            std::fs::write(&path, serde_json::to_string_pretty(&view).unwrap())?;
            Ok(path)
        }
    }
}

#[derive(Serialize)]
struct ClassifyOutput {
    params: RawParams,
    derived: DerivedConstants,
    deterministic_limit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ito_persistence_level: Option<f64>,
    models: ModelVerdicts,
    #[serde(skip_serializing_if = "Option::is_none")]
    recurrence: Option<sis_core::RecurrenceVerdict>,
}

#[derive(Serialize)]
struct ModelVerdicts {
    #[serde(rename = "ito-gray")]
    ito_gray: Classification,
    #[serde(rename = "strat-corrected")]
    strat_corrected: Classification,
    deterministic: Classification,
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size worker pool: {e}")))?;
    }
    let cfg = build_config(cli)?;
    let p = cfg.sis_params()?;
    let dir = &cli.out_dir;

    match &cli.command {
        Command::Simulate { emit_noise } => {
            let traj = run_path(&cfg, 0)?;
            let path = write_trajectory(dir, "trajectory", &traj, cli.format)?;
            if *emit_noise {
                let grid = TimeGrid::new(cfg.t_end, cfg.cells)?;
                let noise = sample_path(grid, sis_core::rng::path_seed(cfg.base_seed, 0));
                let mut buf = Vec::new();
                noise.write_csv(&mut buf)?;
                std::fs::write(dir.join("noise.csv"), buf)?;
            }
            eprintln!(
                "simulate: {} steps of {} -> {} (terminal {:.6}, clamps {})",
                cfg.cells,
                cfg.scheme_spec().method.as_str(),
                path.display(),
                traj.terminal(),
                traj.boundary.clamps
            );
        }
        Command::Exact { method } => {
            let grid = TimeGrid::new(cfg.t_end, cfg.cells)?;
            let traj = match method {
                ExactKind::Deterministic => deterministic_solution(&p, &grid),
                ExactKind::Stratonovich => {
                    stratonovich_exact(&p, &sample_path(grid, cfg.base_seed))
                }
                ExactKind::WongZakai => wong_zakai_exact(&p, &sample_path(grid, cfg.base_seed)),
            };
            let path = write_trajectory(dir, "exact", &traj, cli.format)?;
            eprintln!(
                "exact: {} on {} knots -> {} (terminal {:.6})",
                traj.provenance.method,
                grid.n_knots(),
                path.display(),
                traj.terminal()
            );
        }
        Command::Wz => {
            let table = wz_convergence_study(&cfg)?;
            let csv = emit::write_convergence_outputs(dir, "wz_table", &table)?;
            eprintln!("wz: {} levels -> {}", table.rows.len(), csv.display());
            for row in &table.rows {
                eprintln!(
                    "  mesh {:10.3e}  median {:10.4e}  order {}",
                    row.mesh,
                    row.median_error,
                    row.observed_order
                        .map(|o| format!("{o:.2}"))
                        .unwrap_or_else(|| "-".into())
                );
            }
        }
        Command::Classify => {
            let output = ClassifyOutput {
                params: cfg.params,
                derived: derived_constants(&p),
                deterministic_limit: deterministic_limit(&p),
                ito_persistence_level: ito_persistence_level(&p).ok(),
                models: ModelVerdicts {
                    ito_gray: classify(&CoefficientTriple::ito_gray(&p)),
                    strat_corrected: classify(&CoefficientTriple::strat_corrected(&p)),
                    deterministic: classify(&CoefficientTriple::deterministic(&p)),
                },
                recurrence: if p.sigma() > 0.0 {
                    Some(recurrence_classify(&p)?)
                } else {
                    None
                },
            };
            let text = serde_json::to_string_pretty(&output).unwrap();
            println!("{text}");
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("classify.json"), text)?;
        }
        Command::Ensemble { emit_fan } => {
            let (report, timing) = run_ensemble(&cfg)?;
            let path = emit::write_report(dir, "report", &report, &timing)?;
            if let Some(warning) = emit::check_throughput_baseline(dir, timing.paths_per_sec) {
                eprintln!("warning (non-blocking): {warning}");
            }
            if *emit_fan > 0 {
                let k = (*emit_fan).min(cfg.n_paths);
                let trajs: Vec<Trajectory> = (0..k as u64)
                    .map(|i| run_path(&cfg, i))
                    .collect::<Result<_, _>>()?;
                let mut buf = Vec::new();
                emit::write_trajectories_csv(&trajs, &mut buf)?;
                std::fs::write(dir.join("fan.csv"), buf)?;
                std::fs::write(dir.join("fan.gp"), emit::fan_script("fan.csv"))?;
            }
            eprintln!(
                "ensemble: {} paths in {:.2}s ({:.0} paths/s) -> {}",
                cfg.n_paths,
                timing.wall_seconds,
                timing.paths_per_sec,
                path.display()
            );
            eprintln!(
                "  terminal mean {:.4} sd {:.4} | lyapunov mean {:.4} sd {:.4} | clamps {}",
                report.terminal.mean,
                report.terminal.sd,
                report.lyapunov.mean,
                report.lyapunov.sd,
                report.clamp_total
            );
        }
        Command::Converge => {
            let (corrected, gray) = scheme_cross_check(&cfg)?;
            let a = emit::write_convergence_outputs(dir, "converge_corrected", &corrected)?;
            let b = emit::write_convergence_outputs(dir, "converge_gray", &gray)?;
            eprintln!("converge: {} and {}", a.display(), b.display());
            for (ra, rb) in corrected.rows.iter().zip(gray.rows.iter()) {
                eprintln!(
                    "  mesh {:10.3e}  corrected {:10.4e}  plain {:10.4e}",
                    ra.mesh, ra.median_error, rb.median_error
                );
            }
        }
        Command::Scale { from, to, samples } => {
            if !(from < to) || *samples < 2 {
                return Err(Error::InvalidArg(
                    "scale needs from < to and at least 2 samples".into(),
                ));
            }
            std::fs::create_dir_all(dir)?;
            let mut csv = String::from("x,psi\n");
            for j in 0..*samples {
                let x = from + (to - from) * j as f64 / (*samples - 1) as f64;
                let psi = scale_function(&p, x)?;
                csv.push_str(&format!("{x},{psi}\n"));
            }
            let csv_path = dir.join("psi.csv");
            std::fs::write(&csv_path, csv)?;
            std::fs::write(dir.join("psi.gp"), emit::psi_script("psi.csv"))?;
            eprintln!("scale: {} samples -> {}", samples, csv_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
