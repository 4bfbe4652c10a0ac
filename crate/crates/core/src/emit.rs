//! File outputs: trajectory/report serialization, gnuplot scripts for the
//! standard figures, and the non-blocking throughput baseline check.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{ConvergenceTable, EnsembleReport, RunTiming};
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Write a set of trajectories as `t,value,traj` CSV.
pub fn write_trajectories_csv<W: Write>(trajectories: &[Trajectory], mut w: W) -> Result<()> {
    writeln!(w, "t,value,traj")?;
    for (idx, traj) in trajectories.iter().enumerate() {
        for (k, t) in traj.grid.knots().enumerate() {
            writeln!(w, "{},{},{}", t, traj.states[k], idx)?;
        }
    }
    Ok(())
}

/// Pretty JSON for a report; stable byte-for-byte across identical runs.
pub fn report_json(report: &EnsembleReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}

/// Persist a report plus its timing sidecar. The report file is the
/// reproducible artifact; wall-clock numbers live only in the sidecar.
pub fn write_report(dir: &Path, stem: &str, report: &EnsembleReport, timing: &RunTiming) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let report_path = dir.join(format!("{stem}.json"));
    std::fs::write(&report_path, report_json(report))?;
    let sidecar = dir.join(format!("{stem}.timing.json"));
    std::fs::write(&sidecar, serde_json::to_string_pretty(timing).unwrap())?;
    Ok(report_path)
}

/// Gnuplot script: fan of trajectories coloured by index.
pub fn fan_script(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key off\n\
         set xlabel 't'\n\
         set ylabel 'I(t)'\n\
         plot '{csv_name}' using 1:2:3 with lines lc variable\n"
    )
}

/// Gnuplot script: log-log strong-error curve from a convergence table.
pub fn convergence_script(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set xlabel 'mesh'\n\
         set ylabel 'median error'\n\
         set key left top\n\
         plot '{csv_name}' using 1:2 with linespoints title 'median', \\\n\
              '{csv_name}' using 1:3 with lines dt 2 title 'q25', \\\n\
              '{csv_name}' using 1:4 with lines dt 2 title 'q75'\n"
    )
}

/// Gnuplot script: scale-function curve.
pub fn psi_script(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set xlabel 'x'\n\
         set ylabel 'psi(x)'\n\
         set key off\n\
         plot '{csv_name}' using 1:2 with lines\n"
    )
}

/// Dry-run parse of an emitted gnuplot script: every single-quoted token on
/// a `plot` command must name a file that exists relative to the script's
/// directory.
pub fn validate_gnuplot_script(script: &Path) -> Result<()> {
    let text = std::fs::read_to_string(script)?;
    let dir = script.parent().unwrap_or_else(|| Path::new("."));
    // Join continuation lines so multi-line plot commands scan as one.
    let joined = text.replace("\\\n", " ");
    let mut found_any = false;
    for line in joined.lines() {
        let trimmed = line.trim_start();
        if !(trimmed.starts_with("plot ") || trimmed.starts_with("splot ")) {
            continue;
        }
        for chunk in trimmed.split('\'').skip(1).step_by(2) {
            found_any = true;
            let target = dir.join(chunk);
            if !target.exists() {
                return Err(Error::Config(format!(
                    "gnuplot script {} references missing file {chunk}",
                    script.display()
                )));
            }
        }
    }
    if !found_any {
        return Err(Error::Config(format!(
            "gnuplot script {} has no plot command referencing a data file",
            script.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ThroughputBaseline {
    paths_per_sec: f64,
}

/// Non-blocking performance regression check. The first run in an output
/// directory stores a baseline; later runs warn (via the returned message)
/// when throughput drops below half of it. Never fails the run.
pub fn check_throughput_baseline(dir: &Path, paths_per_sec: f64) -> Option<String> {
    let path = dir.join("throughput.baseline.json");
    match std::fs::read_to_string(&path) {
        Ok(text) => match serde_json::from_str::<ThroughputBaseline>(&text) {
            Ok(baseline) if paths_per_sec * 2.0 < baseline.paths_per_sec => Some(format!(
                "throughput {paths_per_sec:.1} paths/s is more than 2x below baseline {:.1} paths/s",
                baseline.paths_per_sec
            )),
            Ok(_) => None,
            Err(_) => Some(format!("unreadable throughput baseline at {}", path.display())),
        },
        Err(_) => {
            let _ = std::fs::create_dir_all(dir);
            let _ = std::fs::write(
                &path,
                serde_json::to_string_pretty(&ThroughputBaseline { paths_per_sec }).unwrap(),
            );
            None
        }
    }
}

/// Write a convergence table, its log-log plot script, and return the CSV
/// path.
pub fn write_convergence_outputs(
    dir: &Path,
    stem: &str,
    table: &ConvergenceTable,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_name = format!("{stem}.csv");
    let csv_path = dir.join(&csv_name);
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    std::fs::write(&csv_path, buf)?;
    std::fs::write(dir.join(format!("{stem}.gp")), convergence_script(&csv_name))?;
    Ok(csv_path)
}
