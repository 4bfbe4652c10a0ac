//! Time-indexed state sequences with provenance and boundary diagnostics.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::noise::TimeGrid;

/// Where a trajectory came from: enough to reproduce it exactly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub method: String,
    pub params_fingerprint: u64,
    pub seed: Option<u64>,
    pub mesh: f64,
    pub substeps: Option<u32>,
}

/// Boundary diagnostics accumulated while a trajectory is produced.
///
/// `clamps` counts scheme steps that left `[eps N, (1-eps) N]` and were
/// pulled back (reported, never silent). `saturations` counts states whose
/// f64 representation had to be floored to the smallest positive value (or
/// pulled one ulp inside `N`); the underlying log-domain state remains
/// exact. `exp_caps` counts log-odds drift evaluations whose exponent had
/// to be capped before exponentiation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct BoundaryDiag {
    pub min_state: f64,
    pub max_state: f64,
    pub clamps: u64,
    pub saturations: u64,
    pub exp_caps: u64,
}

impl BoundaryDiag {
    pub fn new() -> Self {
        BoundaryDiag {
            min_state: f64::INFINITY,
            max_state: f64::NEG_INFINITY,
            clamps: 0,
            saturations: 0,
            exp_caps: 0,
        }
    }

    pub fn observe(&mut self, state: f64) {
        self.min_state = self.min_state.min(state);
        self.max_state = self.max_state.max(state);
    }
}

/// A state sequence on the knots of a [`TimeGrid`].
///
/// `states` always holds positive finite values; where the true state is
/// below the smallest positive f64 it is recorded as that floor and counted
/// in `boundary.saturations`. Evaluators that work in log domain also fill
/// `log_states` (natural log of the state), which long-horizon estimators
/// prefer because it never underflows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<f64>,
    pub log_states: Option<Vec<f64>>,
    pub provenance: Provenance,
    pub boundary: BoundaryDiag,
}

impl Trajectory {
    pub fn terminal(&self) -> f64 {
        *self.states.last().expect("trajectory is never empty")
    }

    pub fn terminal_log(&self) -> f64 {
        match &self.log_states {
            Some(ls) => *ls.last().expect("trajectory is never empty"),
            None => self.terminal().ln(),
        }
    }

    /// Natural log of the state at knot `k`.
    pub fn log_state(&self, k: usize) -> f64 {
        match &self.log_states {
            Some(ls) => ls[k],
            None => self.states[k].ln(),
        }
    }

    /// True when every stored state lies strictly inside `]0, N[`.
    pub fn strictly_interior(&self, population: f64) -> bool {
        self.boundary.min_state > 0.0 && self.boundary.max_state < population
    }

    /// Write as `t,value` CSV with a provenance comment header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let seed = match self.provenance.seed {
            Some(s) => format!("{s:#x}"),
            None => "-".to_string(),
        };
        writeln!(
            w,
            "# provenance: method={} params={:#x} seed={} mesh={} substeps={}",
            self.provenance.method,
            self.provenance.params_fingerprint,
            seed,
            self.provenance.mesh,
            self.provenance
                .substeps
                .map(|s| s.to_string())
                .unwrap_or_else(|| "-".to_string()),
        )?;
        writeln!(w, "t,value")?;
        for (k, t) in self.grid.knots().enumerate() {
            writeln!(w, "{},{}", t, self.states[k])?;
        }
        Ok(())
    }
}

/// Floor/ceil a state into the representable open interval `]0, N[`,
/// counting the event. The floor is the smallest positive normal f64; the
/// ceiling sits one epsilon below `N`.
pub(crate) fn saturate_state(x: f64, population: f64, diag: &mut BoundaryDiag) -> f64 {
    if x <= 0.0 || !x.is_finite() && x < 0.0 {
        diag.saturations += 1;
        f64::MIN_POSITIVE
    } else if x >= population {
        diag.saturations += 1;
        population * (1.0 - f64::EPSILON)
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::TimeGrid;

    fn toy() -> Trajectory {
        Trajectory {
            grid: TimeGrid::new(1.0, 2).unwrap(),
            states: vec![10.0, 20.0, 15.0],
            log_states: None,
            provenance: Provenance {
                method: "toy".into(),
                params_fingerprint: 0xABCD,
                seed: Some(3),
                mesh: 0.5,
                substeps: None,
            },
            boundary: BoundaryDiag {
                min_state: 10.0,
                max_state: 20.0,
                clamps: 0,
                saturations: 0,
                exp_caps: 0,
            },
        }
    }

    #[test]
    fn csv_has_provenance_header() {
        let mut buf = Vec::new();
        toy().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# provenance: method=toy params=0xabcd seed=0x3 mesh=0.5"));
        assert!(text.contains("\nt,value\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn saturation_floors_and_counts() {
        let mut diag = BoundaryDiag::new();
        assert_eq!(saturate_state(-1.0, 100.0, &mut diag), f64::MIN_POSITIVE);
        assert_eq!(saturate_state(0.0, 100.0, &mut diag), f64::MIN_POSITIVE);
        let top = saturate_state(100.0, 100.0, &mut diag);
        assert!(top < 100.0 && top > 99.9);
        assert_eq!(diag.saturations, 3);
        assert_eq!(saturate_state(55.0, 100.0, &mut diag), 55.0);
        assert_eq!(diag.saturations, 3);
    }

    #[test]
    fn log_state_falls_back_to_ln() {
        let t = toy();
        assert_eq!(t.log_state(1), 20.0f64.ln());
        assert_eq!(t.terminal_log(), 15.0f64.ln());
    }
}
