//! Brownian sample paths on uniform grids, their piecewise-linear
//! (polygonal) evaluation, and dyadic Brownian-bridge refinement.
//!
//! Refinement inserts conditionally-sampled midpoints while leaving every
//! existing knot value bit-identical, so a whole mesh ladder lives on a
//! single realized path. All randomness is keyed by `(seed, level, cell)`,
//! which makes paths pure values: rebuilding a path, in any order, on any
//! number of threads, reproduces it exactly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::normal_draw;

/// A uniform partition of `[0, t_end]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n_cells: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_cells: usize) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(Error::NonPositive("t_end"));
        }
        if n_cells == 0 {
            return Err(Error::NonPositive("n_cells"));
        }
        Ok(TimeGrid { t_end, n_cells })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_knots(&self) -> usize {
        self.n_cells + 1
    }

    /// Mesh width `t_end / n_cells`.
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_cells as f64
    }

    /// `t_k = k t_end / n_cells`. Computed as `(k * t_end) / n` so that
    /// knots shared between a grid and its dyadic refinement agree
    /// bit-for-bit.
    pub fn knot(&self, k: usize) -> f64 {
        debug_assert!(k <= self.n_cells);
        (k as f64 * self.t_end) / self.n_cells as f64
    }

    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_cells).map(move |k| self.knot(k))
    }

    /// The grid with every cell split in two.
    pub fn refined(&self) -> TimeGrid {
        TimeGrid {
            t_end: self.t_end,
            n_cells: 2 * self.n_cells,
        }
    }
}

/// A Brownian sample on the knots of a [`TimeGrid`], starting at zero,
/// together with the key data (`seed`, refinement `level`) that makes it
/// reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    values: Vec<f64>,
    seed: u64,
    level: u32,
}

/// Draw a fresh path: increments are independent centered Gaussians with
/// variance `dt`, each keyed by `(seed, level 0, cell index)`.
pub fn sample_path(grid: TimeGrid, seed: u64) -> BrownianPath {
    let dt_sqrt = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n_knots());
    values.push(0.0);
    let mut acc = 0.0;
    for k in 0..grid.n_cells() {
        acc += dt_sqrt * normal_draw(seed, 0, k as u64);
        values.push(acc);
    }
    BrownianPath {
        grid,
        values,
        seed,
        level: 0,
    }
}

impl BrownianPath {
    pub fn grid(&self) -> &TimeGrid {
        self.grid_ref()
    }

    fn grid_ref(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Knot values `B(t_0), ..., B(t_n)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Increment `B(t_{k+1}) - B(t_k)`.
    pub fn increment(&self, k: usize) -> f64 {
        self.values[k + 1] - self.values[k]
    }

    /// Split every cell with a Brownian-bridge midpoint: conditional mean is
    /// the endpoint average, conditional variance `dt/4`. Existing knot
    /// values are copied bit-identically; midpoint draws are keyed by
    /// `(seed, new level, parent cell)`.
    pub fn refine_bridge(&self) -> BrownianPath {
        let new_grid = self.grid.refined();
        let new_level = self.level + 1;
        let half_sd = (self.grid.dt() / 4.0).sqrt();
        let mut values = Vec::with_capacity(new_grid.n_knots());
        for k in 0..self.grid.n_cells() {
            let left = self.values[k];
            let right = self.values[k + 1];
            values.push(left);
            values.push(0.5 * (left + right) + half_sd * normal_draw(self.seed, new_level as u64, k as u64));
        }
        values.push(self.values[self.grid.n_cells()]);
        BrownianPath {
            grid: new_grid,
            values,
            seed: self.seed,
            level: new_level,
        }
    }

    /// Refine `levels` times.
    pub fn refine_bridge_levels(&self, levels: u32) -> BrownianPath {
        let mut p = self.clone();
        for _ in 0..levels {
            p = p.refine_bridge();
        }
        p
    }

    /// Piecewise-linear evaluation of the polygonal path at `t` in
    /// `[0, t_end]`; exact at knots.
    pub fn polygonal_eval(&self, t: f64) -> Result<f64> {
        let t_end = self.grid.t_end();
        if !(0.0..=t_end).contains(&t) {
            return Err(Error::OutOfRange {
                value: t,
                lo: 0.0,
                hi: t_end,
            });
        }
        let n = self.grid.n_cells();
        let k = (((t / t_end) * n as f64).floor() as usize).min(n - 1);
        let t_lo = self.grid.knot(k);
        let t_hi = self.grid.knot(k + 1);
        if t == t_lo {
            return Ok(self.values[k]);
        }
        if t == t_hi {
            return Ok(self.values[k + 1]);
        }
        let theta = (t - t_lo) / (t_hi - t_lo);
        Ok(self.values[k] + theta * (self.values[k + 1] - self.values[k]))
    }

    /// Slope of the polygonal path on cell `k`:
    /// `(B(t_{k+1}) - B(t_k)) / dt`.
    pub fn cell_slope(&self, k: usize) -> Result<f64> {
        if k >= self.grid.n_cells() {
            return Err(Error::OutOfRange {
                value: k as f64,
                lo: 0.0,
                hi: (self.grid.n_cells() - 1) as f64,
            });
        }
        Ok(self.increment(k) / self.grid.dt())
    }

    /// Write the path as `t,B` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# seed={:#x} level={} cells={}", self.seed, self.level, self.grid.n_cells())?;
        writeln!(w, "t,B")?;
        for (k, t) in self.grid.knots().enumerate() {
            writeln!(w, "{},{}", t, self.values[k])?;
        }
        Ok(())
    }
}

/// Parse a seed given either as decimal or as `0x`-prefixed hex.
pub fn parse_seed(s: &str) -> Result<u64> {
    let s = s.trim();
    let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16)
    } else {
        s.parse::<u64>()
    };
    parsed.map_err(|e| Error::InvalidArg(format!("bad seed `{s}`: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t_end: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t_end, n).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn knots_are_increasing_and_span_the_interval() {
        let g = grid(2.5, 7);
        assert_eq!(g.knot(0), 0.0);
        assert_eq!(g.knot(7), 2.5);
        let knots: Vec<f64> = g.knots().collect();
        assert!(knots.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn path_starts_at_zero_and_is_deterministic() {
        let g = grid(1.0, 64);
        let a = sample_path(g, 99);
        let b = sample_path(g, 99);
        assert_eq!(a.values()[0], 0.0);
        assert_eq!(a.values().len(), 65);
        assert_eq!(a, b);
        assert_ne!(sample_path(g, 100), a);
    }

    #[test]
    fn pooled_increment_moments() {
        // 10^5 increments with dt = 0.01.
        let g = grid(1000.0, 100_000);
        let p = sample_path(g, 0xC0FFEE);
        let dt = g.dt();
        let n = g.n_cells() as f64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for k in 0..g.n_cells() {
            let d = p.increment(k);
            sum += d;
            sumsq += d * d;
        }
        let mean = sum / n;
        let var = sumsq / n - mean * mean;
        assert!(mean.abs() < 4.0 * (dt / n).sqrt(), "mean={mean}");
        assert!((var / dt - 1.0).abs() < 0.05, "var/dt={}", var / dt);
    }

    #[test]
    fn refinement_preserves_knots_bit_identically() {
        let g = grid(1.0, 16);
        let p = sample_path(g, 7);
        let r = p.refine_bridge();
        assert_eq!(r.grid().n_cells(), 32);
        assert_eq!(r.level(), 1);
        for k in 0..=16 {
            assert_eq!(r.values()[2 * k].to_bits(), p.values()[k].to_bits());
            // Shared knot *times* also agree bit-for-bit.
            assert_eq!(r.grid().knot(2 * k).to_bits(), g.knot(k).to_bits());
        }
        let rr = r.refine_bridge();
        assert_eq!(rr.grid().n_cells(), 64);
        assert_eq!(rr.level(), 2);
    }

    #[test]
    fn bridge_midpoint_residual_variance() {
        // 10^5 midpoint residuals at dt = 0.01: variance should be dt/4.
        let g = grid(1000.0, 100_000);
        let p = sample_path(g, 0xB01D);
        let r = p.refine_bridge();
        let mut sumsq = 0.0;
        for k in 0..g.n_cells() {
            let resid = r.values()[2 * k + 1] - 0.5 * (p.values()[k] + p.values()[k + 1]);
            sumsq += resid * resid;
        }
        let var = sumsq / g.n_cells() as f64;
        let expected = g.dt() / 4.0;
        assert!(
            (var / expected - 1.0).abs() < 0.05,
            "bridge variance ratio {}",
            var / expected
        );
    }

    #[test]
    fn refinement_draws_do_not_depend_on_history() {
        // Refining a restriction reproduces the same midpoints as refining
        // the original: draws are keyed by (seed, level, cell), not by any
        // generator state.
        let g = grid(1.0, 8);
        let p = sample_path(g, 31);
        let r1 = p.refine_bridge();
        let r2 = p.refine_bridge();
        assert_eq!(r1, r2);
    }

    #[test]
    fn polygonal_eval_matches_knots_and_midpoints() {
        let g = grid(1.0, 8); // dyadic: knots and midpoints are exact floats
        let p = sample_path(g, 5);
        for k in 0..=8 {
            assert_eq!(p.polygonal_eval(g.knot(k)).unwrap(), p.values()[k]);
        }
        assert_eq!(p.polygonal_eval(0.0).unwrap(), 0.0);
        for k in 0..8 {
            let mid = 0.5 * (g.knot(k) + g.knot(k + 1));
            let expect = 0.5 * (p.values()[k] + p.values()[k + 1]);
            assert_eq!(p.polygonal_eval(mid).unwrap(), expect);
        }
        assert!(p.polygonal_eval(-0.1).is_err());
        assert!(p.polygonal_eval(1.1).is_err());
    }

    #[test]
    fn cell_slopes_telescope() {
        let g = grid(2.0, 11);
        let p = sample_path(g, 12);
        let mut acc = 0.0;
        for k in 0..11 {
            acc += p.cell_slope(k).unwrap() * g.dt();
        }
        assert!((acc - p.values()[11]).abs() < 1e-12);
        assert!(p.cell_slope(11).is_err());

        // Constant path has zero slopes.
        let flat = BrownianPath {
            grid: g,
            values: vec![0.25; 12],
            seed: 0,
            level: 0,
        };
        for k in 0..11 {
            assert_eq!(flat.cell_slope(k).unwrap(), 0.0);
        }
        // Direct arithmetic check: rise 0.1 over dt 0.01 is slope 10.
        let two = BrownianPath {
            grid: grid(0.02, 2),
            values: vec![0.0, 0.1, 0.1],
            seed: 0,
            level: 0,
        };
        assert!((two.cell_slope(0).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_variation_concentrates() {
        // At n_cells = 2^14 on [0,1] the quadratic variation is a
        // chi-square average with sd ~ 0.011, so [0.9, 1.1] should contain
        // nearly every seed; require at least 95% of 1000.
        let g = grid(1.0, 1 << 14);
        let mut hits = 0;
        for seed in 0..1000u64 {
            let p = sample_path(g, seed);
            let qv: f64 = (0..g.n_cells()).map(|k| p.increment(k).powi(2)).sum();
            if (0.9..=1.1).contains(&qv) {
                hits += 1;
            }
        }
        assert!(hits >= 950, "quadratic variation in band for {hits}/1000 seeds");
    }

    #[test]
    fn csv_roundtrip_format() {
        let g = grid(1.0, 2);
        let p = sample_path(g, 1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# seed=0x"));
        assert_eq!(lines.next().unwrap(), "t,B");
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn seed_parsing_accepts_decimal_and_hex() {
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert_eq!(parse_seed("0x2a").unwrap(), 42);
        assert_eq!(parse_seed("0X2A").unwrap(), 42);
        assert_eq!(parse_seed(" 7 ").unwrap(), 7);
        assert!(parse_seed("zzz").is_err());
        assert!(parse_seed("-1").is_err());
    }
}
