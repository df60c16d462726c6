//! Katok-style entropy estimates from Bowen-ball covers of finite clouds.
//!
//! `R(δ, n, ε)` is the number of greedy `(n, ε)`-clusters needed to cover
//! a `1 − δ` share of the cloud. The entropy at scale `ε` is the slope of
//! `ln R` against `n` before the cloud saturates.

mod cloud;
mod cover;
mod orbits;
mod totoki;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrence::least_squares;
use crate::suspension::SuspensionPoint;
use crate::time_change::TimeChangedFlow;
use crate::torus::{BaseMap, TorusPoint};

pub use cloud::{map_cloud, suspension_cloud, time_changed_cloud, PushedSampler};
pub use cover::{bowen_distance, k_of, katok_count, suspension_box_count, BoxCount, Method};
pub use orbits::{OrbitTable, SINGULAR_RADIUS};
pub use totoki::{totoki_check, TotokiRecord};

/// Parameters of a count table and of the slope fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub delta: f64,
    /// Orbit lengths; for flows, time horizons.
    pub n_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub method: Method,
    /// A cell counts as saturated once `R` exceeds this share of the
    /// largest possible count `⌈(1 − δ)N⌉`.
    #[serde(default = "default_saturation")]
    pub saturation: f64,
    #[serde(default = "default_skip")]
    pub skip_saturated: bool,
    /// Leading `n` values left out of the fit as transient.
    #[serde(default = "default_leading")]
    pub skip_leading: usize,
}

fn default_leading() -> usize {
    1
}

fn default_skip() -> bool {
    true
}

fn default_saturation() -> f64 {
    0.05
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            delta: 0.1,
            n_values: (1..=16).collect(),
            eps_values: vec![0.2, 0.1, 0.05],
            method: Method::GreedyCover,
            saturation: default_saturation(),
            skip_saturated: true,
            skip_leading: default_leading(),
        }
    }
}

impl GridParams {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::OutOfDomain { value: self.delta, domain: "(0, 1)" });
        }
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[1] <= w[0]) || self.n_values[0] == 0 {
            return Err(Error::InvalidInput("n_values must be positive and increasing".into()));
        }
        if self.eps_values.is_empty() || self.eps_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("eps_values must be decreasing".into()));
        }
        if !(self.saturation > 0.0 && self.saturation <= 1.0) {
            return Err(Error::OutOfDomain { value: self.saturation, domain: "(0, 1]" });
        }
        Ok(())
    }
}

/// Count table `R(δ, n, ε)`, indexed `[eps][n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyGrid {
    pub delta: f64,
    pub n_values: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub method: Method,
    pub cloud_size: usize,
    /// `None` marks cells skipped after the row saturated.
    pub counts: Vec<Vec<Option<u64>>>,
    /// Counts made nondecreasing in `n` and nonincreasing in `ε`.
    pub regularized: Vec<Vec<Option<u64>>>,
}

impl EntropyGrid {
    /// Rows `delta,n,eps,count,method` with raw counts of computed cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,n,eps,count,method\n");
        for (e, row) in self.eps_values.iter().zip(&self.counts) {
            for (n, c) in self.n_values.iter().zip(row) {
                if let Some(c) = c {
                    s.push_str(&format!("{:.16e},{},{:.16e},{},{}\n", self.delta, n, e, c, self.method.name()));
                }
            }
        }
        s
    }

    /// Number of cells where regularization changed the raw count.
    pub fn violations(&self) -> usize {
        self.counts.iter().flatten().zip(self.regularized.iter().flatten()).filter(|(a, b)| a != b).count()
    }
}

fn regularize(counts: &[Vec<Option<u64>>]) -> Vec<Vec<Option<u64>>> {
    let mut out: Vec<Vec<Option<u64>>> = counts
        .iter()
        .map(|row| {
            let mut m = 0;
            row.iter()
                .map(|c| {
                    c.map(|c| {
                        m = m.max(c);
                        m
                    })
                })
                .collect()
        })
        .collect();
    for e in 1..out.len() {
        for k in 0..out[e].len() {
            if let (Some(c), Some(prev)) = (out[e][k], out[e - 1][k]) {
                out[e][k] = Some(c.max(prev));
            }
        }
    }
    out
}

/// Fills the count table. Rows (one per `ε`) run in parallel; within a row
/// the cells after the first saturated one are skipped unless
/// `params.skip_saturated` is off.
pub fn count_grid(table: &OrbitTable, params: &GridParams, steps_per_n: usize) -> Result<EntropyGrid> {
    params.validate()?;
    let max_count = cover::core_size(table.len(), params.delta) as f64;
    let counts: Vec<Vec<Option<u64>>> = params
        .eps_values
        .par_iter()
        .map(|&eps| {
            let mut row = Vec::with_capacity(params.n_values.len());
            let mut saturated = false;
            for &n in &params.n_values {
                if saturated && params.skip_saturated {
                    row.push(None);
                    continue;
                }
                let snaps = if table.is_flow() { n * steps_per_n + 1 } else { n };
                let c = cover::count_table(table, params.delta, snaps, eps, params.method)?;
                saturated |= c as f64 > params.saturation * max_count;
                row.push(Some(c));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(EntropyGrid {
        delta: params.delta,
        n_values: params.n_values.clone(),
        eps_values: params.eps_values.clone(),
        method: params.method,
        cloud_size: table.len(),
        regularized: regularize(&counts),
        counts,
    })
}

/// Least-squares fit of `ln R` against `n` at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub eps: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `n` values inside the pre-saturation window.
    pub window: Vec<usize>,
    pub residual_rms: f64,
    pub slope_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// `(ε, slope)` for every `ε` with a usable window.
    pub slope_per_eps: Vec<(f64, f64)>,
    /// Max of the slopes at the two smallest usable `ε`.
    pub extrapolated: f64,
    pub diagnostics: Vec<SlopeFit>,
    /// Cloud points dropped near the singular fiber or on clock failures.
    pub dropped: usize,
    /// Cells changed by monotone regularization.
    pub regularized_cells: usize,
}

impl EntropyEstimate {
    /// Standard error of the extrapolated value.
    pub fn stderr(&self) -> f64 {
        let tail = &self.diagnostics[self.diagnostics.len().saturating_sub(2)..];
        tail.iter().map(|f| f.slope_stderr).fold(0.0, f64::max)
    }
}

/// Fits slopes over the pre-saturation window of each `ε`.
pub fn estimate_from_grid(grid: &EntropyGrid, saturation: f64, skip_leading: usize) -> Result<EntropyEstimate> {
    let max_count = cover::core_size(grid.cloud_size, grid.delta) as f64;
    let mut diagnostics = Vec::new();
    for (e, row) in grid.eps_values.iter().zip(&grid.regularized) {
        let pts: Vec<(f64, f64)> = grid
            .n_values
            .iter()
            .zip(row)
            .skip(skip_leading)
            .filter_map(|(n, c)| c.map(|c| (n, c)))
            .filter(|(_, c)| (*c as f64) <= saturation * max_count)
            .map(|(n, c)| (*n as f64, (c as f64).ln()))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let (slope, intercept) = least_squares(&pts);
        let m = pts.len() as f64;
        let ss: f64 = pts.iter().map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope_stderr = if pts.len() > 2 { (ss / (m - 2.0) / sxx).sqrt() } else { 0.0 };
        diagnostics.push(SlopeFit {
            eps: *e,
            slope,
            intercept,
            window: pts.iter().map(|p| p.0 as usize).collect(),
            residual_rms: (ss / m).sqrt(),
            slope_stderr,
        });
    }
    if diagnostics.is_empty() {
        return Err(Error::SaturatedGrid);
    }
    let tail = &diagnostics[diagnostics.len().saturating_sub(2)..];
    let extrapolated = tail.iter().map(|f| f.slope).fold(f64::NEG_INFINITY, f64::max);
    Ok(EntropyEstimate {
        slope_per_eps: diagnostics.iter().map(|f| (f.eps, f.slope)).collect(),
        extrapolated,
        diagnostics,
        dropped: 0,
        regularized_cells: grid.violations(),
    })
}

/// Entropy of a base map from a cloud of its invariant measure.
pub fn entropy_estimate_map(
    map: &BaseMap,
    cloud: &[TorusPoint],
    params: &GridParams,
) -> Result<(EntropyGrid, EntropyEstimate)> {
    params.validate()?;
    let table = OrbitTable::for_map(map, cloud, *params.n_values.last().unwrap())?;
    let grid = count_grid(&table, params, 1)?;
    let est = estimate_from_grid(&grid, params.saturation, params.skip_leading)?;
    Ok((grid, est))
}

/// Entropy of a flow, with Bowen distances sampled every `time_step` up to
/// each horizon in `n_values`.
pub fn entropy_estimate_flow(
    flow: &TimeChangedFlow,
    cloud: &[SuspensionPoint],
    params: &GridParams,
    time_step: f64,
) -> Result<(EntropyGrid, EntropyEstimate)> {
    params.validate()?;
    let min_eps = *params.eps_values.last().unwrap();
    if !(time_step > 0.0 && time_step <= min_eps) {
        return Err(Error::InvalidInput(format!("time step {time_step} must lie in (0, {min_eps}]")));
    }
    let per_unit = (1.0 / time_step).round();
    if (per_unit * time_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("time step must divide 1".into()));
    }
    let per_unit = per_unit as usize;
    let snaps = params.n_values.last().unwrap() * per_unit + 1;
    let (table, dropped) = OrbitTable::for_flow(flow, cloud, snaps, time_step)?;
    let grid = count_grid(&table, params, per_unit)?;
    let mut est = estimate_from_grid(&grid, params.saturation, params.skip_leading)?;
    est.dropped = dropped.len();
    Ok((grid, est))
}

/// Box counts over a suspension cloud for every `(n, ε)` cell of `params`,
/// indexed `[eps][n]`; a row stops after its first saturated cell when
/// `params.skip_saturated` is set.
pub fn box_count_grid(
    map: &BaseMap,
    cloud: &[SuspensionPoint],
    params: &GridParams,
) -> Result<Vec<Vec<Option<BoxCount>>>> {
    params.validate()?;
    let base: Vec<TorusPoint> = cloud.iter().map(|q| q.base.clone()).collect();
    let table = OrbitTable::for_map(map, &base, *params.n_values.last().unwrap())?;
    for &eps in &params.eps_values {
        cover::check_cell(&table, params.delta, 1, eps)?;
    }
    let max_count = cover::core_size(table.len(), params.delta) as f64;
    Ok(params
        .eps_values
        .par_iter()
        .map(|&eps| {
            let mut saturated = false;
            params
                .n_values
                .iter()
                .map(|&n| {
                    if saturated && params.skip_saturated {
                        return None;
                    }
                    let b = cover::box_count_table(&table, cloud, params.delta, n, eps);
                    saturated = b.map_count as f64 > params.saturation * max_count;
                    Some(b)
                })
                .collect()
        })
        .collect())
}
