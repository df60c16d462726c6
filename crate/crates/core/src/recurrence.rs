//! Uniform recurrence constants `L(ε)` of minimal maps and the ball-measure
//! lower bound on ball measures they imply.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::torus::{circle_dist, dist_coords, BaseMap, TorusPoint, MAX_DIM};

/// Default search horizon in iterates.
pub const DEFAULT_HORIZON: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceReport {
    pub epsilon: f64,
    /// Every `y` enters every `B(x, ε)` within `l` iterates.
    pub l: u64,
    pub witness_grid_resolution: f64,
    /// Bound from the grid search with shrunk balls, when it was run.
    pub grid_bound: Option<u64>,
    pub is_certified: bool,
}

/// `L(ε)` for `map`, searching the grid of spacing `grid_resolution`.
///
/// Rotations need only the orbit of the origin. On the circle the result is
/// the exact gap value and the grid search is kept as an upper bound.
pub fn recurrence_constant(map: &BaseMap, epsilon: f64, grid_resolution: f64) -> Result<RecurrenceReport> {
    recurrence_constant_within(map, epsilon, grid_resolution, DEFAULT_HORIZON)
}

pub fn recurrence_constant_within(
    map: &BaseMap,
    epsilon: f64,
    grid_resolution: f64,
    horizon: u64,
) -> Result<RecurrenceReport> {
    if !(epsilon > 0.0 && grid_resolution > 0.0) {
        return Err(Error::InvalidInput("epsilon and grid resolution must be positive".into()));
    }
    let report = |l, grid_bound, is_certified| RecurrenceReport {
        epsilon,
        l,
        witness_grid_resolution: grid_resolution,
        grid_bound,
        is_certified,
    };
    if epsilon > 0.5 {
        return Ok(report(0, Some(0), true));
    }
    let grid = Grid::new(map.dim(), grid_resolution)?;
    let radius = epsilon - grid_resolution;
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("grid resolution must be below epsilon".into()));
    }
    match map {
        BaseMap::Rotation(angles) => {
            let bound = grid.cover_time(map, &vec![0.0; map.dim()], radius, horizon)?;
            if angles.len() == 1 {
                let exact = gap_recurrence(angles[0], epsilon, horizon)?;
                Ok(report(exact, Some(bound), true))
            } else {
                Ok(report(bound, Some(bound), true))
            }
        }
        BaseMap::ToralAutomorphism(_) => {
            let times: Vec<u64> = (0..grid.len())
                .into_par_iter()
                .map(|k| grid.cover_time(map, &grid.point(k), radius, horizon))
                .collect::<Result<_>>()?;
            let l = times.into_iter().max().unwrap_or(0);
            Ok(report(l, Some(l), false))
        }
    }
}

/// Grid of spacing at most `resolution` per axis, anchored at the origin.
struct Grid {
    dim: usize,
    per_axis: usize,
    step: f64,
}

impl Grid {
    fn new(dim: usize, resolution: f64) -> Result<Self> {
        let per_axis = (1.0 / resolution).ceil() as usize;
        let total = (per_axis as f64).powi(dim as i32);
        if total > 5e7 {
            return Err(Error::InvalidInput(format!("grid of {total} points is too fine")));
        }
        Ok(Grid { dim, per_axis, step: 1.0 / per_axis as f64 })
    }

    fn len(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    fn point(&self, mut k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in out.iter_mut() {
            *c = (k % self.per_axis) as f64 * self.step;
            k /= self.per_axis;
        }
        out
    }

    /// Iterates until every grid point lies within `radius` of some iterate.
    fn cover_time(&self, map: &BaseMap, y: &[f64], radius: f64, horizon: u64) -> Result<u64> {
        let n = self.per_axis as i64;
        let mut covered = vec![false; self.len()];
        let mut left = covered.len();
        let mut x = [0.0; MAX_DIM];
        let mut next = [0.0; MAX_DIM];
        x[..self.dim].copy_from_slice(y);
        let reach = (radius / self.step).ceil() as i64;
        let mut ranges = [(0i64, 0i64); MAX_DIM];
        for l in 0..=horizon {
            for (a, r) in ranges[..self.dim].iter_mut().enumerate() {
                let c = (x[a] / self.step).floor() as i64;
                *r = (c - reach, c + reach + 1);
            }
            let mut idx = [0i64; MAX_DIM];
            for a in 0..self.dim {
                idx[a] = ranges[a].0;
            }
            'cells: loop {
                let mut k = 0usize;
                let mut inside = true;
                for a in (0..self.dim).rev() {
                    let i = idx[a].rem_euclid(n);
                    if circle_dist(i as f64 * self.step, x[a]) >= radius {
                        inside = false;
                    }
                    k = k * self.per_axis + i as usize;
                }
                if inside && !covered[k] {
                    covered[k] = true;
                    left -= 1;
                    if left == 0 {
                        return Ok(l);
                    }
                }
                for a in 0..self.dim {
                    idx[a] += 1;
                    if idx[a] <= ranges[a].1 {
                        continue 'cells;
                    }
                    idx[a] = ranges[a].0;
                }
                break;
            }
            map.step_into(&x[..self.dim], &mut next[..self.dim]);
            x = next;
        }
        Err(Error::NotFoundWithinHorizon { epsilon: radius + self.step, horizon })
    }
}

/// Largest circular gap between consecutive points of a sorted set in `[0, 1)`.
fn max_gap(sorted: &[f64]) -> f64 {
    let wrap = sorted[0] + 1.0 - sorted[sorted.len() - 1];
    sorted.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}

/// Smallest `L` such that `{kθ mod 1 : 0 ≤ k ≤ L}` leaves no gap of length `2ε`.
pub fn gap_recurrence(theta: f64, epsilon: f64, horizon: u64) -> Result<u64> {
    Ok(gap_recurrence_profile(theta, &[epsilon], horizon)?[0])
}

/// [`gap_recurrence`] for several `ε` in one pass over the orbit.
pub fn gap_recurrence_profile(theta: f64, epsilons: &[f64], horizon: u64) -> Result<Vec<u64>> {
    let mut order: Vec<usize> = (0..epsilons.len()).collect();
    order.sort_by(|&a, &b| epsilons[b].total_cmp(&epsilons[a]));
    let mut out = vec![0; epsilons.len()];
    let mut pts = vec![0.0];
    let mut next = 0;
    let mut k = 0u64;
    while next < order.len() {
        let eps = epsilons[order[next]];
        if eps > 0.5 || max_gap(&pts) < 2.0 * eps {
            out[order[next]] = k;
            next += 1;
            continue;
        }
        k += 1;
        if k > horizon {
            return Err(Error::NotFoundWithinHorizon { epsilon: eps, horizon });
        }
        let v = crate::torus::wrap_unit(k as f64 * theta);
        let at = pts.partition_point(|p| *p < v);
        pts.insert(at, v);
    }
    Ok(out)
}

/// Outcome of comparing empirical ball measures with `1/L(ε)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallMeasureCheck {
    pub pass: bool,
    /// `1/(L + 1)`: visits at times `0..=L` give every orbit `L + 1` chances.
    pub bound: f64,
    /// `1/L`, which can exceed the measure when `L` is small.
    pub inverse_l: f64,
    pub frequencies: Vec<f64>,
    /// Smallest `frequency − bound + statistical margin`.
    pub margin: f64,
}

/// Checks `μ(B(x, ε)) ≥ 1/(L(ε) + 1)` at every center, with `μ` the visit
/// frequency along an orbit of length `orbit_len` from a seeded start.
pub fn ball_measure_bound_check(
    map: &BaseMap,
    epsilon: f64,
    report: &RecurrenceReport,
    centers: &[TorusPoint],
    orbit_len: usize,
    seed: u64,
) -> Result<BallMeasureCheck> {
    if !report.is_certified || report.epsilon != epsilon {
        return Err(Error::UncertifiedReport);
    }
    if orbit_len == 0 || centers.is_empty() {
        return Err(Error::EmptySamples);
    }
    let dim = map.dim();
    let mut rng = stream_rng(seed, 0);
    let mut x = [0.0; MAX_DIM];
    let mut next = [0.0; MAX_DIM];
    for v in x[..dim].iter_mut() {
        *v = rng.gen::<f64>();
    }
    let mut orbit = Vec::with_capacity(orbit_len * dim);
    for _ in 0..orbit_len {
        orbit.extend_from_slice(&x[..dim]);
        map.step_into(&x[..dim], &mut next[..dim]);
        x = next;
    }
    let frequencies: Vec<f64> = centers
        .par_iter()
        .map(|c| {
            let hits = orbit.chunks_exact(dim).filter(|z| dist_coords(z, c.coords()) < epsilon).count();
            hits as f64 / orbit_len as f64
        })
        .collect();
    let bound = 1.0 / (report.l + 1) as f64;
    let slack = 3.0 * (bound * (1.0 - bound) / orbit_len as f64).sqrt();
    let margin = frequencies.iter().map(|f| f - bound + slack).fold(f64::INFINITY, f64::min);
    Ok(BallMeasureCheck { pass: margin >= 0.0, bound, inverse_l: 1.0 / report.l.max(1) as f64, frequencies, margin })
}

/// Lebesgue measure of a sup-metric ball on the `dim`-torus.
pub fn lebesgue_ball_measure(dim: usize, epsilon: f64) -> f64 {
    (2.0 * epsilon).min(1.0).powi(dim as i32)
}

/// Entry times measured on random pairs, for maps without a certified `L(ε)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalRecurrence {
    /// `(ε, largest observed entry time)`.
    pub measured: Vec<(f64, u64)>,
    /// Fitted `L(ε) ≈ prefactor · ε^{-exponent}`.
    pub exponent: f64,
    pub prefactor: f64,
}

impl EmpiricalRecurrence {
    /// Largest entry time of `f^l(y)` into `B(x, ε)` over `pairs` random
    /// pairs for each `ε`; pairs not entering within `horizon` are skipped.
    pub fn measure(map: &BaseMap, epsilons: &[f64], pairs: usize, horizon: u64, seed: u64) -> Result<Self> {
        if epsilons.len() < 2 || pairs == 0 {
            return Err(Error::InvalidInput("need two radii and at least one pair".into()));
        }
        let dim = map.dim();
        let measured: Vec<(f64, u64)> = epsilons
            .iter()
            .enumerate()
            .map(|(e, &eps)| {
                let worst = (0..pairs)
                    .into_par_iter()
                    .map(|k| {
                        let mut rng = stream_rng(seed, ((e as u64) << 32) | k as u64);
                        let target: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
                        let mut x = [0.0; MAX_DIM];
                        let mut next = [0.0; MAX_DIM];
                        for v in x[..dim].iter_mut() {
                            *v = rng.gen();
                        }
                        for l in 0..=horizon {
                            if dist_coords(&x[..dim], &target) < eps {
                                return l;
                            }
                            map.step_into(&x[..dim], &mut next[..dim]);
                            x = next;
                        }
                        0
                    })
                    .max()
                    .unwrap_or(0);
                (eps, worst.max(1))
            })
            .collect();
        let pts: Vec<(f64, f64)> = measured.iter().map(|(e, l)| (-e.ln(), (*l as f64).ln())).collect();
        let (slope, intercept) = least_squares(&pts);
        Ok(EmpiricalRecurrence { measured, exponent: slope, prefactor: intercept.exp() })
    }

    pub fn l(&self, epsilon: f64) -> u64 {
        if let Some((_, l)) = self.measured.iter().find(|(e, _)| *e == epsilon) {
            return *l;
        }
        (self.prefactor * epsilon.powf(-self.exponent)).ceil().max(1.0) as u64
    }
}

/// Slope and intercept of the least-squares line through `pts`.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}
