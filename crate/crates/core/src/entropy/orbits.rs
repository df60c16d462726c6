//! Orbit tables: sampled trajectories of a cloud, stored once and compared
//! pairwise under Bowen distances.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::suspension::SuspensionPoint;
use crate::time_change::{Rate, TimeChangedFlow};
use crate::torus::{dist_coords, BaseMap, TorusPoint};

/// Points of a cloud dropped while tabulating flow orbits.
pub const SINGULAR_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone)]
enum Tau {
    /// `τ_j = j·step` for every point.
    Linear(f64),
    /// `τ_{i,j}` stored row by row.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone)]
enum Kind {
    Map {
        coords: Vec<f64>,
    },
    Flow {
        heights: Vec<f64>,
        /// `f^k(x_i)` for `k < fibers`, row by row.
        bases: Vec<f64>,
        fibers: usize,
        tau: Tau,
    },
}

/// Trajectories of a cloud at `snapshots` equally spaced times.
#[derive(Debug, Clone)]
pub struct OrbitTable {
    dim: usize,
    len: usize,
    snapshots: usize,
    kind: Kind,
}

impl OrbitTable {
    /// Iterates `f^i(x)` for `0 ≤ i < snapshots`.
    pub fn for_map(map: &BaseMap, cloud: &[TorusPoint], snapshots: usize) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let dim = map.dim();
        if cloud.iter().any(|x| x.dim() != dim) {
            return Err(Error::InvalidInput("cloud dimension differs from the map".into()));
        }
        let snapshots = snapshots.max(1);
        let row = snapshots * dim;
        let mut coords = vec![0.0; cloud.len() * row];
        coords.par_chunks_mut(row).zip(cloud).for_each(|(out, x)| {
            out[..dim].copy_from_slice(x.coords());
            for j in 1..snapshots {
                let (prev, next) = out.split_at_mut(j * dim);
                map.step_into(&prev[(j - 1) * dim..], &mut next[..dim]);
            }
        });
        Ok(OrbitTable { dim, len: cloud.len(), snapshots, kind: Kind::Map { coords } })
    }

    /// Samples `φ_t q` at `t = j·time_step`, `0 ≤ j < snapshots`.
    ///
    /// Returns the table and the cloud indices that were dropped: points
    /// within [`SINGULAR_RADIUS`] of the stopped point and points whose
    /// clock could not be inverted.
    pub fn for_flow(
        flow: &TimeChangedFlow,
        cloud: &[SuspensionPoint],
        snapshots: usize,
        time_step: f64,
    ) -> Result<(Self, Vec<usize>)> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !(time_step > 0.0) {
            return Err(Error::InvalidInput("time step must be positive".into()));
        }
        let map = flow.flow().base_map();
        let dim = map.dim();
        let snapshots = snapshots.max(1);
        let times: Vec<f64> = (0..snapshots).map(|j| j as f64 * time_step).collect();
        let (kept, dropped, tau): (Vec<usize>, Vec<usize>, Tau) = match flow.clock().rate() {
            Rate::Constant(c) => ((0..cloud.len()).collect(), Vec::new(), Tau::Linear(time_step / c)),
            rate => {
                let stop = match rate {
                    Rate::InverseSpeed(f) | Rate::Speed(f) => Some(f.stopped_point().clone()),
                    Rate::Constant(_) => None,
                };
                let rows: Vec<Option<Vec<f64>>> = cloud
                    .par_iter()
                    .map(|q| {
                        if let Some(p) = &stop {
                            if flow.flow().dist(q, p) < SINGULAR_RADIUS {
                                return None;
                            }
                        }
                        flow.trajectory(q, &times).ok().map(|t| t.psi_times)
                    })
                    .collect();
                let mut kept = Vec::new();
                let mut dropped = Vec::new();
                let mut taus = Vec::new();
                for (i, r) in rows.into_iter().enumerate() {
                    match r {
                        Some(t) => {
                            kept.push(i);
                            taus.extend(t);
                        }
                        None => dropped.push(i),
                    }
                }
                (kept, dropped, Tau::Explicit(taus))
            }
        };
        if kept.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let heights: Vec<f64> = kept.iter().map(|&i| cloud[i].height).collect();
        let top = match &tau {
            Tau::Linear(step) => 1.0 + step * (snapshots - 1) as f64,
            Tau::Explicit(t) => {
                let last = t.chunks_exact(snapshots).map(|r| r[snapshots - 1]).fold(0.0, f64::max);
                1.0 + last
            }
        };
        let fibers = top.floor() as usize + 2;
        let row = fibers * dim;
        let mut bases = vec![0.0; kept.len() * row];
        bases.par_chunks_mut(row).zip(&kept).for_each(|(out, &i)| {
            out[..dim].copy_from_slice(cloud[i].base.coords());
            for k in 1..fibers {
                let (prev, next) = out.split_at_mut(k * dim);
                map.step_into(&prev[(k - 1) * dim..], &mut next[..dim]);
            }
        });
        let table = OrbitTable { dim, len: kept.len(), snapshots, kind: Kind::Flow { heights, bases, fibers, tau } };
        Ok((table, dropped))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn is_flow(&self) -> bool {
        matches!(self.kind, Kind::Flow { .. })
    }

    /// Fiber index and height of point `i` at snapshot `j`.
    #[inline]
    fn position(&self, i: usize, j: usize) -> (usize, f64) {
        let Kind::Flow { heights, tau, .. } = &self.kind else { unreachable!() };
        let t = match tau {
            Tau::Linear(step) => j as f64 * step,
            Tau::Explicit(v) => v[i * self.snapshots + j],
        };
        let total = heights[i] + t;
        let k = total.floor();
        (k as usize, total - k)
    }

    #[inline]
    fn base(&self, i: usize, k: usize) -> &[f64] {
        match &self.kind {
            Kind::Flow { bases, fibers, .. } => {
                let at = (i * fibers + k) * self.dim;
                &bases[at..at + self.dim]
            }
            Kind::Map { coords } => {
                let at = (i * self.snapshots + k) * self.dim;
                &coords[at..at + self.dim]
            }
        }
    }

    /// Distance between points `a` and `b` at snapshot `j`.
    #[inline]
    pub fn snapshot_dist(&self, a: usize, b: usize, j: usize) -> f64 {
        match self.kind {
            Kind::Map { .. } => dist_coords(self.base(a, j), self.base(b, j)),
            Kind::Flow { .. } => {
                let (ka, ha) = self.position(a, j);
                let (kb, hb) = self.position(b, j);
                let direct = (ha - hb).abs().max(dist_coords(self.base(a, ka), self.base(b, kb)));
                let mut d = direct;
                let up = (ha - 1.0 - hb).abs();
                if up < d {
                    d = d.min(up.max(dist_coords(self.base(a, ka + 1), self.base(b, kb))));
                }
                let down = (hb - 1.0 - ha).abs();
                if down < d {
                    d = d.min(down.max(dist_coords(self.base(b, kb + 1), self.base(a, ka))));
                }
                d
            }
        }
    }

    /// Bowen distance over the first `n` snapshots.
    pub fn bowen(&self, a: usize, b: usize, n: usize) -> f64 {
        (0..n.min(self.snapshots)).map(|j| self.snapshot_dist(a, b, j)).fold(0.0, f64::max)
    }

    /// Whether the Bowen distance over the first `n` snapshots is below `radius`.
    #[inline]
    pub fn within(&self, a: usize, b: usize, n: usize, radius: f64) -> bool {
        // the last snapshot separates most pairs, so test it first
        let n = n.min(self.snapshots);
        if self.snapshot_dist(a, b, n - 1) >= radius {
            return false;
        }
        (0..n - 1).all(|j| self.snapshot_dist(a, b, j) < radius)
    }

    /// Base coordinates of point `i` at snapshot `j` in its canonical form and,
    /// near the top of a fiber, lifted across the seam.
    pub(crate) fn key_coords(&self, i: usize, j: usize, radius: f64, out: &mut Vec<[f64; 2]>) {
        out.clear();
        let take = |c: &[f64]| {
            let mut v = [0.0; 2];
            for (o, x) in v.iter_mut().zip(c) {
                *o = *x;
            }
            v
        };
        match self.kind {
            Kind::Map { .. } => out.push(take(self.base(i, j))),
            Kind::Flow { .. } => {
                let (k, h) = self.position(i, j);
                out.push(take(self.base(i, k)));
                if h > 1.0 - radius {
                    out.push(take(self.base(i, k + 1)));
                }
            }
        }
    }

    /// Number of coordinates used per snapshot key.
    pub(crate) fn key_dim(&self) -> usize {
        self.dim.min(2)
    }
}
