//! Sample clouds for the invariant measures of maps, suspensions and
//! time-changed flows.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::Simpson;
use crate::rng::{stream_rng, BirkhoffSampler};
use crate::speed::{SpeedField, SpeedKind};
use crate::suspension::SuspensionPoint;
use crate::time_change::{Rate, TimeChangedFlow};
use crate::torus::{BaseMap, TorusPoint};

pub fn map_cloud(map: &BaseMap, n: usize, seed: u64) -> Vec<TorusPoint> {
    BirkhoffSampler::default().base_samples(map, n, seed, 0)
}

/// Cloud of the suspension measure: base samples with uniform heights.
pub fn suspension_cloud(map: &BaseMap, n: usize, seed: u64) -> Vec<SuspensionPoint> {
    BirkhoffSampler::default().suspension_samples(map, n, seed, 0)
}

/// Nodes of the radial distribution table.
const TABLE_NODES: usize = 2048;

/// Exact sampler of the normalized measure `(1/α) dμ̄ / K` of a speed field.
///
/// Outside the chart the density is constant. Inside, the sup-metric sphere
/// of radius `ρ` about `p` has area proportional to `ρ^m` in flow-box
/// coordinates, so the radius is drawn from a tabulated one-dimensional
/// law and the point uniformly on the sphere.
#[derive(Debug, Clone)]
pub struct PushedSampler {
    field: SpeedField,
    /// `μ̄` mass outside the chart.
    outside: f64,
    /// Cumulative inner mass at `ρ_k = k·h`.
    cumulative: Vec<f64>,
    step: f64,
    total: f64,
}

impl PushedSampler {
    pub fn new(field: &SpeedField) -> Result<Self> {
        let r = field.chart_radius();
        let n = (field.flow().base_map().dim() + 1) as i32;
        let density = |rho: f64| {
            let rho = rho.max(1e-30);
            f64::from(n) * 2f64.powi(n) * rho.powi(n - 1) / field.radial(2.0 * rho / r)
        };
        let quad = Simpson::new(1e-10, f64::MAX);
        let step = 0.5 * r / TABLE_NODES as f64;
        let mut cumulative = Vec::with_capacity(TABLE_NODES + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..TABLE_NODES {
            acc +=
                quad.integrate(density, k as f64 * step, (k + 1) as f64 * step).map_err(|_| Error::DivergedMeasure)?;
            cumulative.push(acc);
        }
        if !acc.is_finite() {
            return Err(Error::DivergedMeasure);
        }
        let outside = 1.0 - r.powi(n);
        Ok(PushedSampler { field: field.clone(), outside, cumulative, step, total: outside + acc })
    }

    /// Total mass `K`.
    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Radius whose inner mass is `target`.
    fn radius(&self, target: f64) -> f64 {
        let k = self.cumulative.partition_point(|c| *c < target).clamp(1, TABLE_NODES);
        let (lo0, hi0) = ((k - 1) as f64 * self.step, k as f64 * self.step);
        let (c0, c1) = (self.cumulative[k - 1], self.cumulative[k]);
        if !(c1 > c0) {
            return lo0;
        }
        // the density is smooth on one table cell: interpolate in mass
        lo0 + (hi0 - lo0) * ((target - c0) / (c1 - c0)).clamp(0.0, 1.0)
    }

    /// The `i`-th sample for `seed`, drawn from its own stream.
    pub fn sample(&self, seed: u64, i: u64) -> SuspensionPoint {
        let mut rng = stream_rng(seed, i);
        let flow = self.field.flow();
        let p = self.field.stopped_point();
        let dim = p.base.dim();
        let r = self.field.chart_radius();
        let u: f64 = rng.gen();
        if u * self.total < self.outside {
            loop {
                let x = TorusPoint::new((0..dim).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
                let q = SuspensionPoint::new(x, rng.gen::<f64>());
                if flow.dist(&q, p) >= 0.5 * r {
                    return q;
                }
            }
        }
        let rho = self.radius(rng.gen::<f64>() * (self.total - self.outside));
        let face = rng.gen_range(0..2 * (dim + 1));
        let mut offset: Vec<f64> = (0..=dim).map(|_| rho * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        offset[face / 2] = if face % 2 == 0 { rho } else { -rho };
        let base: Vec<f64> = p.base.coords().iter().zip(&offset).map(|(c, o)| c + o).collect();
        flow.point(TorusPoint::new(base), p.height + offset[dim])
    }

    pub fn cloud(&self, n: usize, seed: u64) -> Vec<SuspensionPoint> {
        (0..n as u64).into_par_iter().map(|i| self.sample(seed, i)).collect()
    }
}

/// Cloud of the normalized invariant measure of a time-changed flow.
pub fn time_changed_cloud(flow: &TimeChangedFlow, n: usize, seed: u64) -> Result<Vec<SuspensionPoint>> {
    let map = flow.flow().base_map();
    match flow.clock().rate() {
        Rate::Constant(_) => Ok(suspension_cloud(map, n, seed)),
        Rate::InverseSpeed(field) => match field.kind() {
            SpeedKind::Constant(_) => Ok(suspension_cloud(map, n, seed)),
            _ => Ok(PushedSampler::new(field)?.cloud(n, seed)),
        },
        Rate::Speed(_) => Err(Error::InvalidInput("clouds need a clock of the form 1/α".into())),
    }
}
