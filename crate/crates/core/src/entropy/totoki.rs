//! Entropy times total mass before and after a time change.

use serde::Serialize;

use super::{entropy_estimate_flow, time_changed_cloud, EntropyEstimate, GridParams};
use crate::error::{Error, Result};
use crate::suspension::{SuspensionFlow, SuspensionPoint};
use crate::time_change::{pushforward_density, AdditiveClock, Estimate, Rate, TimeChangedFlow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TotokiRecord {
    /// Entropy of the time-changed flow.
    pub h_phi: f64,
    /// Entropy of the suspension flow.
    pub h_psi: f64,
    /// Estimated total mass of the pushed measure.
    pub mass: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// One standard error of the ratio from the slope fits.
    pub ratio_stderr: f64,
}

/// Compares `h(φ)·K` with `h(ψ)`, where `K` is the mass of `(1/α) dμ̄`
/// estimated from `mass_samples` of `μ̄`.
pub fn totoki_check(
    flow_hat: &TimeChangedFlow,
    mass_samples: &[SuspensionPoint],
    params: &GridParams,
    cloud_size: usize,
    time_step: f64,
    seed: u64,
) -> Result<TotokiRecord> {
    let mass = match flow_hat.clock().rate() {
        Rate::Constant(c) => Estimate::Finite(*c),
        Rate::InverseSpeed(field) => pushforward_density(field, mass_samples, |_| true)?,
        Rate::Speed(_) => return Err(Error::InvalidInput("Totoki check needs a clock of the form 1/α".into())),
    };
    let mass = mass.value().ok_or(Error::DivergedMeasure)?;
    let base: &SuspensionFlow = flow_hat.flow();
    let psi = TimeChangedFlow::new(AdditiveClock::constant(base.clone(), 1.0)?, 1e-12, 1e6)?;
    let psi_cloud = time_changed_cloud(&psi, cloud_size, seed)?;
    let (_, h_psi) = entropy_estimate_flow(&psi, &psi_cloud, params, time_step)?;
    let phi_cloud = time_changed_cloud(flow_hat, cloud_size, seed)?;
    let (_, h_phi) = entropy_estimate_flow(flow_hat, &phi_cloud, params, time_step)?;
    Ok(TotokiRecord::from_estimates(&h_phi, &h_psi, mass))
}

impl TotokiRecord {
    pub fn from_estimates(h_phi: &EntropyEstimate, h_psi: &EntropyEstimate, mass: f64) -> Self {
        let lhs = h_phi.extrapolated * mass;
        let rhs = h_psi.extrapolated;
        let ratio = lhs / rhs;
        let rel = (h_phi.stderr() / h_phi.extrapolated).hypot(h_psi.stderr() / h_psi.extrapolated);
        TotokiRecord {
            h_phi: h_phi.extrapolated,
            h_psi: h_psi.extrapolated,
            mass,
            lhs,
            rhs,
            ratio,
            ratio_stderr: ratio.abs() * rel,
        }
    }
}
