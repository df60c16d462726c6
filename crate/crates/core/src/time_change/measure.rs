//! Return times along fibers and the invariant measures of time-changed
//! flows.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::Simpson;
use crate::speed::{SpeedField, SpeedKind};
use crate::suspension::SuspensionPoint;
use crate::torus::TorusPoint;

/// Default cap above which an integral counts as infinite.
pub const DIVERGENCE_CAP: f64 = 1e12;

/// A quantity that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    Finite(f64),
    Diverged,
}

impl Estimate {
    pub fn is_diverged(&self) -> bool {
        matches!(self, Estimate::Diverged)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Estimate::Finite(v) => Some(*v),
            Estimate::Diverged => None,
        }
    }

    /// `+∞` for a diverged estimate.
    pub fn as_f64(&self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    fn capped(v: f64, cap: f64) -> Self {
        if v.is_finite() && v <= cap {
            Estimate::Finite(v)
        } else {
            Estimate::Diverged
        }
    }
}

/// `γ(x)`: the time the slowed flow needs to climb one fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnTimeReport {
    pub value: Estimate,
    pub quadrature_cap: f64,
}

fn default_quad() -> Simpson {
    Simpson::new(1e-10, DIVERGENCE_CAP)
}

/// `γ(x) = ∫_0^1 du / α(x, u)`.
pub fn gamma(field: &SpeedField, x: &TorusPoint) -> ReturnTimeReport {
    gamma_with(field, x, &default_quad())
}

pub fn gamma_with(field: &SpeedField, x: &TorusPoint, quad: &Simpson) -> ReturnTimeReport {
    let value = match field.kind() {
        SpeedKind::Constant(c) => Estimate::capped(1.0 / c, quad.cap),
        _ => match quad.integrate(|u| 1.0 / field.speed_raw(x.coords(), u), 0.0, 1.0) {
            Ok(v) => Estimate::capped(v, quad.cap),
            Err(_) => Estimate::Diverged,
        },
    };
    ReturnTimeReport { value, quadrature_cap: quad.cap }
}

/// Per-sample return times and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaTrace {
    pub values: Vec<Estimate>,
    pub mean: Estimate,
}

impl GammaTrace {
    /// Running means, `+∞` from the first diverged sample on.
    pub fn running_mean(&self) -> Vec<f64> {
        let mut sum = 0.0;
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                sum += v.as_f64();
                sum / (i + 1) as f64
            })
            .collect()
    }
}

pub fn expected_gamma_trace(field: &SpeedField, samples: &[TorusPoint], quad: &Simpson) -> Result<GammaTrace> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let values: Vec<Estimate> = samples.par_iter().map(|x| gamma_with(field, x, quad).value).collect();
    let mut sum = 0.0;
    let mut mean = Estimate::Finite(0.0);
    for (i, v) in values.iter().enumerate() {
        sum += v.as_f64();
        mean = Estimate::capped(sum / (i + 1) as f64, quad.cap);
        if mean.is_diverged() {
            break;
        }
    }
    Ok(GammaTrace { values, mean })
}

/// Monte Carlo mean of `γ` over samples of a base-invariant measure.
pub fn expected_gamma(field: &SpeedField, samples: &[TorusPoint]) -> Result<Estimate> {
    Ok(expected_gamma_trace(field, samples, &default_quad())?.mean)
}

/// `E(∫_0^{γ(x)} ξ(φ_t(x, 0)) dt) / E(γ)`, the integral of `ξ` against the
/// normalized invariant measure of the slowed flow.
///
/// The inner integral is taken in fiber coordinates, `∫_0^1 ξ(x, u)/α(x, u) du`.
pub fn push_measure_gamma<F>(field: &SpeedField, samples: &[TorusPoint], xi: F) -> Result<f64>
where
    F: Fn(&SuspensionPoint) -> f64 + Sync,
{
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let quad = default_quad();
    let terms: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|x| {
            let g = gamma_with(field, x, &quad).value.as_f64();
            let num = quad
                .integrate(
                    |u| {
                        let v = xi(&SuspensionPoint::new(x.clone(), u.min(1.0 - f64::EPSILON)));
                        if v == 0.0 {
                            0.0
                        } else {
                            v / field.speed_raw(x.coords(), u)
                        }
                    },
                    0.0,
                    1.0,
                )
                .unwrap_or(f64::INFINITY);
            (num, g)
        })
        .collect();
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in terms {
        num += a;
        den += b;
    }
    if !(den.is_finite() && den / (samples.len() as f64) <= quad.cap) {
        return Err(Error::DivergedDenominator);
    }
    if !num.is_finite() {
        return Err(Error::DivergedMeasure);
    }
    Ok(num / den)
}

/// Terms `1_B(q)/α(q)` of the density estimate.
pub fn density_terms<F>(field: &SpeedField, samples: &[SuspensionPoint], region: F) -> Vec<f64>
where
    F: Fn(&SuspensionPoint) -> bool + Sync,
{
    samples.par_iter().map(|q| if region(q) { 1.0 / field.speed_at(q) } else { 0.0 }).collect()
}

/// Monte Carlo estimate of `∫_B (1/α) dμ̄` from samples of `μ̄`; with
/// `B = Ω` this is the total mass `K` of the pushed measure.
pub fn pushforward_density<F>(field: &SpeedField, samples: &[SuspensionPoint], region: F) -> Result<Estimate>
where
    F: Fn(&SuspensionPoint) -> bool + Sync,
{
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sum: f64 = density_terms(field, samples, region).iter().sum();
    Ok(Estimate::capped(sum / samples.len() as f64, DIVERGENCE_CAP))
}

/// `∫_{d(q,p) ≥ cutoff} (1/α) dμ̄` for Lebesgue `μ̄`, reduced to one radial
/// integral: the sup-metric ball of radius `ρ` about `p` has volume
/// `(2ρ)^{m+1}`.
pub fn radial_density_integral(field: &SpeedField, cutoff: f64) -> Result<Estimate> {
    if !(cutoff >= 0.0) {
        return Err(Error::OutOfDomain { value: cutoff, domain: "[0, inf)" });
    }
    if let SpeedKind::Constant(c) = field.kind() {
        return Ok(Estimate::Finite(1.0 / c));
    }
    let r = field.chart_radius();
    let n = (field.flow().base_map().dim() + 1) as i32;
    let outer = 0.5 * r;
    let a = cutoff.min(outer);
    let shell = |rho: f64| {
        // the endpoint ρ = 0 is evaluated as its limit
        let rho = rho.max(1e-30);
        f64::from(n) * 2f64.powi(n) * rho.powi(n - 1) / field.radial(2.0 * rho / r)
    };
    let inner = match default_quad().integrate(shell, a, outer) {
        Ok(v) => v,
        Err(_) => return Ok(Estimate::Diverged),
    };
    Ok(Estimate::capped(1.0 - r.powi(n) + inner, DIVERGENCE_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::FlatProfile;
    use crate::suspension::SuspensionFlow;
    use crate::time_change::AdditiveClock;
    use crate::torus::BaseMap;

    fn p() -> SuspensionPoint {
        SuspensionPoint::new(TorusPoint::new(vec![0.3, 0.6]), 0.0)
    }

    fn cat() -> SuspensionFlow {
        SuspensionFlow::new(BaseMap::cat_map())
    }

    fn quadratic() -> SpeedField {
        SpeedField::new(SpeedKind::QuadraticAtP, cat(), p(), 0.2).unwrap()
    }

    #[test]
    fn constant_speed_return_time() {
        let x = TorusPoint::new(vec![0.1, 0.2]);
        assert_eq!(gamma(&SpeedField::constant(1.0, cat()).unwrap(), &x).value, Estimate::Finite(1.0));
        assert_eq!(gamma(&SpeedField::constant(0.25, cat()).unwrap(), &x).value, Estimate::Finite(4.0));
        let samples = vec![x.clone(), TorusPoint::new(vec![0.7, 0.1])];
        let one = SpeedField::constant(1.0, cat()).unwrap();
        assert_eq!(expected_gamma(&one, &samples).unwrap(), Estimate::Finite(1.0));
        assert!(matches!(expected_gamma(&one, &[]), Err(Error::EmptySamples)));
    }

    #[test]
    fn return_time_matches_clock() {
        let field = quadratic();
        let clock = AdditiveClock::for_speed(&field);
        for x in [[0.31, 0.61], [0.29, 0.55], [0.8, 0.1]] {
            let x = TorusPoint::new(x.to_vec());
            let g = gamma(&field, &x).value.value().unwrap();
            let t = clock.theta(&SuspensionPoint::new(x, 0.0), 1.0).unwrap();
            assert!((g - t).abs() < 1e-8 * g.max(1.0), "{g} vs {t}");
        }
    }

    #[test]
    fn singular_fibers_diverge() {
        let flat = SpeedField::new(
            SpeedKind::FlatAtP { profile: FlatProfile::geometric(0.5, 32).unwrap(), floor: 0.0 },
            cat(),
            p(),
            0.2,
        )
        .unwrap();
        let x0 = p().base;
        assert!(gamma(&flat, &x0).value.is_diverged());
        let pre = BaseMap::cat_map().apply(&x0, -1);
        assert!(gamma(&flat, &pre).value.is_diverged());
        assert!(gamma(&quadratic(), &x0).value.is_diverged());
    }

    #[test]
    fn suspension_measure_is_reproduced() {
        let one = SpeedField::constant(1.0, cat()).unwrap();
        let samples = vec![TorusPoint::new(vec![0.1, 0.2]), TorusPoint::new(vec![0.5, 0.9])];
        let v = push_measure_gamma(&one, &samples, |_| 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // ∫_0^1 s² ds
        let v = push_measure_gamma(&one, &samples, |q| q.height * q.height).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn constant_density() {
        let half = SpeedField::constant(0.5, cat()).unwrap();
        let samples = vec![SuspensionPoint::new(TorusPoint::new(vec![0.1, 0.2]), 0.4)];
        assert_eq!(pushforward_density(&half, &samples, |_| true).unwrap(), Estimate::Finite(2.0));
    }

    #[test]
    fn radial_integral_grows_logarithmically_in_two_dimensions() {
        let flow = SuspensionFlow::new(BaseMap::golden_rotation());
        let p = SuspensionPoint::new(TorusPoint::new(vec![0.3]), 0.0);
        let field = SpeedField::new(SpeedKind::QuadraticAtP, flow, p, 0.2).unwrap();
        let k = |c: f64| radial_density_integral(&field, c).unwrap().value().unwrap();
        // inside u ≤ 1/2: ∫ 8ρ · r²/(4ρ²) dρ = 2r² ln(ρ₁/ρ₂)
        let step = k(1e-5) - k(1e-4);
        assert!((step - 2.0 * 0.04 * 10f64.ln()).abs() < 1e-8);
        assert!(radial_density_integral(&field, 0.0).unwrap().is_diverged());
        let three = radial_density_integral(&quadratic(), 0.0).unwrap().value().unwrap();
        assert!(three > 1.0 && three < 1.1);
    }
}
