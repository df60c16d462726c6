//! Additive clocks along the suspension flow and the time-changed flows they
//! define.
//!
//! A clock integrates a non-negative rate along `ψ`-orbits,
//! `θ(t, q) = ∫_0^t a(ψ_s q) ds`. Its generalized inverse
//! `τ(t, q) = sup{s : θ(s, q) ≤ t}` turns `ψ` into the time-changed flow
//! `φ_t q = ψ_{τ(t, q)} q`. With `a = 1/α` the new flow is the flow of the
//! rescaled field `αX`.

use crate::error::{Error, Result};
use crate::quadrature::{Simpson, Unbounded};
use crate::speed::SpeedField;
use crate::suspension::{SuspensionFlow, SuspensionPoint};
use crate::torus::MAX_DIM;

/// The integrand of a clock.
#[derive(Debug, Clone)]
pub enum Rate {
    /// `a ≡ c`.
    Constant(f64),
    /// `a = 1/α`: the clock of the flow generated by `αX`.
    InverseSpeed(SpeedField),
    /// `a = α`.
    Speed(SpeedField),
}

impl Rate {
    #[inline]
    pub(crate) fn at_raw(&self, x: &[f64], s: f64) -> f64 {
        match self {
            Rate::Constant(c) => *c,
            Rate::InverseSpeed(f) => 1.0 / f.speed_raw(x, s),
            Rate::Speed(f) => f.speed_raw(x, s),
        }
    }

    pub fn at(&self, q: &SuspensionPoint) -> f64 {
        self.at_raw(q.base.coords(), q.height)
    }

    /// True when the segment `[h0, h1]` of the fiber over `x` stays outside
    /// the chart, where the rate is 1. Distance to `p` is 1-Lipschitz in the
    /// height within a fiber.
    #[inline]
    fn unit_on(&self, x: &[f64], h0: f64, h1: f64) -> bool {
        match self {
            Rate::Constant(_) => false,
            Rate::InverseSpeed(f) | Rate::Speed(f) => {
                if let crate::speed::SpeedKind::Constant(_) = f.kind() {
                    return false;
                }
                let r = f.chart_radius();
                let d = 0.5 * r * f.chart_norm_raw(x, 0.5 * (h0 + h1));
                d - 0.5 * (h1 - h0) >= 0.5 * r
            }
        }
    }
}

/// `θ(t, q) = ∫_0^t a(ψ_s q) ds`.
#[derive(Debug, Clone)]
pub struct AdditiveClock {
    flow: SuspensionFlow,
    rate: Rate,
    quad: Simpson,
}

impl AdditiveClock {
    pub fn new(flow: SuspensionFlow, rate: Rate, quad_tol: f64, quad_cap: f64) -> Result<Self> {
        if !(quad_tol > 0.0 && quad_cap > 0.0) {
            return Err(Error::InvalidInput("quadrature tolerance and cap must be positive".into()));
        }
        if let Rate::Constant(c) = rate {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidInput(format!("constant rate {c} must be positive")));
            }
        }
        Ok(AdditiveClock { flow, rate, quad: Simpson::new(quad_tol, quad_cap) })
    }

    /// Clock of the flow generated by `field · X`.
    pub fn for_speed(field: &SpeedField) -> Self {
        Self::new(field.flow().clone(), Rate::InverseSpeed(field.clone()), 1e-12, 1e12)
            .expect("default tolerances are valid")
    }

    pub fn constant(flow: SuspensionFlow, c: f64) -> Result<Self> {
        Self::new(flow, Rate::Constant(c), 1e-12, 1e12)
    }

    pub fn flow(&self) -> &SuspensionFlow {
        &self.flow
    }

    pub fn rate(&self) -> &Rate {
        &self.rate
    }

    pub fn quadrature(&self) -> &Simpson {
        &self.quad
    }

    /// Same clock with a different divergence cap.
    pub fn with_cap(&self, cap: f64) -> Self {
        let mut c = self.clone();
        c.quad.cap = cap;
        c
    }

    /// `∫ a(y, h) dh` over `[h0, h1]` inside one fiber.
    fn fiber_integral(&self, y: &[f64], h0: f64, h1: f64) -> std::result::Result<f64, Unbounded> {
        match self.rate {
            Rate::Constant(c) => Ok(c * (h1 - h0)),
            _ if self.rate.unit_on(y, h0, h1) => Ok(h1 - h0),
            _ => self.quad.integrate(|h| self.rate.at_raw(y, h), h0, h1),
        }
    }

    /// `θ(t, q)` for `t ≥ 0`.
    pub fn theta(&self, q: &SuspensionPoint, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::OutOfDomain { value: t, domain: "[0, inf)" });
        }
        if let Rate::Constant(c) = self.rate {
            return Ok(c * t);
        }
        let map = self.flow.base_map();
        let dim = map.dim();
        let mut buf = [0.0; MAX_DIM];
        let mut next = [0.0; MAX_DIM];
        buf[..dim].copy_from_slice(q.base.coords());
        let mut h = q.height;
        let mut elapsed = 0.0;
        let mut total = 0.0;
        while elapsed < t {
            let h1 = (h + (t - elapsed)).min(1.0);
            total += self
                .fiber_integral(&buf[..dim], h, h1)
                .map_err(|u| Error::IntegrandUnbounded { at: elapsed + (u.at - h), cap: self.quad.cap })?;
            elapsed += h1 - h;
            if h1 >= 1.0 {
                map.step_into(&buf[..dim], &mut next[..dim]);
                buf[..dim].copy_from_slice(&next[..dim]);
                h = 0.0;
            } else {
                break;
            }
        }
        Ok(total)
    }
}

/// `θ(t, q)`.
pub fn theta(clock: &AdditiveClock, q: &SuspensionPoint, t: f64) -> Result<f64> {
    clock.theta(q, t)
}

/// ψ-times reached by a φ-trajectory at requested φ-times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub psi_times: Vec<f64>,
    /// ψ-time at which the orbit met the singular set, if it did.
    pub frozen_at: Option<f64>,
}

/// The time-changed flow `φ_t q = ψ_{τ(t, q)} q`.
#[derive(Debug, Clone)]
pub struct TimeChangedFlow {
    clock: AdditiveClock,
    inversion_tol: f64,
    horizon: f64,
}

/// Largest ψ-step taken by the inversion sweep.
const SWEEP_STEP: f64 = 0.125;

impl TimeChangedFlow {
    pub fn new(clock: AdditiveClock, inversion_tol: f64, horizon: f64) -> Result<Self> {
        if !(inversion_tol > 0.0 && horizon > 0.0) {
            return Err(Error::InvalidInput("inversion tolerance and horizon must be positive".into()));
        }
        Ok(TimeChangedFlow { clock, inversion_tol, horizon })
    }

    /// Flow of `field · X` with default tolerances.
    pub fn for_speed(field: &SpeedField) -> Self {
        Self::new(AdditiveClock::for_speed(field), 1e-12, 1e6).expect("defaults are valid")
    }

    pub fn clock(&self) -> &AdditiveClock {
        &self.clock
    }

    pub fn flow(&self) -> &SuspensionFlow {
        self.clock.flow()
    }

    pub fn inversion_tol(&self) -> f64 {
        self.inversion_tol
    }

    /// `τ(t, q)`.
    pub fn tau(&self, q: &SuspensionPoint, t: f64) -> Result<f64> {
        Ok(self.inverse_trajectory(q, &[t])?.psi_times[0])
    }

    /// `φ_t q`.
    pub fn advance(&self, q: &SuspensionPoint, t: f64) -> Result<SuspensionPoint> {
        let s = self.tau(q, t)?;
        Ok(self.flow().advance(q, s))
    }

    /// `τ(t_j, q)` for non-decreasing `times ≥ 0`, in a single sweep.
    ///
    /// For clocks `a = 1/α` this integrates `dτ/dt = α(ψ_τ q)` instead of
    /// inverting `θ`, which is far cheaper on orbits through the chart.
    pub fn trajectory(&self, q: &SuspensionPoint, times: &[f64]) -> Result<Trajectory> {
        check_times(times)?;
        match &self.clock.rate {
            Rate::Constant(c) => Ok(Trajectory { psi_times: times.iter().map(|t| t / c).collect(), frozen_at: None }),
            Rate::InverseSpeed(field) => Ok(ode_trajectory(field, q, times, self.inversion_tol.max(1e-11))),
            Rate::Speed(_) => self.inverse_trajectory(q, times),
        }
    }

    /// [`Self::trajectory`] by inverting `θ` at every requested time.
    pub fn inverse_trajectory(&self, q: &SuspensionPoint, times: &[f64]) -> Result<Trajectory> {
        check_times(times)?;
        if let Rate::Constant(c) = self.clock.rate {
            return Ok(Trajectory { psi_times: times.iter().map(|t| t / c).collect(), frozen_at: None });
        }
        let mut sweep = Sweep::new(self, q);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            out.push(sweep.reach(t)?);
        }
        Ok(Trajectory { psi_times: out, frozen_at: sweep.frozen })
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::OutOfDomain { value: *t, domain: "[0, inf)" });
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("trajectory times must be non-decreasing".into()));
    }
    Ok(())
}

/// `α` along the ψ-orbit of a point, by elapsed ψ-time.
struct Orbit<'a> {
    field: &'a SpeedField,
    dim: usize,
    start: f64,
    /// `f^k(x)` for the fibers visited so far.
    bases: Vec<[f64; MAX_DIM]>,
}

impl<'a> Orbit<'a> {
    fn new(field: &'a SpeedField, q: &SuspensionPoint) -> Self {
        let dim = q.base.dim();
        let mut b = [0.0; MAX_DIM];
        b[..dim].copy_from_slice(q.base.coords());
        Orbit { field, dim, start: q.height, bases: vec![b] }
    }

    /// Fiber index and height after ψ-time `s`.
    fn locate(&mut self, s: f64) -> (usize, f64) {
        let total = self.start + s;
        let k = total.floor().max(0.0);
        let ku = k as usize;
        while self.bases.len() <= ku {
            let last = *self.bases.last().unwrap();
            let mut next = [0.0; MAX_DIM];
            self.field.flow().base_map().step_into(&last[..self.dim], &mut next[..self.dim]);
            self.bases.push(next);
        }
        (ku, total - k)
    }

    fn speed(&mut self, s: f64) -> f64 {
        let (k, h) = self.locate(s);
        self.field.speed_raw(&self.bases[k][..self.dim], h)
    }

    /// Whether the speed is 1 on the ψ-interval `[s, s + len]`.
    fn unit_ahead(&mut self, s: f64, len: f64) -> bool {
        if let crate::speed::SpeedKind::Constant(_) = self.field.kind() {
            return false;
        }
        let (k, h) = self.locate(s);
        if h + len > 1.0 {
            return false;
        }
        let r = self.field.chart_radius();
        let d = 0.5 * r * self.field.chart_norm_raw(&self.bases[k][..self.dim], h + 0.5 * len);
        d - 0.5 * len >= 0.5 * r
    }
}

/// Integrates `dτ/dt = α(ψ_τ q)` with the Dormand-Prince 5(4) pair.
fn ode_trajectory(field: &SpeedField, q: &SuspensionPoint, times: &[f64], tol: f64) -> Trajectory {
    const A: [[f64; 5]; 5] = [
        [0.2, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    ];
    const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    const E: [f64; 7] =
        [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];
    // dense output coefficients of the pair
    const D: [f64; 7] = [
        -12715105075.0 / 11282082432.0,
        0.0,
        87487479700.0 / 32700410799.0,
        -10690763975.0 / 1880347072.0,
        701980252875.0 / 199316789632.0,
        -1453857185.0 / 822651844.0,
        69997945.0 / 29380423.0,
    ];
    const MAX_STEP: f64 = 1.0;
    let mut orbit = Orbit::new(field, q);
    let mut out = Vec::with_capacity(times.len());
    let mut pending = times.iter().copied().peekable();
    let end = times.last().copied().unwrap_or(0.0);
    let (mut t, mut s) = (0.0, 0.0);
    let mut step: f64 = 0.01;
    let mut k1 = orbit.speed(0.0);
    while let Some(&target) = pending.peek() {
        if target <= t {
            out.push(s);
            pending.next();
            continue;
        }
        let dt = step.min(end - t);
        // speed 1 throughout: the exact solution is a translation
        if orbit.unit_ahead(s, dt) {
            while let Some(&target) = pending.peek() {
                if target > t + dt {
                    break;
                }
                out.push(s + (target - t));
                pending.next();
            }
            t += dt;
            s += dt;
            k1 = 1.0;
            step = (2.0 * step).min(MAX_STEP);
            continue;
        }
        let mut k = [0.0; 7];
        k[0] = k1;
        for i in 0..5 {
            let y = s + dt * (0..=i).map(|j| A[i][j] * k[j]).sum::<f64>();
            k[i + 1] = orbit.speed(y);
        }
        let next = s + dt * (0..6).map(|j| B[j] * k[j]).sum::<f64>();
        k[6] = orbit.speed(next);
        let err = (dt * (0..7).map(|j| E[j] * k[j]).sum::<f64>()).abs();
        let allowed = tol * dt.max(1e-3);
        if err <= allowed || dt < 1e-9 {
            let r2 = next - s;
            let r3 = dt * k[0] - r2;
            let r4 = r2 - dt * k[6] - r3;
            let r5 = dt * (0..7).map(|j| D[j] * k[j]).sum::<f64>();
            let mut last = s;
            while let Some(&target) = pending.peek() {
                if target > t + dt {
                    break;
                }
                let th = (target - t) / dt;
                let v = s + th * (r2 + (1.0 - th) * (r3 + th * (r4 + (1.0 - th) * r5)));
                // the exact solution is nondecreasing and stays in [s, next]
                last = v.clamp(last, next.max(s));
                out.push(last);
                pending.next();
            }
            t += dt;
            s = next.max(s);
            k1 = k[6];
        }
        let factor = if err > 0.0 { 0.9 * (allowed / err).powf(0.2) } else { 5.0 };
        step = (dt * factor.clamp(0.2, 5.0)).clamp(1e-9, MAX_STEP);
    }
    Trajectory { psi_times: out, frozen_at: None }
}

/// Forward sweep along a ψ-orbit accumulating `θ`.
struct Sweep<'a> {
    flow: &'a TimeChangedFlow,
    dim: usize,
    base: [f64; MAX_DIM],
    /// Height within the current fiber.
    h: f64,
    /// ψ-time elapsed.
    s: f64,
    /// `θ(s, q)`.
    theta: f64,
    frozen: Option<f64>,
}

impl<'a> Sweep<'a> {
    fn new(flow: &'a TimeChangedFlow, q: &SuspensionPoint) -> Self {
        let dim = q.base.dim();
        let mut base = [0.0; MAX_DIM];
        base[..dim].copy_from_slice(q.base.coords());
        let mut sw = Sweep { flow, dim, base, h: q.height, s: 0.0, theta: 0.0, frozen: None };
        let cap = flow.clock.quad.cap;
        let a0 = flow.clock.rate.at_raw(&sw.base[..dim], sw.h);
        if !(a0.is_finite() && a0 <= cap) {
            sw.frozen = Some(0.0);
        }
        sw
    }

    fn rate(&self, h: f64) -> f64 {
        self.flow.clock.rate.at_raw(&self.base[..self.dim], h)
    }

    fn integral(&self, h0: f64, h1: f64) -> std::result::Result<f64, Unbounded> {
        self.flow.clock.fiber_integral(&self.base[..self.dim], h0, h1)
    }

    fn finite(&self, h: f64) -> bool {
        let a = self.rate(h);
        a.is_finite() && a <= self.flow.clock.quad.cap
    }

    /// Moves to the top of the fiber and across the seam.
    fn cross_seam(&mut self) {
        let map = self.flow.flow().base_map();
        let mut next = [0.0; MAX_DIM];
        map.step_into(&self.base[..self.dim], &mut next[..self.dim]);
        self.base = next;
        self.h = 0.0;
    }

    /// Advances until `θ = target` and returns the ψ-time elapsed.
    fn reach(&mut self, target: f64) -> Result<f64> {
        let tol = self.flow.inversion_tol;
        loop {
            if self.frozen.is_some() || self.theta >= target {
                return Ok(self.s);
            }
            if self.s > self.flow.horizon {
                return Err(Error::NotInvertible { target, horizon: self.flow.horizon });
            }
            let h1 = (self.h + SWEEP_STEP).min(1.0);
            let (end, piece, blocked) = match self.integral(self.h, h1) {
                Ok(v) => (h1, v, false),
                Err(u) => {
                    // last height before the integrand leaves the cap
                    let (mut lo, mut hi) = (self.h, u.at.max(self.h));
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if self.finite(mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let v = self.integral(self.h, lo).unwrap_or(f64::INFINITY);
                    (lo, v, true)
                }
            };
            if self.theta + piece >= target {
                let dh = self.solve(target - self.theta, end - self.h, piece, tol);
                self.s += dh;
                self.h += dh;
                self.theta = target;
                return Ok(self.s);
            }
            self.theta += piece;
            self.s += end - self.h;
            self.h = end;
            if blocked {
                self.frozen = Some(self.s);
                return Ok(self.s);
            }
            if self.h >= 1.0 {
                self.cross_seam();
            }
        }
    }

    /// Smallest `u ∈ [0, width]` with `∫_h^{h+u} a = need`, by safeguarded Newton.
    fn solve(&self, need: f64, width: f64, total: f64, tol: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, width);
        let mut u = if total.is_finite() && total > 0.0 { width * need / total } else { 0.5 * width };
        for _ in 0..100 {
            let g = match self.integral(self.h, self.h + u) {
                Ok(v) => v - need,
                Err(_) => f64::INFINITY,
            };
            if g.abs() <= tol * need.max(1.0) {
                return u;
            }
            if g > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            if hi - lo <= 1e-15 * (1.0 + self.h) {
                return 0.5 * (lo + hi);
            }
            let a = self.rate(self.h + u);
            let newton = if g.is_finite() && a.is_finite() && a > 0.0 { u - g / a } else { f64::NAN };
            u = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        u
    }
}

/// `τ(t, q)`.
pub fn tau(flow: &TimeChangedFlow, q: &SuspensionPoint, t: f64) -> Result<f64> {
    flow.tau(q, t)
}

/// `φ_t q`.
pub fn phi_advance(flow: &TimeChangedFlow, q: &SuspensionPoint, t: f64) -> Result<SuspensionPoint> {
    flow.advance(q, t)
}

/// One row of an orbit-equivalence witness.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WitnessRow {
    /// Time along `flow_b`.
    pub s: f64,
    /// Matching time along `flow_a`.
    pub t: f64,
    /// Common ψ-time of the matched points.
    pub psi_time: f64,
    /// `d(φ^a_t q, φ^b_s q)`.
    pub distance: f64,
}

/// For `samples` times up to `horizon` along `flow_b`, finds the `flow_a`
/// times reaching the same points; the table is a numerical witness that the
/// identity maps orbits to orbits preserving time orientation.
pub fn orbit_equivalence_check(
    flow_a: &TimeChangedFlow,
    flow_b: &TimeChangedFlow,
    q: &SuspensionPoint,
    horizon: f64,
    samples: usize,
    tol: f64,
) -> Result<Vec<WitnessRow>> {
    if flow_a.flow() != flow_b.flow() {
        return Err(Error::InvalidInput("both flows must time-change the same suspension".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample time".into()));
    }
    let s_times: Vec<f64> = (1..=samples).map(|j| horizon * j as f64 / samples as f64).collect();
    let traj_b = flow_b.trajectory(q, &s_times)?;
    if let Some(at) = traj_b.frozen_at {
        return Err(Error::WitnessNotFound(format!("orbit of flow_b stops at ψ-time {at}")));
    }
    let mut rows = Vec::with_capacity(samples);
    let mut last_t = 0.0;
    for (s, psi) in s_times.iter().zip(&traj_b.psi_times) {
        let t = flow_a
            .clock()
            .theta(q, *psi)
            .map_err(|e| Error::WitnessNotFound(format!("flow_a clock at ψ-time {psi}: {e}")))?;
        if !(t > last_t) {
            return Err(Error::WitnessNotFound(format!("matching times not increasing at s = {s}")));
        }
        let pa = flow_a.advance(q, t)?;
        let pb = flow_b.flow().advance(q, *psi);
        let distance = flow_a.flow().dist(&pa, &pb);
        if !(distance < tol) {
            return Err(Error::WitnessNotFound(format!("distance {distance} at s = {s}")));
        }
        rows.push(WitnessRow { s: *s, t, psi_time: *psi, distance });
        last_t = t;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speed::{FlatProfile, SpeedKind};
    use crate::torus::{BaseMap, TorusPoint};

    fn flow() -> SuspensionFlow {
        SuspensionFlow::new(BaseMap::cat_map())
    }

    fn p() -> SuspensionPoint {
        SuspensionPoint::new(TorusPoint::new(vec![0.3, 0.6]), 0.0)
    }

    fn quad_field() -> SpeedField {
        SpeedField::new(SpeedKind::QuadraticAtP, flow(), p(), 0.2).unwrap()
    }

    fn q0() -> SuspensionPoint {
        SuspensionPoint::new(TorusPoint::new(vec![0.31, 0.58]), 0.7)
    }

    #[test]
    fn constant_clocks() {
        let q = q0();
        for c in [1.0, 2.0] {
            let clock = AdditiveClock::constant(flow(), c).unwrap();
            assert_eq!(clock.theta(&q, 3.5).unwrap(), 3.5 * c);
            let phi = TimeChangedFlow::new(clock, 1e-12, 1e6).unwrap();
            assert_eq!(phi.tau(&q, 1.0).unwrap(), 1.0 / c);
            assert_eq!(phi.tau(&q, 0.0).unwrap(), 0.0);
            let a = phi.advance(&q, 1.0).unwrap();
            let b = flow().advance(&q, 1.0 / c);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn general_path_matches_constant() {
        let field = SpeedField::constant(0.5, flow()).unwrap();
        let phi = TimeChangedFlow::for_speed(&field);
        let q = q0();
        assert!((phi.clock().theta(&q, 3.3).unwrap() - 6.6).abs() < 1e-11);
        assert!((phi.tau(&q, 1.0).unwrap() - 0.5).abs() < 1e-11);
    }

    #[test]
    fn round_trip_near_singularity() {
        let phi = TimeChangedFlow::for_speed(&quad_field());
        let q = q0();
        for &s in &[0.1, 0.35, 1.0, 2.7, 9.0] {
            let t = phi.clock().theta(&q, s).unwrap();
            assert!((phi.tau(&q, t).unwrap() - s).abs() < 1e-8, "s={s}");
        }
    }

    #[test]
    fn singular_point_is_fixed() {
        let flat = SpeedField::new(
            SpeedKind::FlatAtP { profile: FlatProfile::geometric(0.5, 32).unwrap(), floor: 0.0 },
            flow(),
            p(),
            0.2,
        )
        .unwrap();
        let phi = TimeChangedFlow::for_speed(&flat);
        for t in [0.5, 10.0, 1e3] {
            assert_eq!(phi.advance(&p(), t).unwrap(), p());
        }
    }

    #[test]
    fn witness_for_linear_clocks() {
        let a = TimeChangedFlow::new(AdditiveClock::constant(flow(), 1.0).unwrap(), 1e-12, 1e6).unwrap();
        let b = TimeChangedFlow::new(AdditiveClock::constant(flow(), 2.0).unwrap(), 1e-12, 1e6).unwrap();
        let rows = orbit_equivalence_check(&a, &b, &q0(), 5.0, 10, 1e-9).unwrap();
        for r in &rows {
            assert!((r.t - r.s / 2.0).abs() < 1e-12);
        }
        let same = orbit_equivalence_check(&b, &b, &q0(), 5.0, 10, 1e-9).unwrap();
        for r in &same {
            assert!((r.t - r.s).abs() < 1e-9);
        }
    }

    #[test]
    fn ode_matches_inversion() {
        let flat = SpeedField::new(
            SpeedKind::FlatAtP { profile: FlatProfile::geometric(0.5, 32).unwrap(), floor: 1e-3 },
            flow(),
            p(),
            0.2,
        )
        .unwrap();
        let times: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).collect();
        for field in [quad_field(), flat] {
            let phi = TimeChangedFlow::for_speed(&field);
            for q in [q0(), SuspensionPoint::new(TorusPoint::new(vec![0.3, 0.61]), 0.9)] {
                let ode = phi.trajectory(&q, &times).unwrap();
                let inv = phi.inverse_trajectory(&q, &times).unwrap();
                for (a, b) in ode.psi_times.iter().zip(&inv.psi_times) {
                    assert!((a - b).abs() < 1e-7, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn rejects_negative_time() {
        let clock = AdditiveClock::for_speed(&quad_field());
        assert!(clock.theta(&q0(), -1.0).is_err());
    }
}
