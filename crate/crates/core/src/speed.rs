//! Speed fields that stop the suspension flow at a single point `p`.
//!
//! The flat field is built from the shifted-mollifier series
//! `η(t) = Σ_{i≥1} 2^{-i-1} β_{i-1} h(t − α_i)` with `α_i = 1/(i+1)` and
//! `h(t) = e^{-1/t}`, which vanishes to infinite order at 0. The quadratic
//! field is `‖x‖²` near `p`. Both are composed with a chart that rescales the
//! ball `B(p, chart_radius)` onto the ball of radius 2, and equal 1 outside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::suspension::{SuspensionFlow, SuspensionPoint};

/// Highest derivative order served by the series path.
pub const MAX_SERIES_ORDER: usize = 4;
const JET: usize = MAX_SERIES_ORDER + 1;

/// `h(t) = e^{-1/t}` for `t > 0`, and 0 otherwise.
pub fn mollifier_h(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Coefficients (in `u = 1/t`) of the polynomials `P_k` with
/// `h^{(k)}(t) = P_k(1/t) e^{-1/t}`; `P_{k+1}(u) = u² (P_k(u) − P_k'(u))`.
fn mollifier_polys() -> [Vec<f64>; JET] {
    let mut polys: [Vec<f64>; JET] = Default::default();
    polys[0] = vec![1.0];
    for k in 0..MAX_SERIES_ORDER {
        let p = &polys[k];
        let mut diff = p.clone();
        for (j, c) in p.iter().enumerate().skip(1) {
            diff[j - 1] -= j as f64 * c;
        }
        let mut next = vec![0.0, 0.0];
        next.extend(diff);
        polys[k + 1] = next;
    }
    polys
}

thread_local! {
    static POLYS: [Vec<f64>; JET] = mollifier_polys();
}

/// Exact `k`-th derivative of the mollifier, `k ≤ 4`.
pub fn mollifier_derivative(t: f64, k: usize) -> f64 {
    assert!(k <= MAX_SERIES_ORDER);
    if t <= 0.0 {
        return 0.0;
    }
    let e = (-1.0 / t).exp();
    if e == 0.0 {
        return 0.0;
    }
    let u = 1.0 / t;
    POLYS.with(|p| p[k].iter().rev().fold(0.0, |acc, c| acc * u + c) * e)
}

/// Truncated Taylor expansion: `c[j] = f^{(j)}(t) / j!`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Jet([f64; JET]);

impl Jet {
    fn constant(v: f64) -> Self {
        let mut c = [0.0; JET];
        c[0] = v;
        Jet(c)
    }

    fn mollifier(t: f64, sign: f64) -> Self {
        // jet of u ↦ h(t + sign·u) at u = 0
        let mut c = [0.0; JET];
        let mut fact = 1.0;
        let mut s = 1.0;
        for (j, cj) in c.iter_mut().enumerate() {
            if j > 0 {
                fact *= j as f64;
                s *= sign;
            }
            *cj = s * mollifier_derivative(t, j) / fact;
        }
        Jet(c)
    }

    fn add(self, o: Jet) -> Jet {
        let mut c = self.0;
        c.iter_mut().zip(o.0).for_each(|(a, b)| *a += b);
        Jet(c)
    }

    fn scale(self, k: f64) -> Jet {
        Jet(self.0.map(|a| a * k))
    }

    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; JET];
        for i in 0..JET {
            for j in 0..JET - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }

    fn div(self, o: Jet) -> Jet {
        let mut c = [0.0; JET];
        for n in 0..JET {
            let mut acc = self.0[n];
            for j in 1..=n {
                acc -= o.0[j] * c[n - j];
            }
            c[n] = acc / o.0[0];
        }
        Jet(c)
    }

    fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|v| v as f64).product();
        self.0[k] * fact
    }
}

/// Smooth step rising from 0 at `u ≤ 0` to 1 at `u ≥ 1`, with its jet.
fn smoothstep_jet(u: f64, du_dt: f64) -> Jet {
    if u <= 0.0 {
        return Jet::constant(0.0);
    }
    if u >= 1.0 {
        return Jet::constant(1.0);
    }
    let a = Jet::mollifier(u, 1.0);
    let b = Jet::mollifier(1.0 - u, -1.0);
    let s = a.div(a.add(b));
    // chain rule for the affine reparameterization u = (t − t0)·du_dt
    let mut c = s.0;
    let mut f = 1.0;
    for cj in c.iter_mut().skip(1) {
        f *= du_dt;
        *cj *= f;
    }
    Jet(c)
}

pub(crate) fn smoothstep(u: f64) -> f64 {
    smoothstep_jet(u, 1.0).0[0]
}

/// Bounds `β_{-1} = 1 > β_0 > β_1 > …` of the flat series and its shell radii
/// `α_i = 1/(i+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatProfile {
    /// `betas[j] = β_{j-1}`.
    betas: Vec<f64>,
    truncation_tol: f64,
}

/// Profile export record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatProfileRecord {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub truncation_tol: f64,
}

/// Start of the interval on which the series is blended into the constant 1.
const BLEND_START: f64 = 0.5;

impl FlatProfile {
    /// `betas` lists `β_0, β_1, …`; `β_{-1} = 1` is prepended.
    pub fn new(betas: Vec<f64>, truncation_tol: f64) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidInput("flat profile needs at least one beta".into()));
        }
        if !(truncation_tol > 0.0) {
            return Err(Error::InvalidInput("truncation_tol must be positive".into()));
        }
        let mut prev = 1.0;
        for &b in &betas {
            if !(b > 0.0 && b < prev) {
                return Err(Error::InvalidInput(format!(
                    "betas must be positive and strictly decreasing from 1, got {b} after {prev}"
                )));
            }
            prev = b;
        }
        let mut all = Vec::with_capacity(betas.len() + 1);
        all.push(1.0);
        all.extend(betas);
        Ok(FlatProfile { betas: all, truncation_tol })
    }

    /// Geometric profile `β_i = ratio^{i+1}`.
    pub fn geometric(ratio: f64, len: usize) -> Result<Self> {
        Self::new((1..=len).map(|i| ratio.powi(i as i32)).collect(), 1e-14)
    }

    /// `β_i` for `i ≥ −1`; past the stored prefix the sequence keeps halving.
    pub fn beta(&self, i: i64) -> f64 {
        assert!(i >= -1);
        let j = (i + 1) as usize;
        match self.betas.get(j) {
            Some(b) => *b,
            None => {
                let last = self.betas.len() - 1;
                self.betas[last] * 0.5f64.powi((j - last) as i32)
            }
        }
    }

    /// Shell radius `α_i = 1/(i+1)`.
    pub fn alpha(i: usize) -> f64 {
        1.0 / (i as f64 + 1.0)
    }

    pub fn len(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn truncation_tol(&self) -> f64 {
        self.truncation_tol
    }

    pub fn record(&self) -> FlatProfileRecord {
        FlatProfileRecord {
            betas: self.betas.clone(),
            alphas: (0..self.betas.len()).map(Self::alpha).collect(),
            truncation_tol: self.truncation_tol,
        }
    }

    /// Jet of the raw series at `t`, summed from the first non-vanishing term
    /// until the geometric tail bound drops below `truncation_tol` relative to
    /// the partial sum.
    fn series_jet(&self, t: f64, order: usize) -> Jet {
        let mut acc = Jet::constant(0.0);
        if t <= 0.0 {
            return acc;
        }
        // terms with α_i ≥ t vanish identically near t
        let first = (1.0 / t - 1.0).floor().max(0.0);
        // 2^{-first-1} underflows past this point
        if first > 1100.0 {
            return acc;
        }
        let first = (first as usize + 1).max(1);
        let mut weight = 0.5f64.powi(first as i32 + 1);
        let envelope = tail_envelope(t, order);
        let mut i = first;
        loop {
            let arg = t - Self::alpha(i);
            let w = weight * self.beta(i as i64 - 1);
            let term = if order == 0 { Jet::constant(mollifier_h(arg)) } else { Jet::mollifier(arg, 1.0) };
            acc = acc.add(term.scale(w));
            // Σ_{j>i} 2^{-j-1} β_{j-1} h^{(k)}(t − α_j) ≤ 2^{-i-1} β_i max_k sup|h^{(k)}| on (0, t]
            let tail = weight * self.beta(i as i64) * envelope;
            let scale = acc.0[..=order].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if tail == 0.0 || tail <= self.truncation_tol * scale || weight == 0.0 {
                break;
            }
            i += 1;
            weight *= 0.5;
        }
        acc
    }

    /// Raw series value (no extension), defined for `t ≤ 1`.
    pub fn series(&self, t: f64) -> f64 {
        self.series_jet(t, 0).0[0]
    }

    fn eta_jet(&self, t: f64, order: usize) -> Result<Jet> {
        if !(-1.0..=2.0).contains(&t) {
            return Err(Error::OutOfDomain { value: t, domain: "[-1, 2]" });
        }
        if t <= 0.0 {
            return Ok(Jet::constant(0.0));
        }
        if t >= 1.0 {
            return Ok(Jet::constant(1.0));
        }
        let s = self.series_jet(t, order);
        if t <= BLEND_START {
            return Ok(s);
        }
        let width = 1.0 - BLEND_START;
        let sigma = smoothstep_jet((t - BLEND_START) / width, 1.0 / width);
        let one_minus_s = Jet::constant(1.0).add(s.scale(-1.0));
        Ok(s.add(sigma.mul(one_minus_s)))
    }

    /// The flat function `η` on `[-1, 2]`: zero on `[-1, 0]`, the series on
    /// `(0, 1/2]`, a smooth monotone blend into 1 on `(1/2, 1)`, and 1 on `[1, 2]`.
    pub fn eta(&self, t: f64) -> Result<f64> {
        Ok(self.eta_jet(t, 0)?.0[0])
    }

    /// `η^{(k)}(t)` for `1 ≤ k ≤ 4`, from the term-wise differentiated series.
    pub fn eta_derivative(&self, t: f64, k: usize) -> Result<f64> {
        if k == 0 || k > MAX_SERIES_ORDER {
            return Err(Error::InvalidInput(format!(
                "series derivatives are available for orders 1..={MAX_SERIES_ORDER}, got {k}"
            )));
        }
        Ok(self.eta_jet(t, k)?.derivative(k))
    }
}

/// Upper bound on `|h^{(j)}|/j!`, `j ≤ order`, over `(0, t]`, used for the tail.
fn tail_envelope(t: f64, order: usize) -> f64 {
    if order == 0 {
        return mollifier_h(t);
    }
    // |h^{(j)}(s)| is bounded by |P_j|(1/s) e^{-1/s}; its maximum over (0, t]
    // is attained at t or at an interior critical point, bounded crudely by
    // sampling a fine grid and a safety factor
    let mut m = 0.0f64;
    for j in 0..=order {
        for n in 1..=64 {
            let s = t * n as f64 / 64.0;
            m = m.max(mollifier_derivative(s, j).abs());
        }
    }
    2.0 * m
}

/// `η(t)` of a profile.
pub fn eta_eval(profile: &FlatProfile, t: f64) -> Result<f64> {
    profile.eta(t)
}

pub fn eta_derivative(profile: &FlatProfile, t: f64, k: usize) -> Result<f64> {
    profile.eta_derivative(t, k)
}

/// Builds `β_{i-1} = l_{i0+i} / (i0+i) · δ(i0+i)` with `δ(j) = 1/L(1/j)`.
///
/// Returns the profile and the indices at which the raw value failed to
/// decrease and was replaced by a running minimum.
pub fn build_flat_profile(
    recurrence: impl Fn(usize) -> u64,
    shell_gap: impl Fn(usize) -> f64,
    i0: usize,
    len: usize,
) -> Result<(FlatProfile, Vec<usize>)> {
    if len == 0 {
        return Err(Error::InvalidInput("profile length must be positive".into()));
    }
    let mut betas = Vec::with_capacity(len);
    let mut adjusted = Vec::new();
    let mut prev = 1.0f64;
    for i in 1..=len {
        let j = i0 + i;
        let l = shell_gap(j);
        if !(l > 0.0 && l < 1.0) {
            return Err(Error::InvalidInput(format!("l_{j} = {l} is not in (0, 1)")));
        }
        // L(ε) = 0 when a single ball covers the torus; δ is capped at 1
        let big_l = recurrence(j).max(1);
        let raw = l / j as f64 / big_l as f64;
        let b = if raw < prev {
            raw
        } else {
            adjusted.push(i - 1);
            prev * (1.0 - 1e-9)
        };
        betas.push(b);
        prev = b;
    }
    Ok((FlatProfile::new(betas, 1e-14)?, adjusted))
}

/// Default `l_i = 1/(4i)`.
pub fn default_shell_gap(i: usize) -> f64 {
    0.25 / i as f64
}

/// Radial profile of a speed field.
#[derive(Debug, Clone, PartialEq)]
pub enum SpeedKind {
    /// `c·` everywhere, `c ∈ (0, 1]`.
    Constant(f64),
    /// `floor + (1 − floor)·η(|ξ|)`; `floor = 0` is the flat field itself.
    FlatAtP { profile: FlatProfile, floor: f64 },
    /// `|ξ|²` for `|ξ| ≤ 1/2`, blended to 1 at `|ξ| = 1`.
    QuadraticAtP,
}

/// A scalar field `α: Ω → [0, 1]` vanishing only at `p` and equal to 1
/// outside `B(p, chart_radius)`.
#[derive(Debug, Clone)]
pub struct SpeedField {
    kind: SpeedKind,
    flow: SuspensionFlow,
    p: SuspensionPoint,
    chart_radius: f64,
}

impl SpeedField {
    pub fn new(kind: SpeedKind, flow: SuspensionFlow, p: SuspensionPoint, chart_radius: f64) -> Result<Self> {
        if !(chart_radius > 0.0 && chart_radius < 0.25) {
            return Err(Error::InvalidInput(format!("chart_radius {chart_radius} must lie in (0, 1/4)")));
        }
        if p.base.dim() != flow.base_map().dim() {
            return Err(Error::InvalidInput("stopped point has the wrong dimension".into()));
        }
        match &kind {
            SpeedKind::Constant(c) if !(*c > 0.0 && *c <= 1.0) => {
                return Err(Error::InvalidInput(format!("constant speed {c} not in (0, 1]")))
            }
            SpeedKind::FlatAtP { floor, .. } if !(0.0..1.0).contains(floor) => {
                return Err(Error::InvalidInput(format!("floor {floor} not in [0, 1)")))
            }
            _ => {}
        }
        Ok(SpeedField { kind, flow, p, chart_radius })
    }

    pub fn constant(c: f64, flow: SuspensionFlow) -> Result<Self> {
        let p = SuspensionPoint::new(crate::torus::TorusPoint::origin(flow.base_map().dim()), 0.0);
        Self::new(SpeedKind::Constant(c), flow, p, 0.2)
    }

    pub fn kind(&self) -> &SpeedKind {
        &self.kind
    }

    pub fn flow(&self) -> &SuspensionFlow {
        &self.flow
    }

    pub fn stopped_point(&self) -> &SuspensionPoint {
        &self.p
    }

    pub fn chart_radius(&self) -> f64 {
        self.chart_radius
    }

    /// Same field with another flat floor.
    pub fn with_floor(&self, floor: f64) -> Result<Self> {
        match &self.kind {
            SpeedKind::FlatAtP { profile, .. } => Self::new(
                SpeedKind::FlatAtP { profile: profile.clone(), floor },
                self.flow.clone(),
                self.p.clone(),
                self.chart_radius,
            ),
            _ => Err(Error::InvalidInput("floor applies to flat fields only".into())),
        }
    }

    /// Chart norm `|ξ(q)| = 2·d(q, p)/chart_radius`.
    pub fn chart_norm(&self, q: &SuspensionPoint) -> f64 {
        2.0 * self.flow.dist(q, &self.p) / self.chart_radius
    }

    pub(crate) fn chart_norm_raw(&self, x: &[f64], s: f64) -> f64 {
        let d = crate::suspension::dist_raw(self.flow.base_map(), x, s, self.p.base.coords(), self.p.height);
        2.0 * d / self.chart_radius
    }

    /// Radial profile as a function of the chart norm.
    pub fn radial(&self, u: f64) -> f64 {
        match &self.kind {
            SpeedKind::Constant(c) => *c,
            _ if u >= 1.0 => 1.0,
            SpeedKind::FlatAtP { profile, floor } => {
                let e = profile.eta(u).expect("chart norm lies in [0, 2]");
                floor + (1.0 - floor) * e
            }
            SpeedKind::QuadraticAtP => quadratic_profile(u),
        }
    }

    pub fn speed_at(&self, q: &SuspensionPoint) -> f64 {
        if let SpeedKind::Constant(c) = self.kind {
            return c;
        }
        self.radial(self.chart_norm(q))
    }

    pub(crate) fn speed_raw(&self, x: &[f64], s: f64) -> f64 {
        if let SpeedKind::Constant(c) = self.kind {
            return c;
        }
        self.radial(self.chart_norm_raw(x, s))
    }
}

/// `u²` on `[0, 1/2]`, a smooth monotone blend into 1 on `(1/2, 1)`, 1 beyond.
pub fn quadratic_profile(u: f64) -> f64 {
    if u <= 0.5 {
        u * u
    } else if u >= 1.0 {
        1.0
    } else {
        let s = smoothstep((u - 0.5) / 0.5);
        u * u * (1.0 - s) + s
    }
}

pub fn speed_at(field: &SpeedField, q: &SuspensionPoint) -> f64 {
    field.speed_at(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{BaseMap, TorusPoint};

    fn profile() -> FlatProfile {
        FlatProfile::geometric(0.5, 64).unwrap()
    }

    #[test]
    fn mollifier_values() {
        assert!((mollifier_h(1.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((mollifier_h(1.0) - 0.3678794).abs() < 1e-7);
        assert_eq!(mollifier_h(0.0), 0.0);
        assert_eq!(mollifier_h(-0.5), 0.0);
    }

    #[test]
    fn mollifier_derivatives_match_differences() {
        for &t in &[0.2, 0.5, 1.3] {
            for k in 1..=4 {
                let h = 1e-5;
                let fd = (mollifier_derivative(t + h, k - 1) - mollifier_derivative(t - h, k - 1)) / (2.0 * h);
                let ex = mollifier_derivative(t, k);
                assert!((fd - ex).abs() <= 1e-6 * ex.abs().max(1.0), "k={k} t={t}: {fd} vs {ex}");
            }
        }
    }

    #[test]
    fn eta_piecewise_values() {
        let p = profile();
        assert_eq!(p.eta(-0.3).unwrap(), 0.0);
        assert_eq!(p.eta(0.0).unwrap(), 0.0);
        assert_eq!(p.eta(1.5).unwrap(), 1.0);
        assert_eq!(p.eta(1.0).unwrap(), 1.0);
        assert!(p.eta(2.5).is_err());
        assert!(p.eta(-1.5).is_err());
        assert!(p.eta(0.3).unwrap() > 0.0);
    }

    #[test]
    fn eta_shell_bound() {
        let p = profile();
        for k in 1..8usize {
            let ak = FlatProfile::alpha(k);
            let bound = p.beta(k as i64) * mollifier_h(1.0) / 2f64.powi(k as i32);
            for n in 1..50 {
                let t = ak * n as f64 / 50.0;
                assert!(p.eta(t).unwrap() < bound);
            }
        }
    }

    #[test]
    fn eta_monotone() {
        let p = profile();
        let mut prev = 0.0;
        for n in 0..=3000 {
            let t = -1.0 + 3.0 * n as f64 / 3000.0;
            let v = p.eta(t).unwrap();
            assert!(v >= prev, "t={t}");
            prev = v;
        }
    }

    #[test]
    fn derivative_matches_finite_difference_in_blend() {
        let p = profile();
        for &t in &[0.55, 0.7, 0.9, 0.3] {
            let h = 1e-5;
            let fd = (p.eta(t + h).unwrap() - p.eta(t - h).unwrap()) / (2.0 * h);
            let ex = p.eta_derivative(t, 1).unwrap();
            assert!((fd - ex).abs() <= 1e-6 * ex.abs(), "t={t}: {fd} vs {ex}");
        }
        assert_eq!(p.eta_derivative(-0.5, 1).unwrap(), 0.0);
        assert!(p.eta_derivative(0.3, 5).is_err());
    }

    #[test]
    fn first_derivative_vanishes_at_zero() {
        let p = profile();
        let d: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|t| p.eta_derivative(*t, 1).unwrap()).collect();
        assert!(d[0] > d[1] && d[1] > d[2] && d[2] >= 0.0, "{d:?}");
    }

    #[test]
    fn profile_recipe_substitution() {
        let (prof, adjusted) = build_flat_profile(|_| 1, |_| 0.5, 1, 4).unwrap();
        // β_0 = l_2/2 · 1 = 1/4
        assert!((prof.beta(0) - 0.25).abs() < 1e-15);
        assert_eq!(prof.beta(-1), 1.0);
        assert!(adjusted.is_empty());
        let (prof, _) = build_flat_profile(|j| (j % 3) as u64 + 1, |j| 1.0 / (j as f64 + 2.0), 2, 30).unwrap();
        for i in 0..30 {
            assert!(prof.beta(i) < prof.beta(i - 1) && prof.beta(i) > 0.0);
        }
        assert!(build_flat_profile(|_| 1, |_| 1.5, 1, 4).is_err());
        assert!(build_flat_profile(|_| 1, |_| 0.5, 1, 0).is_err());
    }

    fn field(kind: SpeedKind) -> SpeedField {
        let flow = SuspensionFlow::new(BaseMap::cat_map());
        let p = SuspensionPoint::new(TorusPoint::new(vec![0.3, 0.6]), 0.0);
        SpeedField::new(kind, flow, p, 0.2).unwrap()
    }

    #[test]
    fn condition_h() {
        let flat = field(SpeedKind::FlatAtP { profile: profile(), floor: 0.0 });
        let quad = field(SpeedKind::QuadraticAtP);
        let p = flat.stopped_point().clone();
        assert_eq!(flat.speed_at(&p), 0.0);
        assert_eq!(quad.speed_at(&p), 0.0);
        let far = SuspensionPoint::new(TorusPoint::new(vec![0.8, 0.1]), 0.5);
        assert_eq!(flat.speed_at(&far), 1.0);
        assert_eq!(quad.speed_at(&far), 1.0);
        // |ξ| = 0.25 ⇔ d = chart_radius / 8
        let q = SuspensionPoint::new(TorusPoint::new(vec![0.3 + 0.025, 0.6]), 0.0);
        assert!((quad.speed_at(&q) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn quadratic_annulus_bounds() {
        for n in 1..1000 {
            let u = 0.5 + 0.5 * n as f64 / 1000.0;
            let v = quadratic_profile(u);
            assert!(v > 0.25 && v < 2.0 && v <= 1.0);
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let flow = SuspensionFlow::new(BaseMap::cat_map());
        let p = SuspensionPoint::new(TorusPoint::new(vec![0.3, 0.6]), 0.0);
        assert!(SpeedField::new(SpeedKind::QuadraticAtP, flow.clone(), p.clone(), 0.3).is_err());
        assert!(SpeedField::new(SpeedKind::Constant(0.0), flow.clone(), p.clone(), 0.2).is_err());
        assert!(SpeedField::new(SpeedKind::Constant(1.5), flow, p, 0.2).is_err());
    }
}
