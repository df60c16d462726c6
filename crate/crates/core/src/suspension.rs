//! The standard suspension of a base map under the constant roof 1.
//!
//! Points are pairs `(x, s)` with `s ∈ [0, 1)`; the top of each fiber is
//! glued to the bottom of the next one, `(x, 1) ~ (f(x), 0)`, and the flow
//! moves every point upward at unit speed.

use serde::{Deserialize, Serialize};

use crate::torus::{dist_coords, BaseMap, TorusPoint, MAX_DIM};

/// A point `(x, s)` of the suspension space with canonical height in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspensionPoint {
    pub base: TorusPoint,
    pub height: f64,
}

impl SuspensionPoint {
    /// Panics unless `height ∈ [0, 1)`; use [`SuspensionFlow::point`] to reduce
    /// arbitrary heights across the identification.
    pub fn new(base: TorusPoint, height: f64) -> Self {
        assert!((0.0..1.0).contains(&height), "height {height} not in [0, 1)");
        SuspensionPoint { base, height }
    }
}

/// The unit-speed suspension flow `ψ_t` over a base map.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionFlow {
    base_map: BaseMap,
}

impl SuspensionFlow {
    pub fn new(base_map: BaseMap) -> Self {
        SuspensionFlow { base_map }
    }

    pub fn base_map(&self) -> &BaseMap {
        &self.base_map
    }

    /// Sup norm of the generating field; the fiber speed is one everywhere.
    pub fn field_norm(&self) -> f64 {
        1.0
    }

    /// Canonical representative of `(x, s)` for any real `s`.
    pub fn point(&self, base: TorusPoint, height: f64) -> SuspensionPoint {
        let k = height.floor();
        let mut s = height - k;
        let mut k = k as i64;
        if s >= 1.0 {
            s = 0.0;
            k += 1;
        }
        SuspensionPoint { base: self.base_map.apply(&base, k), height: s }
    }

    /// `ψ_t(q)`, crossing the identification as many times as needed.
    pub fn advance(&self, q: &SuspensionPoint, t: f64) -> SuspensionPoint {
        self.point(q.base.clone(), q.height + t)
    }

    /// Distance on the suspension space.
    ///
    /// Max of the height gap and the base distance, minimized over the
    /// direct comparison and the two comparisons across the seam (one point
    /// lifted to the bottom of the fiber above it).
    pub fn dist(&self, q: &SuspensionPoint, w: &SuspensionPoint) -> f64 {
        dist_raw(&self.base_map, q.base.coords(), q.height, w.base.coords(), w.height)
    }
}

/// `ψ_t(q)`.
pub fn suspension_advance(flow: &SuspensionFlow, q: &SuspensionPoint, t: f64) -> SuspensionPoint {
    flow.advance(q, t)
}

pub fn dist_susp(flow: &SuspensionFlow, q: &SuspensionPoint, w: &SuspensionPoint) -> f64 {
    flow.dist(q, w)
}

/// Comparison of `a` lifted across the seam, `(f(xa), sa − 1)`, against `b`.
#[inline]
fn seam_dist(map: &BaseMap, xa: &[f64], sa: f64, xb: &[f64], sb: f64, best: f64) -> f64 {
    let gap = (sa - 1.0 - sb).abs();
    if gap >= best {
        return best;
    }
    let mut buf = [0.0; MAX_DIM];
    let fx = &mut buf[..xa.len()];
    map.step_into(xa, fx);
    best.min(gap.max(dist_coords(fx, xb)))
}

/// Suspension distance on raw coordinates.
#[inline]
pub(crate) fn dist_raw(map: &BaseMap, xa: &[f64], sa: f64, xb: &[f64], sb: f64) -> f64 {
    let direct = (sa - sb).abs().max(dist_coords(xa, xb));
    let d = seam_dist(map, xa, sa, xb, sb, direct);
    seam_dist(map, xb, sb, xa, sa, d)
}
