//! Greedy Bowen-ball covers of an orbit table and the counts built on them.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use serde::{Deserialize, Serialize};

use super::orbits::OrbitTable;
use crate::error::{Error, Result};
use crate::suspension::SuspensionPoint;
use crate::torus::{BaseMap, TorusPoint};

/// How a count table entry is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GreedyCover,
    MaxSeparated,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GreedyCover => "greedy_cover",
            Method::MaxSeparated => "max_separated",
        }
    }
}

/// Multiplicative hash for packed cell keys.
#[derive(Default)]
struct CellHasher(u64);

impl Hasher for CellHasher {
    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.write_u64(*b as u64);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(26) ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

type Cells = HashMap<u64, Vec<u32>, BuildHasherDefault<CellHasher>>;

/// Hash grid over the base coordinates at the first and last snapshot.
struct CellIndex {
    per_axis: i64,
    cells: Cells,
    scratch_a: Vec<[f64; 2]>,
    scratch_b: Vec<[f64; 2]>,
}

impl CellIndex {
    fn new(radius: f64) -> Self {
        // cells at least `radius` wide, so neighbors within one cell suffice
        let per_axis = ((1.0 / radius).floor() as i64).clamp(1, 1 << 15);
        CellIndex { per_axis, cells: Cells::default(), scratch_a: Vec::new(), scratch_b: Vec::new() }
    }

    fn cell(&self, c: f64) -> i64 {
        ((c * self.per_axis as f64).floor() as i64).clamp(0, self.per_axis - 1)
    }

    /// Cell coordinates of every representation of point `i`.
    fn cell_keys(&mut self, table: &OrbitTable, i: usize, n: usize, radius: f64) -> Vec<[i64; 4]> {
        let kd = table.key_dim();
        let mut a = std::mem::take(&mut self.scratch_a);
        let mut b = std::mem::take(&mut self.scratch_b);
        table.key_coords(i, 0, radius, &mut a);
        if n > 1 {
            table.key_coords(i, n - 1, radius, &mut b);
        } else {
            b.clear();
            b.push([0.0; 2]);
        }
        let mut out = Vec::with_capacity(a.len() * b.len());
        for ka in &a {
            for kb in &b {
                let mut key = [0i64; 4];
                for d in 0..kd {
                    key[d] = self.cell(ka[d]);
                    if n > 1 {
                        key[kd + d] = self.cell(kb[d]);
                    }
                }
                out.push(key);
            }
        }
        self.scratch_a = a;
        self.scratch_b = b;
        out
    }

    fn pack(&self, key: &[i64; 4]) -> u64 {
        key.iter().fold(0u64, |acc, k| (acc << 16) | (*k as u64 & 0xffff))
    }

    /// Calls `visit` on the packed keys of the cell and its neighbors.
    fn neighbors(&self, key: &[i64; 4], dims: usize, mut visit: impl FnMut(u64) -> bool) -> bool {
        let g = self.per_axis;
        let span: Vec<i64> = if g <= 3 { (0..g).collect() } else { vec![-1, 0, 1] };
        let mut idx = vec![0usize; dims];
        loop {
            let mut k = *key;
            for d in 0..dims {
                k[d] = if g <= 3 { span[idx[d]] } else { (key[d] + span[idx[d]]).rem_euclid(g) };
            }
            if visit(self.pack(&k)) {
                return true;
            }
            let mut d = 0;
            loop {
                if d == dims {
                    return false;
                }
                idx[d] += 1;
                if idx[d] < span.len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }
}

/// Sequential `radius`-net over `order`: each point joins the first center
/// found within Bowen distance `radius`, or becomes a new center.
///
/// Returns the centers and, for each visited point, the index of its center.
pub(crate) fn greedy_net(table: &OrbitTable, order: &[u32], n: usize, radius: f64) -> (Vec<u32>, Vec<u32>) {
    let mut index = CellIndex::new(radius);
    let dims = if n > 1 { 2 * table.key_dim() } else { table.key_dim() };
    let mut centers: Vec<u32> = Vec::new();
    let mut assign = Vec::with_capacity(order.len());
    for &i in order {
        let keys = index.cell_keys(table, i as usize, n, radius);
        let mut found = None;
        'search: for key in &keys {
            let hit = index.neighbors(key, dims, |cell| {
                if let Some(list) = index.cells.get(&cell) {
                    for &c in list {
                        if table.within(i as usize, centers[c as usize] as usize, n, radius) {
                            found = Some(c);
                            return true;
                        }
                    }
                }
                false
            });
            if hit {
                break 'search;
            }
        }
        match found {
            Some(c) => assign.push(c),
            None => {
                let c = centers.len() as u32;
                centers.push(i);
                assign.push(c);
                let mut packed: Vec<u64> = keys.iter().map(|k| index.pack(k)).collect();
                packed.sort_unstable();
                packed.dedup();
                for p in packed {
                    index.cells.entry(p).or_default().push(c);
                }
            }
        }
    }
    (centers, assign)
}

/// Smallest number of the largest `sizes` whose sum reaches `need`.
pub(crate) fn largest_first(sizes: &mut [u64], need: u64) -> u64 {
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut acc = 0;
    for (k, s) in sizes.iter().enumerate() {
        acc += s;
        if acc >= need {
            return k as u64 + 1;
        }
    }
    sizes.len() as u64
}

pub(crate) fn core_size(len: usize, delta: f64) -> u64 {
    ((1.0 - delta) * len as f64).ceil().max(1.0) as u64
}

/// Result of one greedy cover.
#[derive(Debug, Clone)]
pub(crate) struct Cover {
    pub count: u64,
    /// Members of the counted clusters, in cloud order.
    pub core: Vec<u32>,
}

pub(crate) fn cover(table: &OrbitTable, delta: f64, n: usize, eps: f64) -> Cover {
    let order: Vec<u32> = (0..table.len() as u32).collect();
    let (centers, assign) = greedy_net(table, &order, n, eps);
    let mut sizes = vec![0u64; centers.len()];
    for &c in &assign {
        sizes[c as usize] += 1;
    }
    let mut ranked: Vec<(u64, u32)> = sizes.iter().enumerate().map(|(c, s)| (*s, c as u32)).collect();
    // ties broken by creation order keep the result independent of sorting details
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let need = core_size(table.len(), delta);
    let mut acc = 0;
    let mut keep = vec![false; centers.len()];
    let mut count = 0;
    for (s, c) in ranked {
        if acc >= need {
            break;
        }
        acc += s;
        keep[c as usize] = true;
        count += 1;
    }
    let core = order.iter().zip(&assign).filter(|(_, c)| keep[**c as usize]).map(|(i, _)| *i).collect();
    Cover { count, core }
}

/// `R(δ, n, ε)` from a table.
pub fn count_table(table: &OrbitTable, delta: f64, n: usize, eps: f64, method: Method) -> Result<u64> {
    check_cell(table, delta, n, eps)?;
    let c = cover(table, delta, n, eps);
    Ok(match method {
        Method::GreedyCover => c.count,
        Method::MaxSeparated => greedy_net(table, &c.core, n, 2.0 * eps).0.len() as u64,
    })
}

pub(crate) fn check_cell(table: &OrbitTable, delta: f64, n: usize, eps: f64) -> Result<()> {
    if table.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfDomain { value: delta, domain: "(0, 1)" });
    }
    if !(eps >= 1e-4) {
        return Err(Error::OutOfDomain { value: eps, domain: "[1e-4, inf)" });
    }
    if n == 0 || n > table.snapshots() {
        return Err(Error::InvalidInput(format!("n = {n} outside 1..={}", table.snapshots())));
    }
    Ok(())
}

/// Maximum over `0 ≤ i < n` of `d(f^i x, f^i y)`.
pub fn bowen_distance(map: &BaseMap, x: &TorusPoint, y: &TorusPoint, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let t = OrbitTable::for_map(map, &[x.clone(), y.clone()], n)?;
    Ok(t.bowen(0, 1, n))
}

/// Katok count `R(δ, n, ε)` of a base-map cloud.
pub fn katok_count(map: &BaseMap, cloud: &[TorusPoint], delta: f64, n: usize, eps: f64, method: Method) -> Result<u64> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let t = OrbitTable::for_map(map, cloud, n.max(1))?;
    count_table(&t, delta, n, eps, method)
}

/// Counts from product boxes over a suspension cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxCount {
    /// Katok count of the base points.
    pub map_count: u64,
    /// Boxes needed to cover the same share of the cloud.
    pub box_count: u64,
    /// Smallest integer larger than `1/ε`.
    pub k: u64,
}

/// Smallest integer strictly larger than `1/ε`.
pub fn k_of(eps: f64) -> u64 {
    (1.0 / eps).floor() as u64 + 1
}

/// Covers the suspension cloud by boxes `(base Bowen ball) × (height interval
/// of width 2ε)`: each base cluster is cut into height intervals, then the
/// largest boxes are taken first.
pub fn suspension_box_count(
    map: &BaseMap,
    cloud: &[SuspensionPoint],
    delta: f64,
    n: usize,
    eps: f64,
) -> Result<BoxCount> {
    let base: Vec<TorusPoint> = cloud.iter().map(|q| q.base.clone()).collect();
    let table = OrbitTable::for_map(map, &base, n.max(1))?;
    check_cell(&table, delta, n, eps)?;
    Ok(box_count_table(&table, cloud, delta, n, eps))
}

pub(crate) fn box_count_table(
    table: &OrbitTable,
    cloud: &[SuspensionPoint],
    delta: f64,
    n: usize,
    eps: f64,
) -> BoxCount {
    let order: Vec<u32> = (0..table.len() as u32).collect();
    let (centers, assign) = greedy_net(table, &order, n, eps);
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); centers.len()];
    for (i, c) in assign.iter().enumerate() {
        members[*c as usize].push(cloud[i].height);
    }
    let mut map_sizes: Vec<u64> = members.iter().map(|m| m.len() as u64).collect();
    let mut boxes = Vec::new();
    for mut hs in members {
        hs.sort_unstable_by(f64::total_cmp);
        let mut k = 0;
        while k < hs.len() {
            let end = hs[k] + 2.0 * eps;
            let stop = k + hs[k..].partition_point(|h| *h < end);
            boxes.push((stop - k) as u64);
            k = stop;
        }
    }
    let need = core_size(table.len(), delta);
    BoxCount {
        map_count: largest_first(&mut map_sizes, need),
        box_count: largest_first(&mut boxes, need),
        k: k_of(eps),
    }
}
