//! Points on the flat m-torus and the discrete base systems acting on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 8;

/// Reduces a real number to its representative in `[0, 1)`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two points of the circle `R/Z`.
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// A point of the m-torus with every coordinate in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    /// Builds a point, reducing each coordinate mod 1.
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        let mut c: Vec<f64> = coords.into();
        assert!(!c.is_empty(), "torus dimension must be at least 1");
        for v in c.iter_mut() {
            *v = wrap_unit(*v);
        }
        TorusPoint(c)
    }

    pub fn origin(dim: usize) -> Self {
        TorusPoint(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Max-of-circle-distances metric on the torus.
pub fn dist_base(x: &TorusPoint, y: &TorusPoint) -> f64 {
    dist_coords(x.coords(), y.coords())
}

#[inline]
pub(crate) fn dist_coords(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| circle_dist(*a, *b)).fold(0.0, f64::max)
}

/// Integer square matrix with determinant ±1, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Automorphism {
    dim: usize,
    forward: Vec<i64>,
    inverse: Vec<i64>,
}

impl Automorphism {
    pub fn new(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DIM || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("automorphism matrix must be square and non-empty".into()));
        }
        let forward: Vec<i64> = rows.iter().flatten().copied().collect();
        let det = determinant(&forward, dim);
        if det.abs() != 1 {
            return Err(Error::InvalidInput(format!("automorphism matrix has determinant {det}, expected ±1")));
        }
        // adjugate / det is exact since det = ±1
        let inverse = adjugate(&forward, dim).into_iter().map(|a| a * det).collect();
        Ok(Automorphism { dim, forward, inverse })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.forward.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn inverse_rows(&self) -> Vec<Vec<i64>> {
        self.inverse.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    #[inline]
    fn apply_matrix(m: &[i64], dim: usize, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &m[i * dim..(i + 1) * dim];
            let s: f64 = row.iter().zip(x).map(|(a, v)| *a as f64 * v).sum();
            *o = wrap_unit(s);
        }
    }

    /// Sum of `ln|λ|` over eigenvalues outside the unit circle, when it can be
    /// computed in closed form (dimension 1 and 2).
    pub fn expansion_entropy(&self) -> Option<f64> {
        match self.dim {
            1 => Some(0.0),
            2 => {
                let (a, b, c, d) =
                    (self.forward[0] as f64, self.forward[1] as f64, self.forward[2] as f64, self.forward[3] as f64);
                let tr = a + d;
                let det = a * d - b * c;
                let disc = tr * tr - 4.0 * det;
                if disc <= 0.0 {
                    // complex pair on the unit circle (|det| = 1)
                    return Some(0.0);
                }
                let l1 = ((tr + disc.sqrt()) / 2.0).abs();
                let l2 = ((tr - disc.sqrt()) / 2.0).abs();
                Some([l1, l2].iter().filter(|l| **l > 1.0).map(|l| l.ln()).sum())
            }
            _ => None,
        }
    }
}

fn minor(m: &[i64], dim: usize, skip_r: usize, skip_c: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity((dim - 1) * (dim - 1));
    for r in 0..dim {
        if r == skip_r {
            continue;
        }
        for c in 0..dim {
            if c != skip_c {
                out.push(m[r * dim + c]);
            }
        }
    }
    out
}

fn determinant(m: &[i64], dim: usize) -> i64 {
    match dim {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => (0..dim)
            .map(|c| {
                let sign = if c % 2 == 0 { 1 } else { -1 };
                sign * m[c] * determinant(&minor(m, dim, 0, c), dim - 1)
            })
            .sum(),
    }
}

fn adjugate(m: &[i64], dim: usize) -> Vec<i64> {
    if dim == 1 {
        return vec![1];
    }
    let mut adj = vec![0; dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            let sign = if (r + c) % 2 == 0 { 1 } else { -1 };
            // transpose of the cofactor matrix
            adj[c * dim + r] = sign * determinant(&minor(m, dim, r, c), dim - 1);
        }
    }
    adj
}

/// A discrete dynamical system on the torus.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseMap {
    ToralAutomorphism(Automorphism),
    Rotation(Vec<f64>),
}

/// Serializable description of a [`BaseMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseMapSpec {
    ToralAutomorphism { matrix: Vec<Vec<i64>> },
    Rotation { angles: Vec<f64> },
}

impl BaseMap {
    pub fn automorphism(rows: &[Vec<i64>]) -> Result<Self> {
        Ok(BaseMap::ToralAutomorphism(Automorphism::new(rows)?))
    }

    /// The hyperbolic automorphism `[[2,1],[1,1]]`.
    pub fn cat_map() -> Self {
        Self::automorphism(&[vec![2, 1], vec![1, 1]]).expect("cat map is unimodular")
    }

    pub fn rotation(angles: impl Into<Vec<f64>>) -> Self {
        let a: Vec<f64> = angles.into();
        assert!(!a.is_empty() && a.len() <= MAX_DIM, "rotation dimension out of range");
        BaseMap::Rotation(a.into_iter().map(wrap_unit).collect())
    }

    /// Rotation of the circle by the golden mean `(√5 − 1)/2`.
    pub fn golden_rotation() -> Self {
        Self::rotation(vec![(5f64.sqrt() - 1.0) / 2.0])
    }

    pub fn identity(dim: usize) -> Self {
        Self::rotation(vec![0.0; dim])
    }

    pub fn from_spec(spec: &BaseMapSpec) -> Result<Self> {
        match spec {
            BaseMapSpec::ToralAutomorphism { matrix } => Self::automorphism(matrix),
            BaseMapSpec::Rotation { angles } => {
                if angles.is_empty() || angles.len() > MAX_DIM || angles.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidInput("rotation angles must be finite and non-empty".into()));
                }
                Ok(Self::rotation(angles.clone()))
            }
        }
    }

    pub fn spec(&self) -> BaseMapSpec {
        match self {
            BaseMap::ToralAutomorphism(a) => BaseMapSpec::ToralAutomorphism { matrix: a.rows() },
            BaseMap::Rotation(a) => BaseMapSpec::Rotation { angles: a.clone() },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseMap::ToralAutomorphism(a) => a.dim(),
            BaseMap::Rotation(a) => a.len(),
        }
    }

    pub fn is_isometry(&self) -> bool {
        matches!(self, BaseMap::Rotation(_))
    }

    /// Entropy of the map in nats per iterate, when known in closed form.
    pub fn known_entropy(&self) -> Option<f64> {
        match self {
            BaseMap::ToralAutomorphism(a) => a.expansion_entropy(),
            BaseMap::Rotation(_) => Some(0.0),
        }
    }

    /// One forward step written into `out`.
    #[inline]
    pub(crate) fn step_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            BaseMap::ToralAutomorphism(a) => Automorphism::apply_matrix(&a.forward, a.dim, x, out),
            BaseMap::Rotation(th) => {
                for ((o, v), t) in out.iter_mut().zip(x).zip(th) {
                    *o = wrap_unit(v + t);
                }
            }
        }
    }

    #[inline]
    pub(crate) fn step_back_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            BaseMap::ToralAutomorphism(a) => Automorphism::apply_matrix(&a.inverse, a.dim, x, out),
            BaseMap::Rotation(th) => {
                for ((o, v), t) in out.iter_mut().zip(x).zip(th) {
                    *o = wrap_unit(v - t);
                }
            }
        }
    }

    /// In-place `n`-fold composition on raw coordinates (inverse for `n < 0`).
    pub(crate) fn iterate_coords(&self, x: &mut [f64], n: i64) {
        if n == 0 {
            return;
        }
        if let BaseMap::Rotation(th) = self {
            for (v, t) in x.iter_mut().zip(th) {
                *v = wrap_unit(*v + n as f64 * t);
            }
            return;
        }
        let mut buf = vec![0.0; x.len()];
        for _ in 0..n.unsigned_abs() {
            if n > 0 {
                self.step_into(x, &mut buf);
            } else {
                self.step_back_into(x, &mut buf);
            }
            x.copy_from_slice(&buf);
        }
    }

    /// `f^n(x)`; negative `n` applies the exact inverse.
    pub fn apply(&self, x: &TorusPoint, n: i64) -> TorusPoint {
        assert_eq!(x.dim(), self.dim(), "dimension mismatch");
        let mut c = x.0.clone();
        self.iterate_coords(&mut c, n);
        TorusPoint(c)
    }
}

/// Realizes `f^n`.
pub fn apply_base(map: &BaseMap, x: &TorusPoint, n: i64) -> TorusPoint {
    map.apply(x, n)
}
