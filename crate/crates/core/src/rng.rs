//! Seeded random streams and Birkhoff sampling of invariant measures.
//!
//! Every consumer draws from its own `(seed, stream)` pair, so results do not
//! depend on evaluation order or on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::suspension::SuspensionPoint;
use crate::torus::{BaseMap, TorusPoint, MAX_DIM};

/// Independent generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point of the torus.
pub fn uniform_point<R: Rng>(rng: &mut R, dim: usize) -> TorusPoint {
    TorusPoint::new((0..dim).map(|_| rng.gen::<f64>()).collect::<Vec<_>>())
}

/// Samples of an invariant measure taken along orbits of the base map.
///
/// Each chain starts at a uniform point on its own stream, discards
/// `burn_in` iterates and then records `chain_len` consecutive iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirkhoffSampler {
    pub burn_in: usize,
    pub chain_len: usize,
}

impl Default for BirkhoffSampler {
    fn default() -> Self {
        BirkhoffSampler { burn_in: 64, chain_len: 256 }
    }
}

impl BirkhoffSampler {
    pub fn base_samples(&self, map: &BaseMap, n: usize, seed: u64, stream: u64) -> Vec<TorusPoint> {
        let dim = map.dim();
        let chain_len = self.chain_len.max(1);
        let mut out = Vec::with_capacity(n);
        let mut chain = 0u64;
        let mut x = [0.0; MAX_DIM];
        let mut y = [0.0; MAX_DIM];
        while out.len() < n {
            let mut rng = stream_rng(seed, stream.wrapping_mul(1 << 20).wrapping_add(chain));
            for v in x[..dim].iter_mut() {
                *v = rng.gen::<f64>();
            }
            for _ in 0..self.burn_in {
                map.step_into(&x[..dim], &mut y[..dim]);
                x = y;
            }
            for _ in 0..chain_len.min(n - out.len()) {
                out.push(TorusPoint::new(x[..dim].to_vec()));
                map.step_into(&x[..dim], &mut y[..dim]);
                x = y;
            }
            chain += 1;
        }
        out
    }

    /// Base samples lifted to the suspension with independent uniform heights.
    pub fn suspension_samples(&self, map: &BaseMap, n: usize, seed: u64, stream: u64) -> Vec<SuspensionPoint> {
        let base = self.base_samples(map, n, seed, stream);
        let mut rng = stream_rng(seed, stream.wrapping_mul(1 << 20).wrapping_add((1 << 20) - 1));
        base.into_iter().map(|x| SuspensionPoint::new(x, rng.gen::<f64>())).collect()
    }
}
