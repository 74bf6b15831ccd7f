//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use segunc_core::{Dims, SampleSet, Spacing, VoxelGrid};

/// Uniform draw in `[0, 1)`.
pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Uniform integer in `lo..=hi`.
pub fn between(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

/// Probability mixing exact 0, 1 and 0.5 with uniform values, so both
/// saturated voxels and threshold ties occur.
fn probability(rng: &mut ChaCha8Rng) -> f64 {
    match rng.next_u32() % 10 {
        0 | 1 => 0.0,
        2 | 3 => 1.0,
        4 => 0.5,
        _ => unit(rng),
    }
}

/// A random sample set with sides in `1..=max_side` and the given N.
pub fn random_set(seed: u64, max_side: usize, n: usize) -> (SampleSet, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims::new(
        between(&mut rng, 1, max_side),
        between(&mut rng, 1, max_side),
        between(&mut rng, 1, max_side),
    )
    .unwrap();
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dims.len()).map(|_| probability(&mut rng)).collect())
        .collect();
    let grids = raw
        .iter()
        .map(|d| VoxelGrid::new(dims, Spacing::unit(), d.clone()).unwrap())
        .collect();
    (SampleSet::new(format!("r{seed}"), grids).unwrap(), raw)
}
