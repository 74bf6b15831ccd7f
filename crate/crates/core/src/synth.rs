//! Synthetic phantoms and simulated Monte Carlo dropout sample sets.
//!
//! A phantom is an analytic shape voxelized at voxel centers. Each simulated
//! sample perturbs the shape boundary radially, converts signed distance into
//! a probability with a logistic ramp, and finally inverts the probability
//! (`p -> 1 - p`) at randomly chosen voxels. Disagreement between samples
//! therefore concentrates at the boundary.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64`; sample `i`
//! of a case reads stream `i` of the case's generator, so output is
//! bit-reproducible across platforms.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{dice, BinaryMask, Dims, Error, Result, SampleSet, Spacing, VoxelGrid};

/// Analytic target shape, in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Ball around `center`.
    Sphere {
        /// Center in voxel coordinates.
        center: [f64; 3],
        /// Radius in voxels.
        radius: f64,
    },
    /// Axis-aligned ellipsoid.
    Ellipsoid {
        /// Center in voxel coordinates.
        center: [f64; 3],
        /// Semi-axes in voxels.
        radii: [f64; 3],
    },
    /// Union of two balls.
    TwoBlob {
        /// Centers in voxel coordinates.
        centers: [[f64; 3]; 2],
        /// Radii in voxels.
        radii: [f64; 2],
    },
}

impl Shape {
    /// Approximate signed distance in voxels: negative inside, zero on the surface.
    ///
    /// `offset(unit_direction)` moves the boundary outward along each ray from the center.
    fn signed_distance(&self, p: [f64; 3], offset: &impl Fn([f64; 3]) -> f64) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => ball_distance(p, center, radius, offset),
            Shape::Ellipsoid { center, radii } => {
                let d = sub(p, center);
                let len = norm(d);
                if len == 0.0 {
                    return -(min3(radii) + offset([1.0, 0.0, 0.0]));
                }
                let u = scale(d, 1.0 / len);
                // distance from center to the surface along u
                let k = norm([u[0] / radii[0], u[1] / radii[1], u[2] / radii[2]]);
                len - (1.0 / k + offset(u))
            }
            Shape::TwoBlob { centers, radii } => {
                let a = ball_distance(p, centers[0], radii[0], offset);
                let b = ball_distance(p, centers[1], radii[1], offset);
                a.min(b)
            }
        }
    }

    /// Axis-aligned extent of the shape as `(lo, hi)` voxel coordinates.
    fn extent(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Sphere { center, radius } => (center.map(|c| c - radius), center.map(|c| c + radius)),
            Shape::Ellipsoid { center, radii } => (
                [center[0] - radii[0], center[1] - radii[1], center[2] - radii[2]],
                [center[0] + radii[0], center[1] + radii[1], center[2] + radii[2]],
            ),
            Shape::TwoBlob { centers, radii } => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for (c, r) in centers.iter().zip(radii) {
                    for a in 0..3 {
                        lo[a] = lo[a].min(c[a] - r);
                        hi[a] = hi[a].max(c[a] + r);
                    }
                }
                (lo, hi)
            }
        }
    }

    fn is_valid(&self) -> bool {
        let positive = match *self {
            Shape::Sphere { radius, .. } => radius > 0.0,
            Shape::Ellipsoid { radii, .. } => radii.iter().all(|&r| r > 0.0),
            Shape::TwoBlob { radii, .. } => radii.iter().all(|&r| r > 0.0),
        };
        let (lo, hi) = self.extent();
        positive && lo.iter().chain(&hi).all(|v| v.is_finite())
    }
}

fn ball_distance(p: [f64; 3], center: [f64; 3], radius: f64, offset: &impl Fn([f64; 3]) -> f64) -> f64 {
    let d = sub(p, center);
    let len = norm(d);
    let u = if len == 0.0 {
        [1.0, 0.0, 0.0]
    } else {
        scale(d, 1.0 / len)
    };
    len - (radius + offset(u))
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: [f64; 3]) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

fn min3(a: [f64; 3]) -> f64 {
    a[0].min(a[1]).min(a[2])
}

/// A ground-truth phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    /// Grid dimensions.
    pub dims: Dims,
    /// Target shape.
    pub shape: Shape,
    /// Seed for every random draw tied to this phantom.
    pub seed: u64,
}

impl PhantomSpec {
    /// Fails unless the shape fits inside the grid with a one-voxel margin.
    pub fn validate(&self) -> Result<()> {
        Dims::new(self.dims.nx, self.dims.ny, self.dims.nz)?;
        if !self.shape.is_valid() {
            return Err(Error::InvalidParameter("shape radii must be positive and finite"));
        }
        let (lo, hi) = self.shape.extent();
        let n = self.dims.as_array();
        if (0..3).any(|a| lo[a] < 1.0 || hi[a] > (n[a] as f64) - 2.0) {
            return Err(Error::ShapeOutOfBounds);
        }
        Ok(())
    }
}

/// How simulated samples deviate from the phantom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Scale in voxels of the per-sample radial boundary perturbation, >= 0.
    pub boundary_sigma: f64,
    /// Fraction of voxels whose probability is inverted, in `[0, 0.5)`.
    pub flip_rate: f64,
    /// Width in voxels of the logistic ramp from signed distance to probability, >= 0.
    pub prob_softness: f64,
}

impl NoiseSpec {
    /// No perturbation, no flips, hard {0, 1} probabilities.
    pub const NONE: NoiseSpec = NoiseSpec {
        boundary_sigma: 0.0,
        flip_rate: 0.0,
        prob_softness: 0.0,
    };

    /// Checks the documented ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_sigma.is_finite() && self.boundary_sigma >= 0.0) {
            return Err(Error::InvalidParameter("boundary_sigma must be >= 0"));
        }
        if !(self.flip_rate >= 0.0 && self.flip_rate < 0.5) {
            return Err(Error::InvalidParameter("flip_rate must lie in [0, 0.5)"));
        }
        if !(self.prob_softness.is_finite() && self.prob_softness >= 0.0) {
            return Err(Error::InvalidParameter("prob_softness must be >= 0"));
        }
        Ok(())
    }
}

/// Voxelizes the phantom: a voxel is foreground iff its center lies inside the shape.
pub fn make_phantom(spec: &PhantomSpec) -> Result<BinaryMask> {
    spec.validate()?;
    let dims = spec.dims;
    let none = |_: [f64; 3]| 0.0;
    BinaryMask::from_fn(dims, Spacing::unit(), |i| {
        let [x, y, z] = dims.coords(i);
        spec.shape.signed_distance([x as f64, y as f64, z as f64], &none) <= 0.0
    })
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - uniform(rng);
    let u2 = uniform(rng);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Random smooth boundary offset: a constant term plus a first-order directional term.
#[derive(Debug, Clone, Copy)]
struct BoundaryOffset {
    constant: f64,
    directional: [f64; 3],
}

impl BoundaryOffset {
    fn draw(rng: &mut ChaCha8Rng, sigma: f64) -> Self {
        if sigma == 0.0 {
            return Self {
                constant: 0.0,
                directional: [0.0; 3],
            };
        }
        let constant = sigma * gaussian(rng);
        let half = 0.5 * sigma;
        let directional = [half * gaussian(rng), half * gaussian(rng), half * gaussian(rng)];
        Self { constant, directional }
    }

    fn at(&self, u: [f64; 3]) -> f64 {
        self.constant + self.directional[0] * u[0] + self.directional[1] * u[1] + self.directional[2] * u[2]
    }
}

fn probability(signed_distance: f64, softness: f64) -> f64 {
    if softness == 0.0 {
        if signed_distance <= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 / (1.0 + libm::exp(signed_distance / softness))
    }
}

/// Draws sample `index` for the phantom.
pub fn simulate_sample(spec: &PhantomSpec, noise: &NoiseSpec, index: u64) -> Result<VoxelGrid> {
    noise.validate()?;
    let dims = Dims::new(spec.dims.nx, spec.dims.ny, spec.dims.nz)?;
    if !spec.shape.is_valid() {
        return Err(Error::InvalidParameter("shape radii must be positive and finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let offset = BoundaryOffset::draw(&mut rng, noise.boundary_sigma);
    let shift = |u: [f64; 3]| offset.at(u);
    let mut data = Vec::with_capacity(dims.len());
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                let d = spec.shape.signed_distance([x as f64, y as f64, z as f64], &shift);
                data.push(probability(d, noise.prob_softness));
            }
        }
    }
    if noise.flip_rate > 0.0 {
        for p in &mut data {
            if uniform(&mut rng) < noise.flip_rate {
                *p = 1.0 - *p;
            }
        }
    }
    VoxelGrid::new(dims, Spacing::unit(), data)
}

/// Draws `n >= 2` independent samples for the phantom.
pub fn simulate_samples(spec: &PhantomSpec, noise: &NoiseSpec, n: usize, case_id: &str) -> Result<SampleSet> {
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let samples = (0..n as u64)
        .map(|i| simulate_sample(spec, noise, i))
        .collect::<Result<Vec<_>>>()?;
    SampleSet::new(case_id, samples)
}

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    /// Number of cases, at least 3.
    pub n_cases: usize,
    /// Noise levels; case `i` uses level `i % noise_grid.len()`.
    pub noise_grid: Vec<NoiseSpec>,
    /// Volume dims of every case.
    pub dims: Dims,
    /// Root seed; each case derives its own seed from it.
    pub base_seed: u64,
    /// Samples per case.
    pub n_samples: usize,
}

/// Default cohort size, matching a 55-case test split.
pub const DEFAULT_COHORT_CASES: usize = 55;
/// Default samples per case.
pub const DEFAULT_SAMPLES: usize = 10;
/// Default cohort seed.
pub const DEFAULT_SEED: u64 = 20_200_401;

/// Eleven levels from noiseless agreement to heavy boundary disagreement.
pub fn default_noise_grid() -> Vec<NoiseSpec> {
    (0..=10)
        .map(|k| {
            let s = k as f64 / 10.0;
            NoiseSpec {
                boundary_sigma: 4.0 * s,
                flip_rate: 0.002 * s,
                prob_softness: 0.5 + 2.0 * s,
            }
        })
        .collect()
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_cases: DEFAULT_COHORT_CASES,
            noise_grid: default_noise_grid(),
            dims: Dims { nx: 64, ny: 64, nz: 64 },
            base_seed: DEFAULT_SEED,
            n_samples: DEFAULT_SAMPLES,
        }
    }
}

/// One generated case.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCase {
    /// Ground-truth phantom.
    pub truth: PhantomSpec,
    /// Shape the simulated samples scatter around. Its deviation from the
    /// truth grows with the noise level.
    pub prediction: PhantomSpec,
    /// Noise applied to the samples.
    pub noise: NoiseSpec,
    /// Index into the noise grid.
    pub level: usize,
    /// The simulated samples.
    pub samples: SampleSet,
    /// Voxelized ground truth.
    pub ground_truth: BinaryMask,
}

/// SplitMix64 finalizer, used to derive per-case seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CohortSpec {
    /// Checks sizes and every noise level.
    pub fn validate(&self) -> Result<()> {
        if self.n_cases < 3 {
            return Err(Error::InvalidParameter("a cohort needs at least 3 cases"));
        }
        if self.noise_grid.is_empty() {
            return Err(Error::InvalidParameter("noise grid is empty"));
        }
        if self.n_samples < 2 {
            return Err(Error::TooFewSamples(self.n_samples));
        }
        let min_side = self.dims.nx.min(self.dims.ny).min(self.dims.nz);
        if min_side < 8 {
            return Err(Error::InvalidParameter(
                "cohort volumes need at least 8 voxels per side",
            ));
        }
        self.noise_grid.iter().try_for_each(NoiseSpec::validate)
    }

    /// Identifier of case `index`.
    pub fn case_id(&self, index: usize) -> alloc::string::String {
        format!("case_{index:03}")
    }

    /// Generates case `index` alone; cases are independent of each other.
    pub fn case(&self, index: usize) -> Result<SyntheticCase> {
        self.validate()?;
        let level = index % self.noise_grid.len();
        let noise = self.noise_grid[level];
        let seed = mix(self.base_seed ^ mix(index as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let n = self.dims.as_array().map(|v| v as f64);
        let side = n[0].min(n[1]).min(n[2]);
        let mut radii = [0.0; 3];
        for r in &mut radii {
            *r = side * (0.14 + 0.09 * uniform(&mut rng));
        }
        let mut center = [0.0; 3];
        for a in 0..3 {
            center[a] = (n[a] - 1.0) / 2.0 + side * 0.05 * (2.0 * uniform(&mut rng) - 1.0);
        }
        let truth = PhantomSpec {
            dims: self.dims,
            shape: Shape::Ellipsoid { center, radii },
            seed,
        };
        let ground_truth = make_phantom(&truth)?;

        // Systematic error of the "model": shifted, rescaled shape. Scales with sigma.
        let sigma = noise.boundary_sigma;
        let mut p_center = center;
        let mut p_radii = radii;
        for a in 0..3 {
            p_center[a] += 0.75 * sigma * gaussian(&mut rng);
            p_radii[a] = (radii[a] * (1.0 + 0.08 * sigma * gaussian(&mut rng))).max(1.0);
        }
        let prediction = PhantomSpec {
            dims: self.dims,
            shape: Shape::Ellipsoid {
                center: p_center,
                radii: p_radii,
            },
            seed: mix(seed),
        };
        let samples = simulate_samples(&prediction, &noise, self.n_samples, &self.case_id(index))?;
        Ok(SyntheticCase {
            truth,
            prediction,
            noise,
            level,
            samples,
            ground_truth,
        })
    }
}

/// Generates every case of the cohort in order.
///
/// Holds all sample volumes in memory; use [`CohortSpec::case`] to stream.
pub fn make_cohort(spec: &CohortSpec) -> Result<Vec<SyntheticCase>> {
    spec.validate()?;
    (0..spec.n_cases).map(|i| spec.case(i)).collect()
}

/// Dice between a case's consensus mask and its ground truth.
pub fn consensus_dice(case: &SyntheticCase, threshold: f64) -> Result<f64> {
    let consensus = crate::uncertainty::consensus_mask(&case.samples, threshold)?;
    dice(&consensus, &case.ground_truth)
}
