//! CT preprocessing: HU windowing, z-score normalization, resampling, and the
//! liver and tumor recipes built from them.
//!
//! Resampling uses corner-center alignment: output voxel `i` samples input
//! coordinate `i * (n_in - 1) / (n_out - 1)` on each axis, and a single
//! output voxel samples the input center. Intensities are interpolated
//! trilinearly, labels and masks by nearest neighbor. Output spacing is the
//! input spacing scaled by `n_in / n_out`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::grid::{ensure_same_dims, Spacing};
use crate::{bounding_box, BinaryMask, Dims, Error, Result, VoxelGrid};

/// Clamping window in Hounsfield units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    lo: f64,
    hi: f64,
}

impl WindowSpec {
    /// Soft tissue window used by the liver recipe.
    pub const SOFT_TISSUE: WindowSpec = WindowSpec { lo: -120.0, hi: 240.0 };
    /// Liver window used by the tumor recipe.
    pub const LIVER_TUMOR: WindowSpec = WindowSpec { lo: -30.0, hi: 200.0 };

    /// Window `[lo, hi]`; requires finite `lo < hi`.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidWindow { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Lower bound.
    pub fn lo(&self) -> f64 {
        self.lo
    }

    /// Upper bound.
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    fn apply(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// Mean and standard deviation used for z-scoring, with a note on their origin.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    mean: f64,
    std: f64,
    provenance: String,
}

impl NormalizationStats {
    /// Requires a finite mean and finite `std > 0`.
    pub fn new(mean: f64, std: f64, provenance: impl Into<String>) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::InvalidStats { mean, std });
        }
        Ok(Self {
            mean,
            std,
            provenance: provenance.into(),
        })
    }

    /// Mean 0, std 1: z-scoring becomes the identity.
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            provenance: "identity".into(),
        }
    }

    /// Mean.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard deviation.
    pub fn std(&self) -> f64 {
        self.std
    }

    /// Which cohort the statistics summarize.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }
}

/// Interpolation kernel for [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Trilinear, for intensities.
    Trilinear,
    /// Nearest neighbor, for label grids.
    Nearest,
}

/// Clamps every voxel into the window.
pub fn window(grid: &VoxelGrid, spec: &WindowSpec) -> VoxelGrid {
    let data = grid.data().iter().map(|&v| spec.apply(v)).collect();
    VoxelGrid::from_parts_unchecked(grid.dims(), grid.spacing(), data)
}

/// Maps every voxel to `(v - mean) / std`.
pub fn zscore(grid: &VoxelGrid, stats: &NormalizationStats) -> VoxelGrid {
    let data = grid.data().iter().map(|&v| (v - stats.mean) / stats.std).collect();
    VoxelGrid::from_parts_unchecked(grid.dims(), grid.spacing(), data)
}

/// Pooled mean and population standard deviation over every voxel of `grids`.
pub fn compute_stats(grids: &[VoxelGrid]) -> Result<NormalizationStats> {
    let count: usize = grids.iter().map(|g| g.data().len()).sum();
    if count < 2 {
        return Err(Error::NotEnoughData { required: 2 });
    }
    let values = || grids.iter().flat_map(|g| g.data().iter().copied());
    let mean = values().sum::<f64>() / count as f64;
    let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    NormalizationStats::new(mean, libm::sqrt(var), "pooled over supplied volumes")
}

/// Per-axis sample positions: lower index, upper index, weight of the upper one.
fn axis_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let c = if n_out == 1 {
                (n_in - 1) as f64 / 2.0
            } else {
                (i * (n_in - 1)) as f64 / (n_out - 1) as f64
            };
            let lo = (libm::floor(c) as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, c - lo as f64)
        })
        .collect()
}

fn nearest_positions(n_in: usize, n_out: usize) -> Vec<usize> {
    axis_positions(n_in, n_out)
        .into_iter()
        .map(|(lo, hi, w)| if w >= 0.5 { hi } else { lo })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    let v = a + w * (b - a);
    v.clamp(a.min(b), a.max(b))
}

fn rescaled_spacing(spacing: Spacing, from: Dims, to: Dims) -> Spacing {
    let (f, t, s) = (from.as_array(), to.as_array(), spacing.0);
    Spacing([
        s[0] * f[0] as f64 / t[0] as f64,
        s[1] * f[1] as f64 / t[1] as f64,
        s[2] * f[2] as f64 / t[2] as f64,
    ])
}

/// Resamples an intensity or label grid to `target`.
pub fn resample(grid: &VoxelGrid, target: Dims, interpolation: Interpolation) -> Result<VoxelGrid> {
    let target = Dims::new(target.nx, target.ny, target.nz)?;
    let src = grid.dims();
    let spacing = rescaled_spacing(grid.spacing(), src, target);
    let v = grid.data();
    let mut out = Vec::with_capacity(target.len());
    match interpolation {
        Interpolation::Nearest => {
            let (px, py, pz) = (
                nearest_positions(src.nx, target.nx),
                nearest_positions(src.ny, target.ny),
                nearest_positions(src.nz, target.nz),
            );
            for &z in &pz {
                for &y in &py {
                    let row = src.index(0, y, z);
                    out.extend(px.iter().map(|&x| v[row + x]));
                }
            }
        }
        Interpolation::Trilinear => {
            let (px, py, pz) = (
                axis_positions(src.nx, target.nx),
                axis_positions(src.ny, target.ny),
                axis_positions(src.nz, target.nz),
            );
            for &(z0, z1, wz) in &pz {
                for &(y0, y1, wy) in &py {
                    let r00 = src.index(0, y0, z0);
                    let r10 = src.index(0, y1, z0);
                    let r01 = src.index(0, y0, z1);
                    let r11 = src.index(0, y1, z1);
                    for &(x0, x1, wx) in &px {
                        let c00 = lerp(v[r00 + x0], v[r00 + x1], wx);
                        let c10 = lerp(v[r10 + x0], v[r10 + x1], wx);
                        let c01 = lerp(v[r01 + x0], v[r01 + x1], wx);
                        let c11 = lerp(v[r11 + x0], v[r11 + x1], wx);
                        out.push(lerp(lerp(c00, c10, wy), lerp(c01, c11, wy), wz));
                    }
                }
            }
        }
    }
    Ok(VoxelGrid::from_parts_unchecked(target, spacing, out))
}

/// Nearest-neighbor resampling of a mask.
pub fn resample_mask(mask: &BinaryMask, target: Dims) -> Result<BinaryMask> {
    let target = Dims::new(target.nx, target.ny, target.nz)?;
    let src = mask.dims();
    let (px, py, pz) = (
        nearest_positions(src.nx, target.nx),
        nearest_positions(src.ny, target.ny),
        nearest_positions(src.nz, target.nz),
    );
    let spacing = rescaled_spacing(mask.spacing(), src, target);
    BinaryMask::from_fn(target, spacing, |i| {
        let [x, y, z] = target.coords(i);
        mask.get_xyz(px[x], py[y], pz[z])
    })
}

/// Liver recipe: resample, window, then z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct LiverRecipe {
    /// Output dims, 256³ by default.
    pub target_dims: Dims,
    /// Soft tissue window by default.
    pub window: WindowSpec,
    /// Normalization statistics; identity unless configured.
    pub stats: NormalizationStats,
}

impl Default for LiverRecipe {
    fn default() -> Self {
        Self {
            target_dims: Dims {
                nx: 256,
                ny: 256,
                nz: 256,
            },
            window: WindowSpec::SOFT_TISSUE,
            stats: NormalizationStats::identity(),
        }
    }
}

/// Tumor recipe: crop to the liver box, fill outside the liver, window the
/// liver, resample, then z-score.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorRecipe {
    /// Output dims, 284×256×133 by default.
    pub target_dims: Dims,
    /// Window applied inside the liver mask.
    pub window: WindowSpec,
    /// HU value written outside the liver mask.
    pub outside_fill: f64,
    /// Normalization statistics; identity unless configured.
    pub stats: NormalizationStats,
}

impl Default for TumorRecipe {
    fn default() -> Self {
        Self {
            target_dims: Dims {
                nx: 284,
                ny: 256,
                nz: 133,
            },
            window: WindowSpec::LIVER_TUMOR,
            outside_fill: -50.0,
            stats: NormalizationStats::identity(),
        }
    }
}

/// Applies the liver recipe to a CT volume in HU.
pub fn preprocess_liver(ct: &VoxelGrid, recipe: &LiverRecipe) -> Result<VoxelGrid> {
    let resampled = resample(ct, recipe.target_dims, Interpolation::Trilinear)?;
    Ok(zscore(&window(&resampled, &recipe.window), &recipe.stats))
}

/// Crop, fill and window steps of the tumor recipe, before resampling.
pub fn tumor_intensities(ct: &VoxelGrid, liver_mask: &BinaryMask, recipe: &TumorRecipe) -> Result<VoxelGrid> {
    ensure_same_dims(ct.dims(), liver_mask.dims())?;
    if !recipe.outside_fill.is_finite() {
        return Err(Error::InvalidParameter("outside fill must be finite"));
    }
    let bbox = bounding_box(liver_mask)?;
    let ct = ct.crop(&bbox)?;
    let mask = liver_mask.crop(&bbox)?;
    let data = ct
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if mask.get(i) {
                recipe.window.apply(v)
            } else {
                recipe.outside_fill
            }
        })
        .collect();
    Ok(VoxelGrid::from_parts_unchecked(ct.dims(), ct.spacing(), data))
}

/// Applies the tumor recipe given the CT in HU and a non-empty liver mask.
pub fn preprocess_tumor(ct: &VoxelGrid, liver_mask: &BinaryMask, recipe: &TumorRecipe) -> Result<VoxelGrid> {
    let filled = tumor_intensities(ct, liver_mask, recipe)?;
    let resampled = resample(&filled, recipe.target_dims, Interpolation::Trilinear)?;
    Ok(zscore(&resampled, &recipe.stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn dims(nx: usize, ny: usize, nz: usize) -> Dims {
        Dims::new(nx, ny, nz).unwrap()
    }

    fn line(values: &[f64]) -> VoxelGrid {
        VoxelGrid::new(dims(values.len(), 1, 1), Spacing::unit(), values.to_vec()).unwrap()
    }

    #[test]
    fn window_examples() {
        let g = line(&[-500.0, 100.0, 300.0]);
        assert_eq!(window(&g, &WindowSpec::SOFT_TISSUE).data(), &[-120.0, 100.0, 240.0]);
        assert_eq!(window(&g, &WindowSpec::LIVER_TUMOR).data()[2], 200.0);
        assert!(matches!(WindowSpec::new(5.0, 5.0), Err(Error::InvalidWindow { .. })));
    }

    #[test]
    fn zscore_examples() {
        let stats = NormalizationStats::new(40.0, 10.0, "test").unwrap();
        assert_eq!(zscore(&line(&[40.0, 50.0, 60.0]), &stats).data(), &[0.0, 1.0, 2.0]);
        assert!(NormalizationStats::new(0.0, 0.0, "bad").is_err());
    }

    #[test]
    fn compute_stats_examples() {
        let constant = VoxelGrid::filled(dims(2, 2, 2), Spacing::unit(), 5.0).unwrap();
        assert!(matches!(compute_stats(&[constant]), Err(Error::InvalidStats { .. })));
        assert_eq!(compute_stats(&[]), Err(Error::NotEnoughData { required: 2 }));

        let s = compute_stats(&[line(&[0.0, 2.0])]).unwrap();
        assert_eq!((s.mean(), s.std()), (1.0, 1.0));
        // pooled across grids of different sizes
        let s = compute_stats(&[line(&[1.0, 1.0, 1.0]), line(&[5.0])]).unwrap();
        assert_eq!(s.mean(), 2.0);
        assert!((s.std() - 1.732_050_8).abs() < 1e-7);
    }

    #[test]
    fn resample_examples() {
        let g = VoxelGrid::from_fn(dims(3, 4, 2), Spacing::unit(), |x, y, z| (x * 3 + y * 5 + z * 7) as f64).unwrap();
        for interp in [Interpolation::Trilinear, Interpolation::Nearest] {
            assert_eq!(resample(&g, g.dims(), interp).unwrap(), g);
        }
        let c = VoxelGrid::filled(dims(3, 2, 5), Spacing::unit(), 0.3).unwrap();
        let r = resample(&c, dims(7, 4, 2), Interpolation::Trilinear).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.3));

        let r = resample(&line(&[0.0, 1.0]), dims(3, 1, 1), Interpolation::Trilinear).unwrap();
        assert_eq!(r.data(), &[0.0, 0.5, 1.0]);
        assert_eq!(r.spacing(), Spacing([2.0 / 3.0, 1.0, 1.0]));

        // single output voxel samples the center
        let r = resample(&line(&[0.0, 4.0, 8.0, 12.0]), dims(1, 1, 1), Interpolation::Trilinear).unwrap();
        assert_eq!(r.data(), &[6.0]);
    }

    #[test]
    fn trilinear_interpolates_all_axes() {
        // f = x + 2y + 4z is reproduced exactly by trilinear interpolation
        let g = VoxelGrid::from_fn(dims(3, 3, 3), Spacing::unit(), |x, y, z| (x + 2 * y + 4 * z) as f64).unwrap();
        let r = resample(&g, dims(5, 5, 5), Interpolation::Trilinear).unwrap();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let expected = (x as f64 + 2.0 * y as f64 + 4.0 * z as f64) / 2.0;
                    assert!((r.get(x, y, z) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mask_resampling_is_nearest() {
        let m = BinaryMask::from_coords(dims(2, 1, 1), Spacing::unit(), &[[1, 0, 0]]).unwrap();
        let r = resample_mask(&m, dims(4, 1, 1)).unwrap();
        // positions 0, 1/3, 2/3, 1 -> nearest 0, 0, 1, 1
        assert_eq!(r.iter().collect::<Vec<_>>(), vec![false, false, true, true]);
        assert_eq!(resample_mask(&m, m.dims()).unwrap(), m);
    }

    #[test]
    fn liver_recipe_examples() {
        let small = dims(8, 6, 5);
        let stats = NormalizationStats::new(40.0, 10.0, "test").unwrap();
        let recipe = LiverRecipe {
            target_dims: dims(16, 16, 16),
            stats: stats.clone(),
            ..Default::default()
        };
        let at_mean = VoxelGrid::filled(small, Spacing::unit(), 40.0).unwrap();
        let out = preprocess_liver(&at_mean, &recipe).unwrap();
        assert_eq!(out.dims(), dims(16, 16, 16));
        assert!(out.data().iter().all(|&v| v == 0.0));

        let air = VoxelGrid::filled(small, Spacing::unit(), -1000.0).unwrap();
        let out = preprocess_liver(&air, &recipe).unwrap();
        assert!(out.data().iter().all(|&v| v == (-120.0 - 40.0) / 10.0));

        let full = preprocess_liver(&air, &LiverRecipe::default()).unwrap();
        assert_eq!(full.dims(), dims(256, 256, 256));
    }

    fn tumor_fixture() -> (VoxelGrid, BinaryMask) {
        let d = dims(10, 8, 6);
        let ct = VoxelGrid::from_fn(d, Spacing::unit(), |x, y, _| if x + y > 8 { 250.0 } else { -100.0 }).unwrap();
        let mask = BinaryMask::from_fn(d, Spacing::unit(), |i| {
            let [x, y, z] = d.coords(i);
            (2..=7).contains(&x) && (1..=6).contains(&y) && (1..=4).contains(&z) && !(x == 2 && y == 1)
        })
        .unwrap();
        (ct, mask)
    }

    #[test]
    fn tumor_intermediate_fills_and_windows() {
        let (ct, mask) = tumor_fixture();
        let recipe = TumorRecipe::default();
        let filled = tumor_intensities(&ct, &mask, &recipe).unwrap();
        assert_eq!(filled.dims(), dims(6, 6, 4));
        // (2,1,z) is inside the box but outside the mask
        assert_eq!(filled.get(0, 0, 0), -50.0);
        // (7,6,1): 250 HU inside the liver clamps to 200
        assert_eq!(filled.get(5, 5, 0), 200.0);
        // (2,2,1): -100 HU inside the liver clamps to -30
        assert_eq!(filled.get(0, 1, 0), -30.0);
    }

    #[test]
    fn tumor_recipe_output_and_errors() {
        let (ct, mask) = tumor_fixture();
        let out = preprocess_tumor(&ct, &mask, &TumorRecipe::default()).unwrap();
        assert_eq!(out.dims(), dims(284, 256, 133));
        // identity stats: the corner voxel is the filled outside voxel
        assert_eq!(out.get(0, 0, 0), -50.0);
        let (lo, hi) = out.min_max();
        assert!(lo >= -50.0 && hi <= 200.0);

        let empty = BinaryMask::empty(ct.dims(), Spacing::unit()).unwrap();
        assert_eq!(
            preprocess_tumor(&ct, &empty, &TumorRecipe::default()),
            Err(Error::EmptyMask)
        );
        let wrong = BinaryMask::empty(dims(3, 3, 3), Spacing::unit()).unwrap();
        assert!(matches!(
            preprocess_tumor(&ct, &wrong, &TumorRecipe::default()),
            Err(Error::DimsMismatch { .. })
        ));
    }

    fn arb_grid() -> impl Strategy<Value = VoxelGrid> {
        (1usize..=8, 1usize..=8, 1usize..=8)
            .prop_flat_map(|(nx, ny, nz)| {
                (
                    Just(dims(nx, ny, nz)),
                    proptest::collection::vec(-1500.0f64..3000.0, nx * ny * nz),
                )
            })
            .prop_map(|(d, v)| VoxelGrid::new(d, Spacing::unit(), v).unwrap())
    }

    fn arb_target() -> impl Strategy<Value = Dims> {
        (1usize..=12, 1usize..=12, 1usize..=12).prop_map(|(a, b, c)| dims(a, b, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn window_is_idempotent(g in arb_grid(), lo in -200.0f64..0.0, width in 1.0f64..400.0) {
            let w = WindowSpec::new(lo, lo + width).unwrap();
            let once = window(&g, &w);
            prop_assert_eq!(window(&once, &w), once.clone());
            prop_assert!(once.data().iter().all(|&v| v >= lo && v <= lo + width));
        }

        #[test]
        fn zscore_standardizes_pooled_voxels(a in arb_grid(), b in arb_grid()) {
            let grids = vec![a, b];
            let Ok(stats) = compute_stats(&grids) else { return Ok(()) };
            let z: Vec<VoxelGrid> = grids.iter().map(|g| zscore(g, &stats)).collect();
            let pooled: Vec<f64> = z.iter().flat_map(|g| g.data().iter().copied()).collect();
            let n = pooled.len() as f64;
            let mean = pooled.iter().sum::<f64>() / n;
            let std = libm::sqrt(pooled.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((std - 1.0).abs() < 1e-6);
        }

        #[test]
        fn trilinear_stays_within_bounds(g in arb_grid(), t in arb_target()) {
            let (lo, hi) = g.min_max();
            let r = resample(&g, t, Interpolation::Trilinear).unwrap();
            prop_assert_eq!(r.dims(), t);
            prop_assert!(r.data().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn nearest_introduces_no_new_values(g in arb_grid(), t in arb_target()) {
            let r = resample(&g, t, Interpolation::Nearest).unwrap();
            prop_assert!(r.data().iter().all(|v| g.data().contains(v)));
        }

        #[test]
        fn identical_dims_is_identity(g in arb_grid()) {
            prop_assert_eq!(resample(&g, g.dims(), Interpolation::Trilinear).unwrap(), g.clone());
            prop_assert_eq!(resample(&g, g.dims(), Interpolation::Nearest).unwrap(), g);
        }
    }
}
