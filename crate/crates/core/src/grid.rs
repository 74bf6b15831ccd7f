//! Dense 3D grids, binary masks and the elementary mask operations.
//!
//! Layout is x-fastest: voxel `(x, y, z)` lives at `x + nx * (y + ny * z)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    /// Voxels along x (fastest axis).
    pub nx: usize,
    /// Voxels along y.
    pub ny: usize,
    /// Voxels along z (slowest axis).
    pub nz: usize,
}

impl Dims {
    /// Validated constructor; every axis must be at least one voxel.
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let dims = Self { nx, ny, nz };
        if nx == 0 || ny == 0 || nz == 0 || nx.checked_mul(ny).and_then(|v| v.checked_mul(nz)).is_none() {
            return Err(Error::InvalidDims(dims));
        }
        Ok(dims)
    }

    /// Cube of side `n`.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    /// Total voxel count.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Never true for validated dims; present for API symmetry with `len`.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear index of `(x, y, z)`.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny && z < self.nz);
        x + self.nx * (y + self.ny * z)
    }

    /// Inverse of [`Dims::index`].
    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.nx;
        let rest = index / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }

    /// Dims as an array `[nx, ny, nz]`.
    #[inline]
    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Physical voxel size in millimeters along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    /// Validated constructor; components must be finite and > 0.
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let s = [sx, sy, sz];
        if s.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidSpacing(s));
        }
        Ok(Self(s))
    }

    /// Isotropic 1 mm spacing.
    pub const fn unit() -> Self {
        Self([1.0, 1.0, 1.0])
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self::unit()
    }
}

/// Dense scalar field (probability, intensity or uncertainty).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: Dims,
    spacing: Spacing,
    data: Vec<f64>,
}

impl VoxelGrid {
    /// Builds a grid, rejecting length mismatches and non-finite values.
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(dims.nx, dims.ny, dims.nz)?;
        let spacing = Spacing::new(spacing.0[0], spacing.0[1], spacing.0[2])?;
        if data.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { dims, spacing, data })
    }

    /// Grid with every voxel set to `value`.
    pub fn filled(dims: Dims, spacing: Spacing, value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.len()])
    }

    /// Grid whose voxel `(x, y, z)` is `f(x, y, z)`.
    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_parts_unchecked(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, spacing, data }
    }

    /// Grid dimensions.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Voxel spacing.
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Voxel values in x-fastest order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Consumes the grid, returning the voxel values.
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value at `(x, y, z)`.
    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Returns a grid with the same geometry and `f` applied per voxel.
    ///
    /// Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Same data with a different spacing.
    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        self.spacing = Spacing::new(spacing.0[0], spacing.0[1], spacing.0[2])?;
        Ok(self)
    }

    /// `(min, max)` over all voxels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Fails unless every voxel lies in `[0, 1]`.
    pub fn check_probabilities(&self) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            Some(index) => Err(Error::ProbabilityOutOfRange {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    /// Copies out the voxels inside `region`; spacing is kept.
    pub fn crop(&self, region: &IndexBox) -> Result<Self> {
        region.check_within(self.dims)?;
        let out_dims = region.dims();
        let mut data = Vec::with_capacity(out_dims.len());
        for z in region.min[2]..=region.max[2] {
            for y in region.min[1]..=region.max[1] {
                let row = self.dims.index(region.min[0], y, z);
                data.extend_from_slice(&self.data[row..row + out_dims.nx]);
            }
        }
        Ok(Self::from_parts_unchecked(out_dims, self.spacing, data))
    }
}

/// Dense boolean field, bit-packed, with a cached foreground count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Dims,
    spacing: Spacing,
    words: Vec<u64>,
    count: usize,
}

// Spacing holds finite floats only, so equality is reflexive.
impl Eq for Spacing {}

impl BinaryMask {
    /// All-false mask.
    pub fn empty(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::from_fn(dims, spacing, |_| false)
    }

    /// Mask whose voxel at linear index `i` is `f(i)`.
    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize) -> bool) -> Result<Self> {
        let dims = Dims::new(dims.nx, dims.ny, dims.nz)?;
        let spacing = Spacing::new(spacing.0[0], spacing.0[1], spacing.0[2])?;
        let len = dims.len();
        let mut words = vec![0u64; len.div_ceil(64)];
        let mut count = 0;
        for (w, word) in words.iter_mut().enumerate() {
            let base = w * 64;
            let end = (base + 64).min(len);
            let mut bits = 0u64;
            for i in base..end {
                if f(i) {
                    bits |= 1 << (i - base);
                }
            }
            count += bits.count_ones() as usize;
            *word = bits;
        }
        Ok(Self {
            dims,
            spacing,
            words,
            count,
        })
    }

    /// Mask from a slice of booleans in x-fastest order.
    pub fn from_bools(dims: Dims, spacing: Spacing, values: &[bool]) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::LengthMismatch {
                expected: dims.len(),
                actual: values.len(),
            });
        }
        Self::from_fn(dims, spacing, |i| values[i])
    }

    /// Mask with exactly the listed `(x, y, z)` voxels set.
    pub fn from_coords(dims: Dims, spacing: Spacing, coords: &[[usize; 3]]) -> Result<Self> {
        let mut flags = vec![false; dims.len()];
        for &[x, y, z] in coords {
            if x >= dims.nx || y >= dims.ny || z >= dims.nz {
                return Err(Error::BoxOutOfRange {
                    min: [x, y, z],
                    max: [x, y, z],
                    dims,
                });
            }
            flags[dims.index(x, y, z)] = true;
        }
        Self::from_bools(dims, spacing, &flags)
    }

    /// Mask dimensions.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Voxel spacing.
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Number of foreground voxels.
    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }

    /// Whether the mask has no foreground.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Value at linear index `i`.
    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.dims.len());
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    /// Value at `(x, y, z)`.
    #[inline]
    pub fn get_xyz(&self, x: usize, y: usize, z: usize) -> bool {
        self.get(self.dims.index(x, y, z))
    }

    /// Packed storage: bit `i % 64` of word `i / 64` is voxel `i`; padding bits are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Iterator over every voxel in x-fastest order.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.dims.len()).map(move |i| self.get(i))
    }

    /// Linear indices of foreground voxels, ascending.
    pub fn foreground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            core::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }

    /// The mask as a 0/1 valued grid.
    pub fn to_grid(&self) -> VoxelGrid {
        let data = self.iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        VoxelGrid::from_parts_unchecked(self.dims, self.spacing, data)
    }

    /// Copies out the voxels inside `region`; spacing is kept.
    pub fn crop(&self, region: &IndexBox) -> Result<Self> {
        region.check_within(self.dims)?;
        let out = region.dims();
        Self::from_fn(out, self.spacing, |i| {
            let [x, y, z] = out.coords(i);
            self.get_xyz(x + region.min[0], y + region.min[1], z + region.min[2])
        })
    }

    /// Same data with a different spacing.
    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        self.spacing = Spacing::new(spacing.0[0], spacing.0[1], spacing.0[2])?;
        Ok(self)
    }

    /// Number of voxels set in both masks; dims must agree.
    pub fn intersection_count(&self, other: &Self) -> Result<usize> {
        ensure_same_dims(self.dims, other.dims)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }
}

/// Inclusive, axis-aligned box of voxel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    /// Lowest corner (inclusive).
    pub min: [usize; 3],
    /// Highest corner (inclusive).
    pub max: [usize; 3],
}

impl IndexBox {
    /// Box spanning `min..=max` on every axis.
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| min[a] > max[a]) {
            return Err(Error::InvalidParameter("index box min exceeds max"));
        }
        Ok(Self { min, max })
    }

    /// Box covering an entire grid.
    pub fn full(dims: Dims) -> Self {
        Self {
            min: [0, 0, 0],
            max: [dims.nx - 1, dims.ny - 1, dims.nz - 1],
        }
    }

    /// Extent of the box in voxels.
    pub fn dims(&self) -> Dims {
        Dims {
            nx: self.max[0] - self.min[0] + 1,
            ny: self.max[1] - self.min[1] + 1,
            nz: self.max[2] - self.min[2] + 1,
        }
    }

    fn check_within(&self, dims: Dims) -> Result<()> {
        let upper = dims.as_array();
        if (0..3).any(|a| self.min[a] > self.max[a] || self.max[a] >= upper[a]) {
            return Err(Error::BoxOutOfRange {
                min: self.min,
                max: self.max,
                dims,
            });
        }
        Ok(())
    }
}

pub(crate) fn ensure_same_dims(left: Dims, right: Dims) -> Result<()> {
    if left != right {
        return Err(Error::DimsMismatch { left, right });
    }
    Ok(())
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    Ok(())
}

/// Foreground iff `p(x) >= threshold` (closed lower bound).
///
/// The grid must hold probabilities in `[0, 1]`; `threshold` must lie in `(0, 1]`.
pub fn binarize(grid: &VoxelGrid, threshold: f64) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    grid.check_probabilities()?;
    Ok(binarize_unchecked(grid.dims, grid.spacing, &grid.data, threshold))
}

pub(crate) fn binarize_unchecked(dims: Dims, spacing: Spacing, data: &[f64], threshold: f64) -> BinaryMask {
    let mut words = vec![0u64; data.len().div_ceil(64)];
    let mut count = 0;
    for (word, chunk) in words.iter_mut().zip(data.chunks(64)) {
        let mut bits = 0u64;
        for (bit, &p) in chunk.iter().enumerate() {
            bits |= ((p >= threshold) as u64) << bit;
        }
        count += bits.count_ones() as usize;
        *word = bits;
    }
    BinaryMask {
        dims,
        spacing,
        words,
        count,
    }
}

/// Dice overlap `2|a ∩ b| / (|a| + |b|)`.
///
/// Two empty masks agree perfectly and score 1.0; exactly one empty mask scores 0.0.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let both = a.intersection_count(b)?;
    Ok(dice_from_counts(both, a.count, b.count))
}

#[inline]
pub(crate) fn dice_from_counts(intersection: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        (2 * intersection) as f64 / (a + b) as f64
    }
}

/// Tightest inclusive box containing every foreground voxel.
pub fn bounding_box(mask: &BinaryMask) -> Result<IndexBox> {
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    for i in mask.foreground_indices() {
        let c = mask.dims.coords(i);
        for a in 0..3 {
            min[a] = min[a].min(c[a]);
            max[a] = max[a].max(c[a]);
        }
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(IndexBox { min, max })
}
