//! Consensus mask, voxelwise uncertainty map and the case-level measures.
//!
//! For a case with samples `p_1..p_N`:
//!
//! * consensus mask: `mean_i p_i(x) >= t`
//! * voxel uncertainty: `U(x) = -(1/N) Σ_i p_i(x) ln p_i(x)`, with `0 ln 0 = 0`
//! * `CV = Var_i(v_i) / (E_i[v_i] + 1)`, `v_i` the foreground volume of sample i
//!   after thresholding, population variance
//! * `D_pw`: mean Dice over all unordered pairs of thresholded samples
//! * `U_labelled`: mean of `U(x)` over the consensus foreground
//!
//! Logarithms are natural, so `U` is in nats.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{binarize_unchecked, check_threshold, dice_from_counts, ensure_same_dims};
use crate::{dice, BinaryMask, Result, SampleSet, VoxelGrid};

/// Threshold used throughout when none is configured.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Which per-voxel entropy term feeds `U(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyVariant {
    /// `-p ln p` averaged over samples. The default.
    #[default]
    AsPrinted,
    /// Full binary entropy `-p ln p - (1-p) ln(1-p)` averaged over samples.
    Binary,
}

/// Which volume-dispersion statistic is reported as CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CvVariant {
    /// Population variance over (mean + 1). The default.
    #[default]
    AsPrinted,
    /// Population standard deviation over mean (0 when the mean is 0).
    StdOverMean,
}

/// Knobs shared by every measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    /// Binarization threshold in `(0, 1]`.
    pub threshold: f64,
    /// Entropy term for `U(x)`.
    pub entropy: EntropyVariant,
    /// Dispersion statistic for CV.
    pub cv: CvVariant,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            entropy: EntropyVariant::AsPrinted,
            cv: CvVariant::AsPrinted,
        }
    }
}

/// Per-voxel uncertainty `U(x)` in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    grid: VoxelGrid,
    n_samples: usize,
}

impl UncertaintyMap {
    /// The uncertainty values as a grid.
    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Number of samples the map was computed from.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Consumes the map, returning its grid.
    pub fn into_grid(self) -> VoxelGrid {
        self.grid
    }
}

/// Scalar results for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    /// Case identifier copied from the sample set.
    pub case_id: String,
    /// Number of samples N.
    pub n_samples: usize,
    /// Coefficient of variation of the sample volumes.
    pub cv: f64,
    /// Mean pairwise Dice between thresholded samples.
    pub d_pw: f64,
    /// Mean uncertainty over the consensus foreground; `None` when it is empty.
    pub u_labelled: Option<f64>,
    /// Foreground voxels in the consensus mask.
    pub consensus_voxels: usize,
    /// Dice of the consensus mask against ground truth, when provided.
    pub dice: Option<f64>,
    /// Threshold used for every binarization.
    pub threshold: f64,
}

/// A case report together with the volumes it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseAnalysis {
    /// The scalar measures.
    pub report: CaseReport,
    /// Voxelwise mean probability.
    pub mean: VoxelGrid,
    /// Thresholded mean probability.
    pub consensus: BinaryMask,
    /// Voxelwise uncertainty.
    pub uncertainty: UncertaintyMap,
}

const BLOCK: usize = 4096;

#[inline]
fn neg_p_ln_p(p: f64) -> f64 {
    if p > 0.0 {
        -p * libm::log(p)
    } else {
        0.0
    }
}

#[inline]
fn entropy_term(p: f64, variant: EntropyVariant) -> f64 {
    match variant {
        EntropyVariant::AsPrinted => neg_p_ln_p(p),
        EntropyVariant::Binary => neg_p_ln_p(p) + neg_p_ln_p(1.0 - p),
    }
}

/// Mean probability and `U(x)` in one pass over the samples.
///
/// Sums run over samples in their stored order, then divide by N.
fn voxel_moments(samples: &SampleSet, entropy: EntropyVariant) -> (Vec<f64>, Vec<f64>) {
    let len = samples.dims().len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; len];
    let mut unc = vec![0.0; len];
    let mut sum = [0.0f64; BLOCK];
    let mut ent = [0.0f64; BLOCK];
    let mut start = 0;
    while start < len {
        let end = (start + BLOCK).min(len);
        let width = end - start;
        sum[..width].fill(0.0);
        ent[..width].fill(0.0);
        for s in samples.samples() {
            let src = &s.data()[start..end];
            for ((acc, e), &p) in sum.iter_mut().zip(ent.iter_mut()).zip(src) {
                *acc += p;
                *e += entropy_term(p, entropy);
            }
        }
        for j in 0..width {
            mean[start + j] = sum[j] / n;
            unc[start + j] = ent[j] / n;
        }
        start = end;
    }
    (mean, unc)
}

/// Voxelwise arithmetic mean of the samples.
pub fn mean_probability(samples: &SampleSet) -> VoxelGrid {
    let len = samples.dims().len();
    let n = samples.len() as f64;
    let mut sum = vec![0.0; len];
    for s in samples.samples() {
        for (acc, &p) in sum.iter_mut().zip(s.data()) {
            *acc += p;
        }
    }
    for v in &mut sum {
        *v /= n;
    }
    VoxelGrid::from_parts_unchecked(samples.dims(), samples.spacing(), sum)
}

/// The final segmentation: the mean probability thresholded at `threshold`.
pub fn consensus_mask(samples: &SampleSet, threshold: f64) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    let mean = mean_probability(samples);
    Ok(binarize_unchecked(mean.dims(), mean.spacing(), mean.data(), threshold))
}

/// Per-voxel uncertainty map.
pub fn uncertainty_map(samples: &SampleSet, entropy: EntropyVariant) -> UncertaintyMap {
    let (_, unc) = voxel_moments(samples, entropy);
    UncertaintyMap {
        grid: VoxelGrid::from_parts_unchecked(samples.dims(), samples.spacing(), unc),
        n_samples: samples.len(),
    }
}

/// Thresholds every sample independently.
pub fn binarized_samples(samples: &SampleSet, threshold: f64) -> Result<Vec<BinaryMask>> {
    check_threshold(threshold)?;
    Ok(samples
        .samples()
        .iter()
        .map(|s| binarize_unchecked(s.dims(), s.spacing(), s.data(), threshold))
        .collect())
}

fn cv_from_volumes(volumes: &[usize], variant: CvVariant) -> f64 {
    let n = volumes.len() as u128;
    let sum: u128 = volumes.iter().map(|&v| v as u128).sum();
    let sum_sq: u128 = volumes.iter().map(|&v| (v as u128) * (v as u128)).sum();
    // N^2 * Var, exact in integers.
    let scaled_var = n * sum_sq - sum * sum;
    match variant {
        // Var / (mean + 1) = (N Σv² - (Σv)²) / (N (Σv + N))
        CvVariant::AsPrinted => scaled_var as f64 / (n * (sum + n)) as f64,
        CvVariant::StdOverMean => {
            if sum == 0 {
                0.0
            } else {
                // std / mean = sqrt(N² Var) / Σv
                libm::sqrt(scaled_var as f64) / sum as f64
            }
        }
    }
}

/// Dispersion of the per-sample foreground volumes.
pub fn coefficient_of_variation(samples: &SampleSet, threshold: f64, variant: CvVariant) -> Result<f64> {
    let volumes: Vec<usize> = binarized_samples(samples, threshold)?
        .iter()
        .map(BinaryMask::count)
        .collect();
    Ok(cv_from_volumes(&volumes, variant))
}

fn pairwise_dice_of(masks: &[BinaryMask]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in masks.iter().enumerate() {
        for b in &masks[i + 1..] {
            let both: usize = a
                .words()
                .iter()
                .zip(b.words())
                .map(|(x, y)| (x & y).count_ones() as usize)
                .sum();
            total += dice_from_counts(both, a.count(), b.count());
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Mean Dice over all `N(N-1)/2` unordered pairs of thresholded samples.
pub fn mean_pairwise_dice(samples: &SampleSet, threshold: f64) -> Result<f64> {
    Ok(pairwise_dice_of(&binarized_samples(samples, threshold)?))
}

fn labelled_mean(consensus: &BinaryMask, unc: &[f64]) -> Option<f64> {
    if consensus.is_empty() {
        return None;
    }
    let total: f64 = consensus.foreground_indices().map(|i| unc[i]).sum();
    Some(total / consensus.count() as f64)
}

/// Mean `U(x)` over voxels whose mean probability reaches `threshold`.
///
/// `Ok(None)` when the consensus foreground is empty.
pub fn mean_labelled_uncertainty(samples: &SampleSet, threshold: f64, entropy: EntropyVariant) -> Result<Option<f64>> {
    check_threshold(threshold)?;
    let (mean, unc) = voxel_moments(samples, entropy);
    let consensus = binarize_unchecked(samples.dims(), samples.spacing(), &mean, threshold);
    Ok(labelled_mean(&consensus, &unc))
}

impl CaseAnalysis {
    /// Runs every measure on `samples`, plus Dice against `ground_truth` when given.
    pub fn compute(samples: &SampleSet, ground_truth: Option<&BinaryMask>, options: &AnalysisOptions) -> Result<Self> {
        check_threshold(options.threshold)?;
        if let Some(gt) = ground_truth {
            ensure_same_dims(samples.dims(), gt.dims())?;
        }
        let (dims, spacing) = (samples.dims(), samples.spacing());
        let masks = binarized_samples(samples, options.threshold)?;
        let volumes: Vec<usize> = masks.iter().map(BinaryMask::count).collect();
        let cv = cv_from_volumes(&volumes, options.cv);
        let d_pw = pairwise_dice_of(&masks);
        drop(masks);

        let (mean, unc) = voxel_moments(samples, options.entropy);
        let consensus = binarize_unchecked(dims, spacing, &mean, options.threshold);
        let u_labelled = labelled_mean(&consensus, &unc);
        let dice = ground_truth.map(|gt| dice(&consensus, gt)).transpose()?;

        Ok(Self {
            report: CaseReport {
                case_id: samples.case_id().into(),
                n_samples: samples.len(),
                cv,
                d_pw,
                u_labelled,
                consensus_voxels: consensus.count(),
                dice,
                threshold: options.threshold,
            },
            mean: VoxelGrid::from_parts_unchecked(dims, spacing, mean),
            consensus,
            uncertainty: UncertaintyMap {
                grid: VoxelGrid::from_parts_unchecked(dims, spacing, unc),
                n_samples: samples.len(),
            },
        })
    }
}

/// All case-level measures for one sample set.
pub fn analyze_case(
    samples: &SampleSet,
    ground_truth: Option<&BinaryMask>,
    options: &AnalysisOptions,
) -> Result<CaseReport> {
    CaseAnalysis::compute(samples, ground_truth, options).map(|a| a.report)
}
