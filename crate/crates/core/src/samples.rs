//! The per-case collection of Monte Carlo dropout probability volumes.

use alloc::string::String;
use alloc::vec::Vec;

use crate::grid::{ensure_same_dims, Dims, Spacing, VoxelGrid};
use crate::{Error, Result};

/// The N probability volumes drawn for one case.
///
/// Holds at least two samples that share dims and spacing, with every voxel
/// in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    case_id: String,
    samples: Vec<VoxelGrid>,
}

impl SampleSet {
    /// Validates and wraps `samples`.
    pub fn new(case_id: impl Into<String>, samples: Vec<VoxelGrid>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples(samples.len()));
        }
        let first = &samples[0];
        for s in &samples[1..] {
            ensure_same_dims(first.dims(), s.dims())?;
            if s.spacing() != first.spacing() {
                return Err(Error::InvalidParameter("samples must share voxel spacing"));
            }
        }
        for s in &samples {
            s.check_probabilities()?;
        }
        Ok(Self {
            case_id: case_id.into(),
            samples,
        })
    }

    /// Opaque case identifier.
    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    /// Number of samples N.
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; a valid set holds at least two samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shared dims.
    pub fn dims(&self) -> Dims {
        self.samples[0].dims()
    }

    /// Shared spacing.
    pub fn spacing(&self) -> Spacing {
        self.samples[0].spacing()
    }

    /// The samples in their original order.
    pub fn samples(&self) -> &[VoxelGrid] {
        &self.samples
    }

    /// Returns the samples, dropping the case id.
    pub fn into_samples(self) -> Vec<VoxelGrid> {
        self.samples
    }
}
