//! Uncertainty quantification for Monte Carlo dropout segmentation outputs.
//!
//! This crate is `no_std` (it needs `alloc`) and holds every numerical part
//! of the toolkit: geometry-aware voxel grids and masks, the CT
//! preprocessing recipes, the voxelwise uncertainty map and the three
//! case-level uncertainty measures, Spearman rank correlation with p-values,
//! and a synthetic phantom/sample generator. File formats, configuration and
//! the command line live in the `segunc` companion crate.
//!
//! Volumes are stored densely with x varying fastest:
//! `index = x + nx * (y + ny * z)`, all indices zero-based.
#![no_std]
#![forbid(unsafe_code)]
#![warn(missing_docs)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod grid;
pub mod preprocess;
pub mod samples;
pub mod stats;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{binarize, bounding_box, dice, BinaryMask, Dims, IndexBox, Spacing, VoxelGrid};
pub use samples::SampleSet;
pub use stats::{correlation_table, correlation_table_pairwise, spearman, CorrelationResult, Measure, Spearman};
pub use uncertainty::{
    analyze_case, AnalysisOptions, CaseAnalysis, CaseReport, CvVariant, EntropyVariant, UncertaintyMap,
};
