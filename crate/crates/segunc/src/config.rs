//! Run configuration, read from TOML. Every key is optional; omitted keys
//! take the defaults shown in `docs/formats.md`.

use std::fs;
use std::path::Path;

use segunc_core::preprocess::{LiverRecipe, NormalizationStats, TumorRecipe, WindowSpec};
use segunc_core::synth::{self, CohortSpec, NoiseSpec};
use segunc_core::{AnalysisOptions, CvVariant, Dims, EntropyVariant};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyName {
    #[default]
    AsPrinted,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvName {
    #[default]
    AsPrinted,
    StdOverMean,
}

/// Top-level configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Binarization threshold, in (0, 1).
    pub threshold: f64,
    pub entropy: EntropyName,
    pub cv: CvName,
    /// Worker threads for `analyze`; 0 picks the available parallelism.
    pub jobs: usize,
    /// Sample count each case is expected to have; other counts only warn.
    pub expected_samples: usize,
    /// Write consensus and uncertainty volumes from `analyze`.
    pub emit_maps: bool,
    pub preprocess: PreprocessConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            threshold: segunc_core::uncertainty::DEFAULT_THRESHOLD,
            entropy: EntropyName::AsPrinted,
            cv: CvName::AsPrinted,
            jobs: 0,
            expected_samples: synth::DEFAULT_SAMPLES,
            emit_maps: false,
            preprocess: PreprocessConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub liver: LiverConfig,
    pub tumor: TumorConfig,
}

/// z-score statistics. Leaving both unset normalizes each volume by its own
/// mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiverConfig {
    pub window: [f64; 2],
    pub target_dims: [usize; 3],
    pub stats: StatsConfig,
}

impl Default for LiverConfig {
    fn default() -> Self {
        let r = LiverRecipe::default();
        Self {
            window: [r.window.lo(), r.window.hi()],
            target_dims: r.target_dims.as_array(),
            stats: StatsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TumorConfig {
    pub window: [f64; 2],
    pub target_dims: [usize; 3],
    pub outside_fill: f64,
    pub stats: StatsConfig,
}

impl Default for TumorConfig {
    fn default() -> Self {
        let r = TumorRecipe::default();
        Self {
            window: [r.window.lo(), r.window.hi()],
            target_dims: r.target_dims.as_array(),
            outside_fill: r.outside_fill,
            stats: StatsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub cases: usize,
    pub dims: [usize; 3],
    pub samples: usize,
    pub seed: u64,
    /// Multiplies every field of every default noise level.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let c = CohortSpec::default();
        Self {
            cases: c.n_cases,
            dims: c.dims.as_array(),
            samples: c.n_samples,
            seed: c.base_seed,
            noise: 1.0,
        }
    }
}

/// Resolved z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    Fixed(NormalizationStats),
    PerVolume,
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Parses and validates config text; `path` is only used in messages.
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.into(),
            reason: e.message().to_owned(),
        })?;
        cfg.validate().map_err(|reason| Error::Config {
            path: path.into(),
            reason,
        })?;
        Ok(cfg)
    }

    /// Checks every value; the message names the offending key.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if self.expected_samples < 2 {
            return Err("expected_samples must be at least 2".into());
        }
        let p = &self.preprocess;
        check_window("preprocess.liver.window", p.liver.window)?;
        check_window("preprocess.tumor.window", p.tumor.window)?;
        check_dims("preprocess.liver.target_dims", p.liver.target_dims)?;
        check_dims("preprocess.tumor.target_dims", p.tumor.target_dims)?;
        check_stats("preprocess.liver.stats", p.liver.stats)?;
        check_stats("preprocess.tumor.stats", p.tumor.stats)?;
        if !p.tumor.outside_fill.is_finite() {
            return Err("preprocess.tumor.outside_fill must be finite".into());
        }
        self.cohort_spec().map(|_| ()).map_err(|e| format!("synth: {e}"))
    }

    /// Options passed to the per-case analysis.
    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            threshold: self.threshold,
            entropy: match self.entropy {
                EntropyName::AsPrinted => EntropyVariant::AsPrinted,
                EntropyName::Binary => EntropyVariant::Binary,
            },
            cv: match self.cv {
                CvName::AsPrinted => CvVariant::AsPrinted,
                CvName::StdOverMean => CvVariant::StdOverMean,
            },
        }
    }

    /// Worker count with 0 resolved to the available parallelism.
    pub fn worker_count(&self) -> usize {
        match self.jobs {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        }
    }

    pub fn liver_recipe(&self) -> Result<(LiverRecipe, Normalization)> {
        let c = &self.preprocess.liver;
        let recipe = LiverRecipe {
            target_dims: Dims::new(c.target_dims[0], c.target_dims[1], c.target_dims[2])?,
            window: WindowSpec::new(c.window[0], c.window[1])?,
            stats: NormalizationStats::identity(),
        };
        let norm = normalization(c.stats)?;
        Ok((recipe, norm))
    }

    pub fn tumor_recipe(&self) -> Result<(TumorRecipe, Normalization)> {
        let c = &self.preprocess.tumor;
        let recipe = TumorRecipe {
            target_dims: Dims::new(c.target_dims[0], c.target_dims[1], c.target_dims[2])?,
            window: WindowSpec::new(c.window[0], c.window[1])?,
            outside_fill: c.outside_fill,
            stats: NormalizationStats::identity(),
        };
        let norm = normalization(c.stats)?;
        Ok((recipe, norm))
    }

    /// The synthetic cohort described by the `[synth]` table.
    pub fn cohort_spec(&self) -> segunc_core::Result<CohortSpec> {
        let s = &self.synth;
        if !(s.noise.is_finite() && s.noise >= 0.0) {
            return Err(segunc_core::Error::InvalidParameter(
                "noise scale must be finite and non-negative",
            ));
        }
        let spec = CohortSpec {
            n_cases: s.cases,
            noise_grid: scaled_noise_grid(s.noise),
            dims: Dims::new(s.dims[0], s.dims[1], s.dims[2])?,
            base_seed: s.seed,
            n_samples: s.samples,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Default noise levels with every field multiplied by `scale`.
pub fn scaled_noise_grid(scale: f64) -> Vec<NoiseSpec> {
    synth::default_noise_grid()
        .into_iter()
        .map(|n| NoiseSpec {
            boundary_sigma: n.boundary_sigma * scale,
            flip_rate: n.flip_rate * scale,
            prob_softness: n.prob_softness * scale,
        })
        .collect()
}

fn normalization(c: StatsConfig) -> Result<Normalization> {
    match (c.mean, c.std) {
        (Some(mean), Some(std)) => Ok(Normalization::Fixed(NormalizationStats::new(mean, std, "config")?)),
        _ => Ok(Normalization::PerVolume),
    }
}

fn check_window(key: &str, w: [f64; 2]) -> std::result::Result<(), String> {
    WindowSpec::new(w[0], w[1])
        .map(|_| ())
        .map_err(|e| format!("{key}: {e}"))
}

fn check_dims(key: &str, d: [usize; 3]) -> std::result::Result<(), String> {
    Dims::new(d[0], d[1], d[2])
        .map(|_| ())
        .map_err(|e| format!("{key}: {e}"))
}

fn check_stats(key: &str, s: StatsConfig) -> std::result::Result<(), String> {
    match (s.mean, s.std) {
        (None, None) => Ok(()),
        (Some(mean), Some(std)) => NormalizationStats::new(mean, std, "config")
            .map(|_| ())
            .map_err(|e| format!("{key}: {e}")),
        _ => Err(format!("{key}: set both mean and std, or neither")),
    }
}
