//! The five commands. Each returns a [`Summary`] instead of printing, so the
//! binary and the tests drive exactly the same code.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use segunc_core::preprocess::{
    compute_stats, preprocess_liver, preprocess_tumor, resample, tumor_intensities, window, zscore, Interpolation,
    NormalizationStats,
};
use segunc_core::{correlation_table_pairwise, CaseAnalysis, CaseReport, CorrelationResult, SampleSet, VoxelGrid};

use crate::config::{Normalization, RunConfig};
use crate::flag::FlagPolicy;
use crate::manifest::{load_manifest, write_manifest, CaseManifest};
use crate::report;
use crate::volume::{read_mask, read_mask_nonzero, read_volume, write_mask, write_volume, DataType};
use crate::{Error, Result};

/// Exit code when some cases failed and the rest were written.
pub const EXIT_PARTIAL: i32 = 3;

/// What a command did, for the caller to print.
#[derive(Debug, Default)]
pub struct Summary {
    /// One-line human-readable result.
    pub message: String,
    /// Non-fatal problems, one per line.
    pub warnings: Vec<String>,
    /// `(case_id, error)` for every case that was skipped.
    pub failures: Vec<(String, String)>,
}

impl Summary {
    /// 0 when nothing failed, [`EXIT_PARTIAL`] otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            EXIT_PARTIAL
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {jobs} worker threads: {e}")))
}

/// Case ids become file names; anything outside `[A-Za-z0-9._-]` turns into `_`.
pub fn file_stem(case_id: &str) -> String {
    case_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct CaseOutput {
    report: CaseReport,
    warning: Option<String>,
}

fn analyze_one(case: &CaseManifest, cfg: &RunConfig, maps: Option<&Path>) -> Result<CaseOutput> {
    let missing = case.missing_files();
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Usage(format!("missing file(s): {}", list.join(", "))));
    }
    let mut orientation = None;
    let mut grids = Vec::with_capacity(case.samples.len());
    for path in &case.samples {
        let v = read_volume(path)?;
        orientation = orientation.or(v.header.orientation);
        grids.push(v.grid);
    }
    let samples = SampleSet::new(case.case_id.clone(), grids)?;
    let warning = (samples.len() != cfg.expected_samples).then(|| {
        format!(
            "{}: {} samples, expected {}",
            case.case_id,
            samples.len(),
            cfg.expected_samples
        )
    });
    let gt = case.ground_truth.as_ref().map(read_mask).transpose()?;
    let analysis = CaseAnalysis::compute(&samples, gt.as_ref(), &cfg.analysis_options())?;
    drop(samples);
    if let Some(dir) = maps {
        let stem = file_stem(&case.case_id);
        let orientation = orientation.as_deref();
        write_mask(
            &analysis.consensus,
            dir.join(format!("{stem}_consensus.nii.gz")),
            orientation,
        )?;
        write_volume(
            analysis.uncertainty.grid(),
            dir.join(format!("{stem}_uncertainty.nii.gz")),
            DataType::Float32,
            orientation,
        )?;
    }
    Ok(CaseOutput {
        report: analysis.report,
        warning,
    })
}

/// Analyzes every case of a manifest into `out_dir`.
///
/// Writes `reports.csv`, `reports.jsonl` and `failures.csv`, plus
/// `maps/<case>_consensus.nii.gz` and `maps/<case>_uncertainty.nii.gz` when
/// `emit_maps` is set. A failing case is recorded and skipped.
pub fn cmd_analyze(manifest: &Path, cfg: &RunConfig, out_dir: &Path, emit_maps: bool) -> Result<Summary> {
    let cases = load_manifest(manifest)?;
    create_dir(out_dir)?;
    let maps = emit_maps.then(|| out_dir.join("maps"));
    if let Some(dir) = &maps {
        create_dir(dir)?;
    }
    let jobs = cfg.worker_count();
    let workers = pool(jobs)?;

    let mut reports = Vec::with_capacity(cases.len());
    let mut summary = Summary::default();
    // one chunk in flight at a time bounds memory to `jobs` cases
    for chunk in cases.chunks(jobs) {
        let results: Vec<Result<CaseOutput>> =
            workers.install(|| chunk.par_iter().map(|c| analyze_one(c, cfg, maps.as_deref())).collect());
        for (case, result) in chunk.iter().zip(results) {
            match result {
                Ok(out) => {
                    summary.warnings.extend(out.warning);
                    reports.push(out.report);
                }
                Err(e) => summary.failures.push((case.case_id.clone(), e.to_string())),
            }
        }
    }
    reports.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    summary.failures.sort();

    report::write_reports_csv(out_dir.join("reports.csv"), &reports)?;
    report::write_reports_jsonl(out_dir.join("reports.jsonl"), &reports)?;
    report::write_failures_csv(out_dir.join("failures.csv"), &summary.failures)?;
    summary.message = format!(
        "analyzed {} of {} case(s) into {}",
        reports.len(),
        cases.len(),
        out_dir.display()
    );
    Ok(summary)
}

/// Spearman table of every measure against dice, from a report CSV.
pub fn correlate(reports_csv: &Path) -> Result<Vec<CorrelationResult>> {
    let table = report::read_reports_csv(reports_csv)?;
    if !table.has_dice {
        return Err(Error::Report {
            path: reports_csv.into(),
            reason: "no `dice` column; analyze with ground truth to correlate".into(),
        });
    }
    Ok(correlation_table_pairwise(&table.reports)?)
}

/// Writes the correlation table for `reports_csv` to `out`.
pub fn cmd_correlate(reports_csv: &Path, out: &Path) -> Result<Summary> {
    let rows = correlate(reports_csv)?;
    report::write_correlation_csv(out, &rows)?;
    let parts: Vec<String> = rows
        .iter()
        .map(|r| format!("{} rho={:.4} p={:.3e} n={}", r.measure, r.rho, r.p_value, r.n))
        .collect();
    Ok(Summary {
        message: parts.join("; "),
        ..Summary::default()
    })
}

/// Applies a flag policy to a report CSV and writes the flagged cases to `out`.
pub fn cmd_flag(reports_csv: &Path, policy: &Path, out: &Path) -> Result<Summary> {
    let policy = FlagPolicy::load(policy)?;
    let table = report::read_reports_csv(reports_csv)?;
    let flagged = policy.apply(&table.reports);
    report::write_flags_csv(out, &flagged)?;
    Ok(Summary {
        message: format!("flagged {} of {} case(s)", flagged.len(), table.reports.len()),
        warnings: policy.warnings(),
        failures: Vec::new(),
    })
}

/// Generates the cohort described by `cfg.synth` under `out_dir`:
/// `case_XXX/sample_YY.nii.gz`, `case_XXX/ground_truth.nii.gz` and `manifest.toml`.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<Summary> {
    let spec = cfg.cohort_spec()?;
    create_dir(out_dir)?;
    let workers = pool(cfg.worker_count())?;
    let entries: Vec<Result<CaseManifest>> = workers.install(|| {
        (0..spec.n_cases)
            .into_par_iter()
            .map(|i| {
                let case = spec.case(i)?;
                let id = spec.case_id(i);
                let dir = out_dir.join(&id);
                create_dir(&dir)?;
                let mut samples = Vec::with_capacity(case.samples.len());
                for (k, grid) in case.samples.samples().iter().enumerate() {
                    let path = dir.join(format!("sample_{k:02}.nii.gz"));
                    write_volume(grid, &path, DataType::Float32, None)?;
                    samples.push(path);
                }
                let gt = dir.join("ground_truth.nii.gz");
                write_mask(&case.ground_truth, &gt, None)?;
                Ok(CaseManifest {
                    case_id: id,
                    samples,
                    ground_truth: Some(gt),
                    ct: None,
                })
            })
            .collect()
    });
    let entries = entries.into_iter().collect::<Result<Vec<_>>>()?;
    write_manifest(out_dir.join("manifest.toml"), &entries)?;
    Ok(Summary {
        message: format!(
            "wrote {} case(s) of {} samples at {} to {}",
            entries.len(),
            spec.n_samples,
            spec.dims,
            out_dir.display()
        ),
        ..Summary::default()
    })
}

/// Preprocessing recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    Liver,
    Tumor,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Liver => "liver",
            Recipe::Tumor => "tumor",
        }
    }
}

/// Path of the parameter record written next to a preprocessed volume.
pub fn params_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".params.toml");
    PathBuf::from(s)
}

fn normalize(grid: VoxelGrid, norm: &Normalization) -> Result<(VoxelGrid, NormalizationStats)> {
    let stats = match norm {
        Normalization::Fixed(stats) => stats.clone(),
        Normalization::PerVolume => {
            let s = compute_stats(std::slice::from_ref(&grid))?;
            NormalizationStats::new(s.mean(), s.std(), "input volume")?
        }
    };
    Ok((zscore(&grid, &stats), stats))
}

/// Runs a recipe on the CT at `input` and writes a float32 volume to `out`
/// plus a `<out>.params.toml` record of every applied parameter.
pub fn cmd_preprocess(
    recipe: Recipe,
    input: &Path,
    liver_mask: Option<&Path>,
    cfg: &RunConfig,
    out: &Path,
) -> Result<Summary> {
    let mut params = toml::Table::new();
    params.insert("recipe".into(), recipe.name().into());
    params.insert("input".into(), input.display().to_string().into());
    let ct = read_volume(input)?.grid;

    let (result, stats) = match recipe {
        Recipe::Liver => {
            let (recipe, norm) = cfg.liver_recipe()?;
            params.insert("window".into(), window_value(recipe.window.lo(), recipe.window.hi()));
            params.insert("target_dims".into(), dims_value(recipe.target_dims.as_array()));
            match norm {
                Normalization::Fixed(stats) => {
                    let r = segunc_core::preprocess::LiverRecipe {
                        stats: stats.clone(),
                        ..recipe
                    };
                    (preprocess_liver(&ct, &r)?, stats)
                }
                Normalization::PerVolume => {
                    let resampled = resample(&ct, recipe.target_dims, Interpolation::Trilinear)?;
                    normalize(window(&resampled, &recipe.window), &norm)?
                }
            }
        }
        Recipe::Tumor => {
            let mask_path =
                liver_mask.ok_or_else(|| Error::Usage("the tumor recipe needs a liver mask (--mask)".into()))?;
            let mask = read_mask_nonzero(mask_path)?;
            let (recipe, norm) = cfg.tumor_recipe()?;
            params.insert("liver_mask".into(), mask_path.display().to_string().into());
            params.insert("window".into(), window_value(recipe.window.lo(), recipe.window.hi()));
            params.insert("target_dims".into(), dims_value(recipe.target_dims.as_array()));
            params.insert("outside_fill".into(), recipe.outside_fill.into());
            match norm {
                Normalization::Fixed(stats) => {
                    let r = segunc_core::preprocess::TumorRecipe {
                        stats: stats.clone(),
                        ..recipe
                    };
                    (preprocess_tumor(&ct, &mask, &r)?, stats)
                }
                Normalization::PerVolume => {
                    let filled = tumor_intensities(&ct, &mask, &recipe)?;
                    let resampled = resample(&filled, recipe.target_dims, Interpolation::Trilinear)?;
                    normalize(resampled, &norm)?
                }
            }
        }
    };

    let mut stats_table = toml::Table::new();
    stats_table.insert("mean".into(), stats.mean().into());
    stats_table.insert("std".into(), stats.std().into());
    stats_table.insert("source".into(), stats.provenance().into());
    params.insert("stats".into(), stats_table.into());
    params.insert("output_dims".into(), dims_value(result.dims().as_array()));
    params.insert(
        "output_spacing".into(),
        toml::Value::Array(result.spacing().0.iter().map(|&s| s.into()).collect()),
    );

    write_volume(&result, out, DataType::Float32, None)?;
    let record = params_path(out);
    let text = toml::to_string(&params).map_err(|e| Error::Config {
        path: record.clone(),
        reason: e.to_string(),
    })?;
    fs::write(&record, text).map_err(|e| Error::io(&record, e))?;
    Ok(Summary {
        message: format!("wrote {} volume {} to {}", recipe.name(), result.dims(), out.display()),
        ..Summary::default()
    })
}

fn window_value(lo: f64, hi: f64) -> toml::Value {
    toml::Value::Array(vec![lo.into(), hi.into()])
}

fn dims_value(d: [usize; 3]) -> toml::Value {
    toml::Value::Array(d.iter().map(|&n| toml::Value::Integer(n as i64)).collect())
}
