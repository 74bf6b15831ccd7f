use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use segunc::config::RunConfig;
use segunc::pipeline::{self, Recipe, Summary};
use segunc::{Error, Result};

/// Uncertainty measures for Monte Carlo dropout segmentations.
#[derive(Parser)]
#[command(name = "segunc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute CV, D_pw, U_labelled and dice for every case of a manifest.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write consensus masks and uncertainty maps.
        #[arg(long)]
        emit_maps: bool,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Spearman correlation of each measure with dice.
    Correlate {
        /// Report CSV written by `analyze`.
        reports: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// List cases that a flag policy routes to review.
    Flag {
        /// Report CSV written by `analyze`.
        reports: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic cohort with a manifest.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cases: Option<usize>,
        /// Scale applied to every noise level (0 gives noiseless samples).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Apply the liver or tumor preprocessing recipe to a CT volume.
    Preprocess {
        #[arg(value_enum)]
        recipe: RecipeArg,
        /// CT volume in HU.
        input: PathBuf,
        /// Liver label volume; required by the tumor recipe.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Output volume.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeArg {
    Liver,
    Tumor,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn revalidate(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate().map_err(Error::Usage)?;
    Ok(cfg)
}

fn run(command: Command) -> Result<Summary> {
    match command {
        Command::Analyze {
            manifest,
            out,
            config,
            emit_maps,
            threshold,
            jobs,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.threshold = threshold.unwrap_or(cfg.threshold);
            cfg.jobs = jobs.unwrap_or(cfg.jobs);
            let cfg = revalidate(cfg)?;
            let emit = emit_maps || cfg.emit_maps;
            pipeline::cmd_analyze(&manifest, &cfg, &out, emit)
        }
        Command::Correlate { reports, out } => pipeline::cmd_correlate(&reports, &out),
        Command::Flag { reports, policy, out } => pipeline::cmd_flag(&reports, &policy, &out),
        Command::Synth {
            out,
            config,
            cases,
            noise,
            seed,
            jobs,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.synth.cases = cases.unwrap_or(cfg.synth.cases);
            cfg.synth.noise = noise.unwrap_or(cfg.synth.noise);
            cfg.synth.seed = seed.unwrap_or(cfg.synth.seed);
            cfg.jobs = jobs.unwrap_or(cfg.jobs);
            let cfg = revalidate(cfg)?;
            pipeline::cmd_synth(&cfg, &out)
        }
        Command::Preprocess {
            recipe,
            input,
            mask,
            out,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let recipe = match recipe {
                RecipeArg::Liver => Recipe::Liver,
                RecipeArg::Tumor => Recipe::Tumor,
            };
            pipeline::cmd_preprocess(recipe, &input, mask.as_deref(), &cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for (id, e) in &summary.failures {
                eprintln!("failed: {id}: {e}");
            }
            println!("{}", summary.message);
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
