use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use persona_bias::dataset::{emit_dataset, generate_synthetic_dataset, SyntheticSpec};
use persona_bias::orchestrator::{self, RunManifest, RunOptions, ScoreSettings, RESPONSE_LOG};
use persona_bias::report::{emit_bundle, write_bundle};
use persona_bias::{ContextCondition, Domain, PersonaCatalog};

#[derive(Parser)]
#[command(
    name = "persona-bias",
    version,
    about = "Measure social perceptions of persona-assigned chat models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Query every cell of a manifest, appending to <output_dir>/responses.jsonl.
    Run {
        manifest: PathBuf,
        /// Stop after this many new log entries.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Score the log and write the report bundle when the run finishes.
        #[arg(long)]
        report: bool,
    },
    /// Re-score a response log into per-iteration metric reports.
    Score {
        log: PathBuf,
        /// Manifest the log was produced from (supplies datasets and weights).
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to reports.json next to the log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit tables, grids, heatmaps and decompositions from a reports file.
    Report {
        reports: PathBuf,
        /// Defaults to a `report` directory next to the reports file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic BBQ-format dataset.
    Generate {
        #[arg(long)]
        domain: Domain,
        #[arg(long, value_parser = parse_condition)]
        condition: ContextCondition,
        #[arg(short = 'n', long, default_value_t = 100)]
        questions: usize,
        /// Comma-separated targets; defaults to the domain catalog's targets.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<String>>,
        /// Fraction of positive questions.
        #[arg(long, default_value_t = 0.5)]
        mix: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_condition(s: &str) -> Result<ContextCondition, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown condition {s:?}"))
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn score(log: &Path, manifest_path: &Path, out: &Path) -> Result<()> {
    let manifest = RunManifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let catalog = orchestrator::load_catalog(&manifest, &base)?;
    let datasets = orchestrator::load_datasets(&manifest, &base, &catalog)?;
    let entries = orchestrator::load_log(log)?;
    let digest = manifest.digest();
    let foreign = entries.iter().filter(|e| e.manifest_digest != digest).count();
    if foreign > 0 {
        tracing::warn!(foreign, "log entries were written under a different manifest");
    }
    let settings = ScoreSettings {
        scoring: manifest.scoring.clone(),
        bias_score: manifest.bias_score.clone(),
    };
    let reports = orchestrator::score_log(&entries, &datasets, &catalog, &settings)?;
    orchestrator::save_reports(&reports, out)?;
    eprintln!(
        "scored {} entries into {} reports -> {}",
        entries.len(),
        reports.len(),
        out.display()
    );
    Ok(())
}

fn report(reports_path: &Path, out: &Path) -> Result<()> {
    let reports = orchestrator::load_reports(reports_path)?;
    let bundle = emit_bundle(&reports)?;
    write_bundle(&bundle, out)?;
    eprintln!("wrote {} files under {}", bundle.files.len(), out.display());
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Run {
            manifest: path,
            stop_after,
            report: then_report,
        } => {
            let manifest = RunManifest::load(&path).with_context(|| format!("reading {}", path.display()))?;
            let base = manifest_dir(&path);
            let options = RunOptions {
                stop_after,
                ..RunOptions::default()
            };
            let summary = orchestrator::run(&manifest, &base, options).await?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if summary.failed > 0 {
                eprintln!(
                    "{} cells failed; see errors.jsonl and re-run to retry them",
                    summary.failed
                );
            }
            if then_report {
                let out_dir = base.join(&manifest.output_dir);
                let reports = out_dir.join("reports.json");
                score(&out_dir.join(RESPONSE_LOG), &path, &reports)?;
                report(&reports, &out_dir.join("report"))?;
            }
        }
        Command::Score { log, manifest, out } => {
            let out = out.unwrap_or_else(|| manifest_dir(&log).join("reports.json"));
            score(&log, &manifest, &out)?;
        }
        Command::Report { reports, out } => {
            let out = out.unwrap_or_else(|| manifest_dir(&reports).join("report"));
            report(&reports, &out)?;
        }
        Command::Generate {
            domain,
            condition,
            questions,
            targets,
            mix,
            seed,
            out,
        } => {
            let targets = match targets {
                Some(t) => t,
                None => PersonaCatalog::builtin().target_ids(&domain),
            };
            if targets.len() < 2 {
                bail!("domain {domain} needs at least two targets; pass --targets");
            }
            let records = generate_synthetic_dataset(&SyntheticSpec {
                domain,
                n_questions: questions,
                targets,
                polarity_mix: mix,
                condition,
                seed,
            })?;
            match out {
                Some(path) => emit_dataset(&records, std::fs::File::create(&path)?)?,
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    emit_dataset(&records, &mut lock)?;
                    lock.flush()?;
                }
            }
        }
    }
    Ok(())
}
