use std::path::{Path, PathBuf};
use std::process::ExitCode;

use nispa_lab::bench::{
    ablation_removal_curve, emit_report, run_experiment, train_and_measure_skewness, write_atomic, ExperimentConfig,
    RemovalMode, ReportFormat, RunReport, SkewnessReport,
};
use nispa_lab::seeded_rng;
use serde::Serialize;

use crate::{Common, Format, Preset};

/// Exit status when the report was written but some seeds failed.
const PARTIAL: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lab(#[from] nispa_lab::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

/// File or preset, then `--set` pairs, then `--seed` and `--out`.
pub fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => match common.preset {
            Preset::Reference => ExperimentConfig::default(),
            Preset::Desk => ExperimentConfig::desk(),
        },
    };
    config.apply_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn formats(format: Format) -> &'static [ReportFormat] {
    match format {
        Format::Json => &[ReportFormat::Json],
        Format::Csv => &[ReportFormat::Csv],
        Format::Both => &[ReportFormat::Json, ReportFormat::Csv],
    }
}

fn print_summary(report: &RunReport) {
    println!("method {}  seeds {}", report.method.name(), report.runs.len());
    for (j, s) in report.per_task.iter().enumerate() {
        println!("  task {j}: {:.2} +/- {:.2}", 100.0 * s.mean, 100.0 * s.std);
    }
    println!("  mean: {:.2} +/- {:.2}", 100.0 * report.overall.mean, 100.0 * report.overall.std);
    for f in &report.failures {
        println!("  seed {} failed: {}", f.seed, f.error);
    }
}

fn write_all(report: &RunReport, format: Format, dir: &Path) -> Result<()> {
    for &f in formats(format) {
        let path = emit_report(report, f, dir)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn status(report: &RunReport) -> ExitCode {
    if report.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(PARTIAL)
    }
}

pub fn run(common: &Common, format: Format) -> Result<ExitCode> {
    let config = load_config(common)?;
    let report = run_experiment(&config)?;
    print_summary(&report);
    write_all(&report, format, &config.out)?;
    // the resolved settings, so the run can be repeated with --config
    write_atomic(&config.out.join("config.toml"), config.to_toml_string()?.as_bytes())?;
    Ok(status(&report))
}

#[derive(Serialize)]
struct SeedSkewness {
    seed: u64,
    #[serde(flatten)]
    report: SkewnessReport,
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<()> {
    write_atomic(&path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct SkewnessRow {
    seed: u64,
    epoch: usize,
    layer: usize,
    g1: f64,
    zero_variance: bool,
}

pub fn analyze_skewness(common: &Common, epochs: usize) -> Result<ExitCode> {
    if epochs == 0 {
        return Err(CliError::Usage("--epochs must be positive".into()));
    }
    let config = load_config(common)?;
    let mut all = Vec::new();
    let mut rows = Vec::new();
    for seed in config.seeds() {
        let (_, _, report) = train_and_measure_skewness(&config, seed, epochs)?;
        for (e, layers) in report.per_epoch.iter().enumerate() {
            for (l, s) in layers.iter().enumerate() {
                rows.push(SkewnessRow {
                    seed,
                    epoch: e + 1,
                    layer: l,
                    g1: s.g1,
                    zero_variance: s.zero_variance,
                });
            }
        }
        println!(
            "seed {seed}: min g1 {:.3}, test accuracy {:.2}",
            report.min_g1(),
            100.0 * report.final_accuracy
        );
        all.push(SeedSkewness { seed, report });
    }
    let json = serde_json::to_string_pretty(&all).map_err(nispa_lab::Error::from)?;
    write_file(config.out.join("skewness.json"), json.as_bytes())?;
    write_file(config.out.join("skewness.csv"), &csv_bytes(&rows)?)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AblationRow {
    seed: u64,
    mode: &'static str,
    repeat: usize,
    k: usize,
    accuracy: f64,
}

fn default_ks(config: &ExperimentConfig) -> Vec<usize> {
    let w = config.hidden.iter().copied().min().unwrap_or(0);
    let mut ks: Vec<usize> = (0..=10).map(|i| i * w / 10).collect();
    ks.dedup();
    ks
}

pub fn ablate(common: &Common, epochs: usize, ks: &[usize], repeats: usize) -> Result<ExitCode> {
    let config = load_config(common)?;
    let ks = if ks.is_empty() { default_ks(&config) } else { ks.to_vec() };
    let mut rows = Vec::new();
    for seed in config.seeds() {
        let (net, task, _) = train_and_measure_skewness(&config, seed, epochs)?;
        // separate stream for the random draws, so the trained model does
        // not depend on the number of repeats
        let mut rng = seeded_rng(seed ^ 0xab1a_7e00);
        let top = ablation_removal_curve(&net, &task.train, &task.test, 0, &ks, RemovalMode::TopActive, &mut rng)?;
        rows.extend(ks.iter().zip(&top).map(|(&k, &accuracy)| AblationRow {
            seed,
            mode: "top_active",
            repeat: 0,
            k,
            accuracy,
        }));
        for repeat in 0..repeats {
            let random = ablation_removal_curve(&net, &task.train, &task.test, 0, &ks, RemovalMode::Random, &mut rng)?;
            rows.extend(ks.iter().zip(&random).map(|(&k, &accuracy)| AblationRow {
                seed,
                mode: "random",
                repeat,
                k,
                accuracy,
            }));
        }
        let last = ks.len() - 1;
        println!(
            "seed {seed}: k={} top_active {:.2}",
            ks[last],
            100.0 * top[last]
        );
    }
    write_file(config.out.join("ablation.csv"), &csv_bytes(&rows)?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn report(input: &Path, seed: Option<u64>, out: Option<&Path>, format: Format) -> Result<ExitCode> {
    let mut report = RunReport::load(input)?;
    if let Some(seed) = seed {
        let runs: Vec<_> = report.runs.into_iter().filter(|r| r.seed == seed).collect();
        let failures: Vec<_> = report.failures.into_iter().filter(|f| f.seed == seed).collect();
        if runs.is_empty() && failures.is_empty() {
            return Err(CliError::Usage(format!("seed {seed} is not in {}", input.display())));
        }
        report = RunReport::new(report.config, runs, failures);
    }
    print_summary(&report);
    if let Some(dir) = out {
        write_all(&report, format, dir)?;
    }
    Ok(status(&report))
}
