//! The four subcommands. Each one validates its config, computes every output
//! in memory, and leaves writing to [`execute`].

use std::path::{Path, PathBuf};

use class_uncertainty::analysis::{
    run_if1a, run_if1b, run_if2, run_mitigation_compare, AnalysisKind, AnalysisReport,
};
use class_uncertainty::datasets::{
    balanced_test_split, decode_dataset_binary, encode_dataset_binary, load_dataset_csv,
    write_dataset_csv, DatasetManifest,
};
use class_uncertainty::ensemble::measure_class_uncertainty;
use class_uncertainty::measures::mean_std;
use class_uncertainty::rng::RNG_ALGORITHM;
use class_uncertainty::trainer::run;
use class_uncertainty::{Dataset, ImbalanceMeasure, Real, RunResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Command, ExperimentConfig, Precision};
use crate::error::{CliError, Result};
use crate::output::{Artifacts, OutputDir};

/// Files to write plus human-readable summary lines.
#[derive(Clone, Debug, Default)]
pub struct CommandOutput {
    pub artifacts: Artifacts,
    pub summary: Vec<String>,
}

/// Runs `command`, then commits its files to `out`. Nothing is written unless
/// the whole command succeeds.
pub fn execute(
    command: Command,
    cfg: &ExperimentConfig,
    out: &OutputDir,
) -> Result<(CommandOutput, Vec<PathBuf>)> {
    let result = match command {
        Command::Synth => cmd_synth(cfg),
        Command::Uncertainty => cmd_uncertainty(cfg),
        Command::Train => cmd_train(cfg),
        Command::Analyze => cmd_analyze(cfg),
    }?;
    let written = out.commit(&result.artifacts)?;
    Ok((result, written))
}

macro_rules! by_precision {
    ($cfg:expr, $f:ident) => {
        match $cfg.precision {
            Precision::F64 => $f::<f64>($cfg),
            Precision::F32 => $f::<f32>($cfg),
        }
    };
}

pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    cfg.validate(Command::Synth)?;
    by_precision!(cfg, synth)
}

pub fn cmd_uncertainty(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    cfg.validate(Command::Uncertainty)?;
    by_precision!(cfg, uncertainty)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    cfg.validate(Command::Train)?;
    by_precision!(cfg, train)
}

pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    cfg.validate(Command::Analyze)?;
    by_precision!(cfg, analyze)
}

fn json<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| class_uncertainty::Error::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_bytes<T: Real>(ds: &Dataset<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset_csv(ds, &mut buf)?;
    Ok(buf)
}

fn data_seed(cfg: &ExperimentConfig, seed: u64) -> Result<u64> {
    Ok(cfg.dataset()?.data_seed.wrapping_add(seed))
}

fn load_file<T: Real>(path: &Path, num_classes: Option<usize>) -> Result<Dataset<T>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return Ok(load_dataset_csv(path, num_classes)?);
    }
    let ds = decode_dataset_binary(&std::fs::read(path)?, path)?;
    match num_classes {
        Some(c) if c != ds.num_classes() => Err(CliError::config(format!(
            "{} has {} classes, expected {c}",
            path.display(),
            ds.num_classes()
        ))),
        _ => Ok(ds),
    }
}

fn train_data<T: Real>(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset<T>> {
    let d = cfg.dataset()?;
    match (&d.generator, &d.train_file) {
        (Some(g), _) => Ok(g.generate_train(data_seed(cfg, seed)?)?),
        (None, Some(p)) => load_file(&cfg.resolve(p), d.num_classes),
        (None, None) => Err(CliError::config("[dataset] needs a generator or a train_file")),
    }
}

fn test_data<T: Real>(cfg: &ExperimentConfig, seed: u64, num_classes: usize) -> Result<Dataset<T>> {
    let d = cfg.dataset()?;
    match (&d.generator, d.test_per_class, &d.test_file) {
        (Some(g), Some(n), _) => Ok(balanced_test_split(g, n, data_seed(cfg, seed)?)?),
        (None, _, Some(p)) => load_file(&cfg.resolve(p), Some(num_classes)),
        _ => Err(CliError::config("no test set configured")),
    }
}

fn synth<T: Real>(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let d = cfg.dataset()?;
    let generator = d
        .generator
        .as_ref()
        .ok_or_else(|| CliError::config("synth needs [dataset] generator"))?;
    let cells = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(Artifacts, String)> {
            let ds_seed = data_seed(cfg, seed)?;
            let train: Dataset<T> = generator.generate_train(ds_seed)?;
            let test: Option<Dataset<T>> = d
                .test_per_class
                .map(|n| balanced_test_split(generator, n, ds_seed))
                .transpose()?;
            let mut files = Artifacts::new();
            let mut names = Vec::new();
            let mut emit = |files: &mut Artifacts, stem: String, ds: &Dataset<T>| -> Result<()> {
                if d.format.csv() {
                    names.push(format!("{stem}.csv"));
                    files.add(format!("{stem}.csv"), csv_bytes(ds)?);
                }
                if d.format.binary() {
                    names.push(format!("{stem}.bin"));
                    files.add(format!("{stem}.bin"), encode_dataset_binary(ds));
                }
                Ok(())
            };
            emit(&mut files, format!("train_seed{seed}"), &train)?;
            if let Some(t) = &test {
                emit(&mut files, format!("test_seed{seed}"), t)?;
            }
            let manifest = DatasetManifest {
                generator: Some(generator.clone()),
                seed: ds_seed,
                rng: RNG_ALGORITHM.into(),
                num_examples: train.len(),
                dim: train.dim(),
                num_classes: train.num_classes(),
                class_counts: train.class_counts(),
                files: names,
            };
            files.add(format!("manifest_seed{seed}.json"), json(&manifest)?);
            let line = format!(
                "seed {seed}: {} training examples, class counts {:?}",
                train.len(),
                manifest.class_counts
            );
            Ok((files, line))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(cells))
}

fn merge(cells: Vec<(Artifacts, String)>) -> CommandOutput {
    let mut out = CommandOutput::default();
    for (files, line) in cells {
        out.artifacts.append(files);
        out.summary.push(line);
    }
    out
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn uncertainty<T: Real>(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let train_cfg = cfg.train_config();
    let ens = cfg.ensemble_settings();
    let cells = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(Artifacts, String)> {
            let train: Dataset<T> = train_data(cfg, seed)?;
            let (report, preds) =
                measure_class_uncertainty(&train, &train_cfg, ens.members, ens.base_seed_for(seed))?;
            let mut files = Artifacts::new();
            files.add(format!("ensemble_seed{seed}.bin"), preds.encode());
            let mut csv = Vec::new();
            report.write_class_csv(&mut csv)?;
            files.add(format!("class_uncertainty_seed{seed}.csv"), csv);
            let mu: Vec<f64> = report.class_normalized.iter().map(|v| v.as_f64()).collect();
            Ok((files, format!("seed {seed}: mu_U = {}", fmt_vec(&mu))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(cells))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    method: Option<&'a str>,
    seeds: &'a [u64],
    top1_error: Vec<f64>,
    mean: f64,
    std: f64,
    per_class_error_mean: Vec<f64>,
}

fn train<T: Real>(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let spec = cfg.mitigation_spec()?;
    let measure: Option<ImbalanceMeasure<T>> = if spec.requires_uncertainty() {
        let path = cfg.measure_path()?;
        Some(ImbalanceMeasure::read_csv(std::fs::File::open(&path)?)?)
    } else {
        None
    };
    let train_cfg = cfg.train_config();
    let results = cfg
        .seeds
        .par_iter()
        .map(|&seed| -> Result<RunResult> {
            let train: Dataset<T> = train_data(cfg, seed)?;
            if let Some(m) = &measure {
                if m.num_classes() != train.num_classes() {
                    return Err(CliError::config(format!(
                        "measure has {} classes, dataset has {}",
                        m.num_classes(),
                        train.num_classes()
                    )));
                }
            }
            let test = test_data(cfg, seed, train.num_classes())?;
            let (_, _, r) = run(&train, &test, &train_cfg, &spec, seed, measure.as_ref())?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = CommandOutput::default();
    for r in &results {
        out.artifacts.add(format!("run_seed{}.json", r.seed), json(r)?);
        out.summary
            .push(format!("seed {}: top-1 error {:.2}%", r.seed, r.top1_error));
    }
    let errors: Vec<f64> = results.iter().map(|r| r.top1_error).collect();
    let (mean, std) = mean_std(&errors).unwrap_or((f64::NAN, f64::NAN));
    let classes = results[0].per_class_error.len();
    let per_class_error_mean = (0..classes)
        .map(|c| results.iter().map(|r| r.per_class_error[c]).sum::<f64>() / results.len() as f64)
        .collect();
    let summary = TrainSummary {
        method: cfg.mitigation.as_ref().and_then(|m| m.method.as_deref()),
        seeds: &cfg.seeds,
        top1_error: errors,
        mean,
        std,
        per_class_error_mean,
    };
    out.artifacts.add("summary.json", json(&summary)?);
    out.summary.push(format!(
        "top-1 error over {} seeds: {mean:.2} ± {std:.2}",
        cfg.seeds.len()
    ));
    Ok(out)
}

fn analyze<T: Real>(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let settings = cfg.analysis_settings()?;
    let report: AnalysisReport = match cfg.analysis_kind()? {
        AnalysisKind::If1a => run_if1a::<T>(&settings)?,
        AnalysisKind::If1b => run_if1b::<T>(&cfg.ir_list(), &settings)?,
        AnalysisKind::If2 => run_if2::<T>(&cfg.lambda_list(), &settings)?,
        AnalysisKind::MitigationCompare => {
            run_mitigation_compare::<T>(&cfg.compare_methods()?, &settings)?
        }
    };
    let mut out = CommandOutput::default();
    let mut text = report.to_json()?.into_bytes();
    text.push(b'\n');
    out.artifacts.add("report.json", text);
    for (name, bytes) in report.csv_files()? {
        out.artifacts.add(name, bytes);
    }
    out.summary.push(format!(
        "{} over seeds {:?} (provenance {})",
        report.kind, report.seeds, report.provenance
    ));
    for t in &report.tables {
        out.summary
            .push(format!("table {}: {} rows", t.name, t.num_rows()));
    }
    for r in &report.rho {
        let seed = r.seed.map_or("median".to_string(), |s| format!("seed {s}"));
        let value = r
            .rho
            .value()
            .map_or("undefined".to_string(), |v| format!("{v:.3}"));
        out.summary.push(format!("rho {} ({seed}): {value}", r.name));
    }
    for m in &report.methods {
        out.summary.push(format!(
            "{:<18} {:<36} {:.2} ± {:.2}",
            m.group.as_str(),
            m.name,
            m.mean,
            m.std
        ));
    }
    Ok(out)
}
