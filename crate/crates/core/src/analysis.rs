//! Runners for the measure analyses and the mitigation comparison.
//!
//! * IF1a: is a measure higher for classes the naive classifier gets wrong?
//! * IF1b: does the tail-class measure grow as the imbalance ratio grows?
//! * IF2: is the measure stable when a dataset is padded with duplicates?
//!
//! Every runner returns an [`AnalysisReport`] of plot-ready tables. Cells
//! (seeds, imbalance ratios, duplication strengths, methods) run in parallel
//! and are assembled in a fixed order, so reports are reproducible.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{balanced_test_split, Dataset, GeneratorSpec};
use crate::ensemble::measure_class_uncertainty;
use crate::error::{Error, Result};
use crate::measures::{cardinality_measure, mean_std, median, spearman_rho, ImbalanceMeasure, Rho};
use crate::rng::{seeded, stream};
use crate::samplers::duplication_probs;
use crate::scalar::Real;
use crate::trainer::{
    run, LossKind, Mitigation, MitigationSpec, SamplerKind, Stage, TrainConfig, WeightSource,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalysisKind {
    #[serde(rename = "IF1a")]
    If1a,
    #[serde(rename = "IF1b")]
    If1b,
    #[serde(rename = "IF2")]
    If2,
    #[serde(rename = "mitigation-compare")]
    MitigationCompare,
}

impl AnalysisKind {
    pub const ALL: [AnalysisKind; 4] = [
        AnalysisKind::If1a,
        AnalysisKind::If1b,
        AnalysisKind::If2,
        AnalysisKind::MitigationCompare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisKind::If1a => "IF1a",
            AnalysisKind::If1b => "IF1b",
            AnalysisKind::If2 => "IF2",
            AnalysisKind::MitigationCompare => "mitigation-compare",
        }
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnalysisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase().replace('_', "-");
        AnalysisKind::ALL
            .into_iter()
            .find(|k| k.as_str().to_ascii_lowercase() == wanted)
            .ok_or_else(|| {
                let valid: Vec<_> = AnalysisKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::invalid(format!(
                    "unknown analysis kind '{s}' (valid kinds: {})",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Named columns of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn new(name: impl Into<String>) -> Self {
        Table {
            name: name.into(),
            columns: Vec::new(),
        }
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if let Some(first) = self.columns.first() {
            if first.values.len() != values.len() {
                return Err(Error::DimensionMismatch(format!(
                    "column {name} has {} rows, table {} has {}",
                    values.len(),
                    self.name,
                    first.values.len()
                )));
            }
        }
        self.columns.push(Column { name, values });
        Ok(self)
    }

    pub fn num_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(fmt)?;
        for r in 0..self.num_rows() {
            w.write_record(self.columns.iter().map(|c| c.values[r].to_string()))
                .map_err(fmt)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEntry {
    pub name: String,
    pub seed: Option<u64>,
    pub rho: Rho<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodGroup {
    Baseline,
    Resampling,
    Reweighting,
    MarginAdjustment,
    MultiStage,
}

impl MethodGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodGroup::Baseline => "baseline",
            MethodGroup::Resampling => "resampling",
            MethodGroup::Reweighting => "reweighting",
            MethodGroup::MarginAdjustment => "margin-adjustment",
            MethodGroup::MultiStage => "multi-stage",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub group: MethodGroup,
    pub spec: MitigationSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub name: String,
    pub group: MethodGroup,
    /// Balanced top-1 error (percent) per seed, in seed-list order.
    pub errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kind: AnalysisKind,
    pub seeds: Vec<u64>,
    /// SHA-256 of the canonical JSON of every input to the runner.
    pub provenance: String,
    pub tables: Vec<Table>,
    pub rho: Vec<RhoEntry>,
    pub methods: Vec<MethodRow>,
}

impl AnalysisReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn rho_values(&self, name: &str) -> Vec<Rho<f64>> {
        self.rho
            .iter()
            .filter(|r| r.name == name)
            .map(|r| r.rho)
            .collect()
    }

    pub fn method(&self, name: &str) -> Option<&MethodRow> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// File name and contents of every CSV the report renders to.
    pub fn csv_files(&self) -> Result<Vec<(String, Vec<u8>)>> {
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        let mut files = Vec::new();
        for t in &self.tables {
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            files.push((format!("{}.csv", t.name), buf));
        }
        if !self.rho.is_empty() {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["name", "seed", "status", "value"]).map_err(fmt)?;
            for r in &self.rho {
                let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
                let (status, value) = match r.rho {
                    Rho::Defined(v) => ("defined", v.to_string()),
                    Rho::Undefined => ("undefined", String::new()),
                };
                w.write_record([r.name.as_str(), &seed, status, &value])
                    .map_err(fmt)?;
            }
            files.push(("rho.csv".into(), into_bytes(w)?));
        }
        if !self.methods.is_empty() {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["group".to_string(), "method".into(), "mean".into(), "std".into()];
            header.extend(self.seeds.iter().map(|s| format!("seed_{s}")));
            w.write_record(&header).map_err(fmt)?;
            for m in &self.methods {
                let mut row = vec![
                    m.group.as_str().to_string(),
                    m.name.clone(),
                    m.mean.to_string(),
                    m.std.to_string(),
                ];
                row.extend(m.errors.iter().map(|e| e.to_string()));
                w.write_record(&row).map_err(fmt)?;
            }
            files.push(("methods.csv".into(), into_bytes(w)?));
        }
        Ok(files)
    }
}

fn into_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    pub members: usize,
    pub base_seed: u64,
}

impl EnsembleSettings {
    /// First member seed for the cell run with `seed`. Cells get disjoint
    /// ranges of `members` consecutive seeds.
    pub fn base_seed_for(&self, seed: u64) -> u64 {
        self.base_seed
            .wrapping_add(seed.wrapping_mul(self.members as u64))
    }
}

/// Inputs shared by every runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub generator: GeneratorSpec,
    pub test_per_class: usize,
    /// Cell `seed` draws its data with `data_seed + seed`.
    pub data_seed: u64,
    pub train: TrainConfig,
    pub ensemble: EnsembleSettings,
    pub seeds: Vec<u64>,
}

impl AnalysisSettings {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.train.optim.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("analysis needs at least one seed"));
        }
        if self.ensemble.members == 0 {
            return Err(Error::invalid("ensemble needs at least one member"));
        }
        if self.test_per_class == 0 {
            return Err(Error::invalid("test_per_class must be positive"));
        }
        Ok(())
    }

    pub fn data_seed_for(&self, seed: u64) -> u64 {
        self.data_seed.wrapping_add(seed)
    }
}

fn provenance<S: Serialize>(kind: AnalysisKind, inputs: &S) -> Result<String> {
    let json = serde_json::to_vec(&(kind, inputs)).map_err(|e| Error::Format(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&json)))
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn index_column(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

fn counts_column(counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&n| n as f64).collect()
}

fn uncertainty_measure<T: Real>(
    train: &Dataset<T>,
    s: &AnalysisSettings,
    seed: u64,
) -> Result<ImbalanceMeasure<T>> {
    let (report, _) = measure_class_uncertainty(
        train,
        &s.train,
        s.ensemble.members,
        s.ensemble.base_seed_for(seed),
    )?;
    Ok(report.measure())
}

/// Per-column median across seeds.
fn columnwise_median(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| median(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()).unwrap_or(f64::NAN))
        .collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn format_param(v: f64) -> String {
    v.to_string()
}

struct If1aCell {
    counts: Vec<usize>,
    mu_c: Vec<f64>,
    mu_u: Vec<f64>,
    mu_u_tilde: Vec<f64>,
    errors: Vec<f64>,
    top1: f64,
    rho_c: Rho<f64>,
    rho_u: Rho<f64>,
}

/// Per-class measures against the naive classifier's per-class test error.
pub fn run_if1a<T: Real>(s: &AnalysisSettings) -> Result<AnalysisReport> {
    s.validate()?;
    if s.generator.num_classes() < 2 {
        return Err(Error::invalid("rank correlation needs at least two classes"));
    }
    let cells = s
        .seeds
        .par_iter()
        .map(|&seed| -> Result<If1aCell> {
            let data_seed = s.data_seed_for(seed);
            let train = s.generator.generate_train::<T>(data_seed)?;
            let test = balanced_test_split::<T>(&s.generator, s.test_per_class, data_seed)?;
            let naive = MitigationSpec::naive(s.train.optim.epochs);
            let (_, _, result) = run(&train, &test, &s.train, &naive, seed, None)?;
            let counts = train.class_counts();
            let mu_c = to_f64(&cardinality_measure::<T>(&counts)?.normalized);
            let mu_u = uncertainty_measure(&train, s, seed)?;
            let rho_c = spearman_rho(&mu_c, &result.per_class_error)?;
            let mu_u_norm = to_f64(&mu_u.normalized);
            let rho_u = spearman_rho(&mu_u_norm, &result.per_class_error)?;
            Ok(If1aCell {
                counts,
                mu_c,
                mu_u: mu_u_norm,
                mu_u_tilde: to_f64(&mu_u.unnormalized),
                errors: result.per_class_error,
                top1: result.top1_error,
                rho_c,
                rho_u,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut tables = Vec::new();
    let mut rho = Vec::new();
    for (&seed, cell) in s.seeds.iter().zip(&cells) {
        tables.push(
            Table::new(format!("if1a_seed{seed}"))
                .with_column("class_index", index_column(cell.counts.len()))?
                .with_column("count", counts_column(&cell.counts))?
                .with_column("mu_c", cell.mu_c.clone())?
                .with_column("mu_u", cell.mu_u.clone())?
                .with_column("mu_u_tilde", cell.mu_u_tilde.clone())?
                .with_column("test_error", cell.errors.clone())?,
        );
        rho.push(RhoEntry {
            name: "mu_c_vs_error".into(),
            seed: Some(seed),
            rho: cell.rho_c,
        });
        rho.push(RhoEntry {
            name: "mu_u_vs_error".into(),
            seed: Some(seed),
            rho: cell.rho_u,
        });
    }
    tables.push(
        Table::new("if1a_summary")
            .with_column("seed", s.seeds.iter().map(|&x| x as f64).collect())?
            .with_column("top1_error", cells.iter().map(|c| c.top1).collect())?,
    );
    Ok(AnalysisReport {
        kind: AnalysisKind::If1a,
        seeds: s.seeds.clone(),
        provenance: provenance(AnalysisKind::If1a, s)?,
        tables,
        rho,
        methods: Vec::new(),
    })
}

/// Per-class measures for each imbalance ratio of a long-tailed family.
pub fn run_if1b<T: Real>(ir_list: &[f64], s: &AnalysisSettings) -> Result<AnalysisReport> {
    s.validate()?;
    if ir_list.is_empty() {
        return Err(Error::invalid("IF1b needs at least one imbalance ratio"));
    }
    let generators = ir_list
        .iter()
        .map(|&ir| {
            let g = s.generator.with_imbalance_ratio(ir)?;
            g.validate()?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..ir_list.len())
        .flat_map(|i| s.seeds.iter().map(move |&seed| (i, seed)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, seed)| -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
            let train = generators[i].generate_train::<T>(s.data_seed_for(seed))?;
            let counts = train.class_counts();
            let mu_c = to_f64(&cardinality_measure::<T>(&counts)?.normalized);
            let mu_u = to_f64(&uncertainty_measure(&train, s, seed)?.normalized);
            Ok((counts, mu_c, mu_u))
        })
        .collect::<Result<Vec<_>>>()?;

    let k = s.generator.num_classes();
    let tail = k - 1;
    let n_seeds = s.seeds.len();
    let mut tables = Vec::new();
    let (mut tail_count, mut tail_mu_c, mut tail_mu_u) = (Vec::new(), Vec::new(), Vec::new());
    let mut tail_per_seed = vec![Vec::new(); n_seeds];
    for (i, &ir) in ir_list.iter().enumerate() {
        let group = &cells[i * n_seeds..(i + 1) * n_seeds];
        let (counts, mu_c, _) = &group[0];
        let per_seed: Vec<Vec<f64>> = group.iter().map(|c| c.2.clone()).collect();
        let med = columnwise_median(&per_seed);
        let mut table = Table::new(format!("if1b_ir{}", format_param(ir)))
            .with_column("class_index", index_column(k))?
            .with_column("count", counts_column(counts))?
            .with_column("mu_c", mu_c.clone())?
            .with_column("mu_u_median", med.clone())?;
        for (j, (&seed, row)) in s.seeds.iter().zip(&per_seed).enumerate() {
            table = table.with_column(format!("mu_u_seed{seed}"), row.clone())?;
            tail_per_seed[j].push(row[tail]);
        }
        tables.push(table);
        tail_count.push(counts[tail] as f64);
        tail_mu_c.push(mu_c[tail]);
        tail_mu_u.push(med[tail]);
    }
    let mut tail_table = Table::new("if1b_tail")
        .with_column("imbalance_ratio", ir_list.to_vec())?
        .with_column("tail_count", tail_count)?
        .with_column("tail_mu_c", tail_mu_c)?
        .with_column("tail_mu_u_median", tail_mu_u)?;
    for (&seed, col) in s.seeds.iter().zip(tail_per_seed) {
        tail_table = tail_table.with_column(format!("tail_mu_u_seed{seed}"), col)?;
    }
    tables.push(tail_table);
    Ok(AnalysisReport {
        kind: AnalysisKind::If1b,
        seeds: s.seeds.clone(),
        provenance: provenance(AnalysisKind::If1b, &(ir_list, s))?,
        tables,
        rho: Vec::new(),
        methods: Vec::new(),
    })
}

/// Per-class counts after duplication with strength `lambda`:
/// `m_c = max(N_c, round(N_max · α_c / max α))`, and exactly `N_max` at
/// `lambda = 1`. Counts never shrink and keep the order of the originals.
pub fn materialized_counts(lambda: f64, class_counts: &[usize]) -> Result<Vec<usize>> {
    let alpha = duplication_probs::<f64>(lambda, class_counts)?;
    let n_max = class_counts.iter().copied().max().unwrap_or(0);
    if lambda == 1.0 {
        return Ok(vec![n_max; class_counts.len()]);
    }
    let a_max = alpha.values().iter().copied().fold(0.0, f64::max);
    Ok(class_counts
        .iter()
        .zip(alpha.values())
        .map(|(&n, &a)| n.max((n_max as f64 * a / a_max).round() as usize))
        .collect())
}

/// Appends duplicated examples so class `c` holds `materialized_counts(c)`
/// examples. Duplicates cycle through a per-class shuffle drawn from the
/// duplication stream of `seed`; the shuffle does not depend on `lambda`, so
/// the duplicates at a smaller strength are a prefix of those at a larger one.
pub fn materialize_duplicates<T: Real>(
    dataset: &Dataset<T>,
    lambda: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    let counts = dataset.class_counts();
    let targets = materialized_counts(lambda, &counts)?;
    let mut rng = seeded(seed, stream::DUPLICATION);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    for (mut members, &target) in dataset.class_indices().into_iter().zip(&targets) {
        members.shuffle(&mut rng);
        let extra = target - members.len();
        indices.extend((0..extra).map(|k| members[k % members.len()]));
    }
    dataset.subset(&indices)
}

/// Measure drift (L1 distance from the undisturbed dataset) as duplicates of
/// existing examples are added with increasing strength.
pub fn run_if2<T: Real>(lambda_list: &[f64], s: &AnalysisSettings) -> Result<AnalysisReport> {
    s.validate()?;
    if lambda_list.is_empty() {
        return Err(Error::invalid("IF2 needs at least one duplication strength"));
    }
    if let Some(l) = lambda_list.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("duplication strength {l} outside [0, 1]")));
    }
    let mut lambdas = vec![0.0];
    lambdas.extend(lambda_list.iter().copied().filter(|&l| l != 0.0));
    let jobs: Vec<(usize, u64)> = (0..lambdas.len())
        .flat_map(|i| s.seeds.iter().map(move |&seed| (i, seed)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, seed)| -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
            let data_seed = s.data_seed_for(seed);
            let base = s.generator.generate_train::<T>(data_seed)?;
            let train = materialize_duplicates(&base, lambdas[i], data_seed)?;
            let counts = train.class_counts();
            let mu_c = to_f64(&cardinality_measure::<T>(&counts)?.normalized);
            let mu_u = to_f64(&uncertainty_measure(&train, s, seed)?.normalized);
            Ok((counts, mu_c, mu_u))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_seeds = s.seeds.len();
    let k = s.generator.num_classes();
    let base_cells = &cells[..n_seeds];
    let mut tables = Vec::new();
    let (mut c_drift, mut u_drift_median) = (Vec::new(), Vec::new());
    let mut u_drift_per_seed = vec![Vec::new(); n_seeds];
    for &lambda in lambda_list {
        let i = lambdas.iter().position(|&l| l == lambda).expect("listed strength");
        let group = &cells[i * n_seeds..(i + 1) * n_seeds];
        let (counts, mu_c, _) = &group[0];
        c_drift.push(l1(mu_c, &base_cells[0].1));
        let drifts: Vec<f64> = group
            .iter()
            .zip(base_cells)
            .map(|(cell, base)| l1(&cell.2, &base.2))
            .collect();
        u_drift_median.push(median(&drifts).unwrap_or(f64::NAN));
        for (j, d) in drifts.into_iter().enumerate() {
            u_drift_per_seed[j].push(d);
        }
        let per_seed: Vec<Vec<f64>> = group.iter().map(|c| c.2.clone()).collect();
        tables.push(
            Table::new(format!("if2_lambda{}", format_param(lambda)))
                .with_column("class_index", index_column(k))?
                .with_column("materialized_count", counts_column(counts))?
                .with_column("mu_c", mu_c.clone())?
                .with_column("mu_u_median", columnwise_median(&per_seed))?,
        );
    }
    let mut drift = Table::new("if2_drift")
        .with_column("lambda", lambda_list.to_vec())?
        .with_column("mu_c_drift", c_drift)?
        .with_column("mu_u_drift_median", u_drift_median)?;
    for (&seed, col) in s.seeds.iter().zip(u_drift_per_seed) {
        drift = drift.with_column(format!("mu_u_drift_seed{seed}"), col)?;
    }
    tables.insert(0, drift);
    Ok(AnalysisReport {
        kind: AnalysisKind::If2,
        seeds: s.seeds.clone(),
        provenance: provenance(AnalysisKind::If2, &(lambda_list, s))?,
        tables,
        rho: Vec::new(),
        methods: Vec::new(),
    })
}

fn method(name: &str, group: MethodGroup, spec: MitigationSpec) -> MethodSpec {
    MethodSpec {
        name: name.into(),
        group,
        spec,
    }
}

fn mitigation(sampler: SamplerKind, loss: LossKind, weights: WeightSource) -> Mitigation {
    Mitigation {
        sampler,
        loss,
        weights,
    }
}

/// The comparison matrix: each cardinality-based method next to its
/// uncertainty-based counterpart. Two-stage rows switch on their mitigation
/// after `defer_epochs` naive epochs.
pub fn default_methods(epochs: usize, defer_epochs: usize) -> Result<Vec<MethodSpec>> {
    if defer_epochs > epochs {
        return Err(Error::invalid(format!(
            "defer epoch {defer_epochs} beyond {epochs} epochs"
        )));
    }
    use LossKind as L;
    use MethodGroup as G;
    use SamplerKind as S;
    use WeightSource as W;
    let one = |m: Mitigation| MitigationSpec::one_stage(m, epochs);
    let two = |m: Mitigation| MitigationSpec::two_stage(defer_epochs, epochs - defer_epochs, m);
    let deferred = |first: Mitigation, second: Mitigation| MitigationSpec {
        stages: vec![
            Stage {
                epochs: defer_epochs,
                mitigation: first,
            },
            Stage {
                epochs: epochs - defer_epochs,
                mitigation: second,
            },
        ],
    };
    let focal = || L::Focal {
        gamma: crate::losses::DEFAULT_FOCAL_GAMMA,
    };
    let ldam = || L::Ldam {
        tau: crate::losses::DEFAULT_LDAM_TAU,
    };
    let ubm = || L::UncertaintyMargin {
        tau: crate::losses::DEFAULT_UBM_TAU,
    };
    let effective = || W::EffectiveNumber {
        beta: crate::losses::DEFAULT_EFFECTIVE_BETA,
    };
    Ok(vec![
        method("naive", G::Baseline, MitigationSpec::naive(epochs)),
        method("CB resampling", G::Resampling, one(Mitigation::with_sampler(S::ClassBalanced))),
        method("PB resampling", G::Resampling, one(Mitigation::with_sampler(S::ProgressiveBalanced))),
        method("UBRs", G::Resampling, one(Mitigation::with_sampler(S::Uncertainty))),
        method("PB UBRs", G::Resampling, one(Mitigation::with_sampler(S::ProgressiveUncertainty))),
        method("CSCE", G::Reweighting, one(Mitigation::with_weights(W::Cardinality))),
        method("Class-balanced loss", G::Reweighting, one(Mitigation::with_weights(effective()))),
        method("Focal loss", G::Reweighting, one(mitigation(S::Random, focal(), W::None))),
        method("Class-balanced focal loss", G::Reweighting, one(mitigation(S::Random, focal(), effective()))),
        method("UBRw", G::Reweighting, one(Mitigation::with_weights(W::Uncertainty))),
        method("UBRw focal loss", G::Reweighting, one(mitigation(S::Random, focal(), W::Uncertainty))),
        method("LDAM", G::MarginAdjustment, one(mitigation(S::Random, ldam(), W::None))),
        method(
            "LDAM+reweighting",
            G::MarginAdjustment,
            deferred(mitigation(S::Random, ldam(), W::None), mitigation(S::Random, ldam(), effective())),
        ),
        method(
            "Logit adjustment",
            G::MarginAdjustment,
            one(mitigation(S::Random, L::LogitAdjusted { kappa: crate::losses::DEFAULT_LOGIT_ADJUST_KAPPA }, W::None)),
        ),
        method("UBM LDAM", G::MarginAdjustment, one(mitigation(S::Random, ubm(), W::None))),
        method(
            "UBM LDAM+reweighting",
            G::MarginAdjustment,
            deferred(mitigation(S::Random, ubm(), W::None), mitigation(S::Random, ubm(), W::Uncertainty)),
        ),
        method("Two-stage CB resampling", G::MultiStage, two(Mitigation::with_sampler(S::ClassBalanced))),
        method("Two-stage PB resampling", G::MultiStage, two(Mitigation::with_sampler(S::ProgressiveBalanced))),
        method("Two-stage UBRs", G::MultiStage, two(Mitigation::with_sampler(S::Uncertainty))),
        method("Two-stage CSCE", G::MultiStage, two(Mitigation::with_weights(W::Cardinality))),
        method("Two-stage focal loss", G::MultiStage, two(mitigation(S::Random, focal(), W::None))),
        method("Two-stage class-balanced focal loss", G::MultiStage, two(mitigation(S::Random, focal(), effective()))),
        method("Two-stage UBRw", G::MultiStage, two(Mitigation::with_weights(W::Uncertainty))),
        method("Two-stage UBRw focal loss", G::MultiStage, two(mitigation(S::Random, focal(), W::Uncertainty))),
    ])
}

struct SeedData<T> {
    train: Dataset<T>,
    test: Dataset<T>,
    uncertainty: Option<ImbalanceMeasure<T>>,
}

/// Balanced top-1 error of every (method, seed) cell, as mean ± std rows.
/// A naive row is added first when the matrix has none.
pub fn run_mitigation_compare<T: Real>(
    methods: &[MethodSpec],
    s: &AnalysisSettings,
) -> Result<AnalysisReport> {
    s.validate()?;
    let mut methods = methods.to_vec();
    for m in &methods {
        m.spec.validate()?;
    }
    let has_naive = methods
        .iter()
        .any(|m| m.spec.stages.iter().all(|st| st.mitigation.is_naive()));
    if !has_naive {
        methods.insert(
            0,
            method("naive", MethodGroup::Baseline, MitigationSpec::naive(s.train.optim.epochs)),
        );
    }
    let needs_uncertainty = methods.iter().any(|m| m.spec.requires_uncertainty());
    let data = s
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedData<T>> {
            let data_seed = s.data_seed_for(seed);
            let train = s.generator.generate_train::<T>(data_seed)?;
            let test = balanced_test_split::<T>(&s.generator, s.test_per_class, data_seed)?;
            let uncertainty = if needs_uncertainty {
                Some(uncertainty_measure(&train, s, seed)?)
            } else {
                None
            };
            Ok(SeedData {
                train,
                test,
                uncertainty,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..s.seeds.len()).map(move |j| (m, j)))
        .collect();
    let errors = jobs
        .par_iter()
        .map(|&(m, j)| -> Result<f64> {
            let d = &data[j];
            let (_, _, r) = run(
                &d.train,
                &d.test,
                &s.train,
                &methods[m].spec,
                s.seeds[j],
                d.uncertainty.as_ref(),
            )?;
            Ok(r.top1_error)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_seeds = s.seeds.len();
    let rows: Vec<MethodRow> = methods
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let errs = errors[m * n_seeds..(m + 1) * n_seeds].to_vec();
            let (mean, std) = mean_std(&errs).expect("at least one seed");
            MethodRow {
                name: spec.name.clone(),
                group: spec.group,
                errors: errs,
                mean,
                std,
            }
        })
        .collect();
    let mut table = Table::new("mitigation_compare")
        .with_column("method_index", index_column(rows.len()))?
        .with_column("mean", rows.iter().map(|r| r.mean).collect())?
        .with_column("std", rows.iter().map(|r| r.std).collect())?;
    for (j, &seed) in s.seeds.iter().enumerate() {
        table = table.with_column(format!("seed{seed}"), rows.iter().map(|r| r.errors[j]).collect())?;
    }
    Ok(AnalysisReport {
        kind: AnalysisKind::MitigationCompare,
        seeds: s.seeds.clone(),
        provenance: provenance(AnalysisKind::MitigationCompare, &(&methods, s))?,
        tables: vec![table],
        rho: Vec::new(),
        methods: rows,
    })
}
