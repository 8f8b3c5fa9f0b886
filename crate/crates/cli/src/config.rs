//! Experiment configuration, read from TOML.
//!
//! Relative paths inside a config file resolve against the directory that
//! holds the file. Every section is checked for the chosen command before
//! any data is generated or any model trained.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use class_uncertainty::analysis::{default_methods, AnalysisKind, AnalysisSettings, MethodSpec};
use class_uncertainty::datasets::GeneratorSpec;
use class_uncertainty::ensemble::DEFAULT_MEMBERS;
use class_uncertainty::trainer::{ModelConfig, OptimConfig, Stage};
use class_uncertainty::{EnsembleSettings, MitigationSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_IR_LIST: [f64; 5] = [1.0, 2.0, 10.0, 20.0, 50.0];
pub const DEFAULT_LAMBDA_LIST: [f64; 5] = [0.0, 0.3, 0.5, 0.7, 1.0];
pub const DEFAULT_ENSEMBLE_BASE_SEED: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Synth,
    Uncertainty,
    Train,
    Analyze,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Uncertainty => "uncertainty",
            Command::Train => "train",
            Command::Analyze => "analyze",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    #[default]
    Csv,
    Binary,
    Both,
}

impl DatasetFormat {
    pub fn csv(self) -> bool {
        matches!(self, DatasetFormat::Csv | DatasetFormat::Both)
    }

    pub fn binary(self) -> bool {
        matches!(self, DatasetFormat::Binary | DatasetFormat::Both)
    }
}

/// Either a synthetic generator or dataset files. Files ending in `.csv` are
/// read as CSV, anything else as the binary format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub generator: Option<GeneratorSpec>,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    /// Class count for CSV files; inferred from the labels when absent.
    pub num_classes: Option<usize>,
    /// Balanced test examples per class drawn from the generator.
    pub test_per_class: Option<usize>,
    /// Seed `s` generates its data with `data_seed + s`.
    #[serde(default)]
    pub data_seed: u64,
    /// Files written by `synth`.
    #[serde(default)]
    pub format: DatasetFormat,
}

/// A named method from the comparison matrix, or explicit stages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationSection {
    pub method: Option<String>,
    pub stages: Option<Vec<Stage>>,
    /// Naive epochs before two-stage methods switch on; half the run by default.
    pub defer_epochs: Option<usize>,
    /// Class-uncertainty CSV, needed by uncertainty-based methods.
    pub measure: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub members: usize,
    pub base_seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            members: DEFAULT_MEMBERS,
            base_seed: DEFAULT_ENSEMBLE_BASE_SEED,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub kind: String,
    pub ir_list: Option<Vec<f64>>,
    pub lambda_list: Option<Vec<f64>>,
    /// Method names for `mitigation-compare`; the whole matrix when absent.
    pub methods: Option<Vec<String>>,
    pub defer_epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub precision: Precision,
    /// Output directory; `--out` takes precedence.
    pub output: Option<PathBuf>,
    pub dataset: Option<DatasetSection>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    pub mitigation: Option<MitigationSection>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    pub analysis: Option<AnalysisSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigParse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            CliError::ConfigParse { reason, .. } => CliError::ConfigParse {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    /// Parses `text`; relative paths will resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::ConfigParse {
            path: PathBuf::from("<config>"),
            reason: e.message().to_string(),
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            optim: self.optim.clone(),
        }
    }

    pub fn ensemble_settings(&self) -> EnsembleSettings {
        EnsembleSettings {
            members: self.ensemble.members,
            base_seed: self.ensemble.base_seed,
        }
    }

    pub fn dataset(&self) -> Result<&DatasetSection> {
        self.dataset
            .as_ref()
            .ok_or_else(|| CliError::config("missing [dataset] section"))
    }

    fn generator(&self) -> Result<&GeneratorSpec> {
        self.dataset()?
            .generator
            .as_ref()
            .ok_or_else(|| CliError::config("[dataset] needs a generator for this command"))
    }

    /// Checks everything `command` will read.
    pub fn validate(&self, command: Command) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds must not be empty"));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(CliError::config(format!("seed {s} listed twice")));
        }
        if self.model.hidden.contains(&0) {
            return Err(CliError::config("[model] hidden widths must be positive"));
        }
        self.optim.validate()?;
        self.validate_dataset(command)?;
        match command {
            Command::Synth => {
                self.generator()?;
            }
            Command::Uncertainty => {
                if self.ensemble.members == 0 {
                    return Err(CliError::config("[ensemble] members must be positive"));
                }
            }
            Command::Train => {
                let spec = self.mitigation_spec()?;
                if spec.requires_uncertainty() {
                    self.measure_path()?;
                }
            }
            Command::Analyze => {
                self.analysis_settings()?;
                let a = self.analysis_section()?;
                match self.analysis_kind()? {
                    AnalysisKind::If1b => {
                        if a.ir_list.as_ref().is_some_and(Vec::is_empty) {
                            return Err(CliError::config("[analysis] ir_list is empty"));
                        }
                    }
                    AnalysisKind::If2 => {
                        for &l in a.lambda_list.as_deref().unwrap_or(&DEFAULT_LAMBDA_LIST) {
                            if !(0.0..=1.0).contains(&l) {
                                return Err(CliError::config(format!(
                                    "[analysis] duplication strength {l} outside [0, 1]"
                                )));
                            }
                        }
                    }
                    AnalysisKind::MitigationCompare => {
                        self.compare_methods()?;
                    }
                    AnalysisKind::If1a => {}
                }
            }
        }
        Ok(())
    }

    fn validate_dataset(&self, command: Command) -> Result<()> {
        let d = self.dataset()?;
        match (&d.generator, &d.train_file) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "[dataset] takes either a generator or train_file, not both",
                ))
            }
            (None, None) => {
                return Err(CliError::config("[dataset] needs a generator or a train_file"))
            }
            (Some(g), None) => g.validate()?,
            (None, Some(_)) => {}
        }
        for p in [&d.train_file, &d.test_file].into_iter().flatten() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(CliError::config(format!(
                    "dataset file {} does not exist",
                    full.display()
                )));
            }
        }
        if d.test_per_class == Some(0) {
            return Err(CliError::config("[dataset] test_per_class must be positive"));
        }
        if command == Command::Train {
            let has_test = if d.generator.is_some() {
                d.test_per_class.is_some()
            } else {
                d.test_file.is_some()
            };
            if !has_test {
                return Err(CliError::config(
                    "train needs a test set: test_per_class with a generator, test_file with files",
                ));
            }
        }
        Ok(())
    }

    pub fn mitigation_spec(&self) -> Result<MitigationSpec> {
        let Some(m) = self.mitigation.as_ref() else {
            return Ok(MitigationSpec::naive(self.optim.epochs));
        };
        let spec = match (&m.method, &m.stages) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("[mitigation] takes either method or stages, not both"))
            }
            (None, None) => return Err(CliError::config("[mitigation] needs method or stages")),
            (Some(name), None) => self.named_method(name, m.defer_epochs)?.spec,
            (None, Some(stages)) => MitigationSpec {
                stages: stages.clone(),
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn method_matrix(&self, defer: Option<usize>) -> Result<Vec<MethodSpec>> {
        let epochs = self.optim.epochs;
        Ok(default_methods(epochs, defer.unwrap_or(epochs / 2))?)
    }

    fn named_method(&self, name: &str, defer: Option<usize>) -> Result<MethodSpec> {
        let all = self.method_matrix(defer)?;
        let wanted = name.trim().to_ascii_lowercase();
        if let Some(m) = all.iter().find(|m| m.name.to_ascii_lowercase() == wanted) {
            return Ok(m.clone());
        }
        let names: Vec<_> = all.iter().map(|m| m.name.as_str()).collect();
        Err(CliError::config(format!(
            "unknown method '{name}' (known methods: {})",
            names.join(", ")
        )))
    }

    /// Path of the class-uncertainty file; a missing entry is a
    /// measure-required error.
    pub fn measure_path(&self) -> Result<PathBuf> {
        let path = self
            .mitigation
            .as_ref()
            .and_then(|m| m.measure.as_ref())
            .ok_or_else(|| {
                class_uncertainty::Error::MeasureRequired(
                    "uncertainty-based mitigation needs [mitigation] measure = <class-uncertainty CSV>"
                        .into(),
                )
            })?;
        let full = self.resolve(path);
        if !full.is_file() {
            return Err(CliError::config(format!(
                "measure file {} does not exist",
                full.display()
            )));
        }
        Ok(full)
    }

    fn analysis_section(&self) -> Result<&AnalysisSection> {
        self.analysis
            .as_ref()
            .ok_or_else(|| CliError::config("missing [analysis] section"))
    }

    pub fn analysis_kind(&self) -> Result<AnalysisKind> {
        Ok(AnalysisKind::from_str(&self.analysis_section()?.kind)?)
    }

    pub fn ir_list(&self) -> Vec<f64> {
        self.analysis
            .as_ref()
            .and_then(|a| a.ir_list.clone())
            .unwrap_or_else(|| DEFAULT_IR_LIST.to_vec())
    }

    pub fn lambda_list(&self) -> Vec<f64> {
        self.analysis
            .as_ref()
            .and_then(|a| a.lambda_list.clone())
            .unwrap_or_else(|| DEFAULT_LAMBDA_LIST.to_vec())
    }

    /// Methods for `mitigation-compare`, in configured order.
    pub fn compare_methods(&self) -> Result<Vec<MethodSpec>> {
        let a = self.analysis_section()?;
        match &a.methods {
            None => self.method_matrix(a.defer_epochs),
            Some(names) if names.is_empty() => Err(CliError::config("[analysis] methods is empty")),
            Some(names) => names
                .iter()
                .map(|n| self.named_method(n, a.defer_epochs))
                .collect(),
        }
    }

    pub fn analysis_settings(&self) -> Result<AnalysisSettings> {
        let d = self.dataset()?;
        let test_per_class = d
            .test_per_class
            .ok_or_else(|| CliError::config("analyze needs [dataset] test_per_class"))?;
        let s = AnalysisSettings {
            generator: self.generator()?.clone(),
            test_per_class,
            data_seed: d.data_seed,
            train: self.train_config(),
            ensemble: self.ensemble_settings(),
            seeds: self.seeds.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        seeds = [0, 1]
        [dataset]
        test_per_class = 10
        [dataset.generator]
        kind = "long_tail"
        num_classes = 3
        n_bar = 20
        imbalance_ratio = 4.0
        dim = 2
        noise = 1.0
        spacing = 3.0
    "#;

    fn parse(extra: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&format!("{BASE}\n{extra}"), Path::new("/cfg"))
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.ensemble, EnsembleSection::default());
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(cfg.ir_list(), DEFAULT_IR_LIST);
        cfg.validate(Command::Synth).unwrap();
        cfg.validate(Command::Uncertainty).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("[ensemble]\nmembrs = 3").unwrap_err();
        assert_eq!(err.category(), "config-parse");
    }

    #[test]
    fn stages_and_named_methods() {
        let cfg = parse(
            r#"
            [optim]
            epochs = 10
            [[mitigation.stages]]
            epochs = 4
            [[mitigation.stages]]
            epochs = 6
            sampler = { kind = "class_balanced" }
            "#,
        )
        .unwrap();
        let spec = cfg.mitigation_spec().unwrap();
        assert_eq!(spec.stages.len(), 2);
        assert!(spec.stages[0].mitigation.is_naive());
        assert!(!spec.stages[1].mitigation.is_naive());

        let named = parse("[optim]\nepochs = 10\n[mitigation]\nmethod = \"two-stage csce\"").unwrap();
        let spec = named.mitigation_spec().unwrap();
        assert_eq!(spec.stages.iter().map(|s| s.epochs).collect::<Vec<_>>(), vec![5, 5]);

        let bad = parse("[mitigation]\nmethod = \"magic\"").unwrap();
        let msg = bad.mitigation_spec().unwrap_err().to_string();
        assert!(msg.contains("unknown method 'magic'") && msg.contains("UBRw"), "{msg}");
    }

    #[test]
    fn uncertainty_methods_require_a_measure() {
        let cfg = parse("[mitigation]\nmethod = \"UBRw\"").unwrap();
        let err = cfg.validate(Command::Train).unwrap_err();
        assert_eq!(err.category(), "measure-required");
        assert!(err.to_string().contains("measure required"));
    }

    #[test]
    fn train_needs_a_test_set() {
        let cfg = ExperimentConfig::from_toml(
            &BASE.replace("test_per_class = 10", ""),
            Path::new("/cfg"),
        )
        .unwrap();
        let cfg = ExperimentConfig {
            mitigation: Some(MitigationSection {
                method: Some("naive".into()),
                ..Default::default()
            }),
            ..cfg
        };
        assert!(cfg.validate(Command::Train).unwrap_err().to_string().contains("test set"));
    }

    #[test]
    fn analysis_kind_errors_list_valid_kinds() {
        let cfg = parse("[analysis]\nkind = \"IF3\"").unwrap();
        let msg = cfg.validate(Command::Analyze).unwrap_err().to_string();
        assert!(msg.contains("IF1a, IF1b, IF2, mitigation-compare"), "{msg}");
        let cfg = parse("[analysis]\nkind = \"if2\"\nlambda_list = [0.0, 1.5]").unwrap();
        assert!(cfg.validate(Command::Analyze).is_err());
    }

    #[test]
    fn seeds_must_be_distinct() {
        let cfg = ExperimentConfig::from_toml(&BASE.replace("[0, 1]", "[3, 3]"), Path::new("/")).unwrap();
        assert!(cfg.validate(Command::Synth).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.resolve(Path::new("m.csv")), PathBuf::from("/cfg/m.csv"));
        assert_eq!(cfg.resolve(Path::new("/abs/m.csv")), PathBuf::from("/abs/m.csv"));
    }
}
