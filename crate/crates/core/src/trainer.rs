//! Training orchestration: mitigation configuration, one- and multi-stage
//! training loops, and balanced top-1 evaluation.

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    class_balanced_weights, combined_weights, csce_weights, ldam_margins, logit_adjusted_margins,
    ubm_margins, ubrw_weights, ClassWeights, LossSpec, DEFAULT_EFFECTIVE_BETA, DEFAULT_FOCAL_GAMMA,
    DEFAULT_LDAM_TAU, DEFAULT_LOGIT_ADJUST_KAPPA, DEFAULT_UBM_TAU,
};
use crate::measures::{ImbalanceMeasure, MeasureOrigin};
use crate::nn::{backward_and_step, init_model, MlpModel, SgdState, StepDecay};
use crate::rng::{seeded, stream};
use crate::samplers::{
    cb_probs, duplication_probs, pb_probs, pb_ubrs_probs, random_probs, ubrs_probs, BatchSampler,
    ClassProbs, SamplerSchedule,
};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Hidden layer widths; input and output sizes come from the dataset.
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: vec![32] }
    }
}

impl ModelConfig {
    pub fn dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(num_classes);
        dims
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Epochs of a one-stage run (and of every ensemble member).
    pub epochs: usize,
    pub lr_decay: Option<StepDecay>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 128,
            epochs: 30,
            lr_decay: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {}", self.momentum)));
        }
        Ok(())
    }

    fn rate_at(&self, epoch: usize) -> f64 {
        match &self.lr_decay {
            Some(d) => d.rate_at(self.learning_rate, epoch),
            None => self.learning_rate,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optim: OptimConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    Random,
    ClassBalanced,
    ProgressiveBalanced,
    Uncertainty,
    ProgressiveUncertainty,
    Duplication { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSource {
    None,
    Cardinality,
    EffectiveNumber {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Uncertainty,
    /// `mix · uncertainty + (1 − mix) · effective-number` weights.
    Combined {
        mix: f64,
        #[serde(default = "default_beta")]
        beta: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Focal {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Ldam {
        #[serde(default = "default_ldam_tau")]
        tau: f64,
    },
    LogitAdjusted {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    UncertaintyMargin {
        #[serde(default = "default_ubm_tau")]
        tau: f64,
    },
}

fn default_beta() -> f64 {
    DEFAULT_EFFECTIVE_BETA
}
fn default_gamma() -> f64 {
    DEFAULT_FOCAL_GAMMA
}
fn default_ldam_tau() -> f64 {
    DEFAULT_LDAM_TAU
}
fn default_kappa() -> f64 {
    DEFAULT_LOGIT_ADJUST_KAPPA
}
fn default_ubm_tau() -> f64 {
    DEFAULT_UBM_TAU
}

/// Sampler, loss and class-weight source of one training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mitigation {
    pub sampler: SamplerKind,
    pub loss: LossKind,
    pub weights: WeightSource,
}

impl Default for Mitigation {
    fn default() -> Self {
        Self::naive()
    }
}

impl Mitigation {
    /// Random mini-batches and plain cross-entropy.
    pub fn naive() -> Self {
        Mitigation {
            sampler: SamplerKind::Random,
            loss: LossKind::CrossEntropy,
            weights: WeightSource::None,
        }
    }

    pub fn with_sampler(sampler: SamplerKind) -> Self {
        Mitigation {
            sampler,
            ..Self::naive()
        }
    }

    pub fn with_weights(weights: WeightSource) -> Self {
        Mitigation {
            weights,
            ..Self::naive()
        }
    }

    pub fn is_naive(&self) -> bool {
        *self == Self::naive()
    }

    pub fn requires_uncertainty(&self) -> bool {
        matches!(
            self.sampler,
            SamplerKind::Uncertainty | SamplerKind::ProgressiveUncertainty
        ) || matches!(
            self.weights,
            WeightSource::Uncertainty | WeightSource::Combined { .. }
        ) || matches!(self.loss, LossKind::UncertaintyMargin { .. })
    }

    /// Resolves weights and margins against the training-set class counts
    /// and, when needed, the class-uncertainty measure.
    pub fn resolve_loss<T: Real>(
        &self,
        class_counts: &[usize],
        uncertainty: Option<&ImbalanceMeasure<T>>,
    ) -> Result<LossSpec<T>> {
        let mu = || require_uncertainty(uncertainty);
        let weights: Option<ClassWeights<T>> = match &self.weights {
            WeightSource::None => None,
            WeightSource::Cardinality => Some(csce_weights(class_counts)?),
            WeightSource::EffectiveNumber { beta } => {
                Some(class_balanced_weights(class_counts, *beta)?)
            }
            WeightSource::Uncertainty => Some(ubrw_weights(&mu()?.normalized)?),
            WeightSource::Combined { mix, beta } => Some(combined_weights(
                &ubrw_weights(&mu()?.normalized)?,
                &class_balanced_weights(class_counts, *beta)?,
                *mix,
            )?),
        };
        let spec = match &self.loss {
            LossKind::CrossEntropy => match weights {
                Some(w) => LossSpec::weighted(w),
                None => LossSpec::cross_entropy(),
            },
            LossKind::Focal { gamma } => LossSpec::focal(T::lit(*gamma), weights),
            LossKind::Ldam { tau } => LossSpec::margin(ldam_margins(class_counts, *tau)?, weights),
            LossKind::LogitAdjusted { kappa } => {
                LossSpec::margin(logit_adjusted_margins(class_counts, *kappa)?, weights)
            }
            LossKind::UncertaintyMargin { tau } => {
                LossSpec::margin(ubm_margins(&mu()?.unnormalized, *tau)?, weights)
            }
        };
        spec.validate(class_counts.len())?;
        Ok(spec)
    }

    /// Class sampling probabilities at `epoch` of a stage lasting `stage_epochs`.
    pub fn alpha<T: Real>(
        &self,
        epoch: usize,
        stage_epochs: usize,
        class_counts: &[usize],
        uncertainty: Option<&ImbalanceMeasure<T>>,
    ) -> Result<ClassProbs<T>> {
        match &self.sampler {
            SamplerKind::Random => random_probs(class_counts),
            SamplerKind::ClassBalanced => cb_probs(class_counts.len()),
            SamplerKind::ProgressiveBalanced => pb_probs(
                epoch,
                &SamplerSchedule::new(
                    random_probs(class_counts)?,
                    cb_probs(class_counts.len())?,
                    stage_epochs.max(1),
                )?,
            ),
            SamplerKind::Uncertainty => ubrs_probs(&require_uncertainty(uncertainty)?.normalized),
            SamplerKind::ProgressiveUncertainty => pb_ubrs_probs(
                epoch,
                stage_epochs.max(1),
                class_counts,
                &require_uncertainty(uncertainty)?.normalized,
            ),
            SamplerKind::Duplication { lambda } => duplication_probs(*lambda, class_counts),
        }
    }
}

fn require_uncertainty<T: Real>(
    measure: Option<&ImbalanceMeasure<T>>,
) -> Result<&ImbalanceMeasure<T>> {
    match measure {
        Some(m) if m.origin == MeasureOrigin::Uncertainty => Ok(m),
        Some(m) => Err(Error::MeasureRequired(format!(
            "uncertainty-based mitigation given a {} measure",
            m.origin.as_str()
        ))),
        None => Err(Error::MeasureRequired(
            "uncertainty-based mitigation needs a class-uncertainty measure".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epochs: usize,
    #[serde(flatten)]
    pub mitigation: Mitigation,
}

/// Ordered training stages. Parameters carry over between stages; optimizer
/// velocity is reset at every boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationSpec {
    pub stages: Vec<Stage>,
}

impl MitigationSpec {
    pub fn one_stage(mitigation: Mitigation, epochs: usize) -> Self {
        MitigationSpec {
            stages: vec![Stage { epochs, mitigation }],
        }
    }

    pub fn naive(epochs: usize) -> Self {
        Self::one_stage(Mitigation::naive(), epochs)
    }

    /// Naive training followed by a mitigated fine-tuning stage.
    pub fn two_stage(stage1_epochs: usize, stage2_epochs: usize, stage2: Mitigation) -> Self {
        MitigationSpec {
            stages: vec![
                Stage {
                    epochs: stage1_epochs,
                    mitigation: Mitigation::naive(),
                },
                Stage {
                    epochs: stage2_epochs,
                    mitigation: stage2,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::invalid("mitigation needs at least one stage"));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    pub fn requires_uncertainty(&self) -> bool {
        self.stages.iter().any(|s| s.mitigation.requires_uncertainty())
    }
}

/// What one stage actually used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTrace<T> {
    pub epochs: usize,
    pub loss: LossSpec<T>,
    pub first_alpha: Option<ClassProbs<T>>,
    pub last_alpha: Option<ClassProbs<T>>,
    /// False when the stage ran random sampling with plain cross-entropy.
    pub mitigation_active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog<T> {
    pub seed: u64,
    pub epochs_run: usize,
    /// Mean mini-batch loss of every epoch.
    pub loss_curve: Vec<T>,
    pub stages: Vec<StageTrace<T>>,
}

/// Runs every stage of `spec` from a fresh model initialized with `seed`.
///
/// Each epoch draws `⌈N / batch_size⌉` mini-batches from the stage's class
/// probabilities. Batches come from a stream independent of the one used for
/// initialization.
pub fn train_stages<T: Real>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    spec: &MitigationSpec,
    seed: u64,
    uncertainty: Option<&ImbalanceMeasure<T>>,
) -> Result<(MlpModel<T>, TrainLog<T>)> {
    spec.validate()?;
    config.optim.validate()?;
    let counts = dataset.class_counts();
    // Resolve everything up front so a bad spec fails before any training.
    let losses = spec
        .stages
        .iter()
        .map(|s| s.mitigation.resolve_loss(&counts, uncertainty))
        .collect::<Result<Vec<_>>>()?;
    for s in &spec.stages {
        s.mitigation.alpha(0, s.epochs, &counts, uncertainty)?;
    }

    let dims = config.model.dims(dataset.dim(), dataset.num_classes());
    let mut model = init_model::<T>(&dims, seed)?;
    let optim = &config.optim;
    let mut state =
        SgdState::with_weight_decay(&model, optim.learning_rate, optim.momentum, optim.weight_decay)?;
    let mut rng = seeded(seed, stream::BATCHES);
    let sampler = BatchSampler::new(dataset);
    let batches_per_epoch = dataset.len().div_ceil(optim.batch_size);

    let mut log = TrainLog {
        seed,
        epochs_run: 0,
        loss_curve: Vec::with_capacity(spec.total_epochs()),
        stages: Vec::with_capacity(spec.stages.len()),
    };
    for (stage_idx, (stage, loss)) in spec.stages.iter().zip(losses).enumerate() {
        if stage_idx > 0 {
            state.reset_velocity();
        }
        let mut trace = StageTrace {
            epochs: stage.epochs,
            mitigation_active: !(stage.mitigation.sampler == SamplerKind::Random
                && loss.is_plain_cross_entropy()),
            loss,
            first_alpha: None,
            last_alpha: None,
        };
        for epoch in 0..stage.epochs {
            let alpha = stage
                .mitigation
                .alpha(epoch, stage.epochs, &counts, uncertainty)?;
            state.learning_rate = T::lit(optim.rate_at(log.epochs_run));
            let mut epoch_loss = T::zero();
            for batch in 0..batches_per_epoch {
                let idx = sampler.draw(&alpha, optim.batch_size, &mut rng)?;
                let (x, y) = dataset.batch(&idx);
                let diverged = |reason: String| Error::Diverged {
                    epoch: log.epochs_run,
                    batch,
                    reason,
                };
                let value = backward_and_step(&mut model, &mut state, &x, &y, &trace.loss)
                    .map_err(|e| diverged(e.to_string()))?;
                if !value.is_finite() {
                    return Err(diverged(format!("loss is {value}")));
                }
                epoch_loss += value;
            }
            log.loss_curve
                .push(epoch_loss / T::from_count(batches_per_epoch));
            log.epochs_run += 1;
            if trace.first_alpha.is_none() {
                trace.first_alpha = Some(alpha.clone());
            }
            trace.last_alpha = Some(alpha);
        }
        log.stages.push(trace);
    }
    Ok((model, log))
}

pub fn train_one_stage<T: Real>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    mitigation: &Mitigation,
    epochs: usize,
    seed: u64,
    uncertainty: Option<&ImbalanceMeasure<T>>,
) -> Result<(MlpModel<T>, TrainLog<T>)> {
    train_stages(
        dataset,
        config,
        &MitigationSpec::one_stage(mitigation.clone(), epochs),
        seed,
        uncertainty,
    )
}

pub fn train_two_stage<T: Real>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    stage1_epochs: usize,
    stage2_epochs: usize,
    stage2: &Mitigation,
    seed: u64,
    uncertainty: Option<&ImbalanceMeasure<T>>,
) -> Result<(MlpModel<T>, TrainLog<T>)> {
    train_stages(
        dataset,
        config,
        &MitigationSpec::two_stage(stage1_epochs, stage2_epochs, stage2.clone()),
        seed,
        uncertainty,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Percentage of misclassified test examples.
    pub top1_error: f64,
    /// Error percentage within each class.
    pub per_class_error: Vec<f64>,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Top-1 error of plain argmax over raw logits.
pub fn evaluate<T: Real>(model: &MlpModel<T>, test: &Dataset<T>) -> Result<Evaluation> {
    if test.num_classes() != model.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "model predicts {} classes, test set has {}",
            model.num_classes(),
            test.num_classes()
        )));
    }
    let counts = test.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    let logits = model.forward(test.features())?;
    let mut wrong = vec![0usize; test.num_classes()];
    for (i, &label) in test.labels().iter().enumerate() {
        if argmax(logits.row(i)) != label {
            wrong[label] += 1;
        }
    }
    let total_wrong: usize = wrong.iter().sum();
    Ok(Evaluation {
        top1_error: 100.0 * total_wrong as f64 / test.len() as f64,
        per_class_error: wrong
            .iter()
            .zip(&counts)
            .map(|(&w, &n)| 100.0 * w as f64 / n as f64)
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub top1_error: f64,
    pub per_class_error: Vec<f64>,
    pub epochs_run: usize,
    pub loss_curve: Vec<f64>,
}

/// Trains per `spec` and evaluates on `test`.
pub fn run<T: Real>(
    train: &Dataset<T>,
    test: &Dataset<T>,
    config: &TrainConfig,
    spec: &MitigationSpec,
    seed: u64,
    uncertainty: Option<&ImbalanceMeasure<T>>,
) -> Result<(MlpModel<T>, TrainLog<T>, RunResult)> {
    let (model, log) = train_stages(train, config, spec, seed, uncertainty)?;
    let eval = evaluate(&model, test)?;
    let result = RunResult {
        seed,
        top1_error: eval.top1_error,
        per_class_error: eval.per_class_error,
        epochs_run: log.epochs_run,
        loss_curve: log.loss_curve.iter().map(|v| v.as_f64()).collect(),
    };
    Ok((model, log, result))
}
