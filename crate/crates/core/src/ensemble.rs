//! Deep ensembles and the uncertainty quantities derived from them.
//!
//! For example `i` with member predictions `p̂^{(i),t}` and mean `p̄^{(i)}`:
//! predictive uncertainty is `H(p̄)`, the expected member entropy is the
//! aleatoric part, and their difference (the mutual information between the
//! prediction and the member index) is the epistemic part. Entropies use the
//! natural logarithm, so they are bounded by `ln |C|`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::measures::{normalize, ImbalanceMeasure, MeasureOrigin};
use crate::nn::{predict_proba, Matrix, MlpModel};
use crate::scalar::{unit_sum_tolerance, Real};
use crate::trainer::{train_stages, MitigationSpec, TrainConfig};

pub const DEFAULT_MEMBERS: usize = 5;
const ENSP_MAGIC: &[u8; 4] = b"ENSP";

/// `T × N × |C|` member probabilities, stored member-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePredictions<T> {
    members: usize,
    examples: usize,
    classes: usize,
    probs: Vec<T>,
}

fn check_row<T: Real>(row: &[T]) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < T::zero()) {
        return Err(Error::NotNormalized(format!("probability row {row:?}")));
    }
    let sum: T = row.iter().copied().sum();
    if (sum - T::one()).abs() > unit_sum_tolerance::<T>(row.len()) {
        return Err(Error::NotNormalized(format!("row sums to {sum}")));
    }
    Ok(())
}

impl<T: Real> EnsemblePredictions<T> {
    pub fn new(members: usize, examples: usize, classes: usize, probs: Vec<T>) -> Result<Self> {
        if members == 0 {
            return Err(Error::invalid("empty ensemble"));
        }
        if classes == 0 {
            return Err(Error::invalid("zero classes"));
        }
        if probs.len() != members * examples * classes {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {members}x{examples}x{classes}",
                probs.len()
            )));
        }
        for row in probs.chunks_exact(classes) {
            check_row(row)?;
        }
        Ok(EnsemblePredictions {
            members,
            examples,
            classes,
            probs,
        })
    }

    /// Softmax outputs of every model on `features`.
    pub fn from_models(models: &[MlpModel<T>], features: &Matrix<T>) -> Result<Self> {
        let first = models.first().ok_or_else(|| Error::invalid("empty ensemble"))?;
        let classes = first.num_classes();
        let mut probs = Vec::with_capacity(models.len() * features.rows() * classes);
        for m in models {
            if m.num_classes() != classes {
                return Err(Error::DimensionMismatch("members disagree on class count".into()));
            }
            probs.extend_from_slice(predict_proba(m, features)?.data());
        }
        Self::new(models.len(), features.rows(), classes, probs)
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn examples(&self) -> usize {
        self.examples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn row(&self, member: usize, example: usize) -> &[T] {
        let start = (member * self.examples + example) * self.classes;
        &self.probs[start..start + self.classes]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["member", "example_index", "class_index", "prob"])
            .map_err(fmt)?;
        for t in 0..self.members {
            for i in 0..self.examples {
                for (c, p) in self.row(t, i).iter().enumerate() {
                    w.write_record([t.to_string(), i.to_string(), c.to_string(), p.to_string()])
                        .map_err(fmt)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Magic `ENSP`, `T`, `N`, `|C|` as little-endian `u32`, then the
    /// probabilities as little-endian `f64`, member-major.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.probs.len() * 8);
        out.extend_from_slice(ENSP_MAGIC);
        for n in [self.members, self.examples, self.classes] {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for p in &self.probs {
            out.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != ENSP_MAGIC {
            return Err(Error::Format("not an ENSP prediction dump".into()));
        }
        let word =
            |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (t, n, c) = (word(0), word(1), word(2));
        if bytes.len() != 16 + t * n * c * 8 {
            return Err(Error::Format("prediction dump length does not match header".into()));
        }
        let probs = bytes[16..]
            .chunks_exact(8)
            .map(|b| T::lit(f64::from_le_bytes(b.try_into().unwrap())))
            .collect();
        Self::new(t, n, c, probs)
    }
}

/// Arithmetic mean of the member predictions, one row per example.
pub fn mean_prediction<T: Real>(ens: &EnsemblePredictions<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(ens.examples, ens.classes);
    for t in 0..ens.members {
        for i in 0..ens.examples {
            for (o, &p) in out.row_mut(i).iter_mut().zip(ens.row(t, i)) {
                *o += p;
            }
        }
    }
    out.scale(T::one() / T::from_count(ens.members));
    out
}

fn entropy<T: Real>(row: &[T]) -> T {
    let h: T = row
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.ln())
        .sum();
    let upper = T::from_count(row.len()).ln();
    h.max(T::zero()).min(upper)
}

/// Shannon entropy (natural log) of one probability row; `0 · ln 0 = 0`.
pub fn predictive_entropy<T: Real>(row: &[T]) -> Result<T> {
    if row.is_empty() {
        return Err(Error::invalid("entropy of an empty row"));
    }
    check_row(row)?;
    Ok(entropy(row))
}

/// Predictive uncertainty `u^{(i)} = H(p̄^{(i)})` of every example.
pub fn per_example_uncertainty<T: Real>(ens: &EnsemblePredictions<T>) -> Vec<T> {
    let mean = mean_prediction(ens);
    (0..ens.examples).map(|i| entropy(mean.row(i))).collect()
}

/// Expected member entropy `(1/T) Σ_t H(p̂^{(i),t})`.
pub fn aleatoric_ee<T: Real>(ens: &EnsemblePredictions<T>) -> Vec<T> {
    let inv_t = T::one() / T::from_count(ens.members);
    (0..ens.examples)
        .map(|i| {
            (0..ens.members)
                .map(|t| entropy(ens.row(t, i)))
                .sum::<T>()
                * inv_t
        })
        .collect()
}

/// Mutual information `H(p̄^{(i)}) − (1/T) Σ_t H(p̂^{(i),t})`, clamped at zero.
pub fn epistemic_mi<T: Real>(ens: &EnsemblePredictions<T>) -> Vec<T> {
    per_example_uncertainty(ens)
        .into_iter()
        .zip(aleatoric_ee(ens))
        .map(|(h, e)| (h - e).max(T::zero()))
        .collect()
}

/// Class-wise mean of the per-example uncertainties, and its normalization.
/// An all-zero mean vector normalizes to the uniform distribution.
pub fn class_uncertainty<T: Real>(
    per_example_u: &[T],
    labels: &[usize],
    class_counts: &[usize],
) -> Result<(Vec<T>, Vec<T>)> {
    if per_example_u.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} uncertainties, {} labels",
            per_example_u.len(),
            labels.len()
        )));
    }
    let k = class_counts.len();
    let mut sums = vec![T::zero(); k];
    let mut seen = vec![0usize; k];
    for (&u, &l) in per_example_u.iter().zip(labels) {
        if l >= k {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: k,
            });
        }
        if !(u.is_finite() && u >= T::zero()) {
            return Err(Error::invalid(format!("uncertainty {u}")));
        }
        sums[l] += u;
        seen[l] += 1;
    }
    if let Some(c) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    if seen != class_counts {
        return Err(Error::DimensionMismatch(format!(
            "labels give class counts {seen:?}, expected {class_counts:?}"
        )));
    }
    let unnormalized: Vec<T> = sums
        .iter()
        .zip(class_counts)
        .map(|(&s, &n)| s / T::from_count(n))
        .collect();
    let normalized = normalize(&unnormalized)?;
    Ok((unnormalized, normalized))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport<T> {
    pub per_example_u: Vec<T>,
    pub class_unnormalized: Vec<T>,
    pub class_normalized: Vec<T>,
    pub epistemic_mi: Option<Vec<T>>,
    pub aleatoric_ee: Option<Vec<T>>,
}

impl<T: Real> UncertaintyReport<T> {
    /// Full report over the examples the predictions were made on.
    pub fn from_predictions(
        ens: &EnsemblePredictions<T>,
        labels: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if ens.classes() != num_classes {
            return Err(Error::DimensionMismatch(format!(
                "predictions over {} classes, dataset has {num_classes}",
                ens.classes()
            )));
        }
        let mut counts = vec![0usize; num_classes];
        for &l in labels {
            if l >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes,
                });
            }
            counts[l] += 1;
        }
        let u = per_example_uncertainty(ens);
        let (class_unnormalized, class_normalized) = class_uncertainty(&u, labels, &counts)?;
        Ok(UncertaintyReport {
            per_example_u: u,
            class_unnormalized,
            class_normalized,
            epistemic_mi: Some(epistemic_mi(ens)),
            aleatoric_ee: Some(aleatoric_ee(ens)),
        })
    }

    pub fn measure(&self) -> ImbalanceMeasure<T> {
        ImbalanceMeasure {
            origin: MeasureOrigin::Uncertainty,
            unnormalized: self.class_unnormalized.clone(),
            normalized: self.class_normalized.clone(),
        }
    }

    /// `class_index,mu_tilde,mu`
    pub fn write_class_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["class_index", "mu_tilde", "mu"]).map_err(fmt)?;
        for (c, (u, n)) in self
            .class_unnormalized
            .iter()
            .zip(&self.class_normalized)
            .enumerate()
        {
            w.write_record([c.to_string(), u.to_string(), n.to_string()])
                .map_err(fmt)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains `members` naive classifiers with seeds `base_seed + t`. Members
/// train in parallel; each owns its random streams, so the result does not
/// depend on scheduling.
pub fn train_ensemble<T: Real>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    members: usize,
    base_seed: u64,
) -> Result<Vec<MlpModel<T>>> {
    if members == 0 {
        return Err(Error::invalid("an ensemble needs at least one member"));
    }
    let spec = MitigationSpec::naive(config.optim.epochs);
    (0..members)
        .into_par_iter()
        .map(|t| {
            train_stages(dataset, config, &spec, base_seed.wrapping_add(t as u64), None)
                .map(|(m, _)| m)
                .map_err(|e| Error::Member {
                    member: t,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Trains an ensemble on `dataset` and measures class uncertainty on the same
/// training examples, in inference mode.
pub fn measure_class_uncertainty<T: Real>(
    dataset: &Dataset<T>,
    config: &TrainConfig,
    members: usize,
    base_seed: u64,
) -> Result<(UncertaintyReport<T>, EnsemblePredictions<T>)> {
    let models = train_ensemble(dataset, config, members, base_seed)?;
    let preds = EnsemblePredictions::from_models(&models, dataset.features())?;
    let report = UncertaintyReport::from_predictions(&preds, dataset.labels(), dataset.num_classes())?;
    Ok((report, preds))
}
