//! Class sampling probabilities and the two-stage mini-batch drawer.
//!
//! A batch is drawn by first picking a class from `α`, then an example of
//! that class uniformly with replacement.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::losses::check_counts;
use crate::scalar::{total, unit_sum_tolerance, Real};


/// Per-class sampling probabilities `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassProbs<T>(Vec<T>);

impl<T: Real> ClassProbs<T> {
    pub fn new(alpha: Vec<T>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("sampling probabilities for zero classes"));
        }
        if let Some(c) = alpha.iter().position(|a| !a.is_finite() || *a < T::zero()) {
            return Err(Error::NotNormalized(format!("alpha of class {c} is {}", alpha[c])));
        }
        let sum = total(&alpha);
        if (sum - T::one()).abs() > unit_sum_tolerance::<T>(alpha.len()) {
            return Err(Error::NotNormalized(format!("alpha sums to {sum}")));
        }
        Ok(ClassProbs(alpha))
    }

    fn renormalized(raw: Vec<T>) -> Result<Self> {
        let sum = total(&raw);
        Self::new(raw.into_iter().map(|a| a / sum).collect())
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Linear schedule from `start` (epoch 0) to `end` (epoch `total_epochs`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSchedule<T> {
    pub start: ClassProbs<T>,
    pub end: ClassProbs<T>,
    pub total_epochs: usize,
}

impl<T: Real> SamplerSchedule<T> {
    pub fn new(start: ClassProbs<T>, end: ClassProbs<T>, total_epochs: usize) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::DimensionMismatch(format!(
                "schedule endpoints over {} and {} classes",
                start.len(),
                end.len()
            )));
        }
        if total_epochs == 0 {
            return Err(Error::invalid("schedule needs at least one epoch"));
        }
        Ok(SamplerSchedule {
            start,
            end,
            total_epochs,
        })
    }
}

/// Instance-balanced sampling, `α_c = N_c / Σ N_k`.
pub fn random_probs<T: Real>(class_counts: &[usize]) -> Result<ClassProbs<T>> {
    check_counts(class_counts)?;
    let n = T::from_count(class_counts.iter().sum());
    ClassProbs::new(class_counts.iter().map(|&c| T::from_count(c) / n).collect())
}

/// Class-balanced sampling, `α_c = 1 / |C|`.
pub fn cb_probs<T: Real>(num_classes: usize) -> Result<ClassProbs<T>> {
    if num_classes == 0 {
        return Err(Error::invalid("zero classes"));
    }
    ClassProbs::new(vec![T::one() / T::from_count(num_classes); num_classes])
}

/// Progressive schedule evaluated at `epoch`.
pub fn pb_probs<T: Real>(epoch: usize, schedule: &SamplerSchedule<T>) -> Result<ClassProbs<T>> {
    if epoch > schedule.total_epochs {
        return Err(Error::invalid(format!(
            "epoch {epoch} beyond schedule of {} epochs",
            schedule.total_epochs
        )));
    }
    if epoch == 0 {
        return Ok(schedule.start.clone());
    }
    if epoch == schedule.total_epochs || schedule.start == schedule.end {
        return Ok(schedule.end.clone());
    }
    let t = T::from_count(epoch) / T::from_count(schedule.total_epochs);
    ClassProbs::renormalized(
        schedule
            .start
            .values()
            .iter()
            .zip(schedule.end.values())
            .map(|(&a, &b)| (T::one() - t) * a + t * b)
            .collect(),
    )
}

/// Uncertainty-based resampling: `α = μ^U`.
pub fn ubrs_probs<T: Real>(mu_u: &[T]) -> Result<ClassProbs<T>> {
    ClassProbs::new(mu_u.to_vec())
}

/// Progressive schedule from instance-balanced sampling to `α = μ^U`.
pub fn pb_ubrs_probs<T: Real>(
    epoch: usize,
    total_epochs: usize,
    class_counts: &[usize],
    mu_u: &[T],
) -> Result<ClassProbs<T>> {
    let schedule = SamplerSchedule::new(random_probs(class_counts)?, ubrs_probs(mu_u)?, total_epochs)?;
    pb_probs(epoch, &schedule)
}

/// Duplication-strength interpolation `α_c ∝ (1/|C|)^λ · (N_c/N)^{1−λ}`.
pub fn duplication_probs<T: Real>(lambda: f64, class_counts: &[usize]) -> Result<ClassProbs<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("duplication strength {lambda} outside [0, 1]")));
    }
    let natural = random_probs::<T>(class_counts)?;
    let over = cb_probs::<T>(class_counts.len())?;
    let l = T::lit(lambda);
    let one_minus = T::lit(1.0 - lambda);
    ClassProbs::renormalized(
        over.values()
            .iter()
            .zip(natural.values())
            .map(|(&r, &n)| r.powf(l) * n.powf(one_minus))
            .collect(),
    )
}

/// Two-stage batch drawer over a fixed dataset.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    by_class: Vec<Vec<usize>>,
}

impl BatchSampler {
    pub fn new<T: Real>(dataset: &Dataset<T>) -> Self {
        BatchSampler {
            by_class: dataset.class_indices(),
        }
    }

    pub fn draw<T: Real, R: Rng + ?Sized>(
        &self,
        alpha: &ClassProbs<T>,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if alpha.len() != self.by_class.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} sampling probabilities for {} classes",
                alpha.len(),
                self.by_class.len()
            )));
        }
        if let Some(c) = (0..alpha.len())
            .find(|&c| alpha.values()[c] > T::zero() && self.by_class[c].is_empty())
        {
            return Err(Error::EmptyClass(c));
        }
        if batch_size == 0 {
            return Ok(Vec::new());
        }
        let weights: Vec<f64> = alpha.values().iter().map(|a| a.as_f64()).collect();
        let classes = WeightedIndex::new(&weights)
            .map_err(|e| Error::NotNormalized(format!("alpha: {e}")))?;
        Ok((0..batch_size)
            .map(|_| {
                let members = &self.by_class[classes.sample(rng)];
                members[rng.random_range(0..members.len())]
            })
            .collect())
    }
}

/// One-off convenience over [`BatchSampler`].
pub fn draw_batch<T: Real, R: Rng + ?Sized>(
    alpha: &ClassProbs<T>,
    dataset: &Dataset<T>,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    BatchSampler::new(dataset).draw(alpha, batch_size, rng)
}
