use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::rng::{seeded, stream};
use crate::scalar::Real;

/// Parameters of the geometric long-tail profile
/// `N_c = N̄ / IR^{c / (|C| − 1)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub n_bar: usize,
    pub imbalance_ratio: f64,
    pub num_classes: usize,
}

/// Per-class counts of a long-tailed training set: nearest integer, at least 1.
pub fn long_tail_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    let LongTailSpec {
        n_bar,
        imbalance_ratio: ir,
        num_classes,
    } = *spec;
    if num_classes < 2 {
        return Err(Error::invalid("a long-tailed profile needs at least two classes"));
    }
    if !(ir.is_finite() && ir >= 1.0) {
        return Err(Error::invalid(format!("imbalance ratio {ir} must be >= 1")));
    }
    if n_bar == 0 {
        return Err(Error::invalid("base class count is zero"));
    }
    if (n_bar as f64) / ir < 0.5 {
        return Err(Error::invalid(format!(
            "tail class would hold {} examples (N̄ = {n_bar}, IR = {ir})",
            n_bar as f64 / ir
        )));
    }
    let last = (num_classes - 1) as f64;
    Ok((0..num_classes)
        .map(|c| {
            let raw = n_bar as f64 / ir.powf(c as f64 / last);
            (raw.round() as usize).max(1)
        })
        .collect())
}

/// Keeps `N_c` examples of every class, chosen uniformly without replacement.
/// Selected examples keep their original relative order.
pub fn subsample_long_tail<T: Real>(
    base: &Dataset<T>,
    spec: &LongTailSpec,
    seed: u64,
) -> Result<Dataset<T>> {
    if spec.num_classes != base.num_classes() {
        return Err(Error::DimensionMismatch(format!(
            "profile has {} classes, dataset {}",
            spec.num_classes,
            base.num_classes()
        )));
    }
    let counts = long_tail_counts(spec)?;
    let mut rng = seeded(seed, stream::SUBSAMPLE);
    let mut keep = Vec::with_capacity(counts.iter().sum());
    for (c, mut idx) in base.class_indices().into_iter().enumerate() {
        if idx.len() < counts[c] {
            return Err(Error::invalid(format!(
                "class {c} has {} examples, {} requested",
                idx.len(),
                counts[c]
            )));
        }
        let (chosen, _) = idx.partial_shuffle(&mut rng, counts[c]);
        keep.extend_from_slice(chosen);
    }
    keep.sort_unstable();
    base.subset(&keep)
}

/// Deterministic class centers with every pair of neighbouring classes
/// `spacing` apart.
///
/// With `dim >= num_classes` the centers are the scaled corners of a simplex
/// (all pairs equidistant). Otherwise they sit on a regular polygon in the
/// first two coordinates, or evenly on a centered line when `dim == 1`.
pub fn class_centers(num_classes: usize, dim: usize, spacing: f64) -> Vec<Vec<f64>> {
    let mut centers = vec![vec![0.0; dim]; num_classes];
    if num_classes < 2 {
        return centers;
    }
    if dim >= num_classes {
        let scale = spacing / std::f64::consts::SQRT_2;
        for (c, center) in centers.iter_mut().enumerate() {
            center[c] = scale;
        }
    } else if dim >= 2 {
        let k = num_classes as f64;
        let radius = spacing / (2.0 * (std::f64::consts::PI / k).sin());
        for (c, center) in centers.iter_mut().enumerate() {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / k;
            center[0] = radius * angle.cos();
            center[1] = radius * angle.sin();
        }
    } else {
        let mid = (num_classes - 1) as f64 / 2.0;
        for (c, center) in centers.iter_mut().enumerate() {
            center[0] = (c as f64 - mid) * spacing;
        }
    }
    centers
}

fn synth_on_stream<T: Real>(
    num_classes: usize,
    dim: usize,
    per_class_counts: &[usize],
    noise_per_class: &[f64],
    spacing: f64,
    seed: u64,
    stream_id: u64,
) -> Result<Dataset<T>> {
    if dim < 1 {
        return Err(Error::invalid("feature dimension must be at least 1"));
    }
    if num_classes < 1 {
        return Err(Error::invalid("need at least one class"));
    }
    if per_class_counts.len() != num_classes || noise_per_class.len() != num_classes {
        return Err(Error::DimensionMismatch(format!(
            "{num_classes} classes, {} counts, {} noise scales",
            per_class_counts.len(),
            noise_per_class.len()
        )));
    }
    if let Some(c) = per_class_counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    if let Some(c) = noise_per_class
        .iter()
        .position(|s| !(s.is_finite() && *s >= 0.0))
    {
        return Err(Error::invalid(format!(
            "noise scale of class {c} is {}",
            noise_per_class[c]
        )));
    }
    if !(spacing.is_finite() && spacing >= 0.0) {
        return Err(Error::invalid(format!("center spacing {spacing}")));
    }
    let centers = class_centers(num_classes, dim, spacing);
    let mut rng = seeded(seed, stream_id);
    let total: usize = per_class_counts.iter().sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (c, (&n, &sigma)) in per_class_counts.iter().zip(noise_per_class).enumerate() {
        for _ in 0..n {
            for &mu in &centers[c] {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(T::lit(mu + sigma * z));
            }
            labels.push(c);
        }
    }
    Dataset::new(Matrix::new(total, dim, data)?, labels, num_classes)
}

/// Isotropic Gaussian classes around [`class_centers`], class `c` with
/// standard deviation `noise_per_class[c]`. Examples are grouped by class.
pub fn synth_gaussian_classes<T: Real>(
    num_classes: usize,
    dim: usize,
    per_class_counts: &[usize],
    noise_per_class: &[f64],
    spacing: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    synth_on_stream(
        num_classes,
        dim,
        per_class_counts,
        noise_per_class,
        spacing,
        seed,
        stream::TRAIN_DATA,
    )
}

/// Equal-cardinality classes that differ only in hardness. Classes
/// `0..num_hard` use `hard_noise`, the remaining `num_easy` use `easy_noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticSpec {
    pub num_easy: usize,
    pub num_hard: usize,
    pub per_class_count: usize,
    pub dim: usize,
    pub easy_noise: f64,
    pub hard_noise: f64,
    pub class_center_spacing: f64,
}

impl SemanticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_easy == 0 || self.num_hard == 0 || self.per_class_count == 0 {
            return Err(Error::invalid("semantic dataset counts must be positive"));
        }
        if !(self.easy_noise >= 0.0 && self.hard_noise > self.easy_noise) {
            return Err(Error::invalid(format!(
                "hard noise {} must exceed easy noise {}",
                self.hard_noise, self.easy_noise
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_easy + self.num_hard
    }

    pub fn is_hard(&self, class: usize) -> bool {
        class < self.num_hard
    }
}

/// Long-tailed Gaussian classes: a balanced base of `n_bar` examples per class
/// subsampled to the long-tail profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTailGenerator {
    pub num_classes: usize,
    pub n_bar: usize,
    pub imbalance_ratio: f64,
    pub dim: usize,
    pub noise: f64,
    pub spacing: f64,
}

impl LongTailGenerator {
    pub fn profile(&self) -> LongTailSpec {
        LongTailSpec {
            n_bar: self.n_bar,
            imbalance_ratio: self.imbalance_ratio,
            num_classes: self.num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    LongTail(LongTailGenerator),
    Semantic(SemanticSpec),
}

impl GeneratorSpec {
    pub fn num_classes(&self) -> usize {
        match self {
            GeneratorSpec::LongTail(g) => g.num_classes,
            GeneratorSpec::Semantic(s) => s.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::LongTail(g) => g.dim,
            GeneratorSpec::Semantic(s) => s.dim,
        }
    }

    fn spacing(&self) -> f64 {
        match self {
            GeneratorSpec::LongTail(g) => g.spacing,
            GeneratorSpec::Semantic(s) => s.class_center_spacing,
        }
    }

    pub fn noise_per_class(&self) -> Vec<f64> {
        match self {
            GeneratorSpec::LongTail(g) => vec![g.noise; g.num_classes],
            GeneratorSpec::Semantic(s) => (0..s.num_classes())
                .map(|c| if s.is_hard(c) { s.hard_noise } else { s.easy_noise })
                .collect(),
        }
    }

    pub fn train_counts(&self) -> Result<Vec<usize>> {
        match self {
            GeneratorSpec::LongTail(g) => long_tail_counts(&g.profile()),
            GeneratorSpec::Semantic(s) => {
                s.validate()?;
                Ok(vec![s.per_class_count; s.num_classes()])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_counts().map(|_| ())
    }

    /// Same generator with a different imbalance ratio (long-tail only).
    pub fn with_imbalance_ratio(&self, ir: f64) -> Result<Self> {
        match self {
            GeneratorSpec::LongTail(g) => Ok(GeneratorSpec::LongTail(LongTailGenerator {
                imbalance_ratio: ir,
                ..g.clone()
            })),
            GeneratorSpec::Semantic(_) => Err(Error::invalid(
                "imbalance ratio applies to long-tailed generators only",
            )),
        }
    }

    /// Training set drawn on the training-data stream of `seed`.
    pub fn generate_train<T: Real>(&self, seed: u64) -> Result<Dataset<T>> {
        self.validate()?;
        let noise = self.noise_per_class();
        match self {
            GeneratorSpec::LongTail(g) => {
                let base = synth_gaussian_classes(
                    g.num_classes,
                    g.dim,
                    &vec![g.n_bar; g.num_classes],
                    &noise,
                    g.spacing,
                    seed,
                )?;
                subsample_long_tail(&base, &g.profile(), seed)
            }
            GeneratorSpec::Semantic(s) => synth_gaussian_classes(
                s.num_classes(),
                s.dim,
                &vec![s.per_class_count; s.num_classes()],
                &noise,
                s.class_center_spacing,
                seed,
            ),
        }
    }
}

/// Balanced test set from the same class distributions as the training data,
/// drawn on the test-data stream of `seed` so it never shares random draws
/// with the training set.
pub fn balanced_test_split<T: Real>(
    generator: &GeneratorSpec,
    test_per_class: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    if test_per_class == 0 {
        return Err(Error::invalid("test_per_class must be positive"));
    }
    generator.validate()?;
    let c = generator.num_classes();
    synth_on_stream(
        c,
        generator.dim(),
        &vec![test_per_class; c],
        &generator.noise_per_class(),
        generator.spacing(),
        seed,
        stream::TEST_DATA,
    )
}
