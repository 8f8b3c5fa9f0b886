//! Classification losses and their class-level weights and margins.
//!
//! Every loss returns `(value, ∂value/∂logits)` for one example; the batch
//! loss is the mean over the mini-batch. Class weights multiply the
//! per-example loss of the example's label class; margins shift logits
//! before the softmax.

mod margins;
mod weights;

pub use margins::{ldam_margins, logit_adjusted_margins, ubm_margins};
pub use weights::{class_balanced_weights, combined_weights, csce_weights, ubrw_weights};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_softmax, softmax, Matrix};
use crate::scalar::{all_finite, Real};

pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
pub const DEFAULT_EFFECTIVE_BETA: f64 = 0.9999;
pub const DEFAULT_LDAM_TAU: f64 = 0.5;
pub const DEFAULT_LOGIT_ADJUST_KAPPA: f64 = 1.0;
pub const DEFAULT_UBM_TAU: f64 = 0.5;

/// Per-class loss multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights<T>(Vec<T>);

impl<T: Real> ClassWeights<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("class weights for zero classes"));
        }
        if let Some(c) = values.iter().position(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::invalid(format!(
                "weight of class {c} is {} (must be finite and nonnegative)",
                values[c]
            )));
        }
        Ok(ClassWeights(values))
    }

    pub fn unit(num_classes: usize) -> Self {
        ClassWeights(vec![T::one(); num_classes])
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

    pub fn get(&self, class: usize) -> T {
        self.0[class]
    }
}

/// Whether non-label classes also have their margins subtracted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginScope {
    /// β = 0: only the label-class logit is shifted.
    LabelOnly,
    /// β = 1: every class logit is shifted by its own margin.
    AllClasses,
}

impl MarginScope {
    pub fn beta(self) -> u8 {
        match self {
            MarginScope::LabelOnly => 0,
            MarginScope::AllClasses => 1,
        }
    }
}

/// Per-class logit margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec<T> {
    pub deltas: Vec<T>,
    pub scope: MarginScope,
}

impl<T: Real> MarginSpec<T> {
    pub fn new(deltas: Vec<T>, scope: MarginScope) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::invalid("margins for zero classes"));
        }
        if !all_finite(&deltas) {
            return Err(Error::NonFinite("margin".into()));
        }
        Ok(MarginSpec { deltas, scope })
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    CrossEntropy,
    WeightedCrossEntropy,
    Focal,
    MarginCrossEntropy,
}

/// Fully resolved loss: variant plus the class weights / margins it uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSpec<T> {
    pub variant: LossVariant,
    pub weights: Option<ClassWeights<T>>,
    pub margin: Option<MarginSpec<T>>,
    pub focal_gamma: Option<T>,
}

impl<T: Real> LossSpec<T> {
    pub fn cross_entropy() -> Self {
        LossSpec {
            variant: LossVariant::CrossEntropy,
            weights: None,
            margin: None,
            focal_gamma: None,
        }
    }

    pub fn weighted(weights: ClassWeights<T>) -> Self {
        LossSpec {
            variant: LossVariant::WeightedCrossEntropy,
            weights: Some(weights),
            margin: None,
            focal_gamma: None,
        }
    }

    pub fn focal(gamma: T, weights: Option<ClassWeights<T>>) -> Self {
        LossSpec {
            variant: LossVariant::Focal,
            weights,
            margin: None,
            focal_gamma: Some(gamma),
        }
    }

    pub fn margin(margin: MarginSpec<T>, weights: Option<ClassWeights<T>>) -> Self {
        LossSpec {
            variant: LossVariant::MarginCrossEntropy,
            weights,
            margin: Some(margin),
            focal_gamma: None,
        }
    }

    /// True for unweighted, unmargined cross-entropy.
    pub fn is_plain_cross_entropy(&self) -> bool {
        self.variant == LossVariant::CrossEntropy && self.weights.is_none() && self.margin.is_none()
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != num_classes {
                return Err(Error::DimensionMismatch(format!(
                    "{} class weights for {num_classes} classes",
                    w.len()
                )));
            }
        }
        if let Some(m) = &self.margin {
            if m.len() != num_classes {
                return Err(Error::DimensionMismatch(format!(
                    "{} margins for {num_classes} classes",
                    m.len()
                )));
            }
        }
        match self.variant {
            LossVariant::CrossEntropy => {}
            LossVariant::WeightedCrossEntropy if self.weights.is_none() => {
                return Err(Error::invalid("weighted cross-entropy without weights"));
            }
            LossVariant::WeightedCrossEntropy => {}
            LossVariant::Focal => match self.focal_gamma {
                None => return Err(Error::invalid("focal loss without gamma")),
                Some(g) if !(g.is_finite() && g >= T::zero()) => {
                    return Err(Error::invalid(format!("focal gamma {g}")));
                }
                Some(_) => {}
            },
            LossVariant::MarginCrossEntropy if self.margin.is_none() => {
                return Err(Error::invalid("margin loss without margins"));
            }
            LossVariant::MarginCrossEntropy => {}
        }
        Ok(())
    }
}

fn check_label(num_classes: usize, label: usize) -> Result<()> {
    if label >= num_classes {
        return Err(Error::LabelOutOfRange { label, num_classes });
    }
    Ok(())
}

/// `−log softmax(s)[label]` with gradient `softmax(s) − onehot(label)`.
pub fn ce_loss<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    check_label(logits.len(), label)?;
    let log_p = log_softmax(logits)?;
    let mut grad = softmax(logits)?;
    grad[label] -= T::one();
    Ok((-log_p[label], grad))
}

fn apply_weight<T: Real>(
    (loss, mut grad): (T, Vec<T>),
    weights: Option<&ClassWeights<T>>,
    label: usize,
) -> Result<(T, Vec<T>)> {
    let Some(w) = weights else {
        return Ok((loss, grad));
    };
    if w.len() != grad.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} class weights for {} logits",
            w.len(),
            grad.len()
        )));
    }
    let w = w.get(label);
    grad.iter_mut().for_each(|g| *g *= w);
    Ok((w * loss, grad))
}

/// Class-weighted cross-entropy: `w[label] · ce`.
pub fn weighted_ce_loss<T: Real>(
    logits: &[T],
    label: usize,
    weights: &ClassWeights<T>,
) -> Result<(T, Vec<T>)> {
    apply_weight(ce_loss(logits, label)?, Some(weights), label)
}

/// Focal loss `−(1 − p)^γ · log p` on the label-class probability `p`,
/// optionally multiplied by a class weight.
pub fn focal_loss<T: Real>(
    logits: &[T],
    label: usize,
    gamma: T,
    weights: Option<&ClassWeights<T>>,
) -> Result<(T, Vec<T>)> {
    if !(gamma.is_finite() && gamma >= T::zero()) {
        return Err(Error::invalid(format!("focal gamma {gamma} must be >= 0")));
    }
    check_label(logits.len(), label)?;
    let log_p = log_softmax(logits)?[label];
    let q = softmax(logits)?;
    let p = q[label];
    // 1 - p summed from the other classes keeps precision when p ≈ 1.
    let one_minus_p: T = q
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != label)
        .map(|(_, &x)| x)
        .sum();
    let modulator = one_minus_p.powf(gamma);
    let loss = -modulator * log_p;

    // d loss / d p, multiplied by p.
    let focus_term = if gamma == T::zero() || one_minus_p == T::zero() {
        T::zero()
    } else {
        gamma * one_minus_p.powf(gamma - T::one()) * p * log_p
    };
    let g = focus_term - modulator;
    let grad = q
        .iter()
        .enumerate()
        .map(|(k, &qk)| {
            let indicator = if k == label { T::one() } else { T::zero() };
            g * (indicator - qk)
        })
        .collect();
    apply_weight((loss, grad), weights, label)
}

fn margin_adjusted_logits<T: Real>(
    logits: &[T],
    label: usize,
    margin: &MarginSpec<T>,
) -> Result<Vec<T>> {
    if margin.len() != logits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} margins for {} logits",
            margin.len(),
            logits.len()
        )));
    }
    check_label(logits.len(), label)?;
    Ok(logits
        .iter()
        .zip(&margin.deltas)
        .enumerate()
        .map(|(k, (&s, &d))| {
            if k == label || margin.scope == MarginScope::AllClasses {
                s - d
            } else {
                s
            }
        })
        .collect())
}

/// Softmax with the label-class logit reduced by its margin and, when the
/// scope covers all classes, every other logit reduced by its own margin.
pub fn margin_softmax<T: Real>(logits: &[T], label: usize, margin: &MarginSpec<T>) -> Result<Vec<T>> {
    softmax(&margin_adjusted_logits(logits, label, margin)?)
}

/// `−log margin_softmax(s)[label]`, optionally class-weighted.
pub fn margin_ce_loss<T: Real>(
    logits: &[T],
    label: usize,
    margin: &MarginSpec<T>,
    weights: Option<&ClassWeights<T>>,
) -> Result<(T, Vec<T>)> {
    // The adjustment is a constant shift per logit, so the Jacobian is the identity.
    let adjusted = margin_adjusted_logits(logits, label, margin)?;
    apply_weight(ce_loss(&adjusted, label)?, weights, label)
}

/// Loss of a single example under a resolved [`LossSpec`].
pub fn example_loss<T: Real>(logits: &[T], label: usize, spec: &LossSpec<T>) -> Result<(T, Vec<T>)> {
    match spec.variant {
        LossVariant::CrossEntropy => apply_weight(ce_loss(logits, label)?, spec.weights.as_ref(), label),
        LossVariant::WeightedCrossEntropy => {
            let w = spec
                .weights
                .as_ref()
                .ok_or_else(|| Error::invalid("weighted cross-entropy without weights"))?;
            weighted_ce_loss(logits, label, w)
        }
        LossVariant::Focal => {
            let gamma = spec
                .focal_gamma
                .ok_or_else(|| Error::invalid("focal loss without gamma"))?;
            focal_loss(logits, label, gamma, spec.weights.as_ref())
        }
        LossVariant::MarginCrossEntropy => {
            let m = spec
                .margin
                .as_ref()
                .ok_or_else(|| Error::invalid("margin loss without margins"))?;
            margin_ce_loss(logits, label, m, spec.weights.as_ref())
        }
    }
}

/// Mean loss over a mini-batch and its gradient with respect to every logit.
pub fn batch_loss<T: Real>(
    logits: &Matrix<T>,
    labels: &[usize],
    spec: &LossSpec<T>,
) -> Result<(T, Matrix<T>)> {
    let m = logits.rows();
    if m == 0 {
        return Err(Error::invalid("loss of an empty batch"));
    }
    if labels.len() != m {
        return Err(Error::DimensionMismatch(format!("{m} logit rows, {} labels", labels.len())));
    }
    spec.validate(logits.cols())?;
    let inv_m = T::one() / T::from_count(m);
    let mut total = T::zero();
    let mut grad = Matrix::zeros(m, logits.cols());
    for (i, &label) in labels.iter().enumerate() {
        let (l, g) = example_loss(logits.row(i), label, spec)?;
        total += l;
        for (dst, gi) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = gi * inv_m;
        }
    }
    Ok((total * inv_m, grad))
}

pub(crate) fn check_counts(counts: &[usize]) -> Result<()> {
    if counts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ce_symmetric_case_and_saturation() {
        let (l, g) = ce_loss(&[0.0f64, 0.0], 0).unwrap();
        assert!(close(l, LN2, 1e-15));
        assert_eq!(g, vec![-0.5, 0.5]);
        let (l, _) = ce_loss(&[60.0f64, 0.0, -5.0], 0).unwrap();
        assert!(l < 1e-25);
    }

    #[test]
    fn ce_matches_log_of_softmax_oracle() {
        let s = [0.7f64, -1.3, 2.2, 0.05];
        let z: f64 = s.iter().map(|x| x.exp()).sum();
        let oracle = -(s[2].exp() / z).ln();
        assert!(close(ce_loss(&s, 2).unwrap().0, oracle, 1e-12));
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        assert!(matches!(
            ce_loss(&[0.0f64, 1.0], 2),
            Err(Error::LabelOutOfRange { label: 2, num_classes: 2 })
        ));
    }

    #[test]
    fn weighted_ce_identity_annihilation_linearity() {
        let s = [0.3f64, -0.4, 1.1];
        let base = ce_loss(&s, 1).unwrap();
        assert_eq!(weighted_ce_loss(&s, 1, &ClassWeights::unit(3)).unwrap(), base);

        let zero = ClassWeights::new(vec![1.0, 0.0, 1.0]).unwrap();
        let (l, g) = weighted_ce_loss(&s, 1, &zero).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));

        let two = ClassWeights::new(vec![1.0, 2.0, 1.0]).unwrap();
        let (l, g) = weighted_ce_loss(&s, 1, &two).unwrap();
        assert_eq!(l, 2.0 * base.0);
        for (a, b) in g.iter().zip(&base.1) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn class_weights_reject_negative() {
        assert!(ClassWeights::new(vec![1.0f64, -0.1]).is_err());
        assert!(ClassWeights::new(vec![1.0f64, f64::NAN]).is_err());
    }

    #[test]
    fn focal_reductions() {
        let s = [0.2f64, -0.9, 1.4];
        let ce = ce_loss(&s, 0).unwrap();
        let fo = focal_loss(&s, 0, 0.0, None).unwrap();
        assert!(close(fo.0, ce.0, 1e-12));
        for (a, b) in fo.1.iter().zip(&ce.1) {
            assert!(close(*a, *b, 1e-12));
        }
        let (l, _) = focal_loss(&[0.0f64, 0.0], 0, 2.0, None).unwrap();
        assert!(close(l, 0.25 * LN2, 1e-15));
        let (l, g) = focal_loss(&[40.0f64, 0.0], 0, 2.0, None).unwrap();
        assert!(l < 1e-30 && g.iter().all(|x| x.is_finite()));
        assert!(focal_loss(&s, 0, -1.0, None).is_err());
    }

    #[test]
    fn focal_saturation_is_finite_for_fractional_gamma() {
        let (l, g) = focal_loss(&[800.0f64, 0.0], 0, 0.5, None).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn margin_softmax_reductions() {
        let s = [0.4f64, -1.0, 2.0];
        let plain = softmax(&s).unwrap();
        for scope in [MarginScope::LabelOnly, MarginScope::AllClasses] {
            let m = MarginSpec::new(vec![0.0; 3], scope).unwrap();
            assert_eq!(margin_softmax(&s, 1, &m).unwrap(), plain);
        }
        let m = MarginSpec::new(vec![0.7; 3], MarginScope::AllClasses).unwrap();
        for (a, b) in margin_softmax(&s, 2, &m).unwrap().iter().zip(&plain) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn margin_softmax_label_only_example() {
        let m = MarginSpec::new(vec![0.5f64, 99.0], MarginScope::LabelOnly).unwrap();
        let p = margin_softmax(&[1.0, 1.0], 0, &m).unwrap();
        let expected = 0.5f64.exp() / (0.5f64.exp() + 1.0f64.exp());
        assert!(close(p[0], expected, 1e-15));
        assert!(close(p[0] + p[1], 1.0, 1e-15));
    }

    #[test]
    fn label_only_constant_margin_breaks_shift_invariance() {
        let m = MarginSpec::new(vec![0.5f64; 3], MarginScope::LabelOnly).unwrap();
        let s = [0.1, 0.2, 0.3];
        let p = margin_softmax(&s, 0, &m).unwrap();
        let plain = softmax(&s).unwrap();
        assert!(p[0] < plain[0] - 1e-3);
    }

    #[test]
    fn spec_validation() {
        assert!(LossSpec::<f64>::cross_entropy().validate(3).is_ok());
        let mut s = LossSpec::<f64>::focal(2.0, None);
        s.focal_gamma = None;
        assert!(s.validate(2).is_err());
        let mut s = LossSpec::<f64>::cross_entropy();
        s.variant = LossVariant::MarginCrossEntropy;
        assert!(s.validate(2).is_err());
        let s = LossSpec::weighted(ClassWeights::<f64>::unit(3));
        assert!(s.validate(2).is_err());
    }

    #[test]
    fn batch_loss_is_mean_with_scaled_gradient() {
        let logits = Matrix::from_rows(&[vec![0.0f64, 0.0], vec![1.0, -1.0]]).unwrap();
        let (l, g) = batch_loss(&logits, &[0, 1], &LossSpec::cross_entropy()).unwrap();
        let a = ce_loss(&[0.0, 0.0], 0).unwrap();
        let b = ce_loss(&[1.0, -1.0], 1).unwrap();
        assert!(close(l, 0.5 * (a.0 + b.0), 1e-15));
        assert!(close(g.get(1, 0), 0.5 * b.1[0], 1e-15));
        assert!(batch_loss(&Matrix::<f64>::zeros(0, 2), &[], &LossSpec::cross_entropy()).is_err());
    }
}
