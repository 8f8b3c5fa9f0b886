use super::{check_counts, ClassWeights};
use crate::error::{Error, Result};
use crate::scalar::{total, unit_sum_tolerance, Real};

/// Rescales nonnegative raw weights so they sum to the number of classes.
fn rescale_to_class_count<T: Real>(raw: Vec<T>) -> Result<ClassWeights<T>> {
    let n = T::from_count(raw.len());
    let sum = total(&raw);
    if !(sum > T::zero()) {
        return Err(Error::invalid("raw class weights sum to zero"));
    }
    if raw.iter().all(|&w| w == raw[0]) {
        return ClassWeights::new(vec![T::one(); raw.len()]);
    }
    ClassWeights::new(raw.into_iter().map(|w| w / sum * n).collect())
}

/// Cost-sensitive cross-entropy weights, `w_c ∝ 1 / N_c`.
pub fn csce_weights<T: Real>(class_counts: &[usize]) -> Result<ClassWeights<T>> {
    check_counts(class_counts)?;
    rescale_to_class_count(
        class_counts
            .iter()
            .map(|&n| T::one() / T::from_count(n))
            .collect(),
    )
}

/// Effective-number weights, `w_c ∝ (1 − β) / (1 − β^{N_c})`.
pub fn class_balanced_weights<T: Real>(class_counts: &[usize], beta_eff: f64) -> Result<ClassWeights<T>> {
    check_counts(class_counts)?;
    if !(0.0..1.0).contains(&beta_eff) {
        return Err(Error::invalid(format!("effective-number beta {beta_eff} outside [0, 1)")));
    }
    let one_minus_beta = T::lit(1.0 - beta_eff);
    let ln_beta = (-one_minus_beta).ln_1p();
    rescale_to_class_count(
        class_counts
            .iter()
            .map(|&n| {
                if beta_eff == 0.0 {
                    return T::one();
                }
                // 1 − β^N without cancellation.
                let denom = -(T::from_count(n) * ln_beta).exp_m1();
                one_minus_beta / denom
            })
            .collect(),
    )
}

/// Uncertainty-based reweighting, `w_c = μ^U_c · |C|`.
pub fn ubrw_weights<T: Real>(mu_u: &[T]) -> Result<ClassWeights<T>> {
    if mu_u.is_empty() {
        return Err(Error::invalid("empty uncertainty measure"));
    }
    if let Some(c) = mu_u.iter().position(|m| !m.is_finite() || *m < T::zero()) {
        return Err(Error::NotNormalized(format!("entry {c} is {}", mu_u[c])));
    }
    let sum = total(mu_u);
    if (sum - T::one()).abs() > unit_sum_tolerance::<T>(mu_u.len()) {
        return Err(Error::NotNormalized(format!("entries sum to {sum}")));
    }
    let n = T::from_count(mu_u.len());
    ClassWeights::new(mu_u.iter().map(|&m| m * n).collect())
}

/// Convex combination `mix · w_u + (1 − mix) · w_c`.
pub fn combined_weights<T: Real>(
    w_u: &ClassWeights<T>,
    w_c: &ClassWeights<T>,
    mix: f64,
) -> Result<ClassWeights<T>> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::invalid(format!("mixing coefficient {mix} outside [0, 1]")));
    }
    if w_u.len() != w_c.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} class weights",
            w_u.len(),
            w_c.len()
        )));
    }
    if mix == 0.0 {
        return Ok(w_c.clone());
    }
    if mix == 1.0 {
        return Ok(w_u.clone());
    }
    let a = T::lit(mix);
    let b = T::lit(1.0 - mix);
    ClassWeights::new(
        w_u.values()
            .iter()
            .zip(w_c.values())
            .map(|(&u, &c)| a * u + b * c)
            .collect(),
    )
}
