use super::{check_counts, MarginScope, MarginSpec};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// LDAM margins `Δ_c = τ / N_c^{1/4}`, applied to the label class only.
pub fn ldam_margins<T: Real>(class_counts: &[usize], tau: f64) -> Result<MarginSpec<T>> {
    check_counts(class_counts)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("LDAM tau {tau} must be positive")));
    }
    let tau = T::lit(tau);
    let quarter = T::lit(0.25);
    MarginSpec::new(
        class_counts
            .iter()
            .map(|&n| tau / T::from_count(n).powf(quarter))
            .collect(),
        MarginScope::LabelOnly,
    )
}

/// Logit-adjustment margins `Δ_c = −κ · ln(N_c / Σ_k N_k)`, applied to every class.
pub fn logit_adjusted_margins<T: Real>(class_counts: &[usize], kappa: f64) -> Result<MarginSpec<T>> {
    check_counts(class_counts)?;
    if !kappa.is_finite() {
        return Err(Error::invalid(format!("logit-adjustment kappa {kappa}")));
    }
    let sum = T::from_count(class_counts.iter().sum());
    let kappa = T::lit(kappa);
    MarginSpec::new(
        class_counts
            .iter()
            .map(|&n| {
                let d = -kappa * (T::from_count(n) / sum).ln();
                // Avoid emitting −0.0 for κ = 0.
                if d == T::zero() {
                    T::zero()
                } else {
                    d
                }
            })
            .collect(),
        MarginScope::AllClasses,
    )
}

/// Uncertainty-based margins `Δ_c = τ · μ̃^U_c / max_k μ̃^U_k`, label class only.
///
/// The largest margin is exactly `τ`.
pub fn ubm_margins<T: Real>(mu_u_unnormalized: &[T], tau: f64) -> Result<MarginSpec<T>> {
    if mu_u_unnormalized.is_empty() {
        return Err(Error::invalid("empty uncertainty vector"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("UBM tau {tau} must be positive")));
    }
    if let Some(c) = mu_u_unnormalized
        .iter()
        .position(|m| !m.is_finite() || *m < T::zero())
    {
        return Err(Error::invalid(format!(
            "uncertainty of class {c} is {}",
            mu_u_unnormalized[c]
        )));
    }
    let max = mu_u_unnormalized
        .iter()
        .copied()
        .fold(T::zero(), T::max);
    if max == T::zero() {
        return Err(Error::invalid("all class uncertainties are zero"));
    }
    let tau = T::lit(tau);
    MarginSpec::new(
        mu_u_unnormalized.iter().map(|&m| tau * (m / max)).collect(),
        MarginScope::LabelOnly,
    )
}
