//! Class-level imbalance measures and the rank-correlation diagnostic.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::check_counts;
use crate::scalar::{total, unit_sum_tolerance, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureOrigin {
    Cardinality,
    Uncertainty,
    Combined,
}

impl MeasureOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            MeasureOrigin::Cardinality => "cardinality",
            MeasureOrigin::Uncertainty => "uncertainty",
            MeasureOrigin::Combined => "combined",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "cardinality" => Some(MeasureOrigin::Cardinality),
            "uncertainty" => Some(MeasureOrigin::Uncertainty),
            "combined" => Some(MeasureOrigin::Combined),
            _ => None,
        }
    }
}

/// Per-class imbalance, before and after normalization to a distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceMeasure<T> {
    pub origin: MeasureOrigin,
    pub unnormalized: Vec<T>,
    pub normalized: Vec<T>,
}

impl<T: Real> ImbalanceMeasure<T> {
    pub fn from_unnormalized(origin: MeasureOrigin, unnormalized: Vec<T>) -> Result<Self> {
        let normalized = normalize(&unnormalized)?;
        Ok(ImbalanceMeasure {
            origin,
            unnormalized,
            normalized,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.normalized.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["class_index", "unnormalized", "normalized", "origin"])
            .map_err(io)?;
        for (c, (u, n)) in self.unnormalized.iter().zip(&self.normalized).enumerate() {
            w.write_record([
                c.to_string(),
                u.to_string(),
                n.to_string(),
                self.origin.as_str().to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a measure CSV. Accepts both the measure layout
    /// (`class_index,unnormalized,normalized,origin`) and the uncertainty-report
    /// layout (`class_index,mu_tilde,mu`), the latter tagged as uncertainty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let with_origin = match cols.as_slice() {
            ["class_index", "unnormalized", "normalized", "origin"] => true,
            ["class_index", "mu_tilde", "mu"] => false,
            _ => return Err(Error::Format(format!("unexpected measure header {cols:?}"))),
        };
        let mut origin = MeasureOrigin::Uncertainty;
        let mut unnormalized = Vec::new();
        let mut normalized = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let line = row + 2;
            let num = |i: usize| -> Result<T> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .map(T::lit)
                    .ok_or_else(|| Error::Format(format!("line {line}: bad number in column {i}")))
            };
            let idx: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("line {line}: bad class index")))?;
            if idx != row {
                return Err(Error::Format(format!(
                    "line {line}: class index {idx}, expected {row}"
                )));
            }
            unnormalized.push(num(1)?);
            normalized.push(num(2)?);
            if with_origin {
                origin = rec
                    .get(3)
                    .and_then(MeasureOrigin::parse)
                    .ok_or_else(|| Error::Format(format!("line {line}: bad origin")))?;
            }
        }
        if normalized.is_empty() {
            return Err(Error::Format("measure file has no classes".into()));
        }
        let sum = total(&normalized);
        if (sum - T::one()).abs() > unit_sum_tolerance::<T>(normalized.len()) {
            return Err(Error::NotNormalized(format!("normalized column sums to {sum}")));
        }
        Ok(ImbalanceMeasure {
            origin,
            unnormalized,
            normalized,
        })
    }
}

/// Scales a nonnegative vector to sum to one. An all-zero vector maps to the
/// uniform distribution.
pub fn normalize<T: Real>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot normalize an empty vector"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::invalid(format!("entry {i} is {}", values[i])));
    }
    let sum = total(values);
    if sum == T::zero() {
        let u = T::one() / T::from_count(values.len());
        return Ok(vec![u; values.len()]);
    }
    Ok(values.iter().map(|&v| v / sum).collect())
}

/// Inverse-cardinality measure `μ̃_c = 1 / N_c`.
pub fn cardinality_measure<T: Real>(class_counts: &[usize]) -> Result<ImbalanceMeasure<T>> {
    check_counts(class_counts)?;
    ImbalanceMeasure::from_unnormalized(
        MeasureOrigin::Cardinality,
        class_counts
            .iter()
            .map(|&n| T::one() / T::from_count(n))
            .collect(),
    )
}

/// Result of a rank correlation: undefined when either input is constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Rho<T> {
    Defined(T),
    Undefined,
}

impl<T: Copy> Rho<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Rho::Defined(v) => Some(v),
            Rho::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Rho::Defined(_))
    }
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks<T: Real>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1 ..= end.
        let avg = T::from_count(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson<T: Real>(x: &[T], y: &[T]) -> T {
    let n = T::from_count(x.len());
    let mx = total(x) / n;
    let my = total(y) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one())
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman_rho<T: Real>(x: &[T], y: &[T]) -> Result<Rho<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("rank correlation needs at least two values"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank correlation input".into()));
    }
    let constant = |v: &[T]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Ok(Rho::Undefined);
    }
    Ok(Rho::Defined(pearson(&average_ranks(x), &average_ranks(y))))
}

/// Median with the midpoint convention for even lengths; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_examples() {
        let m = cardinality_measure::<f64>(&[50, 100]).unwrap();
        assert_eq!(m.unnormalized, vec![0.02, 0.01]);
        assert!((m.normalized[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.normalized[1] - 1.0 / 3.0).abs() < 1e-15);
        let m = cardinality_measure::<f64>(&[7, 7, 7]).unwrap();
        assert!(m.normalized.iter().all(|&v| v == m.normalized[0]));
        assert_eq!(cardinality_measure::<f64>(&[1]).unwrap().normalized, vec![1.0]);
        assert!(matches!(
            cardinality_measure::<f64>(&[4, 0]),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0f64, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize(&[0.0f64; 3]).unwrap(), vec![1.0 / 3.0; 3]);
        assert_eq!(normalize(&[1.0f64, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert!(normalize(&[1.0f64, -1.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        let r = spearman_rho(&x, &sq).unwrap().value().unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let r = spearman_rho(&x, &neg).unwrap().value().unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        let r = spearman_rho(&[1.0f64, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0])
            .unwrap()
            .value()
            .unwrap();
        // 1 - 6·Σd²/(n(n²-1)) with d = (1,1,1,1)
        let oracle = 1.0 - 6.0 * 4.0 / (4.0 * 15.0);
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn spearman_constant_is_undefined_not_zero() {
        assert_eq!(
            spearman_rho(&[0.1f64, 0.1, 0.1], &[1.0, 2.0, 3.0]).unwrap(),
            Rho::Undefined
        );
        assert!(spearman_rho(&[1.0f64], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0f64, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(
            average_ranks(&[3.0f64, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn measure_csv_round_trip() {
        let m = cardinality_measure::<f64>(&[3, 17, 250]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = ImbalanceMeasure::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), Some((5.0, 0.0)));
    }
}
