//! Paired comparisons across seeds.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// One-sided paired t-test of `mean(a - b) < 0`; returns the p-value.
///
/// Degenerate samples (fewer than two pairs, or identical differences)
/// give 0 when every difference is negative and 1 otherwise.
pub fn paired_less(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = mean(&d);
    let var = if d.len() > 1 {
        d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    if var == 0.0 || !var.is_finite() {
        return if d.iter().all(|&x| x < 0.0) { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n).sqrt();
    StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2").cdf(t)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}
