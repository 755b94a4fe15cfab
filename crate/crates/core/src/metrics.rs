//! Error metrics used to score a run against its matched-timestep reference.

use std::fmt;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    LengthMismatch { actual: usize, predicted: usize },
    Empty,
    /// MAPE is undefined at zero actual values; callers must pre-mask series
    /// that can cross zero (power series use nmae instead).
    ZeroActual { index: usize },
    /// nMAE normalizes by max |actual|, undefined for an all-zero series.
    ZeroNormalization,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::LengthMismatch { actual, predicted } => {
                write!(f, "series length mismatch: {actual} vs {predicted}")
            }
            MetricError::Empty => write!(f, "empty series"),
            MetricError::ZeroActual { index } => {
                write!(f, "zero actual value at index {index}: MAPE undefined")
            }
            MetricError::ZeroNormalization => {
                write!(f, "all-zero actual series: nMAE normalization undefined")
            }
        }
    }
}

impl std::error::Error for MetricError {}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0.0;
    for (i, (y, y_hat)) in actual.iter().zip(predicted.iter()).enumerate() {
        if *y == 0.0 {
            return Err(MetricError::ZeroActual { index: i });
        }
        sum += ((y - y_hat) / y).abs();
    }
    Ok(sum / actual.len() as f64 * 100.0)
}

/// Mean absolute error normalized by the series maximum magnitude, as a
/// fraction (callers multiply by 100 to report percent).
pub fn nmae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricError::Empty);
    }
    let max_abs = actual.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    if max_abs == 0.0 {
        return Err(MetricError::ZeroNormalization);
    }
    let mae = actual
        .iter()
        .zip(predicted.iter())
        .map(|(y, y_hat)| (y - y_hat).abs())
        .sum::<f64>()
        / actual.len() as f64;
    Ok(mae / max_abs)
}

// ---------------------------------------------------------------------------
