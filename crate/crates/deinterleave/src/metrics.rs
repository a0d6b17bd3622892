//! Evaluation helpers shared by the experiment harness.

use thiserror::Error;

use crate::interleave::{InterleaveError, TurnScheduler};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("prediction length {got} does not match label length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cannot score an empty sequence")]
    Empty,
    #[error(transparent)]
    Scheduler(#[from] InterleaveError),
}

/// Fraction of positions where prediction and label agree exactly.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy of always guessing the most frequent user: the largest share in
/// shares mode, the largest stationary mass in matrix mode.
pub fn baseline_accuracy(sched: &TurnScheduler) -> Result<f64, MetricsError> {
    let law = sched.initial_law()?;
    Ok(law.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Mean of a sample.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation (divides by N).
pub fn std_dev(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    (xs.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64).sqrt()
}
