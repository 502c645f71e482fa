//! Scoring: edit distance with CER/WER, accuracy, equal error rate, and the
//! CSV reports built from them.

mod edit;
mod eer;
mod report;

pub use edit::{cer, char_errors, edit_distance, wer, word_errors, ErrorCounts};
pub use eer::{eer, roc_points, Trial};
pub use report::{read_trials, write_eer_summary, write_eval_report, write_trials, EvalRow, TrialRow};

use crate::error::{ensure, Result};

/// Fraction of positions where prediction and truth agree.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    ensure!(pred.len() == truth.len(), "prediction/truth length mismatch");
    ensure!(!pred.is_empty(), "accuracy of an empty list");
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}
