use rayon::prelude::*;

use super::model::RnntModel;
use crate::error::{ensure, Error, Result};
use crate::nnet::{GradBuffer, SequenceTensor};

/// Features paired with a model-vocabulary target (no blanks).
#[derive(Clone, Debug)]
pub struct TrainingUtterance {
    pub features: SequenceTensor,
    pub target: Vec<usize>,
}

/// One SGD step on the batch mean loss. Frozen flags are set from `freeze`
/// (glob patterns over parameter names) before the step. Per-utterance
/// gradients may be computed in parallel but are summed in batch order.
/// Returns the mean loss before the update.
pub fn train_step(
    model: &mut RnntModel,
    batch: &[TrainingUtterance],
    lr: f64,
    freeze: &[String],
) -> Result<f64> {
    train_step_clipped(model, batch, lr, freeze, None)
}

/// [`train_step`] with the mean gradient rescaled to at most `max_grad_norm`.
pub fn train_step_clipped(
    model: &mut RnntModel,
    batch: &[TrainingUtterance],
    lr: f64,
    freeze: &[String],
    max_grad_norm: Option<f64>,
) -> Result<f64> {
    ensure!(lr > 0.0, "learning rate must be positive");
    ensure!(
        max_grad_norm.is_none_or(|c| c > 0.0 && c.is_finite()),
        "max_grad_norm must be positive"
    );
    ensure!(!batch.is_empty(), "empty batch");
    model.params_mut().apply_freeze(freeze)?;
    let model_ref: &RnntModel = model;
    let results: Vec<Result<(f64, GradBuffer)>> = batch
        .par_iter()
        .map(|utt| {
            let mut g = model_ref.params().grad_buffer();
            let loss = model_ref.loss_and_grad(&utt.features, &utt.target, &mut g)?;
            Ok((loss, g))
        })
        .collect();

    let mut total = 0.0;
    let mut sum: Option<GradBuffer> = None;
    for (i, r) in results.into_iter().enumerate() {
        let (loss, g) = r?;
        if !loss.is_finite() {
            return Err(Error::non_finite(format!("loss of batch utterance {i}")));
        }
        total += loss;
        match &mut sum {
            Some(s) => s.add_assign(&g),
            None => sum = Some(g),
        }
    }
    let mut grads = sum.expect("non-empty batch");
    grads.scale(1.0 / batch.len() as f64);
    if let Some(limit) = max_grad_norm {
        let norm = grads.norm();
        if norm > limit {
            grads.scale(limit / norm);
        }
    }
    let params = model.params_mut();
    params.zero_grad();
    params.accumulate(&grads);
    params.sgd_step(lr);
    Ok(total / batch.len() as f64)
}

/// Mean transducer loss over a set of utterances.
pub fn mean_loss(model: &RnntModel, utts: &[TrainingUtterance]) -> Result<f64> {
    ensure!(!utts.is_empty(), "no utterances to evaluate");
    let losses = utts
        .par_iter()
        .map(|u| model.loss(&u.features, &u.target))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / utts.len() as f64)
}
