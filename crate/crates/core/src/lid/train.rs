use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classifier::LidClassifier;
use crate::error::{ensure, Error, Result};
use crate::metrics::Trial;
use crate::nnet::{GradBuffer, Rng, SequenceTensor};
use crate::transducer::RnntModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_grad_norm: Option<f64>,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    #[serde(skip)]
    pub seed: u64,
    /// Share of each language's examples held out for model selection.
    pub validation_fraction: f64,
}

impl Default for LidTrainConfig {
    fn default() -> Self {
        LidTrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 0.2,
            max_grad_norm: Some(5.0),
            patience: 5,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

impl LidTrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs: must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size: must be at least 1");
        ensure!(self.lr.is_finite() && self.lr > 0.0, "lr: must be positive");
        ensure!(self.patience >= 1, "patience: must be at least 1");
        ensure!(
            self.validation_fraction > 0.0 && self.validation_fraction < 1.0,
            "validation_fraction: must be in (0, 1)"
        );
        ensure!(
            self.max_grad_norm.is_none_or(|c| c.is_finite() && c > 0.0),
            "max_grad_norm: must be positive"
        );
        Ok(())
    }
}

/// Features with a language label; no transcript is needed.
#[derive(Clone, Debug)]
pub struct LidExample {
    pub features: SequenceTensor,
    pub language: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LidOutcome {
    pub best_epoch: usize,
    pub epochs: Vec<LidEpoch>,
}

fn holdout(examples: &[LidExample], languages: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for l in 0..languages {
        let mut members: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].language == l).collect();
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        val.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy training with a seeded, per-language held-out validation
/// set. The classifier ends up with the parameters of the epoch with the best
/// validation accuracy (earliest on ties). With a frozen encoder, encoder
/// outputs are computed once and encoder entries are never modified.
pub fn train_lid(clf: &mut LidClassifier, corpus: &[LidExample], cfg: &LidTrainConfig, progress: &mut dyn FnMut(&LidEpoch)) -> Result<LidOutcome> {
    cfg.validate()?;
    let n_lang = clf.languages().len();
    ensure!(
        corpus.iter().all(|e| e.language < n_lang),
        "language label out of range for {n_lang} languages"
    );
    let mut present: Vec<usize> = corpus.iter().map(|e| e.language).collect();
    present.sort_unstable();
    present.dedup();
    ensure!(present.len() >= 2, "language-ID training needs at least 2 languages, corpus has {}", present.len());

    let mut rng = Rng::new(cfg.seed);
    let (mut train_ids, val_ids) = holdout(corpus, n_lang, cfg.validation_fraction, &mut rng);
    ensure!(!train_ids.is_empty(), "no training examples left after holdout");

    let cached: Option<Vec<SequenceTensor>> = if clf.encoder_finetune() {
        None
    } else {
        Some(corpus.par_iter().map(|e| clf.encode(&e.features)).collect::<Result<Vec<_>>>()?)
    };

    let mut best: Option<(f64, usize, crate::nnet::ParamStore)> = None;
    let mut records = Vec::new();
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut train_ids);
        let mut total = 0.0;
        for chunk in train_ids.chunks(cfg.batch_size) {
            let clf_ref: &LidClassifier = clf;
            let results: Vec<Result<(f64, GradBuffer)>> = chunk
                .par_iter()
                .map(|&i| {
                    let mut g = clf_ref.params().grad_buffer();
                    let loss = match &cached {
                        Some(enc) => clf_ref.loss_and_grad_from_enc(&enc[i], corpus[i].language, &mut g)?.0,
                        None => clf_ref.loss_and_grad(&corpus[i].features, corpus[i].language, &mut g)?,
                    };
                    Ok((loss, g))
                })
                .collect();
            let mut sum: Option<GradBuffer> = None;
            for (j, r) in results.into_iter().enumerate() {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::non_finite(format!("language-ID loss of example {}", chunk[j])));
                }
                total += loss;
                match &mut sum {
                    Some(s) => s.add_assign(&g),
                    None => sum = Some(g),
                }
            }
            let mut grads = sum.expect("non-empty chunk");
            grads.scale(1.0 / chunk.len() as f64);
            if let Some(limit) = cfg.max_grad_norm {
                let norm = grads.norm();
                if norm > limit {
                    grads.scale(limit / norm);
                }
            }
            let params = clf.params_mut();
            params.zero_grad();
            params.accumulate(&grads);
            params.sgd_step(cfg.lr);
        }

        let clf_ref: &LidClassifier = clf;
        let correct = val_ids
            .par_iter()
            .map(|&i| {
                let probs = match &cached {
                    Some(enc) => clf_ref.lid_forward(&enc[i])?,
                    None => clf_ref.lid_forward(&clf_ref.encode(&corpus[i].features)?)?,
                };
                Ok(usize::from(argmax(&probs) == corpus[i].language))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        let record = LidEpoch {
            epoch,
            train_loss: total / train_ids.len() as f64,
            validation_accuracy: correct as f64 / val_ids.len() as f64,
        };
        progress(&record);
        if best.as_ref().is_none_or(|b| record.validation_accuracy > b.0) {
            best = Some((record.validation_accuracy, epoch, clf.params().clone()));
        }
        records.push(record);
        if epoch - best.as_ref().map_or(epoch, |b| b.1) >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.ok_or_else(|| Error::contract("no epoch was trained"))?;
    *clf.params_mut() = params;
    Ok(LidOutcome {
        best_epoch,
        epochs: records,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateResult {
    pub accepted: bool,
    pub top_lang: String,
    pub probs: Vec<f64>,
    /// Model-vocabulary ids; present only when accepted.
    pub transcript: Option<Vec<usize>>,
}

/// Encodes once, checks the expected language's probability against
/// `threshold`, and on acceptance decodes from the same encoder output.
pub fn gate_and_decode(
    features: &SequenceTensor,
    model: &RnntModel,
    clf: &LidClassifier,
    expected_lang: &str,
    threshold: f64,
    max_symbols_per_frame: usize,
) -> Result<GateResult> {
    ensure!((0.0..=1.0).contains(&threshold), "gate threshold {threshold} is outside [0, 1]");
    let expected = clf
        .language_id(expected_lang)
        .ok_or_else(|| Error::contract(format!("unknown language {expected_lang:?}")))?;
    ensure!(
        clf.shares_encoder_with(model),
        "classifier encoder differs from the transducer encoder; gating requires a frozen-encoder classifier"
    );
    let enc = model.encode(features)?;
    let probs = clf.lid_forward(&enc)?;
    let top_lang = clf.languages()[argmax(&probs)].clone();
    let accepted = probs[expected] >= threshold;
    let transcript = if accepted {
        Some(model.greedy_decode(&enc, max_symbols_per_frame)?)
    } else {
        None
    };
    Ok(GateResult {
        accepted,
        top_lang,
        probs,
        transcript,
    })
}

/// Language probabilities per example, from the classifier's encoder copy.
pub fn language_probs(clf: &LidClassifier, test: &[LidExample]) -> Result<Vec<Vec<f64>>> {
    test.par_iter()
        .map(|e| clf.lid_forward(&clf.encode(&e.features)?))
        .collect()
}

/// One trial per (example, language): score is that language's probability.
pub fn score_trials(clf: &LidClassifier, test: &[LidExample]) -> Result<Vec<Trial>> {
    ensure!(!test.is_empty(), "no test examples");
    let probs = language_probs(clf, test)?;
    Ok(test
        .iter()
        .zip(&probs)
        .flat_map(|(e, p)| p.iter().enumerate().map(move |(l, &s)| Trial::new(s, l == e.language)))
        .collect())
}

/// Share of examples whose most probable language is the label.
pub fn lid_accuracy(clf: &LidClassifier, test: &[LidExample]) -> Result<f64> {
    ensure!(!test.is_empty(), "no test examples");
    let probs = language_probs(clf, test)?;
    let correct = test.iter().zip(&probs).filter(|(e, p)| argmax(p) == e.language).count();
    Ok(correct as f64 / test.len() as f64)
}
