use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emotion::{augment_target, extract_emotion, select_best_model, strip_tags, EmotionLabel, TrainingHistory};
use crate::error::{ensure, Error, Result};
use crate::metrics::{char_errors, word_errors, ErrorCounts, EvalRow};
use crate::nnet::Rng;
use crate::synthcorpus::{CorpusSpec, FeatureSequence};
use crate::transducer::{train_step_clipped, RnntModel, TrainingUtterance, Vocab};

/// Optimizer and schedule settings shared by every transducer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Clip the batch-mean gradient to this Euclidean norm; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    /// Shuffling seed.
    #[serde(skip)]
    pub seed: u64,
    pub max_symbols_per_frame: usize,
    /// Parameter-name glob patterns excluded from updates.
    pub freeze: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            lr: 0.5,
            max_grad_norm: Some(5.0),
            patience: 5,
            seed: 0,
            max_symbols_per_frame: crate::transducer::DEFAULT_MAX_SYMBOLS_PER_FRAME,
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs: must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size: must be at least 1");
        ensure!(self.lr.is_finite() && self.lr > 0.0, "lr: must be positive");
        ensure!(self.patience >= 1, "patience: must be at least 1");
        ensure!(self.max_symbols_per_frame >= 1, "max_symbols_per_frame: must be at least 1");
        Ok(())
    }
}

/// How dataset transcripts become transducer targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetStyle {
    Plain,
    /// Emotion tag appended; NEUTRAL utterances stay untagged unless `tag_neutral`.
    Tagged { tag_neutral: bool },
}

/// Dev metric used to pick the returned epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    DevCer,
    DevEmotionAccuracy,
}

/// Blank followed by the corpus symbol table, so model id = dataset id + 1.
pub fn asr_vocab(spec: &CorpusSpec) -> Result<Vocab> {
    Vocab::with_blank(&spec.symbols)
}

/// Emotion labels that receive a tag symbol.
pub fn tagged_emotions(spec: &CorpusSpec, tag_neutral: bool) -> Vec<EmotionLabel> {
    spec.emotion_labels()
        .into_iter()
        .filter(|e| tag_neutral || *e != EmotionLabel::neutral())
        .collect()
}

fn check_vocab(model: &RnntModel, spec: &CorpusSpec) -> Result<()> {
    let v = model.vocab();
    let n = spec.symbols.len();
    ensure!(
        v.blank_id() == 0 && v.len() > n && v.symbols()[1..=n] == spec.symbols[..] && (n + 1..v.len()).all(|i| v.is_tag(i)),
        "model vocabulary does not match the corpus symbol table"
    );
    Ok(())
}

pub fn training_utterance(u: &FeatureSequence, spec: &CorpusSpec, vocab: &Vocab, style: TargetStyle) -> Result<TrainingUtterance> {
    let tokens: Vec<usize> = u.transcript.iter().map(|t| t + 1).collect();
    let target = match style {
        TargetStyle::Plain => tokens,
        TargetStyle::Tagged { tag_neutral } => {
            let label = &spec.emotions[u.emotion].label;
            if !tag_neutral && *label == EmotionLabel::neutral() {
                tokens
            } else {
                augment_target(&tokens, label, vocab)?
            }
        }
    };
    Ok(TrainingUtterance {
        features: u.to_tensor()?,
        target,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub cer: f64,
    pub wer: f64,
    /// Present when the model's vocabulary has emotion tags.
    pub emotion_accuracy: Option<f64>,
    pub rows: Vec<EvalRow>,
}

fn text(spec: &CorpusSpec, ids: &[usize]) -> String {
    ids.iter().map(|&i| spec.symbols[i].as_str()).collect()
}

/// Greedy-decodes every utterance; CER/WER are pooled over the set with tags stripped.
pub fn evaluate(model: &RnntModel, utts: &[FeatureSequence], spec: &CorpusSpec, max_symbols_per_frame: usize) -> Result<EvalSummary> {
    ensure!(!utts.is_empty(), "no utterances to evaluate");
    check_vocab(model, spec)?;
    let vocab = model.vocab();
    let tagged = !vocab.tag_ids().is_empty();
    let per_utt = utts
        .par_iter()
        .map(|u| {
            let enc = model.encode(&u.to_tensor()?)?;
            let decoded = model.greedy_decode(&enc, max_symbols_per_frame)?;
            let pred = extract_emotion(&decoded, vocab);
            let hyp_ids: Vec<usize> = strip_tags(&decoded, vocab).into_iter().map(|i| i - 1).collect();
            let reference = text(spec, &u.transcript);
            let hypothesis = text(spec, &hyp_ids);
            let c = char_errors(&reference, &hypothesis)?;
            let w = word_errors(&reference, &hypothesis)?;
            let truth = spec.emotions[u.emotion].label.clone();
            let row = EvalRow {
                utt_id: u.utt_id.clone(),
                cer: c.rate()?,
                wer: w.rate()?,
                reference,
                hypothesis,
                true_emotion: truth.name().to_string(),
                pred_emotion: if tagged { pred.name().to_string() } else { String::new() },
            };
            Ok((c, w, pred == truth, row))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut chars = ErrorCounts::default();
    let mut words = ErrorCounts::default();
    let mut correct = 0;
    let mut rows = Vec::with_capacity(per_utt.len());
    for (c, w, ok, row) in per_utt {
        chars += c;
        words += w;
        correct += usize::from(ok);
        rows.push(row);
    }
    Ok(EvalSummary {
        cer: chars.rate()?,
        wer: words.rate()?,
        emotion_accuracy: tagged.then(|| correct as f64 / utts.len() as f64),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_cer: f64,
    pub dev_wer: f64,
    pub dev_emotion_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: RnntModel,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub history: TrainingHistory,
}

/// Seeded epoch training with dev evaluation after every epoch, early stopping
/// after `patience` epochs without improvement, and return of the best epoch's
/// model (earliest epoch on ties).
#[allow(clippy::too_many_arguments)]
pub fn train_transducer(
    mut model: RnntModel,
    train: &[FeatureSequence],
    dev: &[FeatureSequence],
    spec: &CorpusSpec,
    style: TargetStyle,
    selection: Selection,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(!train.is_empty(), "training set is empty");
    ensure!(!dev.is_empty(), "dev set is empty");
    check_vocab(&model, spec)?;
    if selection == Selection::DevEmotionAccuracy {
        ensure!(
            matches!(style, TargetStyle::Tagged { .. }) && !model.vocab().tag_ids().is_empty(),
            "emotion-accuracy selection needs tagged targets and a tagged vocabulary"
        );
    }
    let data = train
        .iter()
        .map(|u| training_utterance(u, spec, model.vocab(), style))
        .collect::<Result<Vec<_>>>()?;
    model.params_mut().apply_freeze(&cfg.freeze)?;

    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut records = Vec::new();
    let mut history = TrainingHistory::new();
    let mut best: Option<(f64, usize, RnntModel)> = None;
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainingUtterance> = chunk.iter().map(|&i| data[i].clone()).collect();
            total += train_step_clipped(&mut model, &batch, cfg.lr, &cfg.freeze, cfg.max_grad_norm)? * batch.len() as f64;
        }
        let train_loss = total / data.len() as f64;
        let eval = evaluate(&model, dev, spec, cfg.max_symbols_per_frame)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_cer: eval.cer,
            dev_wer: eval.wer,
            dev_emotion_accuracy: eval.emotion_accuracy,
        };
        progress(&record);
        let score = match selection {
            Selection::DevCer => -eval.cer,
            Selection::DevEmotionAccuracy => {
                let acc = eval.emotion_accuracy.expect("tagged vocabulary");
                history.push(epoch, acc, format!("epoch-{epoch}"))?;
                acc
            }
        };
        records.push(record);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
        }
        let since_best = epoch - best.as_ref().map_or(epoch, |b| b.1);
        if since_best >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, best_model) = best.ok_or_else(|| Error::contract("no epoch was trained"))?;
    if selection == Selection::DevEmotionAccuracy {
        let chosen = select_best_model(&history)?;
        debug_assert_eq!(chosen, format!("epoch-{best_epoch}"));
    }
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        epochs: records,
        history,
    })
}

/// Seeded dev carve-out stratified by emotion: about `fraction` of each
/// emotion's utterances (at least one when the class is non-empty).
pub fn stratified_split(utts: &[FeatureSequence], fraction: f64, seed: u64) -> Result<(Vec<FeatureSequence>, Vec<FeatureSequence>)> {
    ensure!(fraction > 0.0 && fraction < 1.0, "dev fraction must be in (0, 1)");
    let mut rng = Rng::new(seed);
    let classes = utts.iter().map(|u| u.emotion).max().map_or(0, |m| m + 1);
    let mut dev_ids = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..utts.len()).filter(|&i| utts[i].emotion == c).collect();
        if members.is_empty() {
            continue;
        }
        rng.shuffle(&mut members);
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        dev_ids.extend_from_slice(&members[..k]);
    }
    dev_ids.sort_unstable();
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        if dev_ids.binary_search(&i).is_ok() {
            dev.push(u.clone());
        } else {
            train.push(u.clone());
        }
    }
    Ok((train, dev))
}
