use serde::{Deserialize, Serialize};

use super::asr::{asr_vocab, evaluate, tagged_emotions, train_transducer, EpochRecord, EvalSummary, Selection, TargetStyle, TrainConfig, TrainOutcome};
use crate::emotion::extend_vocab;
use crate::error::{ensure, Result};
use crate::synthcorpus::{Corpus, CorpusSpec};
use crate::transducer::{ModelDims, RnntModel};

/// Continuation run started from a pretrained ASR model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SerVariant {
    /// Emotion-free targets, selected by dev CER.
    Baseline,
    /// Tagged targets, every parameter trainable (besides `finetune.freeze`).
    Whole,
    /// Tagged targets with `frozen_patterns` added to the freeze list.
    Frozen,
}

impl SerVariant {
    pub const ALL: [SerVariant; 3] = [SerVariant::Baseline, SerVariant::Whole, SerVariant::Frozen];

    pub fn name(self) -> &'static str {
        match self {
            SerVariant::Baseline => "baseline",
            SerVariant::Whole => "whole",
            SerVariant::Frozen => "frozen",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SerConfig {
    /// Emotion-free ASR training from scratch.
    pub pretrain: TrainConfig,
    /// Schedule shared by every variant.
    pub finetune: TrainConfig,
    pub tag_neutral: bool,
    /// Extra freeze patterns for the frozen-encoder variant.
    pub frozen_patterns: Vec<String>,
    pub model_seed: u64,
    /// Initialization seed for the new tag rows.
    pub tag_init_seed: u64,
}

impl Default for SerConfig {
    fn default() -> Self {
        SerConfig {
            pretrain: TrainConfig {
                epochs: 12,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 15,
                seed: 1,
                ..TrainConfig::default()
            },
            tag_neutral: true,
            frozen_patterns: vec!["encoder.*".to_string()],
            model_seed: 0,
            tag_init_seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SerRun {
    pub outcome: TrainOutcome,
    pub test: EvalSummary,
}

#[derive(Clone, Debug)]
pub struct SerReport {
    pub pretrained: TrainOutcome,
    pub baseline: SerRun,
    pub whole: SerRun,
    pub frozen: SerRun,
}

/// Emotion-free ASR model for a corpus, trained from a fresh initialization.
pub fn pretrain_asr(
    spec: &CorpusSpec,
    corpus: &Corpus,
    dims: &ModelDims,
    cfg: &TrainConfig,
    model_seed: u64,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    ensure!(
        dims.input_dim == spec.feature_dim,
        "model input_dim {} does not match corpus feature_dim {}",
        dims.input_dim,
        spec.feature_dim
    );
    let model = RnntModel::new(dims.clone(), asr_vocab(spec)?, model_seed)?;
    train_transducer(model, &corpus.train, &corpus.dev, spec, TargetStyle::Plain, Selection::DevCer, cfg, progress)
}

/// Adds tag symbols to a pretrained ASR model.
pub fn with_emotion_tags(model: &RnntModel, spec: &CorpusSpec, tag_neutral: bool, seed: u64) -> Result<RnntModel> {
    let mut m = model.clone();
    m.extend_vocab(extend_vocab(model.vocab(), &tagged_emotions(spec, tag_neutral))?, seed)?;
    Ok(m)
}

/// Continues training `base` as one variant and scores it on the test split.
pub fn run_ser_variant(
    spec: &CorpusSpec,
    corpus: &Corpus,
    base: &RnntModel,
    variant: SerVariant,
    cfg: &SerConfig,
    progress: &mut dyn FnMut(&EpochRecord),
) -> Result<SerRun> {
    ensure!(base.vocab().tag_ids().is_empty(), "the starting model must be an emotion-free ASR model");
    let tagged = TargetStyle::Tagged {
        tag_neutral: cfg.tag_neutral,
    };
    let mut tc = cfg.finetune.clone();
    let (model, style, selection) = match variant {
        SerVariant::Baseline => (base.clone(), TargetStyle::Plain, Selection::DevCer),
        SerVariant::Whole | SerVariant::Frozen => {
            if variant == SerVariant::Frozen {
                tc.freeze.extend(cfg.frozen_patterns.iter().cloned());
            }
            let m = with_emotion_tags(base, spec, cfg.tag_neutral, cfg.tag_init_seed)?;
            (m, tagged, Selection::DevEmotionAccuracy)
        }
    };
    let outcome = train_transducer(model, &corpus.train, &corpus.dev, spec, style, selection, &tc, progress)?;
    let test = evaluate(&outcome.model, &corpus.test, spec, tc.max_symbols_per_frame)?;
    Ok(SerRun { outcome, test })
}

/// Pretrains an ASR model, then continues training it as every variant from
/// the same starting point.
pub fn run_ser(
    spec: &CorpusSpec,
    corpus: &Corpus,
    dims: &ModelDims,
    cfg: &SerConfig,
    progress: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<SerReport> {
    let pretrained = pretrain_asr(spec, corpus, dims, &cfg.pretrain, cfg.model_seed, &mut |r| progress("pretrain", r))?;
    let mut run = |v: SerVariant| run_ser_variant(spec, corpus, &pretrained.model, v, cfg, &mut |r| progress(v.name(), r));
    let baseline = run(SerVariant::Baseline)?;
    let whole = run(SerVariant::Whole)?;
    let frozen = run(SerVariant::Frozen)?;
    Ok(SerReport {
        pretrained,
        baseline,
        whole,
        frozen,
    })
}
