//! Training and evaluation drivers built on the transducer, emotion and
//! metrics modules.

mod asr;
mod ser;

pub use asr::{
    asr_vocab, evaluate, stratified_split, tagged_emotions, train_transducer, training_utterance, EpochRecord, EvalSummary,
    Selection, TargetStyle, TrainConfig, TrainOutcome,
};
pub use ser::{pretrain_asr, run_ser, run_ser_variant, with_emotion_tags, SerConfig, SerReport, SerRun, SerVariant};
mod lid;

pub use lid::{duration_sweep, filter_languages, lid_examples, DurationResult};
