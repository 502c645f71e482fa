//! Emotion tags as extra transducer outputs.
//!
//! Training targets get the utterance's tag appended after the transcript,
//! so the unidirectional predictor has seen the whole text when it has to
//! commit to an emotion. At inference the last tag in the decoded sequence
//! wins; a decode without tags counts as NEUTRAL.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::transducer::Vocab;

/// Emotion class name, uppercase (e.g. `HAPPY`). Its output tag is `<HAPPY>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EmotionLabel(String);

impl EmotionLabel {
    pub fn new(name: &str) -> Result<Self> {
        ensure!(
            !name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_'),
            "emotion name {name:?} must be non-empty uppercase ASCII"
        );
        Ok(EmotionLabel(name.to_string()))
    }

    pub fn neutral() -> Self {
        EmotionLabel("NEUTRAL".into())
    }

    pub fn happy() -> Self {
        EmotionLabel("HAPPY".into())
    }

    pub fn angry() -> Self {
        EmotionLabel("ANGRY".into())
    }

    pub fn sad() -> Self {
        EmotionLabel("SAD".into())
    }

    /// NEUTRAL, HAPPY, ANGRY, SAD.
    pub fn default_set() -> Vec<EmotionLabel> {
        vec![Self::neutral(), Self::happy(), Self::angry(), Self::sad()]
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn tag(&self) -> String {
        format!("<{}>", self.0)
    }

    pub fn from_tag(symbol: &str) -> Option<Self> {
        let inner = symbol.strip_prefix('<')?.strip_suffix('>')?;
        EmotionLabel::new(inner).ok()
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EmotionLabel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        EmotionLabel::new(&s)
    }
}

impl From<EmotionLabel> for String {
    fn from(e: EmotionLabel) -> String {
        e.0
    }
}

/// Appends one tag symbol per emotion after the existing symbols.
pub fn extend_vocab(base: &Vocab, emotions: &[EmotionLabel]) -> Result<Vocab> {
    let mut v = base.clone();
    for e in emotions {
        v.push_tag(e.tag())?;
    }
    Ok(v)
}

pub fn tag_id(vocab: &Vocab, label: &EmotionLabel) -> Option<usize> {
    vocab.id_of(&label.tag()).filter(|&id| vocab.is_tag(id))
}

/// `tokens` followed by the tag of `label`.
pub fn augment_target(tokens: &[usize], label: &EmotionLabel, vocab: &Vocab) -> Result<Vec<usize>> {
    ensure!(
        tokens.iter().all(|&t| !vocab.is_tag(t)),
        "target already contains an emotion tag"
    );
    let tag = tag_id(vocab, label).ok_or_else(|| Error::contract(format!("no tag for emotion {label}")))?;
    let mut out = Vec::with_capacity(tokens.len() + 1);
    out.extend_from_slice(tokens);
    out.push(tag);
    Ok(out)
}

/// Emotion of the last tag in `decoded`, NEUTRAL if there is none.
pub fn extract_emotion(decoded: &[usize], vocab: &Vocab) -> EmotionLabel {
    decoded
        .iter()
        .rev()
        .find(|&&id| vocab.is_tag(id))
        .and_then(|&id| vocab.symbol(id))
        .and_then(EmotionLabel::from_tag)
        .unwrap_or_else(EmotionLabel::neutral)
}

/// `decoded` without any tag ids.
pub fn strip_tags(decoded: &[usize], vocab: &Vocab) -> Vec<usize> {
    decoded.iter().copied().filter(|&id| !vocab.is_tag(id)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub dev_emotion_accuracy: f64,
    pub checkpoint: String,
}

/// Dev-set emotion accuracy per epoch, epochs strictly increasing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    entries: Vec<HistoryEntry>,
}

impl TrainingHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, epoch: usize, dev_emotion_accuracy: f64, checkpoint: impl Into<String>) -> Result<()> {
        if let Some(last) = self.entries.last() {
            ensure!(epoch > last.epoch, "epoch {epoch} does not follow {}", last.epoch);
        }
        ensure!(
            (0.0..=1.0).contains(&dev_emotion_accuracy),
            "accuracy {dev_emotion_accuracy} outside [0, 1]"
        );
        self.entries.push(HistoryEntry {
            epoch,
            dev_emotion_accuracy,
            checkpoint: checkpoint.into(),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Epochs since the best accuracy was first reached.
    pub fn epochs_since_best(&self) -> usize {
        match best_index(&self.entries) {
            Some(i) => self.entries.len() - 1 - i,
            None => 0,
        }
    }

    /// True once `patience` epochs have passed without improvement.
    pub fn should_stop(&self, patience: usize) -> bool {
        !self.entries.is_empty() && self.epochs_since_best() >= patience
    }
}

fn best_index(entries: &[HistoryEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        match best {
            Some(b) if e.dev_emotion_accuracy <= entries[b].dev_emotion_accuracy => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Checkpoint with the highest dev accuracy, earliest epoch on ties.
pub fn select_best_model(history: &TrainingHistory) -> Result<&str> {
    best_index(&history.entries)
        .map(|i| history.entries[i].checkpoint.as_str())
        .ok_or_else(|| Error::contract("cannot select from an empty training history"))
}
