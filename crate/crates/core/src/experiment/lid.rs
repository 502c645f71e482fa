use crate::error::Result;
use crate::lid::{lid_accuracy, score_trials, LidClassifier, LidExample};
use crate::metrics::{eer, Trial};
use crate::synthcorpus::{Corpus, FeatureSequence};

pub fn lid_examples(utts: &[FeatureSequence]) -> Result<Vec<LidExample>> {
    utts.iter()
        .map(|u| {
            Ok(LidExample {
                features: u.to_tensor()?,
                language: u.language,
            })
        })
        .collect()
}

/// Keeps only utterances whose language is listed; an empty list keeps everything.
pub fn filter_languages(corpus: &Corpus, languages: &[usize]) -> Corpus {
    let keep = |v: &[FeatureSequence]| -> Vec<FeatureSequence> {
        v.iter()
            .filter(|u| languages.is_empty() || languages.contains(&u.language))
            .cloned()
            .collect()
    };
    Corpus {
        train: keep(&corpus.train),
        dev: keep(&corpus.dev),
        test: keep(&corpus.test),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DurationResult {
    pub frames: usize,
    pub eer: f64,
    pub accuracy: f64,
    pub trials: Vec<Trial>,
}

/// Pooled-trial EER and accuracy for each fixed-duration test set.
pub fn duration_sweep(clf: &LidClassifier, sets: &[(usize, Vec<FeatureSequence>)]) -> Result<Vec<DurationResult>> {
    sets.iter()
        .map(|(frames, utts)| {
            let ex = lid_examples(utts)?;
            let trials = score_trials(clf, &ex)?;
            Ok(DurationResult {
                frames: *frames,
                eer: eer(&trials)?,
                accuracy: lid_accuracy(clf, &ex)?,
                trials,
            })
        })
        .collect()
}
