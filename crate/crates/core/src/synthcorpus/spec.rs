use serde::{Deserialize, Serialize};

use crate::emotion::EmotionLabel;
use crate::error::{ensure, Result};
use crate::nnet::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub name: String,
    /// Indices into [`CorpusSpec::symbols`].
    pub inventory: Vec<usize>,
    /// Distribution of the first symbol over the inventory.
    pub initial: Vec<f64>,
    /// Row-stochastic transitions between inventory positions.
    pub bigram: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionSpec {
    pub label: EmotionLabel,
    /// Added to every frame.
    pub offset: Vec<f64>,
    /// Scales frames per symbol.
    pub duration_multiplier: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Complete, explicit description of a synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub feature_dim: usize,
    /// Global symbol table; transcripts index into it.
    pub symbols: Vec<String>,
    /// Mean frame vector of each global symbol.
    pub means: Vec<Vec<f64>>,
    pub languages: Vec<LanguageSpec>,
    pub emotions: Vec<EmotionSpec>,
    pub noise_std: f64,
    /// Inclusive range.
    pub frames_per_symbol: [usize; 2],
    /// Inclusive range.
    pub symbols_per_utterance: [usize; 2],
    pub counts: SplitCounts,
    pub seed: u64,
}

fn is_distribution(row: &[f64]) -> bool {
    row.iter().all(|&p| p.is_finite() && p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl CorpusSpec {
    /// Checks every invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.feature_dim >= 1, "feature_dim: must be positive");
        ensure!(!self.symbols.is_empty(), "symbols: empty");
        ensure!(self.means.len() == self.symbols.len(), "means: one vector per symbol required");
        ensure!(
            self.means.iter().flatten().all(|v| v.is_finite()) && self.means.iter().all(|m| m.len() == self.feature_dim),
            "means: vectors must be finite with length feature_dim"
        );
        ensure!(!self.languages.is_empty(), "languages: empty");
        for l in &self.languages {
            let n = l.inventory.len();
            ensure!(n >= 1, "languages.{}.inventory: empty", l.name);
            ensure!(
                l.inventory.iter().all(|&s| s < self.symbols.len()),
                "languages.{}.inventory: symbol index out of range",
                l.name
            );
            ensure!(l.initial.len() == n && is_distribution(&l.initial), "languages.{}.initial: not a distribution", l.name);
            ensure!(
                l.bigram.len() == n && l.bigram.iter().all(|r| r.len() == n && is_distribution(r)),
                "languages.{}.bigram: rows must sum to 1",
                l.name
            );
        }
        ensure!(!self.emotions.is_empty(), "emotions: empty");
        for e in &self.emotions {
            ensure!(
                e.offset.len() == self.feature_dim && e.offset.iter().all(|v| v.is_finite()),
                "emotions.{}.offset: must have feature_dim finite entries",
                e.label
            );
            ensure!(
                e.duration_multiplier.is_finite() && e.duration_multiplier > 0.0,
                "emotions.{}.duration_multiplier: must be positive",
                e.label
            );
        }
        ensure!(self.noise_std.is_finite() && self.noise_std >= 0.0, "noise_std: must be >= 0");
        let [flo, fhi] = self.frames_per_symbol;
        ensure!(flo >= 1 && flo <= fhi, "frames_per_symbol: need 1 <= lo <= hi");
        let [slo, shi] = self.symbols_per_utterance;
        ensure!(slo >= 1 && slo <= shi, "symbols_per_utterance: need 1 <= lo <= hi");
        Ok(())
    }

    pub fn language_names(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.name.clone()).collect()
    }

    pub fn emotion_labels(&self) -> Vec<EmotionLabel> {
        self.emotions.iter().map(|e| e.label.clone()).collect()
    }

    /// Global symbol ids used by the given languages, ascending.
    pub fn symbols_of(&self, languages: &[usize]) -> Vec<usize> {
        let mut ids: Vec<usize> = languages
            .iter()
            .flat_map(|&l| self.languages[l].inventory.iter().copied())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Compact corpus description from which a full [`CorpusSpec`] is derived
/// deterministically (symbol means, bigrams and emotion offsets are drawn
/// from the seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusRecipe {
    pub feature_dim: usize,
    pub languages: usize,
    pub symbols_per_language: usize,
    /// Inventory entries common to all languages; the first one is the word separator `" "`.
    pub shared_symbols: usize,
    /// Per-dimension std of symbol means.
    pub mean_scale: f64,
    pub emotions: Vec<EmotionLabel>,
    /// Euclidean norm of each non-neutral emotion offset (NEUTRAL gets zero).
    pub emotion_offset: f64,
    /// Frames-per-symbol multiplier per emotion, aligned with `emotions`; empty means all 1.
    pub duration_multipliers: Vec<f64>,
    pub noise_std: f64,
    pub frames_per_symbol: [usize; 2],
    pub symbols_per_utterance: [usize; 2],
    pub counts: SplitCounts,
}

impl Default for CorpusRecipe {
    fn default() -> Self {
        CorpusRecipe {
            feature_dim: 16,
            languages: 3,
            symbols_per_language: 8,
            shared_symbols: 4,
            mean_scale: 0.5,
            emotions: EmotionLabel::default_set(),
            emotion_offset: 1.5,
            duration_multipliers: vec![1.0, 0.75, 1.0, 1.5],
            noise_std: 0.3,
            frames_per_symbol: [3, 5],
            symbols_per_utterance: [6, 12],
            counts: SplitCounts {
                train: 500,
                dev: 50,
                test: 100,
            },
        }
    }
}

const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

impl CorpusRecipe {
    pub fn build(&self, seed: u64) -> Result<CorpusSpec> {
        ensure!(self.languages >= 1, "languages: must be at least 1");
        ensure!(
            self.shared_symbols <= self.symbols_per_language && self.symbols_per_language >= 2,
            "shared_symbols: must not exceed symbols_per_language (>= 2)"
        );
        let unique = self.symbols_per_language - self.shared_symbols;
        let total = self.shared_symbols + unique * self.languages;
        let letters_needed = total - usize::from(self.shared_symbols > 0);
        ensure!(letters_needed <= LETTERS.len(), "symbols_per_language: too many symbols requested");
        ensure!(
            self.duration_multipliers.is_empty() || self.duration_multipliers.len() == self.emotions.len(),
            "duration_multipliers: must be empty or match emotions"
        );

        let mut letters = LETTERS.chars().map(String::from);
        let mut symbols = Vec::with_capacity(total);
        if self.shared_symbols > 0 {
            symbols.push(" ".to_string());
        }
        while symbols.len() < total {
            symbols.push(letters.next().expect("checked above"));
        }
        let separator = (self.shared_symbols > 0).then_some(0usize);

        let mut rng = Rng::new(seed ^ 0x5bec_c0de);
        let means: Vec<Vec<f64>> = (0..total)
            .map(|_| (0..self.feature_dim).map(|_| self.mean_scale * rng.normal()).collect())
            .collect();

        let mut languages = Vec::with_capacity(self.languages);
        for l in 0..self.languages {
            let mut inventory: Vec<usize> = (0..self.shared_symbols).collect();
            let start = self.shared_symbols + l * unique;
            inventory.extend(start..start + unique);
            let n = inventory.len();
            let is_sep = |i: usize| Some(inventory[i]) == separator;
            let mut initial: Vec<f64> = (0..n).map(|i| if is_sep(i) { 0.0 } else { 1.0 }).collect();
            normalize(&mut initial);
            let bigram = (0..n)
                .map(|i| {
                    let mut row: Vec<f64> = (0..n)
                        .map(|j| if i == j { 0.0 } else { rng.uniform_range(0.2, 1.0) })
                        .collect();
                    normalize(&mut row);
                    row
                })
                .collect();
            languages.push(LanguageSpec {
                name: format!("L{l}"),
                inventory,
                initial,
                bigram,
            });
        }

        let emotions = self
            .emotions
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let offset = if *label == EmotionLabel::neutral() {
                    vec![0.0; self.feature_dim]
                } else {
                    let mut dir: Vec<f64> = (0..self.feature_dim).map(|_| rng.normal()).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    dir.iter_mut().for_each(|v| *v *= self.emotion_offset / norm);
                    dir
                };
                EmotionSpec {
                    label: label.clone(),
                    offset,
                    duration_multiplier: self.duration_multipliers.get(i).copied().unwrap_or(1.0),
                }
            })
            .collect();

        let spec = CorpusSpec {
            feature_dim: self.feature_dim,
            symbols,
            means,
            languages,
            emotions,
            noise_std: self.noise_std,
            frames_per_symbol: self.frames_per_symbol,
            symbols_per_utterance: self.symbols_per_utterance,
            counts: self.counts,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|v| *v /= s);
    }
}
