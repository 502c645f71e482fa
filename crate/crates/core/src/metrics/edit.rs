use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Edit operations of one optimal alignment against a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`; may exceed 1.
    pub fn rate(&self) -> Result<f64> {
        ensure!(self.reference_length > 0, "error rate of an empty reference");
        Ok(self.errors() as f64 / self.reference_length as f64)
    }
}

impl std::ops::AddAssign for ErrorCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.reference_length += o.reference_length;
    }
}

/// Levenshtein distance turning `reference` into `hypothesis`, with the
/// operation counts of one optimal alignment. Backtracking prefers
/// substitution (or match), then deletion, then insertion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> (usize, ErrorCounts) {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + (reference[i - 1] != hypothesis[j - 1]) as usize;
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut counts = ErrorCounts {
        reference_length: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let mismatch = (reference[i - 1] != hypothesis[j - 1]) as usize;
            if d[(i - 1) * w + j - 1] + mismatch == here {
                counts.substitutions += mismatch;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    (d[n * w + m], counts)
}

/// Word-level counts with whitespace tokenization.
pub fn word_errors(reference: &str, hypothesis: &str) -> Result<ErrorCounts> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    ensure!(!r.is_empty(), "reference has no words");
    Ok(edit_distance(&r, &h).1)
}

/// Character-level counts; spaces count as characters.
pub fn char_errors(reference: &str, hypothesis: &str) -> Result<ErrorCounts> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    ensure!(!r.is_empty(), "reference has no characters");
    Ok(edit_distance(&r, &h).1)
}

pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    word_errors(reference, hypothesis)?.rate()
}

pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    char_errors(reference, hypothesis)?.rate()
}
