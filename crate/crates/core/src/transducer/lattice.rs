//! Transducer loss over the `T × (U+1)` alignment lattice.
//!
//! Node `(t, u)` means `u` labels have been emitted while reading frame `t`.
//! From there a blank moves to `(t+1, u)` and label `y[u]` moves to
//! `(t, u+1)`. Every complete path ends with a blank out of `(T-1, U)`.

use crate::error::{ensure, Result};
use crate::nnet::{log_softmax_in_place, lse2};

/// Log-probabilities and forward/backward variables for one utterance.
#[derive(Clone, Debug)]
pub struct RnntLattice {
    frames: usize,
    labels: usize,
    vocab: usize,
    blank: usize,
    target: Vec<usize>,
    /// `T × (U+1) × V` log-softmax of the joint logits.
    log_probs: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    total_logprob: f64,
}

impl RnntLattice {
    /// Runs both recursions over `logits` laid out `[t][u][k]`.
    pub fn new(
        logits: &[f64],
        frames: usize,
        target: &[usize],
        vocab: usize,
        blank: usize,
    ) -> Result<Self> {
        ensure!(frames >= 1, "lattice needs at least one frame");
        ensure!(blank < vocab, "blank id {blank} outside vocab of {vocab}");
        ensure!(
            target.iter().all(|&y| y < vocab && y != blank),
            "target must hold in-range non-blank ids"
        );
        let labels = target.len();
        let nodes = frames * (labels + 1);
        ensure!(
            logits.len() == nodes * vocab,
            "logits length {} does not match {frames}x{}x{vocab}",
            logits.len(),
            labels + 1
        );
        let mut log_probs = logits.to_vec();
        for node in log_probs.chunks_exact_mut(vocab) {
            log_softmax_in_place(node);
        }
        let mut lat = RnntLattice {
            frames,
            labels,
            vocab,
            blank,
            target: target.to_vec(),
            log_probs,
            alpha: vec![f64::NEG_INFINITY; nodes],
            beta: vec![f64::NEG_INFINITY; nodes],
            total_logprob: f64::NEG_INFINITY,
        };
        lat.forward();
        lat.backward();
        lat.total_logprob = lat.alpha(frames - 1, labels) + lat.blank_lp(frames - 1, labels);
        Ok(lat)
    }

    #[inline]
    fn node(&self, t: usize, u: usize) -> usize {
        t * (self.labels + 1) + u
    }

    #[inline]
    pub fn log_prob(&self, t: usize, u: usize, k: usize) -> f64 {
        self.log_probs[self.node(t, u) * self.vocab + k]
    }

    #[inline]
    fn blank_lp(&self, t: usize, u: usize) -> f64 {
        self.log_prob(t, u, self.blank)
    }

    #[inline]
    fn label_lp(&self, t: usize, u: usize) -> f64 {
        self.log_prob(t, u, self.target[u])
    }

    fn forward(&mut self) {
        let (tn, un) = (self.frames, self.labels);
        for t in 0..tn {
            for u in 0..=un {
                let v = if t == 0 && u == 0 {
                    0.0
                } else {
                    let from_blank = if t > 0 {
                        self.alpha[self.node(t - 1, u)] + self.blank_lp(t - 1, u)
                    } else {
                        f64::NEG_INFINITY
                    };
                    let from_label = if u > 0 {
                        self.alpha[self.node(t, u - 1)] + self.label_lp(t, u - 1)
                    } else {
                        f64::NEG_INFINITY
                    };
                    lse2(from_blank, from_label)
                };
                let n = self.node(t, u);
                self.alpha[n] = v;
            }
        }
    }

    fn backward(&mut self) {
        let (tn, un) = (self.frames, self.labels);
        for t in (0..tn).rev() {
            for u in (0..=un).rev() {
                let v = if t == tn - 1 && u == un {
                    self.blank_lp(t, u)
                } else {
                    let via_blank = if t + 1 < tn {
                        self.beta[self.node(t + 1, u)] + self.blank_lp(t, u)
                    } else {
                        f64::NEG_INFINITY
                    };
                    let via_label = if u < un {
                        self.beta[self.node(t, u + 1)] + self.label_lp(t, u)
                    } else {
                        f64::NEG_INFINITY
                    };
                    lse2(via_blank, via_label)
                };
                let n = self.node(t, u);
                self.beta[n] = v;
            }
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    /// Log-probability of reaching `(t, u)`; `alpha(0, 0) = 0`.
    pub fn alpha(&self, t: usize, u: usize) -> f64 {
        self.alpha[self.node(t, u)]
    }

    /// Log-probability of completing the utterance from `(t, u)`.
    pub fn beta(&self, t: usize, u: usize) -> f64 {
        self.beta[self.node(t, u)]
    }

    /// `log P(target | features)` from the forward variables.
    pub fn total_logprob(&self) -> f64 {
        self.total_logprob
    }

    /// The same quantity from the backward variables.
    pub fn total_logprob_from_beta(&self) -> f64 {
        self.beta(0, 0)
    }

    pub fn loss(&self) -> f64 {
        -self.total_logprob
    }

    /// `∂loss/∂logits`, laid out like the input logits.
    ///
    /// With `γ` the posterior mass on each transition, the gradient at node
    /// `(t,u)` is `softmax · occupancy(t,u) − γ_blank·e_blank − γ_label·e_{y[u]}`,
    /// where occupancy is the sum of the two outgoing `γ`.
    pub fn logit_grads(&self) -> Vec<f64> {
        let (tn, un, v) = (self.frames, self.labels, self.vocab);
        let total = self.total_logprob;
        let mut grads = vec![0.0; self.log_probs.len()];
        for t in 0..tn {
            for u in 0..=un {
                let a = self.alpha(t, u);
                let next_blank = if t + 1 < tn {
                    self.beta(t + 1, u)
                } else if u == un {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                let g_blank = (a + self.blank_lp(t, u) + next_blank - total).exp();
                let g_label = if u < un {
                    (a + self.label_lp(t, u) + self.beta(t, u + 1) - total).exp()
                } else {
                    0.0
                };
                let occupancy = g_blank + g_label;
                let base = self.node(t, u) * v;
                for k in 0..v {
                    grads[base + k] = self.log_probs[base + k].exp() * occupancy;
                }
                grads[base + self.blank] -= g_blank;
                if u < un {
                    grads[base + self.target[u]] -= g_label;
                }
            }
        }
        grads
    }
}

/// Loss and logit gradient straight from a logit lattice.
pub fn rnnt_loss_from_logits(
    logits: &[f64],
    frames: usize,
    target: &[usize],
    vocab: usize,
    blank: usize,
) -> Result<(f64, Vec<f64>)> {
    let lat = RnntLattice::new(logits, frames, target, vocab, blank)?;
    Ok((lat.loss(), lat.logit_grads()))
}
