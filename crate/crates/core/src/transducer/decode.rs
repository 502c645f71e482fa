use crate::error::{ensure, Result};
use crate::nnet::argmax;

pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 4;

/// What greedy search needs from a transducer: per-frame joint scores given
/// a label-history state, and a way to extend that state by one token.
pub trait TransducerScorer {
    type State: Clone;

    fn frames(&self) -> usize;
    fn blank_id(&self) -> usize;
    /// State after consuming only the start symbol.
    fn initial_state(&self) -> Self::State;
    fn advance(&self, state: &Self::State, token: usize) -> Self::State;
    fn logits(&self, frame: usize, state: &Self::State) -> Vec<f64>;
}

/// Frame-synchronous greedy decoding. At each frame the arg-max token is
/// emitted (lowest id on ties) and fed back while it is not blank, at most
/// `max_symbols_per_frame` times, before moving to the next frame.
pub fn greedy_search<S: TransducerScorer>(scorer: &S, max_symbols_per_frame: usize) -> Result<Vec<usize>> {
    ensure!(max_symbols_per_frame >= 1, "max_symbols_per_frame must be at least 1");
    let blank = scorer.blank_id();
    let mut state = scorer.initial_state();
    let mut out = Vec::new();
    for t in 0..scorer.frames() {
        for _ in 0..max_symbols_per_frame {
            let k = argmax(&scorer.logits(t, &state));
            if k == blank {
                break;
            }
            out.push(k);
            state = scorer.advance(&state, k);
        }
    }
    Ok(out)
}
