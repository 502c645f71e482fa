//! The transducer: model, alignment-lattice loss, greedy decoding, training
//! step and checkpoint I/O.

mod checkpoint;
mod decode;
mod lattice;
mod model;
mod train;
mod vocab;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use decode::{greedy_search, TransducerScorer, DEFAULT_MAX_SYMBOLS_PER_FRAME};
pub use lattice::{rnnt_loss_from_logits, RnntLattice};
pub use model::{Encoder, ModelDims, RnntModel, RNNT_CHECKPOINT_KIND};
pub use train::{mean_loss, train_step, train_step_clipped, TrainingUtterance};
pub use vocab::{Vocab, BLANK_SYMBOL};

#[cfg(test)]
mod tests;
