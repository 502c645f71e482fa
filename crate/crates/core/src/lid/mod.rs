//! Language identification on transducer encoder output.

mod classifier;
mod pooling;
mod train;

pub use classifier::{LidClassifier, LidDims, LidPass, ENCODER_PREFIX, LID_CHECKPOINT_KIND};
pub use pooling::{pool_weighted, PoolCache, PoolingHead};
pub use train::{gate_and_decode, language_probs, lid_accuracy, score_trials, train_lid, GateResult, LidEpoch, LidExample, LidOutcome, LidTrainConfig};
