//! Synthetic labelled feature corpora with controllable language, emotion
//! and transcript structure.

mod generate;
mod io;
mod spec;

pub use generate::{gen_corpus, gen_duration_test, Corpus, FeatureSequence};
pub use io::{
    load_dataset, read_dataset, save_dataset, write_corpus_dir, write_dataset, Manifest, SplitEntry, DATASET_MAGIC,
    DATASET_VERSION, MANIFEST_FILE,
};
pub use spec::{CorpusRecipe, CorpusSpec, EmotionSpec, LanguageSpec, SplitCounts};
