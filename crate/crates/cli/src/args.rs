use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Transducer experiments on synthetic speech-like corpora: ASR, emotion
/// tagging and language identification.
#[derive(Parser, Debug)]
#[command(name = "rntm", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic corpus and fixed-duration test sets.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train an emotion-free transducer.
    TrainAsr {
        #[command(flatten)]
        common: Common,
    },
    /// Train emotion-tagging transducers (baseline, whole model, frozen encoder).
    TrainSer {
        #[command(flatten)]
        common: Common,
        /// Start from this ASR checkpoint instead of pretraining.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Train a single tagged model with these frozen parameter patterns.
        #[arg(long)]
        freeze: Vec<String>,
    },
    /// Train language-ID classifiers on a transducer encoder.
    TrainLid {
        #[command(flatten)]
        common: Common,
        /// Transducer checkpoint supplying the encoder (default `<output_dir>/asr.ckpt`).
        #[arg(long)]
        asr: Option<PathBuf>,
    },
    /// Score a transducer checkpoint on a corpus split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Output CSV (default `<output_dir>/eval_<model stem>_<split>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write rich transcripts, optionally gated by a language-ID classifier.
    Decode {
        #[arg(long)]
        model: PathBuf,
        /// Corpus directory containing manifest.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        /// Language-ID checkpoint; adds language probabilities.
        #[arg(long)]
        lid: Option<PathBuf>,
        /// Reject utterances whose probability for this language is below the threshold.
        #[arg(long, requires = "lid")]
        expected_lang: Option<String>,
        #[arg(long, default_value_t = 0.5, requires = "expected_lang")]
        gate_threshold: f64,
        /// Config whose hash goes into the report line.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// EER per test duration for trained language-ID classifiers.
    LidEer {
        #[command(flatten)]
        common: Common,
        /// Classifier checkpoints (default: every configured variant in `<output_dir>`).
        #[arg(long)]
        lid: Vec<PathBuf>,
        /// Only compute the EER of an existing trials CSV.
        #[arg(long, conflicts_with = "lid")]
        trials: Option<PathBuf>,
    },
}
