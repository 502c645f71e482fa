#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod nnet;

pub use error::{Error, Result};
pub mod transducer;
pub mod emotion;
pub mod metrics;
pub mod synthcorpus;
pub mod experiment;
pub mod lid;
