//! Real-time EEG pain classification.
//!
//! The crate is organised as the offline pipeline followed by the streaming
//! runtime that reuses it:
//!
//! ```text
//! .vhdr/.eeg/.vmrk ─ ingest ─ preprocess ─ features ─ models ─ evaluation
//!                                              │          │
//!  stream source ── realtime (ring → resample → filter → mask → featurize → classify → publish)
//! ```
//!
//! Every stage is a plain function over immutable inputs so that the offline
//! and online paths can be compared slot by slot.

pub mod dsp;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod models;
pub mod preprocess;
pub mod realtime;

mod error;

pub use error::{Error, Result};
pub use ingest::{Epoch, EpochSet, PainLabel, RawRecording};
pub use features::{FeatureConfig, FeatureManifest, FeatureMatrix, FeatureVector};
pub use models::{AlgorithmId, Hyperparams, TrainedModel};
