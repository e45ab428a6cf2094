//! Streaming runtime: a source fills a one-second ring buffer, a periodic
//! tick turns the latest window into a probability, and a publisher fans
//! events out to subscribers.

mod alert;
mod pipeline;
mod publish;
mod ring;
mod runloop;
mod source;
mod training;
pub mod wire;

use thiserror::Error;

pub use alert::{AlertState, AlertTransition, ALERT_HYSTERESIS};
pub use pipeline::{average_reference, FLAT_VARIANCE, FrontEnd, FrontEndConfig, MaskTracker, PredictionEvent, StageLatency, TickPipeline, WindowFeatures};
pub use publish::{Publisher, DEFAULT_QUEUE_CAPACITY};
pub use ring::{RingBuffer, Snapshot};
pub use runloop::{
    run_loop, Clock, ClockMode, ControlMessage, EventSink, JsonLinesSink, LoopConfig, LoopStats, PublishMessage, RealClock,
    Settings, VecSink, VirtualClock,
};
pub use source::{FileReplaySource, SocketSource, SourceChunk, SourceKind, StreamSource, SyntheticSource};
pub use training::{stream_feature_matrix, StreamTrainingConfig};
pub use wire::{Frame, FrameReader};

use crate::features::FeatureError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum RealtimeError {
    #[error("chunk has {got} channels, buffer has {expected}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unsupported wire version {0}")]
    WireVersion(u8),
    #[error("source closed")]
    SourceClosed,
    #[error("no model loaded")]
    ModelMissing,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}
