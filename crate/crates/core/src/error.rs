use thiserror::Error;

use crate::evaluation::EvalError;
use crate::features::FeatureError;
use crate::ingest::IngestError;
use crate::models::ModelError;
use crate::preprocess::PreprocessError;
use crate::realtime::RealtimeError;

/// Crate-wide error, one variant per stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Realtime(#[from] RealtimeError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
