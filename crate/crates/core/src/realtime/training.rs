use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::evaluation::{StateSchedule, SynthConfig, SynthStream};
use crate::features::{FeatureConfig, FeatureMatrix};
use crate::ingest::PainLabel;

use super::pipeline::{FrontEnd, FrontEndConfig};
use super::RealtimeError;

/// Windows cut from alternating-state synthetic streams, run through the
/// realtime front end, for training models that serve live ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamTrainingConfig {
    pub subjects: Vec<usize>,
    pub seconds_per_subject: f64,
    pub hop_seconds: f64,
    pub low_seconds: f64,
    pub high_seconds: f64,
    pub source_rate_hz: f64,
}

impl Default for StreamTrainingConfig {
    fn default() -> Self {
        StreamTrainingConfig {
            subjects: (0..6).collect(),
            seconds_per_subject: 96.0,
            hop_seconds: 0.5,
            low_seconds: 8.0,
            high_seconds: 8.0,
            source_rate_hz: 128.0,
        }
    }
}

/// Feature matrix of stream windows. Each window is labelled by the state
/// at its end; windows spanning a state change are skipped.
pub fn stream_feature_matrix(
    synth: &SynthConfig,
    front: &FrontEndConfig,
    features: &FeatureConfig,
    tc: &StreamTrainingConfig,
) -> Result<FeatureMatrix, RealtimeError> {
    let fs = tc.source_rate_hz;
    let schedule = StateSchedule::Alternating { low_s: tc.low_seconds, high_s: tc.high_seconds };
    let mut vectors = Vec::new();
    let mut hash = String::new();
    for &s in &tc.subjects {
        let mut stream = SynthStream::new(synth, s, fs, schedule).map_err(|e| RealtimeError::Config(e.to_string()))?;
        let total = (tc.seconds_per_subject * fs).round() as usize;
        let data = stream.next_chunk(total);
        let mut fe = FrontEnd::new(front.clone(), features.clone(), stream.channel_names().to_vec(), fs)?;
        hash = fe.extractor().manifest_hash().to_string();
        let win = fe.window_samples();
        let hop = ((tc.hop_seconds * fs).round() as usize).max(1);
        let mut end = win;
        while end <= total {
            let first = stream.is_high_at((end - win) as u64);
            let last = stream.is_high_at(end as u64 - 1);
            let mut v = fe.process(data.slice(s![.., end - win..end]), false)?.vector;
            if first == last {
                v.label = Some(if last { PainLabel::HighPain } else { PainLabel::LowPain });
                v.subject_id = synth.subject_id(s);
                vectors.push(v);
            }
            end += hop;
        }
    }
    Ok(FeatureMatrix::from_vectors(&vectors, &hash)?)
}
