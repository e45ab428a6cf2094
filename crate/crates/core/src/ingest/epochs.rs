use ndarray::s;
use serde::{Deserialize, Serialize};

use super::{normalize_description, Epoch, EpochSet, IngestError, MarkerEvent, PainLabel, RawRecording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochConfig {
    pub epoch_seconds: f64,
    /// Window start relative to the stimulus marker.
    pub offset_seconds: f64,
    pub label_map: Vec<(String, PainLabel)>,
    pub skip: Vec<String>,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            epoch_seconds: 4.0,
            offset_seconds: 0.0,
            label_map: vec![
                ("S30".into(), PainLabel::LowPain),
                ("S70".into(), PainLabel::HighPain),
                ("Laser/StimLow".into(), PainLabel::LowPain),
                ("Laser/StimHigh".into(), PainLabel::HighPain),
            ],
            skip: vec!["S50".into(), "Laser/StimMedium".into()],
        }
    }
}

enum MarkerClass {
    Label(PainLabel),
    Skip,
    Other,
}

impl EpochConfig {
    fn classify(&self, m: &MarkerEvent) -> MarkerClass {
        let desc = normalize_description(&m.description);
        let full = normalize_description(&format!("{}/{}", m.kind, m.description));
        let hit = |pat: &String| {
            let p = normalize_description(pat);
            p == desc || p == full
        };
        if let Some((_, label)) = self.label_map.iter().find(|(p, _)| hit(p)) {
            MarkerClass::Label(*label)
        } else if self.skip.iter().any(hit) {
            MarkerClass::Skip
        } else {
            MarkerClass::Other
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpochStats {
    pub low: usize,
    pub high: usize,
    /// Markers in the skip set.
    pub skipped: usize,
    /// Mapped markers whose window did not fit inside the recording.
    pub overrun: usize,
}

/// Cuts one epoch per mapped stimulus marker whose full window fits.
pub fn extract_epochs(rec: &RawRecording, cfg: &EpochConfig) -> Result<(EpochSet, EpochStats), IngestError> {
    let fs = rec.header.sampling_rate_hz;
    let len = (cfg.epoch_seconds * fs).round() as i64;
    let offset = (cfg.offset_seconds * fs).round() as i64;
    let n = rec.n_samples() as i64;
    let mut set = EpochSet::new(rec.header.channel_names.clone());
    let mut stats = EpochStats::default();
    let mut mapped = 0usize;
    for m in &rec.markers {
        let label = match cfg.classify(m) {
            MarkerClass::Label(l) => l,
            MarkerClass::Skip => {
                stats.skipped += 1;
                continue;
            }
            MarkerClass::Other => continue,
        };
        mapped += 1;
        let start = m.position_samples as i64 + offset;
        if start < 0 || start + len > n {
            stats.overrun += 1;
            continue;
        }
        let samples = rec.samples.slice(s![.., start as usize..(start + len) as usize]).to_owned();
        match label {
            PainLabel::LowPain => stats.low += 1,
            PainLabel::HighPain => stats.high += 1,
        }
        set.push(Epoch {
            subject_id: rec.subject_id.clone(),
            label,
            onset_sample: m.position_samples,
            samples,
            fs_hz: fs,
            channel_mask: vec![true; rec.header.channel_count],
        });
    }
    if mapped == 0 {
        return Err(IngestError::NoStimulusMarkers);
    }
    Ok((set, stats))
}
