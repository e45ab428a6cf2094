use std::fs;
use std::path::{Path, PathBuf};

use super::{
    encode_signal, parse_header, parse_markers, read_signal, render_header, render_markers, IngestError, RawRecording,
};

fn companion(header_path: &Path, name: &str) -> Result<PathBuf, IngestError> {
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(IngestError::CompanionFileMissing(p.display().to_string()))
    }
}

/// Loads a bundle; the subject id is the header's file stem.
pub fn load_recording(header_path: impl AsRef<Path>) -> Result<RawRecording, IngestError> {
    let p = header_path.as_ref();
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    load_recording_as(p, &stem)
}

pub fn load_recording_as(header_path: impl AsRef<Path>, subject_id: &str) -> Result<RawRecording, IngestError> {
    let header_path = header_path.as_ref();
    let header = parse_header(&fs::read_to_string(header_path)?)?;
    let data = fs::read(companion(header_path, &header.data_filename)?)?;
    let samples = read_signal(&data, &header)?;
    let mut markers = if header.marker_filename.is_empty() {
        Vec::new()
    } else {
        let bytes = fs::read(companion(header_path, &header.marker_filename)?)?;
        parse_markers(&String::from_utf8_lossy(&bytes))?
    };
    let n = samples.ncols() as u64;
    let before = markers.len();
    markers.retain(|m| m.position_samples < n);
    if markers.len() != before {
        log::warn!("{}: dropped {} markers beyond the end of the signal", subject_id, before - markers.len());
    }
    Ok(RawRecording { header, samples, markers, subject_id: subject_id.to_string() })
}

/// Writes `<dir>/<stem>.vhdr/.eeg/.vmrk` and returns the header path.
pub fn write_bundle(rec: &RawRecording, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf, IngestError> {
    let dir = dir.as_ref();
    let mut header = rec.header.clone();
    header.data_filename = format!("{stem}.eeg");
    header.marker_filename = format!("{stem}.vmrk");
    header.channel_count = header.channel_names.len();
    fs::write(dir.join(&header.data_filename), encode_signal(&rec.samples, &header))?;
    fs::write(dir.join(&header.marker_filename), render_markers(&rec.markers, &header.data_filename))?;
    let vhdr = dir.join(format!("{stem}.vhdr"));
    fs::write(&vhdr, render_header(&header))?;
    Ok(vhdr)
}
