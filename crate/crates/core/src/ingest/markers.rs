use std::fmt::Write as _;

use super::{IngestError, MarkerEvent};

/// Parses `Mk<n>=<kind>,<description>,<position>,<duration>,<channel>[,<date>]` entries.
///
/// Positions on disk are 1-based data-point indices; they are returned as
/// 0-based sample offsets. Entries out of order are re-sorted with a warning.
pub fn parse_markers(text: &str) -> Result<Vec<MarkerEvent>, IngestError> {
    let mut in_markers = false;
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') {
            in_markers = line.eq_ignore_ascii_case("[Marker Infos]");
            continue;
        }
        if !in_markers {
            continue;
        }
        let malformed = |reason: &str| IngestError::MalformedMarkerLine { line: lineno + 1, reason: reason.to_string() };
        let (key, value) = line.split_once('=').ok_or_else(|| malformed("expected `Mk<n>=...`"))?;
        let key = key.trim();
        let index: usize = key
            .strip_prefix("Mk")
            .or_else(|| key.strip_prefix("mk"))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| malformed("key is not `Mk<n>`"))?;
        let fields: Vec<&str> = value.split(',').collect();
        if fields.len() < 4 {
            return Err(malformed("expected at least kind, description, position, duration"));
        }
        let unescape = |s: &str| s.trim().replace("\\1", ",");
        let position: u64 = fields[2].trim().parse().map_err(|_| malformed("position is not an integer"))?;
        let duration: u64 = fields[3].trim().parse().map_err(|_| malformed("duration is not an integer"))?;
        let channel_ref: i64 = match fields.get(4).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(c) => c.parse().map_err(|_| malformed("channel is not an integer"))?,
            None => 0,
        };
        out.push(MarkerEvent {
            index,
            kind: unescape(fields[0]),
            description: unescape(fields[1]),
            position_samples: position.saturating_sub(1),
            duration_samples: duration,
            channel_ref,
        });
    }
    if out.windows(2).any(|w| w[1].position_samples < w[0].position_samples) {
        log::warn!("marker positions are not monotonic; re-sorting {} markers", out.len());
        out.sort_by_key(|m| (m.position_samples, m.index));
    }
    Ok(out)
}

/// Renders markers in the grammar `parse_markers` accepts.
pub fn render_markers(markers: &[MarkerEvent], data_filename: &str) -> String {
    let mut s = String::from("Brain Vision Data Exchange Marker File, Version 1.0\n\n[Common Infos]\nCodepage=UTF-8\n");
    let _ = writeln!(s, "DataFile={data_filename}");
    s.push_str("\n[Marker Infos]\n");
    s.push_str("; Mk<Marker number>=<Type>,<Description>,<Position in data points>,<Size in data points>,<Channel number (0 = marker is related to all channels)>\n");
    for m in markers {
        let _ = writeln!(
            s,
            "Mk{}={},{},{},{},{}",
            m.index,
            m.kind.replace(',', "\\1"),
            m.description.replace(',', "\\1"),
            m.position_samples + 1,
            m.duration_samples,
            m.channel_ref
        );
    }
    s
}
