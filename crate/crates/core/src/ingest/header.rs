use std::collections::HashMap;
use std::fmt::Write as _;

use super::{BinaryFormat, IngestError, Orientation, RecordingHeader};

type Sections = HashMap<String, Vec<(String, String)>>;

/// Splits INI-style text into sections of ordered key/value pairs.
/// Comment lines (`;`) and lines outside any section are ignored.
fn split_sections(text: &str) -> Sections {
    let mut sections: Sections = HashMap::new();
    let mut current: Option<String> = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            let name = line[1..line.len() - 1].trim().to_string();
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some(section) = &current else { continue };
        if let Some((k, v)) = line.split_once('=') {
            sections
                .get_mut(section)
                .expect("section inserted on header line")
                .push((k.trim().to_string(), v.trim().to_string()));
        } else {
            // free text (e.g. the [Comment] block); kept under an empty key
            sections.get_mut(section).expect("section exists").push((String::new(), line.to_string()));
        }
    }
    sections
}

fn section<'a>(s: &'a Sections, name: &str) -> Result<&'a [(String, String)], IngestError> {
    s.iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| IngestError::MissingSection(name.to_string()))
}

fn key<'a>(entries: &'a [(String, String)], key: &str) -> Option<&'a str> {
    entries.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, v)| v.as_str())
}

fn required<'a>(entries: &'a [(String, String)], name: &str) -> Result<&'a str, IngestError> {
    key(entries, name).ok_or_else(|| IngestError::MissingRequiredKey(name.to_string()))
}

fn parse_num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, IngestError> {
    v.trim().parse().map_err(|_| IngestError::InvalidValue { key: k.to_string(), value: v.to_string() })
}

/// `\1` is the escape for a comma inside a channel entry field.
fn unescape(field: &str) -> String {
    field.replace("\\1", ",")
}

fn escape(field: &str) -> String {
    field.replace(',', "\\1")
}

fn unit_scale(unit: &str) -> f64 {
    match unit.trim() {
        "nV" => 1e-3,
        "mV" => 1e3,
        "V" => 1e6,
        _ => 1.0,
    }
}

/// Parses the ASCII header of a recording bundle.
pub fn parse_header(text: &str) -> Result<RecordingHeader, IngestError> {
    let sections = split_sections(text);
    let common = section(&sections, "Common Infos")?;
    let binary = section(&sections, "Binary Infos")?;
    let channels = section(&sections, "Channel Infos")?;

    let data_filename = required(common, "DataFile")?.to_string();
    let marker_filename = key(common, "MarkerFile").unwrap_or_default().to_string();
    let channel_count: usize = parse_num("NumberOfChannels", required(common, "NumberOfChannels")?)?;
    if channel_count == 0 {
        return Err(IngestError::InvalidValue { key: "NumberOfChannels".into(), value: "0".into() });
    }
    let interval_us: f64 = parse_num("SamplingInterval", required(common, "SamplingInterval")?)?;
    if !(interval_us > 0.0) {
        return Err(IngestError::InvalidValue {
            key: "SamplingInterval".into(),
            value: interval_us.to_string(),
        });
    }
    let orientation = match key(common, "DataOrientation").unwrap_or("MULTIPLEXED").to_ascii_uppercase().as_str() {
        "MULTIPLEXED" => Orientation::Multiplexed,
        "VECTORIZED" => Orientation::Vectorized,
        other => return Err(IngestError::InvalidValue { key: "DataOrientation".into(), value: other.into() }),
    };
    if let Some(fmt) = key(common, "DataFormat") {
        if !fmt.eq_ignore_ascii_case("BINARY") {
            return Err(IngestError::UnsupportedBinaryFormat(fmt.to_string()));
        }
    }
    let binary_format = match required(binary, "BinaryFormat")?.to_ascii_uppercase().as_str() {
        "INT_16" => BinaryFormat::Int16,
        "IEEE_FLOAT_32" => BinaryFormat::Float32,
        other => return Err(IngestError::UnsupportedBinaryFormat(other.to_string())),
    };

    let mut channel_names = Vec::with_capacity(channel_count);
    let mut resolution = Vec::with_capacity(channel_count);
    let mut reference_label = String::new();
    for i in 1..=channel_count {
        let k = format!("Ch{i}");
        let entry = required(channels, &k)?;
        let fields: Vec<&str> = entry.split(',').collect();
        let name = unescape(fields[0].trim());
        if name.is_empty() {
            return Err(IngestError::InvalidValue { key: k, value: entry.to_string() });
        }
        if let Some(r) = fields.get(1).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            if reference_label.is_empty() {
                reference_label = unescape(r);
            }
        }
        let res = match fields.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(v) => parse_num::<f64>(&k, v)?,
            None => 1.0,
        };
        let scale = fields.get(3).map(|u| unit_scale(u)).unwrap_or(1.0);
        channel_names.push(name);
        resolution.push(res * scale);
    }

    if reference_label.is_empty() {
        // Recorder writes e.g. "Reference Channel Name = FCz" into the comment block.
        reference_label = sections
            .values()
            .flatten()
            .find_map(|(k, v)| {
                let line = if k.is_empty() { v.clone() } else { format!("{k}={v}") };
                let (lhs, rhs) = line.split_once('=')?;
                lhs.trim().eq_ignore_ascii_case("Reference Channel Name").then(|| rhs.trim().to_string())
            })
            .unwrap_or_default();
    }

    Ok(RecordingHeader {
        channel_names,
        channel_count,
        sampling_rate_hz: 1e6 / interval_us,
        resolution_per_channel: resolution,
        binary_format,
        orientation,
        reference_label,
        data_filename,
        marker_filename,
    })
}

/// Renders a header in the same grammar `parse_header` accepts.
pub fn render_header(h: &RecordingHeader) -> String {
    let mut s = String::new();
    s.push_str("Brain Vision Data Exchange Header File Version 1.0\n");
    s.push_str("; Data created by nocisense\n\n");
    s.push_str("[Common Infos]\nCodepage=UTF-8\n");
    let _ = writeln!(s, "DataFile={}", h.data_filename);
    let _ = writeln!(s, "MarkerFile={}", h.marker_filename);
    s.push_str("DataFormat=BINARY\n");
    let orient = match h.orientation {
        Orientation::Multiplexed => "MULTIPLEXED",
        Orientation::Vectorized => "VECTORIZED",
    };
    let _ = writeln!(s, "DataOrientation={orient}");
    let _ = writeln!(s, "NumberOfChannels={}", h.channel_count);
    let _ = writeln!(s, "; Sampling interval in microseconds");
    let _ = writeln!(s, "SamplingInterval={}", h.sampling_interval_us());
    s.push_str("\n[Binary Infos]\n");
    let fmt = match h.binary_format {
        BinaryFormat::Int16 => "INT_16",
        BinaryFormat::Float32 => "IEEE_FLOAT_32",
    };
    let _ = writeln!(s, "BinaryFormat={fmt}");
    s.push_str("\n[Channel Infos]\n");
    s.push_str("; Ch<n>=<Name>,<Reference channel name>,<Resolution in \"Unit\">,<Unit>\n");
    for (i, (name, res)) in h.channel_names.iter().zip(&h.resolution_per_channel).enumerate() {
        let _ = writeln!(s, "Ch{}={},,{},µV", i + 1, escape(name), res);
    }
    if !h.reference_label.is_empty() {
        s.push_str("\n[Comment]\n");
        let _ = writeln!(s, "Reference Channel Name = {}", h.reference_label);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_68() -> String {
        let mut s = String::from(
            "Brain Vision Data Exchange Header File Version 1.0\n\
             [Common Infos]\nDataFile=sub01.eeg\nMarkerFile=sub01.vmrk\nDataFormat=BINARY\n\
             DataOrientation=MULTIPLEXED\nNumberOfChannels=68\nSamplingInterval=2000\n\
             [Binary Infos]\nBinaryFormat=INT_16\n[Channel Infos]\n",
        );
        for i in 1..=68 {
            s.push_str(&format!("Ch{i}=E{i},,0.1,µV\n"));
        }
        s.push_str("[Comment]\nReference Channel Name = FCz\n");
        s
    }

    #[test]
    fn parses_68_channel_header() {
        let h = parse_header(&header_68()).unwrap();
        assert_eq!(h.channel_count, 68);
        assert_eq!(h.sampling_rate_hz, 500.0);
        assert_eq!(h.reference_label, "FCz");
        assert_eq!(h.binary_format, BinaryFormat::Int16);
        assert!(h.resolution_per_channel.iter().all(|&r| r == 0.1));
    }

    #[test]
    fn minimal_header_defaults_resolution() {
        let text = "[Common Infos]\nDataFile=a.eeg\nNumberOfChannels=1\nSamplingInterval=2000\n\
                    [Binary Infos]\nBinaryFormat=IEEE_FLOAT_32\n[Channel Infos]\nCh1=Cz\n";
        let h = parse_header(text).unwrap();
        assert_eq!(h.sampling_rate_hz, 500.0);
        assert_eq!(h.resolution_per_channel, vec![1.0]);
        assert_eq!(h.orientation, Orientation::Multiplexed);
    }

    #[test]
    fn missing_section_and_key_are_reported() {
        let no_binary = "[Common Infos]\nDataFile=a.eeg\nNumberOfChannels=1\nSamplingInterval=2000\n[Channel Infos]\nCh1=Cz\n";
        assert!(matches!(parse_header(no_binary), Err(IngestError::MissingSection(s)) if s == "Binary Infos"));
        let no_rate = "[Common Infos]\nDataFile=a.eeg\nNumberOfChannels=1\n[Binary Infos]\nBinaryFormat=INT_16\n[Channel Infos]\nCh1=Cz\n";
        assert!(
            matches!(parse_header(no_rate), Err(IngestError::MissingRequiredKey(k)) if k == "SamplingInterval")
        );
    }

    #[test]
    fn unsupported_format_rejected() {
        let text = "[Common Infos]\nDataFile=a.eeg\nNumberOfChannels=1\nSamplingInterval=1000\n\
                    [Binary Infos]\nBinaryFormat=UINT_16\n[Channel Infos]\nCh1=Cz\n";
        assert!(matches!(parse_header(text), Err(IngestError::UnsupportedBinaryFormat(_))));
    }

    #[test]
    fn escaped_comma_and_units() {
        let text = "[Common Infos]\nDataFile=a.eeg\nNumberOfChannels=2\nSamplingInterval=1000\nUnknownKey=1\n\
                    [Binary Infos]\nBinaryFormat=INT_16\n[Channel Infos]\nCh1=A\\1B,REF,0.5,nV\nCh2=C,,2\n";
        let h = parse_header(text).unwrap();
        assert_eq!(h.channel_names, vec!["A,B".to_string(), "C".to_string()]);
        assert_eq!(h.reference_label, "REF");
        assert!((h.resolution_per_channel[0] - 0.0005).abs() < 1e-15);
        assert_eq!(h.resolution_per_channel[1], 2.0);
        assert_eq!(h.sampling_rate_hz, 1000.0);
    }

    #[test]
    fn render_then_parse_is_identity() {
        let mut h = RecordingHeader::new(vec!["Fp1".into(), "C4".into(), "X,Y".into()], 500.0, BinaryFormat::Int16);
        h.resolution_per_channel = vec![0.1, 0.1, 0.5];
        h.reference_label = "FCz".into();
        h.data_filename = "s.eeg".into();
        h.marker_filename = "s.vmrk".into();
        assert_eq!(parse_header(&render_header(&h)).unwrap(), h);
    }
}
