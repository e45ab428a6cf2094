use byteorder::{ByteOrder, LittleEndian};
use ndarray::Array2;

use super::{BinaryFormat, IngestError, Orientation, RecordingHeader};

/// Decodes the binary sample file into a channel-major µV matrix.
pub fn read_signal(bytes: &[u8], header: &RecordingHeader) -> Result<Array2<f64>, IngestError> {
    if header.orientation != Orientation::Multiplexed {
        return Err(IngestError::OrientationUnsupported(format!("{:?}", header.orientation)));
    }
    let n_ch = header.channel_count;
    let bps = header.binary_format.bytes_per_sample();
    let frame = n_ch * bps;
    let trailing = bytes.len() % frame;
    if trailing != 0 {
        return Err(IngestError::TruncatedData { trailing });
    }
    let n_samples = bytes.len() / frame;
    let mut out = Array2::<f64>::zeros((n_ch, n_samples));
    for (t, chunk) in bytes.chunks_exact(frame).enumerate() {
        for ch in 0..n_ch {
            let b = &chunk[ch * bps..(ch + 1) * bps];
            let raw = match header.binary_format {
                BinaryFormat::Int16 => LittleEndian::read_i16(b) as f64,
                BinaryFormat::Float32 => LittleEndian::read_f32(b) as f64,
            };
            out[(ch, t)] = raw * header.resolution_per_channel[ch];
        }
    }
    Ok(out)
}

/// Encodes a µV matrix as multiplexed little-endian samples. int16 values are
/// rounded to the nearest count and saturate at the type limits.
pub fn encode_signal(samples: &Array2<f64>, header: &RecordingHeader) -> Vec<u8> {
    let (n_ch, n) = samples.dim();
    let bps = header.binary_format.bytes_per_sample();
    let mut out = vec![0u8; n_ch * n * bps];
    let mut off = 0;
    for t in 0..n {
        for ch in 0..n_ch {
            let v = samples[(ch, t)] / header.resolution_per_channel[ch];
            match header.binary_format {
                BinaryFormat::Int16 => {
                    let c = v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
                    LittleEndian::write_i16(&mut out[off..off + 2], c);
                }
                BinaryFormat::Float32 => LittleEndian::write_f32(&mut out[off..off + 4], v as f32),
            }
            off += bps;
        }
    }
    out
}
