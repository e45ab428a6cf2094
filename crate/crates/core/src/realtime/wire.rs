//! Ingest wire protocol. Every frame, integers and floats little-endian:
//!
//! ```text
//! length   u32      byte count of everything after this field
//! magic    4 bytes  "EEGS"
//! version  u8       1
//! type     u8       1 = hello, 2 = chunk, 3 = bye
//! payload
//! ```
//!
//! Payloads:
//!
//! ```text
//! hello  n_channels u16, rate_hz f32, then per channel: u16 byte length + UTF-8 name
//! chunk  first_sample u64, then channel-major f32 samples
//!        (channel 0 all samples, channel 1 all samples, ...);
//!        the sample count is (length - 14) / (4 * n_channels)
//! bye    empty
//! ```
//!
//! A stream is one hello, any number of chunks, then bye. Chunks use the
//! channel count announced by the hello.

use std::io::{ErrorKind, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::RealtimeError;

pub const WIRE_MAGIC: &[u8; 4] = b"EEGS";
pub const WIRE_VERSION: u8 = 1;
pub const FRAME_HELLO: u8 = 1;
pub const FRAME_CHUNK: u8 = 2;
pub const FRAME_BYE: u8 = 3;
/// Upper bound on one frame, guarding against garbage length prefixes.
pub const MAX_FRAME_BYTES: u32 = 64 << 20;

const HEADER_BYTES: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Hello { channels: Vec<String>, rate_hz: f32 },
    /// `samples` is channels × n.
    Chunk { first_sample: u64, samples: Array2<f32> },
    Bye,
}

fn protocol(msg: impl Into<String>) -> RealtimeError {
    RealtimeError::Protocol(msg.into())
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, RealtimeError> {
    let mut body = Vec::new();
    body.extend_from_slice(WIRE_MAGIC);
    body.push(WIRE_VERSION);
    match frame {
        Frame::Hello { channels, rate_hz } => {
            body.push(FRAME_HELLO);
            let n = u16::try_from(channels.len()).map_err(|_| protocol("more than 65535 channels"))?;
            body.write_u16::<LittleEndian>(n)?;
            body.write_f32::<LittleEndian>(*rate_hz)?;
            for c in channels {
                let len = u16::try_from(c.len()).map_err(|_| protocol("channel name too long"))?;
                body.write_u16::<LittleEndian>(len)?;
                body.extend_from_slice(c.as_bytes());
            }
        }
        Frame::Chunk { first_sample, samples } => {
            body.push(FRAME_CHUNK);
            body.write_u64::<LittleEndian>(*first_sample)?;
            for row in samples.rows() {
                for v in row {
                    body.write_f32::<LittleEndian>(*v)?;
                }
            }
        }
        Frame::Bye => body.push(FRAME_BYE),
    }
    let len = u32::try_from(body.len()).ok().filter(|&l| l <= MAX_FRAME_BYTES).ok_or_else(|| protocol("frame too large"))?;
    let mut out = Vec::with_capacity(body.len() + 4);
    out.write_u32::<LittleEndian>(len)?;
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), RealtimeError> {
    w.write_all(&encode_frame(frame)?)?;
    Ok(())
}

/// Decodes frames from a byte stream, tracking the announced channel count.
#[derive(Debug)]
pub struct FrameReader<R> {
    inner: R,
    n_channels: Option<usize>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader { inner, n_channels: None }
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    /// Next frame; `Ok(None)` on a clean end of stream between frames.
    pub fn read_frame(&mut self) -> Result<Option<Frame>, RealtimeError> {
        let len = match self.inner.read_u32::<LittleEndian>() {
            Ok(l) => l,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if !(HEADER_BYTES..=MAX_FRAME_BYTES).contains(&len) {
            return Err(protocol(format!("bad frame length {len}")));
        }
        let mut body = vec![0u8; len as usize];
        self.inner.read_exact(&mut body).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                protocol("truncated frame")
            } else {
                e.into()
            }
        })?;
        let frame = decode_body(&body, self.n_channels)?;
        if let Frame::Hello { channels, .. } = &frame {
            self.n_channels = Some(channels.len());
        }
        Ok(Some(frame))
    }
}

fn decode_body(body: &[u8], n_channels: Option<usize>) -> Result<Frame, RealtimeError> {
    if &body[..4] != WIRE_MAGIC {
        return Err(protocol("bad magic"));
    }
    if body[4] != WIRE_VERSION {
        return Err(RealtimeError::WireVersion(body[4]));
    }
    let mut p = &body[6..];
    match body[5] {
        FRAME_HELLO => {
            let n = p.read_u16::<LittleEndian>().map_err(|_| protocol("short hello"))? as usize;
            let rate_hz = p.read_f32::<LittleEndian>().map_err(|_| protocol("short hello"))?;
            let mut channels = Vec::with_capacity(n);
            for _ in 0..n {
                let l = p.read_u16::<LittleEndian>().map_err(|_| protocol("short channel table"))? as usize;
                if p.len() < l {
                    return Err(protocol("short channel table"));
                }
                let name = std::str::from_utf8(&p[..l]).map_err(|_| protocol("channel name is not UTF-8"))?;
                channels.push(name.to_string());
                p = &p[l..];
            }
            if !p.is_empty() {
                return Err(protocol("trailing bytes in hello"));
            }
            if !(rate_hz.is_finite() && rate_hz > 0.0) || n == 0 {
                return Err(protocol("hello needs channels and a positive rate"));
            }
            Ok(Frame::Hello { channels, rate_hz })
        }
        FRAME_CHUNK => {
            let nch = n_channels.ok_or_else(|| protocol("chunk before hello"))?;
            let first_sample = p.read_u64::<LittleEndian>().map_err(|_| protocol("short chunk"))?;
            if p.len() % (4 * nch) != 0 {
                return Err(protocol("chunk size is not a whole number of samples"));
            }
            let n = p.len() / (4 * nch);
            let mut samples = Array2::zeros((nch, n));
            for v in samples.iter_mut() {
                *v = p.read_f32::<LittleEndian>()?;
            }
            Ok(Frame::Chunk { first_sample, samples })
        }
        FRAME_BYE => Ok(Frame::Bye),
        t => Err(protocol(format!("unknown frame type {t}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn byte_exact_hello() {
        let bytes = encode_frame(&Frame::Hello { channels: vec!["Cz".into()], rate_hz: 128.0 }).unwrap();
        let mut expect = vec![16, 0, 0, 0];
        expect.extend_from_slice(b"EEGS");
        expect.extend_from_slice(&[1, 1, 1, 0]);
        expect.extend_from_slice(&128f32.to_le_bytes());
        expect.extend_from_slice(&[2, 0, b'C', b'z']);
        assert_eq!(bytes, expect);
    }

    #[test]
    fn stream_round_trip() {
        let frames = vec![
            Frame::Hello { channels: vec!["A".into(), "B".into()], rate_hz: 125.0 },
            Frame::Chunk { first_sample: 7, samples: array![[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]] },
            Frame::Bye,
        ];
        let mut buf = Vec::new();
        for f in &frames {
            write_frame(&mut buf, f).unwrap();
        }
        let mut r = FrameReader::new(&buf[..]);
        for f in &frames {
            assert_eq!(r.read_frame().unwrap().as_ref(), Some(f));
        }
        assert_eq!(r.read_frame().unwrap(), None);
    }

    #[test]
    fn chunk_without_hello_is_rejected() {
        let bytes = encode_frame(&Frame::Chunk { first_sample: 0, samples: array![[1.0f32]] }).unwrap();
        assert!(matches!(FrameReader::new(&bytes[..]).read_frame(), Err(RealtimeError::Protocol(_))));
    }

    #[test]
    fn truncated_and_bad_version() {
        let mut bytes = encode_frame(&Frame::Bye).unwrap();
        assert!(FrameReader::new(&bytes[..bytes.len() - 1]).read_frame().is_err());
        bytes[8] = 9;
        assert!(matches!(FrameReader::new(&bytes[..]).read_frame(), Err(RealtimeError::WireVersion(9))));
    }
}
