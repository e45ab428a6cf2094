use std::io::{BufRead, BufReader};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use ndarray::{s, Array2};

use crate::evaluation::SynthStream;
use crate::ingest::RawRecording;

use super::wire::{Frame, FrameReader};
use super::RealtimeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    FileReplay,
    Synthetic,
    Socket,
}

/// Channel-major samples starting at `first_sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceChunk {
    pub first_sample: u64,
    pub samples: Array2<f64>,
}

/// Producer of timestamped chunks. `next_chunk` blocks until the next chunk
/// is due (paced sources) or returns it immediately (as-fast-as-possible);
/// `Ok(None)` means the source has closed.
pub trait StreamSource: Send {
    fn kind(&self) -> SourceKind;
    fn channel_names(&self) -> &[String];
    fn rate_hz(&self) -> f64;
    fn next_chunk(&mut self) -> Result<Option<SourceChunk>, RealtimeError>;
    /// Whether chunks are released in real time.
    fn is_paced(&self) -> bool;
}

/// Sleeps until `position` samples are due, `speed` times real time.
#[derive(Debug, Clone)]
struct Pacer {
    start: Option<Instant>,
    speed: f64,
}

impl Pacer {
    fn wait(&mut self, until_sample: u64, fs: f64) {
        if self.speed <= 0.0 {
            return;
        }
        let start = *self.start.get_or_insert_with(Instant::now);
        let due = start + Duration::from_secs_f64(until_sample as f64 / fs / self.speed);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
}

/// Replays a recording in fixed-size chunks. `speed` 1.0 keeps the original
/// timing; 0 runs as fast as possible.
pub struct FileReplaySource {
    samples: Array2<f64>,
    names: Vec<String>,
    fs: f64,
    chunk: usize,
    pos: usize,
    pacer: Pacer,
}

impl FileReplaySource {
    pub fn new(rec: &RawRecording, chunk_samples: usize, speed: f64) -> Self {
        FileReplaySource {
            samples: rec.samples.clone(),
            names: rec.header.channel_names.clone(),
            fs: rec.header.sampling_rate_hz,
            chunk: chunk_samples.max(1),
            pos: 0,
            pacer: Pacer { start: None, speed },
        }
    }

    pub fn from_samples(samples: Array2<f64>, names: Vec<String>, fs: f64, chunk_samples: usize, speed: f64) -> Self {
        FileReplaySource { samples, names, fs, chunk: chunk_samples.max(1), pos: 0, pacer: Pacer { start: None, speed } }
    }
}

impl StreamSource for FileReplaySource {
    fn kind(&self) -> SourceKind {
        SourceKind::FileReplay
    }

    fn channel_names(&self) -> &[String] {
        &self.names
    }

    fn rate_hz(&self) -> f64 {
        self.fs
    }

    fn is_paced(&self) -> bool {
        self.pacer.speed > 0.0
    }

    fn next_chunk(&mut self) -> Result<Option<SourceChunk>, RealtimeError> {
        let n = self.samples.ncols();
        if self.pos >= n {
            return Ok(None);
        }
        let end = (self.pos + self.chunk).min(n);
        self.pacer.wait(end as u64, self.fs);
        let out = SourceChunk { first_sample: self.pos as u64, samples: self.samples.slice(s![.., self.pos..end]).to_owned() };
        self.pos = end;
        Ok(Some(out))
    }
}

/// Synthetic subject stream, optionally bounded in length.
pub struct SyntheticSource {
    stream: SynthStream,
    chunk: usize,
    limit: Option<u64>,
    pacer: Pacer,
}

impl SyntheticSource {
    pub fn new(stream: SynthStream, chunk_samples: usize, limit_samples: Option<u64>, speed: f64) -> Self {
        SyntheticSource { stream, chunk: chunk_samples.max(1), limit: limit_samples, pacer: Pacer { start: None, speed } }
    }

    pub fn stream(&self) -> &SynthStream {
        &self.stream
    }
}

impl StreamSource for SyntheticSource {
    fn kind(&self) -> SourceKind {
        SourceKind::Synthetic
    }

    fn channel_names(&self) -> &[String] {
        self.stream.channel_names()
    }

    fn rate_hz(&self) -> f64 {
        self.stream.fs_hz
    }

    fn is_paced(&self) -> bool {
        self.pacer.speed > 0.0
    }

    fn next_chunk(&mut self) -> Result<Option<SourceChunk>, RealtimeError> {
        let pos = self.stream.position();
        let mut n = self.chunk as u64;
        if let Some(limit) = self.limit {
            if pos >= limit {
                return Ok(None);
            }
            n = n.min(limit - pos);
        }
        self.pacer.wait(pos + n, self.stream.fs_hz);
        Ok(Some(SourceChunk { first_sample: pos, samples: self.stream.next_chunk(n as usize) }))
    }
}

/// Reads EEGS frames from one producer: a TCP connection or a frame file.
pub struct SocketSource {
    reader: FrameReader<Box<dyn BufRead + Send>>,
    names: Vec<String>,
    fs: f64,
    closed: bool,
}

impl SocketSource {
    /// Reads the hello frame from an accepted connection.
    pub fn from_stream(stream: TcpStream) -> Result<Self, RealtimeError> {
        stream.set_nodelay(true).ok();
        Self::from_reader(Box::new(BufReader::new(stream)))
    }

    /// Reads the hello frame from any byte stream.
    pub fn from_reader(reader: Box<dyn BufRead + Send>) -> Result<Self, RealtimeError> {
        let mut reader = FrameReader::new(reader);
        match reader.read_frame()? {
            Some(Frame::Hello { channels, rate_hz }) => Ok(SocketSource { reader, names: channels, fs: rate_hz as f64, closed: false }),
            Some(_) => Err(RealtimeError::Protocol("stream must start with hello".into())),
            None => Err(RealtimeError::SourceClosed),
        }
    }

    /// Waits for one producer on `addr`.
    pub fn listen(addr: impl ToSocketAddrs) -> Result<Self, RealtimeError> {
        let listener = TcpListener::bind(addr)?;
        let (stream, peer) = listener.accept()?;
        log::info!("stream producer connected from {peer}");
        Self::from_stream(stream)
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, RealtimeError> {
        Self::from_stream(TcpStream::connect(addr)?)
    }
}

impl StreamSource for SocketSource {
    fn kind(&self) -> SourceKind {
        SourceKind::Socket
    }

    fn channel_names(&self) -> &[String] {
        &self.names
    }

    fn rate_hz(&self) -> f64 {
        self.fs
    }

    fn is_paced(&self) -> bool {
        true
    }

    fn next_chunk(&mut self) -> Result<Option<SourceChunk>, RealtimeError> {
        if self.closed {
            return Ok(None);
        }
        match self.reader.read_frame()? {
            Some(Frame::Chunk { first_sample, samples }) => Ok(Some(SourceChunk { first_sample, samples: samples.mapv(f64::from) })),
            Some(Frame::Bye) | None => {
                self.closed = true;
                Ok(None)
            }
            Some(Frame::Hello { .. }) => Err(RealtimeError::Protocol("second hello in one stream".into())),
        }
    }
}
