use ndarray::{Array2, ArrayView2};

use super::RealtimeError;

/// Fixed-capacity per-channel circular storage at the source rate.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    data: Array2<f64>,
    /// Next column to write.
    cursor: usize,
    written: u64,
}

/// A copy of the most recent samples, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub samples: Array2<f64>,
    /// Total samples written when the snapshot was taken.
    pub end_sample: u64,
    /// Fewer than capacity samples had been written; the front is zero.
    pub partial: bool,
}

impl RingBuffer {
    pub fn new(n_channels: usize, capacity: usize) -> Self {
        RingBuffer { data: Array2::zeros((n_channels, capacity.max(1))), cursor: 0, written: 0 }
    }

    /// Capacity of `seconds` at `fs` Hz, rounded to whole samples.
    pub fn with_duration(n_channels: usize, seconds: f64, fs: f64) -> Self {
        Self::new(n_channels, (seconds * fs).round() as usize)
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn capacity(&self) -> usize {
        self.data.ncols()
    }

    pub fn total_written(&self) -> u64 {
        self.written
    }

    /// Appends a channels × samples chunk, overwriting the oldest samples.
    pub fn push_chunk(&mut self, chunk: ArrayView2<'_, f64>) -> Result<(), RealtimeError> {
        if chunk.nrows() != self.n_channels() {
            return Err(RealtimeError::ChannelMismatch { expected: self.n_channels(), got: chunk.nrows() });
        }
        let cap = self.capacity();
        let n = chunk.ncols();
        // only the last `cap` samples of an oversized chunk survive
        let skip = n.saturating_sub(cap);
        self.cursor = (self.cursor + skip) % cap;
        for t in skip..n {
            self.data.column_mut(self.cursor).assign(&chunk.column(t));
            self.cursor = (self.cursor + 1) % cap;
        }
        self.written += n as u64;
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let cap = self.capacity();
        let mut out = Array2::zeros(self.data.raw_dim());
        let filled = self.written.min(cap as u64) as usize;
        let start = (self.cursor + cap - filled) % cap;
        for k in 0..filled {
            out.column_mut(cap - filled + k).assign(&self.data.column((start + k) % cap));
        }
        Snapshot { samples: out, end_sample: self.written, partial: filled < cap }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn keeps_latest_oldest_first() {
        let mut rb = RingBuffer::new(1, 4);
        rb.push_chunk(array![[1.0, 2.0, 3.0]].view()).unwrap();
        rb.push_chunk(array![[4.0, 5.0, 6.0]].view()).unwrap();
        let s = rb.snapshot();
        assert_eq!(s.samples, array![[3.0, 4.0, 5.0, 6.0]]);
        assert_eq!(s.end_sample, 6);
        assert!(!s.partial);
    }

    #[test]
    fn cold_start_zero_pads_front() {
        let mut rb = RingBuffer::new(2, 4);
        rb.push_chunk(array![[1.0, 2.0], [3.0, 4.0]].view()).unwrap();
        let s = rb.snapshot();
        assert!(s.partial);
        assert_eq!(s.samples, array![[0.0, 0.0, 1.0, 2.0], [0.0, 0.0, 3.0, 4.0]]);
    }

    #[test]
    fn oversized_chunk_and_mismatch() {
        let mut rb = RingBuffer::new(1, 3);
        rb.push_chunk(array![[1.0, 2.0, 3.0, 4.0, 5.0]].view()).unwrap();
        assert_eq!(rb.snapshot().samples, array![[3.0, 4.0, 5.0]]);
        assert!(matches!(rb.push_chunk(array![[1.0], [2.0]].view()), Err(RealtimeError::ChannelMismatch { .. })));
    }
}
