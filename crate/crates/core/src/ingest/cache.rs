//! Columnar binary cache for epoch sets.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "NSEP"
//! version          u16      1
//! n_channels       u16
//! channel names    n_channels × (u16 byte length, UTF-8 bytes)
//! fs_hz            f64
//! samples/epoch    u32
//! n_epochs         u32
//! n_subjects       u16
//! subject names    n_subjects × (u16 byte length, UTF-8 bytes)
//! subject column   n_epochs × u16     index into subject names
//! label column     n_epochs × u8      0 = low_pain, 1 = high_pain
//! onset column     n_epochs × u64     source sample of the stimulus marker
//! mask column      n_epochs × n_channels × u8 (1 = usable)
//! sample block     n_epochs × n_channels × samples/epoch × f32 (µV)
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{Epoch, EpochSet, IngestError, PainLabel};

pub const EPOCH_CACHE_MAGIC: &[u8; 4] = b"NSEP";
pub const EPOCH_CACHE_VERSION: u16 = 1;

fn bad(msg: impl Into<String>) -> IngestError {
    IngestError::Cache(msg.into())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u16::<LittleEndian>(s.len() as u16)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, IngestError> {
    let n = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| bad("name is not UTF-8"))
}

pub fn write_epoch_cache<W: Write>(set: &EpochSet, mut w: W) -> Result<(), IngestError> {
    let n_ch = set.channel_names.len();
    let (fs, len) = match set.epochs.first() {
        Some(e) => (e.fs_hz, e.n_samples()),
        None => (0.0, 0),
    };
    if set.epochs.iter().any(|e| e.n_samples() != len || e.fs_hz != fs || e.n_channels() != n_ch) {
        return Err(bad("all epochs must share channel count, length and rate"));
    }
    w.write_all(EPOCH_CACHE_MAGIC)?;
    w.write_u16::<LittleEndian>(EPOCH_CACHE_VERSION)?;
    w.write_u16::<LittleEndian>(n_ch as u16)?;
    for c in &set.channel_names {
        write_str(&mut w, c)?;
    }
    w.write_f64::<LittleEndian>(fs)?;
    w.write_u32::<LittleEndian>(len as u32)?;
    w.write_u32::<LittleEndian>(set.epochs.len() as u32)?;
    w.write_u16::<LittleEndian>(set.subjects.len() as u16)?;
    for s in &set.subjects {
        write_str(&mut w, s)?;
    }
    for e in &set.epochs {
        let idx = set.subjects.iter().position(|s| *s == e.subject_id).expect("subject registered on push");
        w.write_u16::<LittleEndian>(idx as u16)?;
    }
    for e in &set.epochs {
        w.write_u8(e.label.as_class())?;
    }
    for e in &set.epochs {
        w.write_u64::<LittleEndian>(e.onset_sample)?;
    }
    for e in &set.epochs {
        for &m in &e.channel_mask {
            w.write_u8(m as u8)?;
        }
    }
    let mut buf = Vec::with_capacity(n_ch * len * 4);
    for e in &set.epochs {
        buf.clear();
        for &v in e.samples.iter() {
            buf.write_f32::<LittleEndian>(v as f32)?;
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_epoch_cache<R: Read>(mut r: R) -> Result<EpochSet, IngestError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != EPOCH_CACHE_MAGIC {
        return Err(bad("not an epoch cache (bad magic)"));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != EPOCH_CACHE_VERSION {
        return Err(bad(format!("unsupported cache version {version}")));
    }
    let n_ch = r.read_u16::<LittleEndian>()? as usize;
    let channel_names = (0..n_ch).map(|_| read_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let fs = r.read_f64::<LittleEndian>()?;
    let len = r.read_u32::<LittleEndian>()? as usize;
    let n_epochs = r.read_u32::<LittleEndian>()? as usize;
    let n_subj = r.read_u16::<LittleEndian>()? as usize;
    let subjects = (0..n_subj).map(|_| read_str(&mut r)).collect::<Result<Vec<_>, _>>()?;
    let mut subj_idx = vec![0u16; n_epochs];
    r.read_u16_into::<LittleEndian>(&mut subj_idx)?;
    let mut labels = vec![0u8; n_epochs];
    r.read_exact(&mut labels)?;
    let mut onsets = vec![0u64; n_epochs];
    r.read_u64_into::<LittleEndian>(&mut onsets)?;
    let mut masks = vec![0u8; n_epochs * n_ch];
    r.read_exact(&mut masks)?;
    let mut set = EpochSet::new(channel_names);
    let mut block = vec![0f32; n_ch * len];
    for i in 0..n_epochs {
        r.read_f32_into::<LittleEndian>(&mut block)?;
        let subject_id = subjects.get(subj_idx[i] as usize).ok_or_else(|| bad("subject index out of range"))?.clone();
        let label = PainLabel::from_class(labels[i]).ok_or_else(|| bad("invalid label byte"))?;
        let samples = Array2::from_shape_vec((n_ch, len), block.iter().map(|&v| v as f64).collect())
            .map_err(|e| bad(e.to_string()))?;
        set.push(Epoch {
            subject_id,
            label,
            onset_sample: onsets[i],
            samples,
            fs_hz: fs,
            channel_mask: masks[i * n_ch..(i + 1) * n_ch].iter().map(|&m| m != 0).collect(),
        });
    }
    // keep subjects that had no epochs too, in file order
    for s in subjects {
        if !set.subjects.contains(&s) {
            set.subjects.push(s);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_round_trip() {
        let mut set = EpochSet::new(vec!["Cz".into(), "C4".into()]);
        for i in 0..3 {
            set.push(Epoch {
                subject_id: format!("s{}", i % 2),
                label: if i % 2 == 0 { PainLabel::LowPain } else { PainLabel::HighPain },
                onset_sample: 100 * i as u64,
                samples: Array2::from_shape_fn((2, 5), |(c, t)| (c * 10 + t + i) as f64 * 0.5),
                fs_hz: 500.0,
                channel_mask: vec![true, i != 1],
            });
        }
        let mut bytes = Vec::new();
        write_epoch_cache(&set, &mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"NSEP");
        let back = read_epoch_cache(bytes.as_slice()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(read_epoch_cache(&b"XXXX\x01\x00"[..]), Err(IngestError::Cache(_))));
    }
}
