//! Feature-matrix file, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "FEAT"
//! version      u8       1
//! hash_len     u16      then hash_len bytes of ASCII manifest hash
//! n_slots      u32
//! n_rows       u64
//! n_subjects   u32      then per subject: u16 length + UTF-8 bytes
//! per row      u32 subject index, u8 label (0 low, 1 high, 255 none), u32 flags
//! rows         n_rows × n_slots f64 (NaN = pending imputation)
//! ```

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use super::{FeatureError, FeatureFlags, FeatureMatrix};
use crate::ingest::PainLabel;

pub const FEATURE_FILE_MAGIC: &[u8; 4] = b"FEAT";
pub const FEATURE_FILE_VERSION: u8 = 1;

pub fn write_feature_matrix<W: Write>(m: &FeatureMatrix, mut w: W) -> Result<(), FeatureError> {
    w.write_all(FEATURE_FILE_MAGIC)?;
    w.write_u8(FEATURE_FILE_VERSION)?;
    w.write_u16::<LittleEndian>(m.manifest_hash.len() as u16)?;
    w.write_all(m.manifest_hash.as_bytes())?;
    w.write_u32::<LittleEndian>(m.rows.ncols() as u32)?;
    w.write_u64::<LittleEndian>(m.rows.nrows() as u64)?;
    let subjects = m.subject_list();
    w.write_u32::<LittleEndian>(subjects.len() as u32)?;
    for s in &subjects {
        w.write_u16::<LittleEndian>(s.len() as u16)?;
        w.write_all(s.as_bytes())?;
    }
    for i in 0..m.n_rows() {
        let si = subjects.iter().position(|s| *s == m.subjects[i]).expect("listed");
        w.write_u32::<LittleEndian>(si as u32)?;
        w.write_u8(m.labels[i].map_or(255, PainLabel::as_class))?;
        w.write_u32::<LittleEndian>(m.flags[i].0)?;
    }
    for v in m.rows.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_matrix<R: Read>(mut r: R) -> Result<FeatureMatrix, FeatureError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_FILE_MAGIC {
        return Err(FeatureError::Format("not a feature matrix file".into()));
    }
    let version = r.read_u8()?;
    if version != FEATURE_FILE_VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let hash_len = r.read_u16::<LittleEndian>()? as usize;
    let mut hash = vec![0u8; hash_len];
    r.read_exact(&mut hash)?;
    let manifest_hash = String::from_utf8(hash).map_err(|_| FeatureError::Format("hash is not ASCII".into()))?;
    let n_slots = r.read_u32::<LittleEndian>()? as usize;
    let n_rows = r.read_u64::<LittleEndian>()? as usize;
    let n_subjects = r.read_u32::<LittleEndian>()? as usize;
    let mut subjects = Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        let len = r.read_u16::<LittleEndian>()? as usize;
        let mut b = vec![0u8; len];
        r.read_exact(&mut b)?;
        subjects.push(String::from_utf8(b).map_err(|_| FeatureError::Format("subject id is not UTF-8".into()))?);
    }
    let mut row_subjects = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    let mut flags = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let si = r.read_u32::<LittleEndian>()? as usize;
        let s = subjects.get(si).ok_or_else(|| FeatureError::Format(format!("subject index {si} out of range")))?;
        row_subjects.push(s.clone());
        let l = r.read_u8()?;
        labels.push(match l {
            255 => None,
            c => Some(PainLabel::from_class(c).ok_or_else(|| FeatureError::Format(format!("bad label byte {c}")))?),
        });
        flags.push(FeatureFlags(r.read_u32::<LittleEndian>()?));
    }
    let mut data = vec![0.0; n_rows * n_slots];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    let rows = Array2::from_shape_vec((n_rows, n_slots), data).expect("sized");
    Ok(FeatureMatrix { manifest_hash, rows, labels, subjects: row_subjects, flags })
}
