//! Model file layout (integers little-endian):
//!
//! ```text
//! magic    4 bytes   "EEGM"
//! version  u8        1
//! digest   32 bytes  SHA-256 of payload
//! length   u64       payload byte count
//! payload  bincode(TrainedModel)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{ModelError, TrainedModel};

pub const MODEL_FILE_MAGIC: &[u8; 4] = b"EEGM";
pub const MODEL_FILE_VERSION: u8 = 1;

pub fn write_model<W: Write>(m: &TrainedModel, mut w: W) -> Result<(), ModelError> {
    let payload = bincode::serialize(m).map_err(|e| ModelError::CorruptPayload(e.to_string()))?;
    w.write_all(MODEL_FILE_MAGIC)?;
    w.write_u8(MODEL_FILE_VERSION)?;
    w.write_all(&Sha256::digest(&payload))?;
    w.write_u64::<LittleEndian>(payload.len() as u64)?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<TrainedModel, ModelError> {
    let truncated = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ModelError::CorruptPayload("truncated file".into())
        } else {
            ModelError::Io(e)
        }
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MODEL_FILE_MAGIC {
        return Err(ModelError::CorruptPayload("bad magic".into()));
    }
    let version = r.read_u8().map_err(truncated)?;
    if version != MODEL_FILE_VERSION {
        return Err(ModelError::VersionMismatch { found: version, supported: MODEL_FILE_VERSION });
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest).map_err(truncated)?;
    let len = r.read_u64::<LittleEndian>().map_err(truncated)?;
    let mut payload = Vec::new();
    r.take(len).read_to_end(&mut payload)?;
    if payload.len() as u64 != len {
        return Err(ModelError::CorruptPayload(format!("payload holds {} of {len} bytes", payload.len())));
    }
    if Sha256::digest(&payload).as_slice() != digest {
        return Err(ModelError::CorruptPayload("digest mismatch".into()));
    }
    bincode::deserialize(&payload).map_err(|e| ModelError::CorruptPayload(e.to_string()))
}

pub fn save_model(m: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    write_model(m, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelError> {
    read_model(BufReader::new(File::open(path)?))
}
