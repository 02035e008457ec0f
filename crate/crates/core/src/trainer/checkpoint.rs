//! `CCGN` checkpoint files: magic, u32 version, u32 array count, named arrays.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::binio::{check_magic, read_array, read_u32, write_array, write_atomic};
use crate::encoders::NamedArrays;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CCGN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(arrays: &NamedArrays) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let count = u32::try_from(arrays.len()).map_err(|_| Error::Format("too many arrays".into()))?;
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, m) in arrays {
        write_array(&mut buf, name, m)?;
    }
    Ok(buf)
}

pub fn decode_checkpoint<R: Read>(r: &mut R) -> Result<NamedArrays> {
    check_magic(r, CHECKPOINT_MAGIC)?;
    let version = read_u32(r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let count = read_u32(r, "array count")? as usize;
    let mut arrays = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        match read_array(r)? {
            Some(a) => arrays.push(a),
            None => return Err(Error::Format(format!("truncated file: {i} of {count} arrays present"))),
        }
    }
    if read_array(r)?.is_some() {
        return Err(Error::Format(format!("more than the declared {count} arrays")));
    }
    Ok(arrays)
}

pub fn save_checkpoint(path: &Path, arrays: &NamedArrays) -> Result<()> {
    write_atomic(path, &encode_checkpoint(arrays)?)
}

pub fn load_checkpoint(path: &Path) -> Result<NamedArrays> {
    let mut r = BufReader::new(File::open(path)?);
    decode_checkpoint(&mut r)
}
