//! Little-endian named-array records shared by the dataset and checkpoint formats.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::diffmath::Matrix;
use crate::error::{Error, Result};

pub(crate) fn write_array<W: Write>(w: &mut W, name: &str, m: &Matrix) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("array name too long: {name}")))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn truncated(what: &str) -> Error {
    Error::Format(format!("truncated file while reading {what}"))
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => truncated(what),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads one array, or `None` at a clean end of input.
pub(crate) fn read_array<R: Read>(r: &mut R) -> Result<Option<(String, Matrix)>> {
    let mut len = [0u8; 2];
    match r.read(&mut len[..1])? {
        0 => return Ok(None),
        _ => read_exact(r, &mut len[1..], "array name length")?,
    }
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    read_exact(r, &mut name, "array name")?;
    let name = String::from_utf8(name).map_err(|_| Error::Format("array name is not UTF-8".into()))?;
    let rows = read_u64(r, "array rows")? as usize;
    let cols = read_u64(r, "array cols")? as usize;
    let count = rows
        .checked_mul(cols)
        .filter(|c| *c > 0 && *c < (1 << 40))
        .ok_or_else(|| Error::Format(format!("array {name} has bad shape {rows}x{cols}")))?;
    let mut bytes = vec![0u8; count * 8];
    read_exact(r, &mut bytes, &format!("array {name} payload"))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Some((name, Matrix::from_vec(rows, cols, data)?)))
}

pub(crate) fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    read_exact(r, &mut got, "magic")?;
    if &got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"{}\"",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
