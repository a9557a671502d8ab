//! Versioned binary checkpoints: named f64 blobs behind a magic header.
//!
//! Layout (little-endian): magic `GPIM`, format version u16, blob count u32,
//! then per blob a u16 name length, the UTF-8 name, a u64 value count, and
//! the raw f64 values. Integers stored in blobs must be exactly representable
//! as f64, which holds for every counter this crate serializes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"GPIM";
pub const VERSION: u16 = 1;

pub type Blob = (String, Vec<f64>);

pub fn write_blobs(path: &Path, blobs: &[Blob]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(blobs.len() as u32).to_le_bytes())?;
    for (name, values) in blobs {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(Error::Checkpoint(format!("blob name too long: {name}")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_blobs(path: &Path) -> Result<Vec<Blob>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("blob name is not UTF-8".into()))?;
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        blobs.push((name, values));
    }
    Ok(blobs)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("truncated checkpoint".into()))
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

/// Find a blob by name.
pub fn get<'a>(blobs: &'a [Blob], name: &str) -> Result<&'a [f64]> {
    blobs
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| Error::Checkpoint(format!("missing blob '{name}'")))
}
