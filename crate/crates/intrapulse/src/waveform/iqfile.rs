//! Raw pulse export: little-endian interleaved float32 I/Q with a 32-byte
//! header `{magic "IQPL", version u32, fs f64, n_samples u64, class_id u16,
//! pad [u8;6]}`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const IQPL_MAGIC: &[u8; 4] = b"IQPL";
pub const IQPL_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

pub fn write_iqpl(path: &Path, samples: &[Complex64], fs: f64, class_id: u16) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(IQPL_MAGIC);
    header[4..8].copy_from_slice(&IQPL_VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&fs.to_le_bytes());
    header[16..24].copy_from_slice(&(samples.len() as u64).to_le_bytes());
    header[24..26].copy_from_slice(&class_id.to_le_bytes());
    let io = |e| Error::io(path, e);
    w.write_all(&header).map_err(io)?;
    let mut buf = Vec::with_capacity(samples.len() * 8);
    for s in samples {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

/// Returns `(samples, fs, class_id)`. The class id is whatever the writer
/// recorded; `u16::MAX` conventionally marks "unknown".
pub fn read_iqpl(path: &Path) -> Result<(Vec<Complex64>, f64, u16)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::format("IQPL", "file shorter than the 32-byte header"))?;
    if &header[0..4] != IQPL_MAGIC {
        return Err(Error::format("IQPL", "bad magic"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != IQPL_VERSION {
        return Err(Error::format("IQPL", format!("unsupported version {version}")));
    }
    let fs = f64::from_le_bytes(header[8..16].try_into().unwrap());
    let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let class_id = u16::from_le_bytes(header[24..26].try_into().unwrap());
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::format("IQPL", "non-positive sample rate"));
    }
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("IQPL", format!("truncated: expected {n} samples")))?;
    let samples = buf
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    Ok((samples, fs, class_id))
}
