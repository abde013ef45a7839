//! Checkpoint serialization.
//!
//! Layout: header `{magic "FFNN", version u32, C u16, K u16, H u16}` followed
//! by one record per parameter tensor in canonical order:
//! `{name_len u16, name utf-8, rank u8, dims u32[rank], data f64[] LE}`.
//! The branch mode is inferred from which parameter names are present.

use crate::error::{Error, Result};
use crate::net::model::{BranchMode, FusionNet};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FFNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, model: &FusionNet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(model.class_count() as u16).to_le_bytes()).map_err(io)?;
    w.write_all(&(model.pjv_len() as u16).to_le_bytes()).map_err(io)?;
    w.write_all(&(model.hidden_width() as u16).to_le_bytes()).map_err(io)?;
    for (name, tensor) in model.params() {
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&[tensor.shape().len() as u8]).map_err(io)?;
        for &d in tensor.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io)?;
        }
        let mut buf = Vec::with_capacity(tensor.numel() * 8);
        for v in tensor.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<FusionNet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |detail: String| Error::format("FFNN", detail);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| bad("missing header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b).map_err(|_| bad("truncated header".into()))?;
    let version = u32::from_le_bytes(u32b);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut u16b = [0u8; 2];
    r.read_exact(&mut u16b).map_err(|_| bad("truncated header".into()))?;
    let c = u16::from_le_bytes(u16b) as usize;
    r.read_exact(&mut u16b).map_err(|_| bad("truncated header".into()))?;
    let k = u16::from_le_bytes(u16b) as usize;
    r.read_exact(&mut u16b).map_err(|_| bad("truncated header".into()))?;
    let h = u16::from_le_bytes(u16b) as usize;

    // Read records until EOF.
    let mut tensors: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    loop {
        let mut len_b = [0u8; 2];
        match r.read_exact(&mut len_b) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(_) => return Err(bad("truncated record".into())),
        }
        let name_len = u16::from_le_bytes(len_b) as usize;
        let mut name_b = vec![0u8; name_len];
        r.read_exact(&mut name_b).map_err(|_| bad("truncated name".into()))?;
        let name = String::from_utf8(name_b).map_err(|_| bad("invalid name".into()))?;
        let mut rank_b = [0u8; 1];
        r.read_exact(&mut rank_b).map_err(|_| bad("truncated rank".into()))?;
        let mut dims = Vec::with_capacity(rank_b[0] as usize);
        for _ in 0..rank_b[0] {
            r.read_exact(&mut u32b).map_err(|_| bad("truncated dims".into()))?;
            dims.push(u32::from_le_bytes(u32b) as usize);
        }
        let numel: usize = dims.iter().product();
        let mut data_b = vec![0u8; numel * 8];
        r.read_exact(&mut data_b)
            .map_err(|_| bad(format!("truncated data for {name}")))?;
        let data = data_b
            .chunks_exact(8)
            .map(|x| f64::from_le_bytes(x.try_into().unwrap()))
            .collect();
        tensors.insert(name, (dims, data));
    }

    let mode = if tensors.keys().any(|n| n.starts_with("pjv.")) {
        BranchMode::Fused
    } else {
        BranchMode::TfiOnly
    };
    let mut model = FusionNet::new(c, k, h, mode, 0)
        .map_err(|e| bad(format!("invalid architecture in header: {e}")))?;
    for (name, tensor) in model.params_mut() {
        let (dims, data) = tensors
            .remove(name)
            .ok_or_else(|| bad(format!("missing tensor {name}")))?;
        if dims != tensor.shape() {
            return Err(bad(format!(
                "tensor {name}: shape {dims:?} does not match architecture {:?}",
                tensor.shape()
            )));
        }
        tensor.as_mut_slice().copy_from_slice(&data);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(bad(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ffnn");
        for mode in [BranchMode::Fused, BranchMode::TfiOnly] {
            let model = FusionNet::new(7, 256, 32, mode, 42).unwrap();
            save_checkpoint(&path, &model).unwrap();
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back.class_count(), 7);
            assert_eq!(back.pjv_len(), 256);
            assert_eq!(back.hidden_width(), 32);
            assert_eq!(back.mode(), mode);
            for ((n1, t1), (n2, t2)) in model.params().iter().zip(back.params()) {
                assert_eq!(*n1, n2);
                assert_eq!(t1.as_slice(), t2.as_slice());
            }
        }
    }

    #[test]
    fn header_magic_and_truncation_are_caught() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ffnn");
        let model = FusionNet::new(7, 256, 32, BranchMode::Fused, 1).unwrap();
        save_checkpoint(&path, &model).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        assert!(load_checkpoint(&path).is_err());

        let mut evil = bytes.clone();
        evil[0] = b'X';
        std::fs::write(&path, &evil).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
