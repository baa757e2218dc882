//! Model checkpoints: a one-line JSON header, a length-prefixed tensor table,
//! then every tensor as little-endian `f32` in table order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{ScoreModelParams, TrainingMeta};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "MBSC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    magic: String,
    model: ModelConfig,
    z_scale: Option<f64>,
    step: usize,
    metrics: BTreeMap<String, f64>,
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ScoreModelParams) -> Result<()> {
    params.validate()?;
    let header = CheckpointHeader {
        magic: CHECKPOINT_MAGIC.into(),
        model: params.config.clone(),
        z_scale: params.meta.z_scale,
        step: params.meta.step,
        metrics: params.meta.metrics.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut table = Vec::new();
    params.for_each_tensor(|name, _, shape| table.push((name, shape.to_vec())));
    w.write_all(&(table.len() as u32).to_le_bytes())?;
    for (name, shape) in &table {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
    }
    let mut buf = Vec::new();
    params.for_each_tensor(|_, data, _| {
        for &v in data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    });
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<ScoreModelParams> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("not a checkpoint (magic {:?})", header.magic)));
    }
    let mut params = ScoreModelParams::init(&header.model, 0)?;
    let mut expected = Vec::new();
    params.for_each_tensor(|name, _, shape| expected.push((name, shape.to_vec())));
    let count = read_u32(&mut r)? as usize;
    if count != expected.len() {
        return Err(Error::Format(format!("{count} tensors, architecture needs {}", expected.len())));
    }
    for (name, shape) in &expected {
        let len = read_u32(&mut r)? as usize;
        if len > 256 {
            return Err(Error::Format("tensor name too long".into()));
        }
        let mut got = vec![0u8; len];
        r.read_exact(&mut got)?;
        let ndim = read_u32(&mut r)? as usize;
        if ndim > 8 {
            return Err(Error::Format("tensor rank too large".into()));
        }
        let dims = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if got != name.as_bytes() || &dims != shape {
            return Err(Error::Format(format!(
                "tensor table mismatch at {name}: found {:?} {dims:?}",
                String::from_utf8_lossy(&got)
            )));
        }
    }
    let mut read_err = None;
    params.for_each_tensor_mut(|_, t| {
        if read_err.is_some() {
            return;
        }
        let mut bytes = vec![0u8; t.len() * 4];
        if let Err(e) = r.read_exact(&mut bytes) {
            read_err = Some(e);
            return;
        }
        for (v, c) in t.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
    });
    if let Some(e) = read_err {
        return Err(e.into());
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    params.meta = TrainingMeta { step: header.step, z_scale: header.z_scale, metrics: header.metrics };
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ScoreModelParams) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ScoreModelParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

/// Round every tensor to single precision, as stored on disk.
pub fn round_to_f32(params: &mut ScoreModelParams) {
    params.for_each_tensor_mut(|_, t| t.iter_mut().for_each(|v| *v = *v as f32 as f64));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut p = ScoreModelParams::init(&ModelConfig::default(), 3).unwrap();
        p.meta.step = 250;
        p.meta.z_scale = Some(3.5);
        p.meta.metrics.insert("val_mae_z".into(), 0.04);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        let q = read_checkpoint(buf.as_slice()).unwrap();
        round_to_f32(&mut p);
        assert_eq!(p, q);
        let header_end = buf.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&buf[..header_end]).unwrap();
        assert_eq!(header["step"], 250);
        assert_eq!(header["model"]["features"]["graph_k"], 16);
    }

    #[test]
    fn rejects_corruption() {
        let p = ScoreModelParams::init(&ModelConfig::default(), 0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let text = String::from_utf8_lossy(&buf[..20]).replace("MBSC1", "XXXX1");
        let mut bad = text.into_bytes();
        bad.extend_from_slice(&buf[20..]);
        assert!(read_checkpoint(bad.as_slice()).is_err());
    }
}
