//! MBP1 survey files.
//!
//! Layout: one line of UTF-8 JSON (the header) terminated by `\n`, followed by
//! the arrays listed in `header.arrays`, in that order, as raw little-endian
//! values. Point arrays are `[N × 3]` row-major; masks are one `u8` per point.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::survey::{Point, Survey};

pub const MAGIC: &str = "MBP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayDesc {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub magic: String,
    pub pings: usize,
    pub beams: usize,
    pub arrays: Vec<ArrayDesc>,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
    #[serde(default)]
    pub z_scale: Option<f64>,
}

fn point_desc(name: &str, n: usize) -> ArrayDesc {
    ArrayDesc { name: name.into(), dtype: Dtype::F32, shape: vec![n, 3] }
}

pub fn write_survey<W: Write>(mut w: W, survey: &Survey, z_scale: Option<f64>) -> Result<()> {
    survey.validate()?;
    let n = survey.len();
    let mut arrays = vec![point_desc("xyz_raw", n)];
    if survey.xyz_clean.is_some() {
        arrays.push(point_desc("xyz_clean", n));
    }
    if survey.outlier_mask.is_some() {
        arrays.push(ArrayDesc { name: "outlier_mask".into(), dtype: Dtype::U8, shape: vec![n] });
    }
    let header = Header {
        magic: MAGIC.into(),
        pings: survey.pings,
        beams: survey.beams,
        arrays,
        meta: survey.meta.clone(),
        z_scale,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;

    let mut buf = Vec::with_capacity(n * 12);
    let put_points = |pts: &[Point], buf: &mut Vec<u8>| {
        buf.clear();
        for p in pts {
            for v in p {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    };
    put_points(&survey.xyz_raw, &mut buf);
    w.write_all(&buf)?;
    if let Some(clean) = &survey.xyz_clean {
        put_points(clean, &mut buf);
        w.write_all(&buf)?;
    }
    if let Some(mask) = &survey.outlier_mask {
        let bytes: Vec<u8> = mask.iter().map(|&b| u8::from(b)).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

fn read_points(bytes: &[u8], dtype: Dtype) -> Result<Vec<Point>> {
    let vals: Vec<f64> = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::U8 => return Err(Error::Format("point array cannot be u8".into())),
    };
    Ok(vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn read_survey<R: BufRead>(mut r: R) -> Result<(Survey, Option<f64>)> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.magic != MAGIC {
        return Err(Error::Format(format!("unknown magic {:?}", header.magic)));
    }
    let n = header.pings * header.beams;
    let mut survey = Survey {
        pings: header.pings,
        beams: header.beams,
        xyz_raw: Vec::new(),
        xyz_clean: None,
        outlier_mask: None,
        meta: header.meta,
    };
    let mut have_raw = false;
    for desc in &header.arrays {
        let expect_shape: Vec<usize> = match desc.name.as_str() {
            "xyz_raw" | "xyz_clean" => vec![n, 3],
            "outlier_mask" => vec![n],
            other => return Err(Error::Format(format!("unknown array {other:?}"))),
        };
        if desc.shape != expect_shape {
            return Err(Error::Format(format!(
                "array {} has shape {:?}, expected {:?}",
                desc.name, desc.shape, expect_shape
            )));
        }
        let len = expect_shape.iter().product::<usize>() * desc.dtype.size();
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes)
            .map_err(|e| Error::Format(format!("truncated array {}: {e}", desc.name)))?;
        match desc.name.as_str() {
            "xyz_raw" => {
                survey.xyz_raw = read_points(&bytes, desc.dtype)?;
                have_raw = true;
            }
            "xyz_clean" => survey.xyz_clean = Some(read_points(&bytes, desc.dtype)?),
            _ => {
                if desc.dtype != Dtype::U8 {
                    return Err(Error::Format("outlier_mask must be u8".into()));
                }
                survey.outlier_mask = Some(bytes.iter().map(|&b| b != 0).collect());
            }
        }
    }
    if !have_raw {
        return Err(Error::Format("missing xyz_raw".into()));
    }
    survey.validate()?;
    Ok((survey, header.z_scale))
}

pub fn save_survey(path: impl AsRef<Path>, survey: &Survey, z_scale: Option<f64>) -> Result<()> {
    write_survey(BufWriter::new(File::create(path)?), survey, z_scale)
}

pub fn load_survey(path: impl AsRef<Path>) -> Result<(Survey, Option<f64>)> {
    read_survey(BufReader::new(File::open(path)?))
}
