//! Gridded soundings and the fixed-size patches cut from them.
//!
//! Points are stored row-major by (ping, beam) everywhere; masks and clean
//! counterparts are index-aligned to that order.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// Default number of pings per patch.
pub const PINGS_PER_PATCH: usize = 32;

/// A swath survey: `pings × beams` soundings with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Survey {
    pub pings: usize,
    pub beams: usize,
    pub xyz_raw: Vec<Point>,
    pub xyz_clean: Option<Vec<Point>>,
    /// `true` marks an outlier.
    pub outlier_mask: Option<Vec<bool>>,
    pub meta: BTreeMap<String, Value>,
}

impl Survey {
    pub fn new(pings: usize, beams: usize, xyz_raw: Vec<Point>) -> Result<Self> {
        let survey = Self {
            pings,
            beams,
            xyz_raw,
            xyz_clean: None,
            outlier_mask: None,
            meta: BTreeMap::new(),
        };
        survey.validate()?;
        Ok(survey)
    }

    pub fn len(&self) -> usize {
        self.pings * self.beams
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.xyz_raw.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "xyz_raw has {} points, expected {} ({} pings x {} beams)",
                self.xyz_raw.len(),
                n,
                self.pings,
                self.beams
            )));
        }
        if let Some(clean) = &self.xyz_clean {
            if clean.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "xyz_clean has {} points, expected {n}",
                    clean.len()
                )));
            }
        }
        if let Some(mask) = &self.outlier_mask {
            if mask.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "outlier_mask has {} entries, expected {n}",
                    mask.len()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, ping: usize, beam: usize) -> usize {
        ping * self.beams + beam
    }
}

/// A window of consecutive pings.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pings: usize,
    pub beams: usize,
    pub xyz: Vec<Point>,
    pub labels: Option<Vec<bool>>,
    pub clean_xyz: Option<Vec<Point>>,
    pub patch_id: usize,
    pub ping_offset: usize,
}

impl Patch {
    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }

    pub fn z(&self) -> Vec<f64> {
        self.xyz.iter().map(|p| p[2]).collect()
    }

    /// Number of labelled inliers, if labels are present.
    pub fn inlier_count(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&o| !o).count())
    }
}

/// Cut a survey into non-overlapping windows of `pings_per_patch` pings.
///
/// Trailing pings that do not fill a whole window are dropped.
pub fn build_patches(survey: &Survey, pings_per_patch: usize) -> Result<Vec<Patch>> {
    if survey.is_empty() {
        return Err(Error::EmptySurvey);
    }
    if pings_per_patch < 2 {
        return Err(Error::InvalidConfig(format!(
            "pings_per_patch must be at least 2, got {pings_per_patch}"
        )));
    }
    if survey.pings < pings_per_patch {
        return Err(Error::NotEnoughPoints {
            needed: pings_per_patch - 1,
            got: survey.pings,
        });
    }
    survey.validate()?;

    let stride = pings_per_patch * survey.beams;
    let count = survey.pings / pings_per_patch;
    let patches = (0..count)
        .map(|p| {
            let range = p * stride..(p + 1) * stride;
            Patch {
                pings: pings_per_patch,
                beams: survey.beams,
                xyz: survey.xyz_raw[range.clone()].to_vec(),
                labels: survey.outlier_mask.as_ref().map(|m| m[range.clone()].to_vec()),
                clean_xyz: survey.xyz_clean.as_ref().map(|c| c[range.clone()].to_vec()),
                patch_id: p,
                ping_offset: p * pings_per_patch,
            }
        })
        .collect();
    Ok(patches)
}

/// Write patch points (and masks) back into a copy of `survey`.
///
/// Only pings covered by `patches` change; the clean reference is kept.
pub fn merge_patches(survey: &Survey, patches: &[Patch], masks: Option<&[Vec<bool>]>) -> Result<Survey> {
    let mut out = survey.clone();
    let mut mask = masks.map(|_| vec![false; survey.len()]);
    for (k, patch) in patches.iter().enumerate() {
        if patch.beams != survey.beams || patch.ping_offset + patch.pings > survey.pings {
            return Err(Error::ShapeMismatch(format!(
                "patch {} does not fit the survey grid",
                patch.patch_id
            )));
        }
        let start = survey.index(patch.ping_offset, 0);
        out.xyz_raw[start..start + patch.len()].copy_from_slice(&patch.xyz);
        if let (Some(mask), Some(masks)) = (mask.as_mut(), masks) {
            mask[start..start + patch.len()].copy_from_slice(&masks[k]);
        }
    }
    if mask.is_some() {
        out.outlier_mask = mask;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn survey(pings: usize, beams: usize) -> Survey {
        let pts = (0..pings * beams)
            .map(|i| [(i / beams) as f64, (i % beams) as f64, i as f64])
            .collect();
        let mut s = Survey::new(pings, beams, pts).unwrap();
        s.outlier_mask = Some((0..pings * beams).map(|i| i % 7 == 0).collect());
        s.xyz_clean = Some(s.xyz_raw.clone());
        s
    }

    #[test]
    fn exact_division() {
        let patches = build_patches(&survey(64, 5), 32).unwrap();
        assert_eq!(patches.len(), 2);
        assert!(patches.iter().all(|p| p.len() == 32 * 5 && p.pings == 32));
        assert_eq!(patches[1].ping_offset, 32);
        assert_eq!(patches[1].xyz[0], [32.0, 0.0, 160.0]);
    }

    #[test]
    fn remainder_dropped_and_labels_carried() {
        let s = survey(70, 3);
        let patches = build_patches(&s, 32).unwrap();
        assert_eq!(patches.len(), 2);
        let total: usize = patches.iter().map(Patch::len).sum();
        assert_eq!(total, 64 * 3);
        let labels = patches[1].labels.as_ref().unwrap();
        assert_eq!(labels[..], s.outlier_mask.as_ref().unwrap()[96..192]);
        assert!(patches[0].clean_xyz.is_some());
    }

    #[test]
    fn full_scale_patch_count() {
        // 216,864 pings of 32 give 6777 full windows; only the count matters here.
        assert_eq!(216_864 / PINGS_PER_PATCH, 6777);
        let s = Survey::new(216_864, 1, vec![[0.0; 3]; 216_864]).unwrap();
        assert_eq!(build_patches(&s, 32).unwrap().len(), 6777);
    }

    #[test]
    fn rejects_bad_input() {
        let empty = Survey::new(0, 400, vec![]).unwrap();
        assert_eq!(build_patches(&empty, 32).unwrap_err().to_string(), "empty survey");
        assert!(build_patches(&survey(10, 2), 32).is_err());
        assert!(build_patches(&survey(10, 2), 1).is_err());
    }

    #[test]
    fn merge_roundtrip() {
        let s = survey(70, 3);
        let mut patches = build_patches(&s, 32).unwrap();
        patches[0].xyz[0][2] = -1.0;
        let masks: Vec<Vec<bool>> = patches.iter().map(|p| vec![true; p.len()]).collect();
        let merged = merge_patches(&s, &patches, Some(&masks)).unwrap();
        assert_eq!(merged.xyz_raw[0][2], -1.0);
        assert_eq!(merged.xyz_raw[1], s.xyz_raw[1]);
        let m = merged.outlier_mask.unwrap();
        assert!(m[..192].iter().all(|&b| b));
        assert!(m[192..].iter().all(|&b| !b));
    }
}
