//! Whole-survey prediction: cut, normalize, process patch by patch, reassemble.

use log::info;

use crate::baselines::{run_baseline, BaselineMethod, Interpolation, KrigingConfig};
use crate::dataset::prepare_split;
use crate::denoise::{detect_with_field, run_pipeline, DenoiseConfig, DetectConfig, Variant};
use crate::error::{Error, Result};
use crate::norm::denormalize_patch;
use crate::scorenet::{ScoreField, ScoreModelParams};
use crate::survey::{merge_patches, Patch, Survey};

/// Apply `f` to every normalized patch of `survey`.
///
/// The result keeps `xyz_raw`, stores the returned points (if any) in
/// `xyz_clean` and the returned masks in `outlier_mask`. Pings left over after
/// the last full patch are copied through unflagged.
pub fn predict_survey<F>(survey: &Survey, z_scale: Option<f64>, f: F) -> Result<Survey>
where
    F: Fn(&Patch) -> Result<(Option<Patch>, Vec<bool>)>,
{
    let split = prepare_split(survey, z_scale)?;
    let mut points = Vec::with_capacity(split.normalized.len());
    let mut masks = Vec::with_capacity(split.normalized.len());
    for (patch, t) in split.normalized.iter().zip(&split.transforms) {
        let (out, mask) = f(patch).map_err(|e| Error::InPatch { patch: patch.patch_id, source: Box::new(e) })?;
        info!("patch {}: {} of {} points flagged", patch.patch_id, mask.iter().filter(|&&m| m).count(), mask.len());
        points.push(out.map(|p| denormalize_patch(&p, t)));
        masks.push(mask);
    }
    let mut out = survey.clone();
    out.xyz_clean = None;
    if points.iter().all(Option::is_some) {
        let patches: Vec<Patch> = points.into_iter().flatten().collect();
        out.xyz_clean = Some(merge_patches(survey, &patches, None)?.xyz_raw);
    }
    let mask_holder: Vec<Patch> = split.raw.clone();
    out.outlier_mask = merge_patches(survey, &mask_holder, Some(&masks))?.outlier_mask;
    Ok(out)
}

/// Model-based outlier mask only.
pub fn detect_survey(survey: &Survey, z_scale: Option<f64>, params: &ScoreModelParams, cfg: &DetectConfig) -> Result<Survey> {
    predict_survey(survey, z_scale, |p| {
        let field = ScoreField::new(&p.xyz, params)?;
        Ok((None, detect_with_field(p, &field, cfg)?))
    })
}

/// One of the composite score procedures over a whole survey.
pub fn denoise_survey(
    survey: &Survey,
    z_scale: Option<f64>,
    params: &ScoreModelParams,
    variant: Variant,
    detect: &DetectConfig,
    denoise: &DenoiseConfig,
) -> Result<Survey> {
    predict_survey(survey, z_scale, |p| {
        let (out, mask) = run_pipeline(p, params, variant, detect, denoise)?;
        Ok((Some(out), mask))
    })
}

/// Classical detection plus interpolation over a whole survey.
pub fn baseline_survey(
    survey: &Survey,
    z_scale: Option<f64>,
    method: &BaselineMethod,
    interp: Interpolation,
    kriging: &KrigingConfig,
) -> Result<Survey> {
    predict_survey(survey, z_scale, |p| {
        let (out, mask) = run_baseline(p, method, interp, kriging)?;
        Ok((Some(out), mask))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::StatisticalRemovalConfig;

    fn survey() -> Survey {
        let (pings, beams) = (70, 12);
        let pts = (0..pings * beams)
            .map(|i| {
                let (p, b) = ((i / beams) as f64, (i % beams) as f64);
                [p, b, 0.1 * p + if i % 97 == 5 { 8.0 } else { 0.0 }]
            })
            .collect();
        let mut s = Survey::new(pings, beams, pts).unwrap();
        s.outlier_mask = Some((0..pings * beams).map(|i| i % 97 == 5).collect());
        s.xyz_clean = Some(s.xyz_raw.iter().map(|p| [p[0], p[1], 0.1 * p[0]]).collect());
        s
    }

    #[test]
    fn identity_keeps_points_and_covers_tail() {
        let s = survey();
        let out = predict_survey(&s, None, |p| Ok((Some(p.clone()), vec![true; p.len()]))).unwrap();
        assert_eq!(out.xyz_raw, s.xyz_raw);
        let clean = out.xyz_clean.unwrap();
        for (a, b) in clean.iter().zip(&s.xyz_raw) {
            assert!((0..3).all(|c| (a[c] - b[c]).abs() < 1e-9));
        }
        let mask = out.outlier_mask.unwrap();
        // 70 pings: two full patches, the last 6 pings untouched.
        assert!(mask[..64 * 12].iter().all(|&m| m));
        assert!(mask[64 * 12..].iter().all(|&m| !m));
    }

    #[test]
    fn mask_only_drops_clean_points() {
        let out = predict_survey(&survey(), None, |p| Ok((None, vec![false; p.len()]))).unwrap();
        assert!(out.xyz_clean.is_none());
    }

    #[test]
    fn baseline_finds_spikes() {
        let s = survey();
        let m = BaselineMethod::Statistical(StatisticalRemovalConfig { nb_neighbors: 8, std_ratio: 2.0 });
        let out = baseline_survey(&s, None, &m, Interpolation::Mean, &KrigingConfig::default()).unwrap();
        let pred = out.outlier_mask.unwrap();
        let gt = s.outlier_mask.unwrap();
        for i in 0..64 * 12 {
            if gt[i] {
                assert!(pred[i], "spike {i} missed");
            }
        }
    }

    #[test]
    fn patch_errors_name_the_patch() {
        let err = predict_survey(&survey(), None, |p| {
            if p.patch_id == 1 {
                Err(Error::NoInliers)
            } else {
                Ok((None, vec![false; p.len()]))
            }
        })
        .unwrap_err();
        assert_eq!(err.to_string(), "patch 1");
        assert_eq!(std::error::Error::source(&err).unwrap().to_string(), Error::NoInliers.to_string());
        assert!(matches!(err, Error::InPatch { patch: 1, ref source } if matches!(**source, Error::NoInliers)));
    }
}
