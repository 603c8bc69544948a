//! Frame-level ROC-AUC, its brute-force pairwise oracle, clip-to-frame score
//! expansion and the metrics report.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::VideoBag;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-frame scores with 0/1 ground truth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredFrames {
    pub scores: Vec<f64>,
    pub gt: Vec<u8>,
}

impl ScoredFrames {
    pub fn new(scores: Vec<f64>, gt: Vec<u8>) -> Result<Self> {
        if scores.len() != gt.len() {
            return Err(Error::Length(format!("{} scores vs {} labels", scores.len(), gt.len())));
        }
        if gt.iter().any(|&g| g > 1) {
            return Err(Error::Dataset("frame ground truth must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite {
                context: "frame scores".into(),
            });
        }
        Ok(ScoredFrames { scores, gt })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.gt.iter().filter(|&&g| g == 1).count()
    }

    pub fn extend(&mut self, other: &ScoredFrames) {
        self.scores.extend_from_slice(&other.scores);
        self.gt.extend_from_slice(&other.gt);
    }

    fn class_counts(&self) -> Result<(usize, usize)> {
        let pos = self.positives();
        let neg = self.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::SingleClass);
        }
        Ok((pos, neg))
    }
}

/// Every frame takes its clip's score; frames past `total_frames` are dropped.
pub fn clip_to_frame_scores<T: Scalar>(
    clip_scores: &[T],
    clip_len_frames: usize,
    total_frames: usize,
) -> Result<Vec<f64>> {
    let covered = clip_scores.len() * clip_len_frames;
    if total_frames > covered {
        return Err(Error::Length(format!(
            "{total_frames} frames exceed the {covered} covered by {} clips",
            clip_scores.len()
        )));
    }
    Ok((0..total_frames)
        .map(|f| clip_scores[f / clip_len_frames].as_f64())
        .collect())
}

/// Area under the ROC curve from a threshold sweep over the distinct scores,
/// integrated with the trapezoid rule. A tied group moves diagonally, which
/// credits each tied positive-negative pair with one half.
pub fn roc_auc(frames: &ScoredFrames) -> Result<f64> {
    let (pos, neg) = frames.class_counts()?;
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.sort_by(|&a, &b| frames.scores[b].total_cmp(&frames.scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = frames.scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && frames.scores[order[i]] == s {
            if frames.gt[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // trapezoid in count units; normalized once at the end
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// `(wins + ties / 2) / pairs` over every positive-negative pair.
pub fn auc_oracle(frames: &ScoredFrames) -> Result<f64> {
    let (pos, neg) = frames.class_counts()?;
    let mut credit = 0.0;
    for (i, &si) in frames.scores.iter().enumerate() {
        if frames.gt[i] != 1 {
            continue;
        }
        for (j, &sj) in frames.scores.iter().enumerate() {
            if frames.gt[j] != 0 {
                continue;
            }
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (pos as f64 * neg as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub n_frames: usize,
    pub positives: usize,
    /// `None` where a video holds a single class.
    pub per_video: BTreeMap<String, Option<f64>>,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json("metrics report", e))?;
        crate::mil::write_text(path, &json)
    }
}

/// Frame scores and ground truth of one video.
pub fn video_frames<T: Scalar>(video: &VideoBag<T>, clip_scores: &[T]) -> Result<ScoredFrames> {
    let gt = video
        .frame_labels()
        .ok_or_else(|| Error::MissingGroundTruth(video.id.clone()))?;
    if clip_scores.len() != video.num_clips() {
        return Err(Error::Length(format!(
            "video `{}`: {} scores for {} clips",
            video.id,
            clip_scores.len(),
            video.num_clips()
        )));
    }
    let scores = clip_to_frame_scores(clip_scores, video.clip_len_frames, gt.len())?;
    ScoredFrames::new(scores, gt)
}

/// Pooled frame-level AUC over the concatenated test frames, in video order,
/// plus per-video AUC where both classes occur.
pub fn evaluate<T: Scalar>(videos: &[&VideoBag<T>], clip_scores: &[Vec<T>]) -> Result<MetricsReport> {
    if videos.len() != clip_scores.len() {
        return Err(Error::Length(format!(
            "{} videos vs {} score vectors",
            videos.len(),
            clip_scores.len()
        )));
    }
    let per: Vec<ScoredFrames> = videos
        .par_iter()
        .zip(clip_scores.par_iter())
        .map(|(v, s)| video_frames(v, s))
        .collect::<Result<_>>()?;
    let mut pooled = ScoredFrames::default();
    let mut per_video = BTreeMap::new();
    for (v, f) in videos.iter().zip(&per) {
        pooled.extend(f);
        per_video.insert(v.id.clone(), roc_auc(f).ok());
    }
    Ok(MetricsReport {
        auc: roc_auc(&pooled)?,
        n_frames: pooled.len(),
        positives: pooled.positives(),
        per_video,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(scores: &[f64], gt: &[u8]) -> ScoredFrames {
        ScoredFrames::new(scores.to_vec(), gt.to_vec()).unwrap()
    }

    #[test]
    fn expansion_cases() {
        assert_eq!(clip_to_frame_scores(&[0.7], 16, 16).unwrap(), vec![0.7; 16]);
        assert_eq!(clip_to_frame_scores(&[0.1, 0.9], 2, 3).unwrap(), vec![0.1, 0.1, 0.9]);
        assert!(clip_to_frame_scores(&[0.1, 0.9], 2, 0).unwrap().is_empty());
        assert!(clip_to_frame_scores(&[0.1, 0.9], 2, 5).is_err());
    }

    #[test]
    fn auc_cases() {
        let f = frames(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]);
        assert_eq!(roc_auc(&f).unwrap(), 1.0);
        assert_eq!(roc_auc(&frames(&[0.5, 0.5], &[1, 0])).unwrap(), 0.5);
        assert_eq!(roc_auc(&frames(&[0.2, 0.9, 0.4], &[1, 0, 0])).unwrap(), 0.0);
        assert_eq!(auc_oracle(&frames(&[0.2, 0.9, 0.4], &[1, 0, 0])).unwrap(), 0.0);
        assert!(matches!(
            roc_auc(&frames(&[0.1, 0.2], &[1, 1])),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            auc_oracle(&frames(&[0.1, 0.2], &[0, 0])),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn reversal_is_complement() {
        let f = frames(&[0.3, 0.1, 0.8, 0.6, 0.2], &[1, 0, 0, 1, 0]);
        let r = frames(&[-0.3, -0.1, -0.8, -0.6, -0.2], &[1, 0, 0, 1, 0]);
        assert!((roc_auc(&f).unwrap() + roc_auc(&r).unwrap() - 1.0).abs() < 1e-15);
        assert!((auc_oracle(&f).unwrap() + auc_oracle(&r).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(ScoredFrames::new(vec![0.1], vec![]).is_err());
        assert!(ScoredFrames::new(vec![0.1], vec![2]).is_err());
        assert!(ScoredFrames::new(vec![f64::NAN], vec![1]).is_err());
    }
}
