//! Region Jaccard, boundary F-measure, and the leaderboard aggregation
//! (J&F, N-acc, T-acc, final score).
//!
//! Per-frame scores live in `[0, 1]`; aggregate report fields are percentages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, FrameDims, MaskSequence};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dimension mismatch: prediction {pred_h}x{pred_w}, ground truth {gt_h}x{gt_w}")]
    DimensionMismatch {
        pred_h: u32,
        pred_w: u32,
        gt_h: u32,
        gt_w: u32,
    },
    #[error("frame count mismatch: prediction {pred}, ground truth {gt}")]
    FrameCountMismatch { pred: usize, gt: usize },
    #[error("no {0} queries to score; enable partial reports to omit the column")]
    EmptySplit(Split),
    #[error("nothing to aggregate")]
    NoQueries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Target,
    NoTarget,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Target => "target-present",
            Split::NoTarget => "no-target",
        })
    }
}

fn check_dims(pred: &BinaryMask, gt: &BinaryMask) -> Result<(), MetricsError> {
    if pred.dims() != gt.dims() {
        return Err(MetricsError::DimensionMismatch {
            pred_h: pred.height(),
            pred_w: pred.width(),
            gt_h: gt.height(),
            gt_w: gt.width(),
        });
    }
    Ok(())
}

/// Intersection over union. Two empty masks score 1.0.
pub fn region_jaccard(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    check_dims(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Flags foreground pixels that have a background 4-neighbour or sit on the
/// image border.
pub fn boundary_map(mask: &BinaryMask) -> Vec<bool> {
    let (h, w) = (mask.height() as usize, mask.width() as usize);
    let bits = mask.bits();
    let mut out = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if !bits[i] {
                continue;
            }
            out[i] = r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !bits[i - w]
                || !bits[i + w]
                || !bits[i - 1]
                || !bits[i + 1];
        }
    }
    out
}

/// Offsets `(dr, dc)` inside the closed disc of radius `tolerance`.
fn disc_offsets(tolerance: u32) -> Vec<(i64, i64)> {
    let t = tolerance as i64;
    let mut offsets = Vec::new();
    for dr in -t..=t {
        for dc in -t..=t {
            if dr * dr + dc * dc <= t * t {
                offsets.push((dr, dc));
            }
        }
    }
    // nearest first so the common case exits early
    offsets.sort_by_key(|&(dr, dc)| dr * dr + dc * dc);
    offsets
}

/// Number of boundary pixels in `from` that have a boundary pixel of `to`
/// within the disc.
fn matched(from: &[bool], to: &[bool], dims: FrameDims, disc: &[(i64, i64)]) -> usize {
    let (h, w) = (dims.height as i64, dims.width as i64);
    let mut count = 0;
    for (i, _) in from.iter().enumerate().filter(|(_, &b)| b) {
        let (r, c) = ((i as i64) / w, (i as i64) % w);
        let hit = disc.iter().any(|&(dr, dc)| {
            let (rr, cc) = (r + dr, c + dc);
            rr >= 0 && rr < h && cc >= 0 && cc < w && to[(rr * w + cc) as usize]
        });
        count += hit as usize;
    }
    count
}

/// Boundary F-measure with a Euclidean matching tolerance in pixels.
pub fn boundary_f(
    pred: &BinaryMask,
    gt: &BinaryMask,
    tolerance: u32,
) -> Result<f64, MetricsError> {
    check_dims(pred, gt)?;
    let pb = boundary_map(pred);
    let gb = boundary_map(gt);
    let n_pred = pb.iter().filter(|&&b| b).count();
    let n_gt = gb.iter().filter(|&&b| b).count();
    match (n_pred, n_gt) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let disc = disc_offsets(tolerance);
    let precision = matched(&pb, &gb, pred.dims(), &disc) as f64 / n_pred as f64;
    let recall = matched(&gb, &pb, pred.dims(), &disc) as f64 / n_gt as f64;
    Ok(f_measure(precision, recall))
}

/// Harmonic mean of precision and recall, 0.0 when both are zero.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `ceil(0.008 * diagonal)`, at least one pixel.
pub fn default_tolerance(height: u32, width: u32) -> u32 {
    let diag = ((height as f64).powi(2) + (width as f64).powi(2)).sqrt();
    ((0.008 * diag).ceil() as u32).max(1)
}

/// How the boundary tolerance is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryTolerance {
    /// Derived from the frame diagonal via [`default_tolerance`].
    #[default]
    Auto,
    Fixed(u32),
}

impl BoundaryTolerance {
    pub fn resolve(self, dims: FrameDims) -> u32 {
        match self {
            BoundaryTolerance::Auto => default_tolerance(dims.height, dims.width),
            BoundaryTolerance::Fixed(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub j: f64,
    pub f: f64,
}

impl FrameScore {
    pub fn jf(&self) -> f64 {
        (self.j + self.f) / 2.0
    }
}

/// Scores every frame pair of two sequences.
pub fn frame_scores(
    pred: &MaskSequence,
    gt: &MaskSequence,
    tolerance: BoundaryTolerance,
) -> Result<Vec<FrameScore>, MetricsError> {
    if pred.frame_count() != gt.frame_count() {
        return Err(MetricsError::FrameCountMismatch {
            pred: pred.frame_count(),
            gt: gt.frame_count(),
        });
    }
    let tol = tolerance.resolve(gt.dims());
    pred.masks()
        .iter()
        .zip(gt.masks())
        .map(|(p, g)| {
            Ok(FrameScore {
                j: region_jaccard(p, g)?,
                f: boundary_f(p, g, tol)?,
            })
        })
        .collect()
}

/// Mean per-frame J and F at the default tolerance.
pub fn sequence_jf(pred: &MaskSequence, gt: &MaskSequence) -> Result<FrameScore, MetricsError> {
    sequence_jf_with(pred, gt, BoundaryTolerance::Auto)
}

pub fn sequence_jf_with(
    pred: &MaskSequence,
    gt: &MaskSequence,
    tolerance: BoundaryTolerance,
) -> Result<FrameScore, MetricsError> {
    let frames = frame_scores(pred, gt, tolerance)?;
    let n = frames.len() as f64;
    Ok(FrameScore {
        j: frames.iter().map(|s| s.j).sum::<f64>() / n,
        f: frames.iter().map(|s| s.f).sum::<f64>() / n,
    })
}

/// Scores of one expression query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub gt_has_target: bool,
    /// False iff every predicted frame is all-background.
    pub predicted_has_target: bool,
    /// Region and boundary means; present only for target-present queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<FrameScore>,
    pub frames: usize,
}

impl QueryScore {
    /// Scores a prediction against ground truth. J and F are computed only
    /// when the query has a target.
    pub fn compute(
        pred: &MaskSequence,
        gt: &MaskSequence,
        gt_has_target: bool,
        tolerance: BoundaryTolerance,
    ) -> Result<Self, MetricsError> {
        if pred.frame_count() != gt.frame_count() {
            return Err(MetricsError::FrameCountMismatch {
                pred: pred.frame_count(),
                gt: gt.frame_count(),
            });
        }
        if pred.dims() != gt.dims() {
            return Err(MetricsError::DimensionMismatch {
                pred_h: pred.dims().height,
                pred_w: pred.dims().width,
                gt_h: gt.dims().height,
                gt_w: gt.dims().width,
            });
        }
        let score = if gt_has_target {
            Some(sequence_jf_with(pred, gt, tolerance)?)
        } else {
            None
        };
        Ok(Self {
            gt_has_target,
            predicted_has_target: !pred.is_all_background(),
            score,
            frames: pred.frame_count(),
        })
    }
}

/// How J&F is averaged over target-present queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JfAveraging {
    /// Mean over frames within a query, then mean over queries.
    #[default]
    PerQuery,
    /// Every frame of every target query weighted equally.
    PooledFrames,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AggregateOptions {
    pub averaging: JfAveraging,
    /// Report an empty split as absent instead of failing.
    pub allow_partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub jf_mean: Option<f64>,
    pub j_mean: Option<f64>,
    pub f_mean: Option<f64>,
    pub n_acc: Option<f64>,
    pub t_acc: Option<f64>,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub target_queries: usize,
    pub no_target_queries: usize,
    pub per_query: BTreeMap<String, QueryScore>,
}

/// Mean of the three leaderboard columns.
pub fn final_score(jf: f64, n_acc: f64, t_acc: f64) -> f64 {
    (jf + n_acc + t_acc) / 3.0
}

/// Folds per-query scores into the leaderboard columns.
///
/// N-acc counts no-target queries predicted all-background; T-acc counts
/// target queries predicted non-empty. J&F covers target queries only.
pub fn aggregate_report(
    per_query: BTreeMap<String, QueryScore>,
    options: AggregateOptions,
) -> Result<EvaluationReport, MetricsError> {
    if per_query.is_empty() {
        return Err(MetricsError::NoQueries);
    }
    let targets: Vec<&QueryScore> = per_query.values().filter(|q| q.gt_has_target).collect();
    let no_targets: Vec<&QueryScore> = per_query.values().filter(|q| !q.gt_has_target).collect();

    if !options.allow_partial {
        if targets.is_empty() {
            return Err(MetricsError::EmptySplit(Split::Target));
        }
        if no_targets.is_empty() {
            return Err(MetricsError::EmptySplit(Split::NoTarget));
        }
    }

    let pct = |hits: usize, n: usize| (n > 0).then(|| hits as f64 / n as f64 * 100.0);
    let n_acc = pct(
        no_targets.iter().filter(|q| !q.predicted_has_target).count(),
        no_targets.len(),
    );
    let t_acc = pct(
        targets.iter().filter(|q| q.predicted_has_target).count(),
        targets.len(),
    );

    let (j_mean, f_mean) = if targets.is_empty() {
        (None, None)
    } else {
        let scores = targets.iter().map(|q| {
            (
                q.score.expect("target-present query carries J and F"),
                q.frames,
            )
        });
        let (j, f) = match options.averaging {
            JfAveraging::PerQuery => {
                let n = targets.len() as f64;
                let (sj, sf) = scores.fold((0.0, 0.0), |(a, b), (s, _)| (a + s.j, b + s.f));
                (sj / n, sf / n)
            }
            JfAveraging::PooledFrames => {
                let (sj, sf, n) = scores.fold((0.0, 0.0, 0usize), |(a, b, n), (s, k)| {
                    (a + s.j * k as f64, b + s.f * k as f64, n + k)
                });
                (sj / n as f64, sf / n as f64)
            }
        };
        (Some(j * 100.0), Some(f * 100.0))
    };
    let jf_mean = j_mean.zip(f_mean).map(|(j, f)| (j + f) / 2.0);

    let present: Vec<f64> = [jf_mean, n_acc, t_acc].into_iter().flatten().collect();
    let final_score = present.iter().sum::<f64>() / present.len() as f64;

    Ok(EvaluationReport {
        jf_mean,
        j_mean,
        f_mean,
        n_acc,
        t_acc,
        final_score,
        target_queries: targets.len(),
        no_target_queries: no_targets.len(),
        per_query,
    })
}

/// One-decimal rounding used when numbers are displayed.
pub fn round1(value: f64) -> f64 {
    (value * 10.0).round() / 10.0
}
