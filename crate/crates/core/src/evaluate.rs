//! Prediction trees on disk and scoring them against a manifest.
//!
//! A prediction tree holds `<query_id>/<frame_index>.rle` for every predicted
//! query. Each query directory is written to a temporary sibling and renamed
//! into place, so a directory either holds every frame or does not exist.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::EvalConfig;
use crate::manifest::{ExpressionQuery, Manifest};
use crate::mask::{MaskError, MaskSequence};
use crate::metrics::{self, AggregateOptions, EvaluationReport, MetricsError, QueryScore};
use crate::rle::{self, RleMask};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing predictions for {} quer{}: {}", .0.len(), if .0.len() == 1 { "y" } else { "ies" }, .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("query {query_id}: {source}")]
    Metrics {
        query_id: String,
        source: MetricsError,
    },
    #[error("query {0} has no ground truth")]
    NoGroundTruth(String),
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Aggregate(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one query's masks atomically, replacing any previous output.
pub fn write_query_masks(root: &Path, query_id: &str, masks: &MaskSequence) -> io::Result<()> {
    fs::create_dir_all(root)?;
    let staging = root.join(format!(".tmp-{query_id}"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir(&staging)?;
    for (i, mask) in masks.masks().iter().enumerate() {
        fs::write(staging.join(format!("{i}.rle")), rle::encode(mask).to_text())?;
    }
    let target = root.join(query_id);
    if target.exists() {
        fs::remove_dir_all(&target)?;
    }
    fs::rename(&staging, &target)
}

/// Reads `frame_count` masks of one query; `None` when the query directory
/// does not exist.
pub fn read_query_masks(
    root: &Path,
    query: &ExpressionQuery,
) -> Result<Option<MaskSequence>, EvalError> {
    let dir = root.join(&query.query_id);
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut masks = Vec::with_capacity(query.frame_count());
    for i in 0..query.frame_count() {
        let path = dir.join(format!("{i}.rle"));
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let corrupt = |e: MaskError| EvalError::Corrupt {
            path: path.clone(),
            message: e.to_string(),
        };
        let parsed = RleMask::parse_text(&text).map_err(corrupt)?;
        masks.push(rle::decode(&parsed).map_err(corrupt)?);
    }
    MaskSequence::new(query.video_id.clone(), masks)
        .map(Some)
        .map_err(|e| EvalError::Corrupt {
            path: dir,
            message: e.to_string(),
        })
}

/// Loads predictions for every manifest query that has them.
pub fn read_prediction_tree(
    root: &Path,
    manifest: &Manifest,
) -> Result<BTreeMap<String, MaskSequence>, EvalError> {
    let mut out = BTreeMap::new();
    for q in &manifest.queries {
        if let Some(seq) = read_query_masks(root, q)? {
            out.insert(q.query_id.clone(), seq);
        }
    }
    Ok(out)
}

/// Scores one prediction against the query's ground truth.
pub fn score_query(
    query: &ExpressionQuery,
    pred: &MaskSequence,
    eval: EvalConfig,
) -> Result<QueryScore, EvalError> {
    let has_target = query
        .ground_truth_target()
        .ok_or_else(|| EvalError::NoGroundTruth(query.query_id.clone()))?;
    let wrap = |source| EvalError::Metrics {
        query_id: query.query_id.clone(),
        source,
    };
    match &query.gt_masks {
        Some(gt) => QueryScore::compute(pred, gt, has_target, eval.boundary_tolerance).map_err(wrap),
        None if has_target => Err(EvalError::NoGroundTruth(query.query_id.clone())),
        None => {
            if let Some(dims) = query.frame_dims {
                if dims != pred.dims() {
                    return Err(wrap(MetricsError::DimensionMismatch {
                        pred_h: pred.dims().height,
                        pred_w: pred.dims().width,
                        gt_h: dims.height,
                        gt_w: dims.width,
                    }));
                }
            }
            if pred.frame_count() != query.frame_count() {
                return Err(wrap(MetricsError::FrameCountMismatch {
                    pred: pred.frame_count(),
                    gt: query.frame_count(),
                }));
            }
            Ok(QueryScore {
                gt_has_target: false,
                predicted_has_target: !pred.is_all_background(),
                score: None,
                frames: pred.frame_count(),
            })
        }
    }
}

/// Scores `predictions` against `queries`.
///
/// Queries without a prediction are an error unless `options.allow_partial`,
/// in which case they are left out of the aggregate.
pub fn evaluate<'a>(
    queries: impl IntoIterator<Item = &'a ExpressionQuery>,
    predictions: &BTreeMap<String, MaskSequence>,
    eval: EvalConfig,
    options: AggregateOptions,
) -> Result<EvaluationReport, EvalError> {
    let mut per_query = BTreeMap::new();
    let mut missing = Vec::new();
    for q in queries {
        match predictions.get(&q.query_id) {
            Some(pred) => {
                per_query.insert(q.query_id.clone(), score_query(q, pred, eval)?);
            }
            None => missing.push(q.query_id.clone()),
        }
    }
    if !missing.is_empty() && !options.allow_partial {
        return Err(EvalError::MissingPredictions(missing));
    }
    Ok(metrics::aggregate_report(per_query, options)?)
}
