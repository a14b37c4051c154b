//! Line-delimited JSON dataset manifests, one [`ExpressionQuery`] per line.
//!
//! Relative frame and audio paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{FrameDims, MaskSequence};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("manifest {0} has no queries")]
    Empty(PathBuf),
    #[error("duplicate query id `{0}`")]
    DuplicateQuery(String),
}

/// One (video, spoken expression) task item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionQuery {
    pub query_id: String,
    pub video_id: String,
    pub frame_paths: Vec<PathBuf>,
    pub audio_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_masks: Option<MaskSequence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_has_target: Option<bool>,
    /// Output dimensions used when no ground truth is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_dims: Option<FrameDims>,
}

impl ExpressionQuery {
    pub fn validate(&self) -> Result<(), String> {
        if self.query_id.is_empty()
            || self.query_id == "."
            || self.query_id == ".."
            || self.query_id.contains(['/', '\\'])
        {
            return Err(format!(
                "query_id `{}` is not usable as a directory name",
                self.query_id
            ));
        }
        if self.frame_paths.is_empty() {
            return Err("frame_paths is empty".into());
        }
        if let Some(gt) = &self.gt_masks {
            if gt.frame_count() != self.frame_paths.len() {
                return Err(format!(
                    "gt_masks has {} frames but frame_paths has {}",
                    gt.frame_count(),
                    self.frame_paths.len()
                ));
            }
            if self.gt_has_target == Some(false) && !gt.is_all_background() {
                return Err("gt_has_target is false but gt_masks has foreground".into());
            }
            if let Some(d) = self.frame_dims {
                if d != gt.dims() {
                    return Err("frame_dims disagrees with gt_masks".into());
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }

    /// Ground-truth target flag, inferred from the masks when not given.
    pub fn ground_truth_target(&self) -> Option<bool> {
        self.gt_has_target
            .or_else(|| self.gt_masks.as_ref().map(|m| !m.is_all_background()))
    }

    /// Dimensions known without touching frame files.
    pub fn declared_dims(&self) -> Option<FrameDims> {
        self.gt_masks.as_ref().map(MaskSequence::dims).or(self.frame_dims)
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub queries: Vec<ExpressionQuery>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path).map_err(|source| ManifestError::Io {
            path: path.clone(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: PathBuf) -> Result<Self, ManifestError> {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut queries = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| ManifestError::Parse {
                path: path.clone(),
                line: idx + 1,
                message,
            };
            let mut query: ExpressionQuery =
                serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            query.validate().map_err(parse_err)?;
            if !seen.insert(query.query_id.clone()) {
                return Err(ManifestError::DuplicateQuery(query.query_id));
            }
            for p in &mut query.frame_paths {
                *p = base.join(&*p);
            }
            query.audio_path = base.join(&query.audio_path);
            queries.push(query);
        }
        if queries.is_empty() {
            return Err(ManifestError::Empty(path));
        }
        Ok(Self { path, queries })
    }

    /// True when every query carries enough ground truth to be scored.
    pub fn has_ground_truth(&self) -> bool {
        self.queries.iter().all(|q| match q.ground_truth_target() {
            Some(true) => q.gt_masks.is_some(),
            Some(false) => true,
            None => false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"query_id":"q1","video_id":"v1","frame_paths":["f/0.png","f/1.png"],"audio_path":"a.wav","gt_has_target":false}"#;

    #[test]
    fn resolves_relative_paths() {
        let m = Manifest::parse(LINE, PathBuf::from("/data/set/manifest.jsonl")).unwrap();
        let q = &m.queries[0];
        assert_eq!(q.frame_paths[1], PathBuf::from("/data/set/f/1.png"));
        assert_eq!(q.audio_path, PathBuf::from("/data/set/a.wav"));
        assert!(m.has_ground_truth());
    }

    #[test]
    fn empty_manifest_is_an_error() {
        assert!(matches!(
            Manifest::parse("\n\n", PathBuf::from("m.jsonl")),
            Err(ManifestError::Empty(_))
        ));
    }

    #[test]
    fn rejects_invalid_records() {
        let dup = format!("{LINE}\n{LINE}");
        assert!(matches!(
            Manifest::parse(&dup, PathBuf::from("m.jsonl")),
            Err(ManifestError::DuplicateQuery(_))
        ));
        let no_frames = r#"{"query_id":"q","video_id":"v","frame_paths":[],"audio_path":"a"}"#;
        assert!(matches!(
            Manifest::parse(no_frames, PathBuf::from("m.jsonl")),
            Err(ManifestError::Parse { line: 1, .. })
        ));
        let bad_id = r#"{"query_id":"../x","video_id":"v","frame_paths":["a"],"audio_path":"a"}"#;
        assert!(Manifest::parse(bad_id, PathBuf::from("m.jsonl")).is_err());
        let wrong_len = r#"{"query_id":"q","video_id":"v","frame_paths":["a","b"],"audio_path":"a","gt_masks":{"video_id":"v","frame_count":1,"masks":[{"height":1,"width":1,"counts":[1]}]}}"#;
        assert!(Manifest::parse(wrong_len, PathBuf::from("m.jsonl")).is_err());
        let contradiction = r#"{"query_id":"q","video_id":"v","frame_paths":["a"],"audio_path":"a","gt_has_target":false,"gt_masks":{"video_id":"v","frame_count":1,"masks":[{"height":1,"width":1,"counts":[0,1]}]}}"#;
        assert!(Manifest::parse(contradiction, PathBuf::from("m.jsonl")).is_err());
    }

    #[test]
    fn target_flag_inferred_from_masks() {
        let line = r#"{"query_id":"q","video_id":"v","frame_paths":["a"],"audio_path":"a","gt_masks":{"video_id":"v","frame_count":1,"masks":[{"height":1,"width":2,"counts":[1,1]}]}}"#;
        let m = Manifest::parse(line, PathBuf::from("m.jsonl")).unwrap();
        assert_eq!(m.queries[0].ground_truth_target(), Some(true));
        assert_eq!(m.queries[0].declared_dims(), Some(FrameDims::new(1, 2)));
    }
}
