//! Key-frame compression plans: the video is cut into clips, each contributing
//! one full-resolution key frame, a few downscaled neighbours, and one
//! segmentation prompt slot.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler arguments: {0}")]
    InvalidArguments(String),
    #[error("unknown sampling policy `{0}`")]
    UnknownPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clip {
    pub start: usize,
    pub end: usize,
    pub key_frame_index: usize,
    pub compressed_indices: Vec<usize>,
    pub seg_slot: usize,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub clips: Vec<Clip>,
    pub total_frames: usize,
    /// Per-side scale applied to compressed frames before they are sent.
    pub compressed_scale: f64,
}

impl FramePlan {
    pub fn key_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.clips.iter().map(|c| c.key_frame_index)
    }

    pub fn compressed_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.clips
            .iter()
            .flat_map(|c| c.compressed_indices.iter().copied())
    }

    pub fn seg_slots(&self) -> usize {
        self.clips.len()
    }

    /// Checks partition, key-frame and slot invariants.
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |msg: String| Err(SamplerError::InvalidArguments(msg));
        let mut cursor = 0;
        for (i, clip) in self.clips.iter().enumerate() {
            if clip.start != cursor || clip.end <= clip.start {
                return bad(format!("clip {i} does not continue the partition"));
            }
            if !(clip.start..clip.end).contains(&clip.key_frame_index) {
                return bad(format!("clip {i} key frame outside its range"));
            }
            if clip.seg_slot != i {
                return bad(format!("clip {i} has seg slot {}", clip.seg_slot));
            }
            let ok = clip.compressed_indices.windows(2).all(|w| w[0] < w[1])
                && clip.compressed_indices.iter().all(|&f| {
                    (clip.start..clip.end).contains(&f) && f != clip.key_frame_index
                });
            if !ok {
                return bad(format!("clip {i} compressed frames malformed"));
            }
            cursor = clip.end;
        }
        if cursor != self.total_frames || self.clips.is_empty() {
            return bad("clips do not cover the video".into());
        }
        Ok(())
    }
}

/// A named frame-selection strategy.
pub trait SamplingPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    fn plan(
        &self,
        total_frames: usize,
        clip_count: usize,
        compressed_per_clip: usize,
    ) -> Result<FramePlan, SamplerError>;
}

/// Uniform clip partition, lower-median key frame, evenly spaced compressed
/// neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPlus {
    pub compressed_scale: f64,
}

impl Default for UniformPlus {
    fn default() -> Self {
        Self {
            compressed_scale: DEFAULT_COMPRESSED_SCALE,
        }
    }
}

pub const DEFAULT_COMPRESSED_SCALE: f64 = 0.25;

/// `round(i * total / clips)` with halves rounded up, in integer arithmetic.
fn boundary(i: usize, total: usize, clips: usize) -> usize {
    (2 * i * total + clips) / (2 * clips)
}

/// Picks `want` of `n` candidate positions at bin centres.
fn spread(n: usize, want: usize) -> Vec<usize> {
    if want >= n {
        return (0..n).collect();
    }
    (0..want).map(|j| (2 * j + 1) * n / (2 * want)).collect()
}

impl SamplingPolicy for UniformPlus {
    fn name(&self) -> &'static str {
        "uniform-plus"
    }

    fn plan(
        &self,
        total_frames: usize,
        clip_count: usize,
        compressed_per_clip: usize,
    ) -> Result<FramePlan, SamplerError> {
        if total_frames == 0 {
            return Err(SamplerError::InvalidArguments("video has no frames".into()));
        }
        if clip_count == 0 || clip_count > total_frames {
            return Err(SamplerError::InvalidArguments(format!(
                "clip count {clip_count} must be in 1..={total_frames}"
            )));
        }
        if !(self.compressed_scale > 0.0 && self.compressed_scale <= 1.0) {
            return Err(SamplerError::InvalidArguments(format!(
                "compressed scale {} must be in (0, 1]",
                self.compressed_scale
            )));
        }
        let clips = (0..clip_count)
            .map(|slot| {
                let start = boundary(slot, total_frames, clip_count);
                let end = boundary(slot + 1, total_frames, clip_count);
                let key = start + (end - start - 1) / 2;
                let neighbours: Vec<usize> = (start..end).filter(|&f| f != key).collect();
                let compressed_indices = spread(neighbours.len(), compressed_per_clip)
                    .into_iter()
                    .map(|i| neighbours[i])
                    .collect();
                Clip {
                    start,
                    end,
                    key_frame_index: key,
                    compressed_indices,
                    seg_slot: slot,
                }
            })
            .collect();
        Ok(FramePlan {
            clips,
            total_frames,
            compressed_scale: self.compressed_scale,
        })
    }
}

pub const POLICY_NAMES: &[&str] = &["uniform-plus"];

/// Looks up a policy by its registry name.
pub fn policy_by_name(
    name: &str,
    compressed_scale: f64,
) -> Result<Box<dyn SamplingPolicy>, SamplerError> {
    match name {
        "uniform-plus" => Ok(Box::new(UniformPlus { compressed_scale })),
        other => Err(SamplerError::UnknownPolicy(other.to_string())),
    }
}

/// Plans with the default Uniform+ policy.
pub fn plan_uniform_plus(
    total_frames: usize,
    clip_count: usize,
    compressed_per_clip: usize,
) -> Result<FramePlan, SamplerError> {
    UniformPlus::default().plan(total_frames, clip_count, compressed_per_clip)
}
