//! Binary masks and per-video mask sequences.
//!
//! Pixels are stored row-major: pixel `(row, col)` lives at `row * width + col`.
//! On the wire and in manifests a mask is always carried as its RLE form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rle::{self, RleMask};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {height}x{width}")]
    ZeroDimension { height: u32, width: u32 },
    #[error("mask {height}x{width} needs {expected} pixels, got {actual}")]
    BitCount {
        height: u32,
        width: u32,
        expected: usize,
        actual: usize,
    },
    #[error("malformed rle: {0}")]
    MalformedRle(String),
    #[error("sequence declares {declared} frames but holds {actual} masks")]
    FrameCount { declared: usize, actual: usize },
    #[error("frame {index} is {got_h}x{got_w}, expected {want_h}x{want_w}")]
    MixedDimensions {
        index: usize,
        got_h: u32,
        got_w: u32,
        want_h: u32,
        want_w: u32,
    },
    #[error("mask sequence must hold at least one frame")]
    EmptySequence,
}

/// Height and width of a frame or mask, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameDims {
    pub height: u32,
    pub width: u32,
}

impl FrameDims {
    pub fn new(height: u32, width: u32) -> Self {
        Self { height, width }
    }

    pub fn pixels(self) -> usize {
        self.height as usize * self.width as usize
    }
}

/// Per-frame binary segmentation.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleMask", into = "RleMask")]
pub struct BinaryMask {
    height: u32,
    width: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: u32, width: u32, bits: Vec<bool>) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::ZeroDimension { height, width });
        }
        let expected = height as usize * width as usize;
        if bits.len() != expected {
            return Err(MaskError::BitCount {
                height,
                width,
                expected,
                actual: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    /// All-background mask.
    pub fn empty(dims: FrameDims) -> Result<Self, MaskError> {
        Self::new(dims.height, dims.width, vec![false; dims.pixels()])
    }

    pub fn from_fn(
        height: u32,
        width: u32,
        mut f: impl FnMut(u32, u32) -> bool,
    ) -> Result<Self, MaskError> {
        let mut bits = Vec::with_capacity(height as usize * width as usize);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self::new(height, width, bits)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn dims(&self) -> FrameDims {
        FrameDims::new(self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[row as usize * self.width as usize + col as usize]
    }

    /// Foreground pixel count.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_all_background(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Removes every foreground pixel that touches background or the image
    /// border through a 4-neighbour.
    pub fn eroded(&self) -> Self {
        let boundary = crate::metrics::boundary_map(self);
        let bits = self
            .bits
            .iter()
            .zip(&boundary)
            .map(|(&fg, &edge)| fg && !edge)
            .collect();
        Self {
            height: self.height,
            width: self.width,
            bits,
        }
    }
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.height, self.width)?;
        for row in self.bits.chunks(self.width as usize) {
            let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl TryFrom<RleMask> for BinaryMask {
    type Error = MaskError;

    fn try_from(value: RleMask) -> Result<Self, Self::Error> {
        rle::decode(&value)
    }
}

impl From<BinaryMask> for RleMask {
    fn from(value: BinaryMask) -> Self {
        rle::encode(&value)
    }
}

/// Masks for every frame of one video, in frame order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMaskSequence")]
pub struct MaskSequence {
    video_id: String,
    frame_count: usize,
    masks: Vec<BinaryMask>,
}

#[derive(Deserialize)]
struct RawMaskSequence {
    video_id: String,
    frame_count: usize,
    masks: Vec<BinaryMask>,
}

impl TryFrom<RawMaskSequence> for MaskSequence {
    type Error = MaskError;

    fn try_from(raw: RawMaskSequence) -> Result<Self, Self::Error> {
        if raw.frame_count != raw.masks.len() {
            return Err(MaskError::FrameCount {
                declared: raw.frame_count,
                actual: raw.masks.len(),
            });
        }
        Self::new(raw.video_id, raw.masks)
    }
}

impl MaskSequence {
    pub fn new(video_id: impl Into<String>, masks: Vec<BinaryMask>) -> Result<Self, MaskError> {
        let first = masks.first().ok_or(MaskError::EmptySequence)?.dims();
        for (index, m) in masks.iter().enumerate() {
            if m.dims() != first {
                return Err(MaskError::MixedDimensions {
                    index,
                    got_h: m.height(),
                    got_w: m.width(),
                    want_h: first.height,
                    want_w: first.width,
                });
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            frame_count: masks.len(),
            masks,
        })
    }

    /// `frame_count` all-background masks.
    pub fn empty(
        video_id: impl Into<String>,
        frame_count: usize,
        dims: FrameDims,
    ) -> Result<Self, MaskError> {
        let blank = BinaryMask::empty(dims)?;
        Self::new(video_id, vec![blank; frame_count])
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn dims(&self) -> FrameDims {
        self.masks[0].dims()
    }

    /// True when every frame is all-background, i.e. the sequence predicts
    /// "no target".
    pub fn is_all_background(&self) -> bool {
        self.masks.iter().all(BinaryMask::is_all_background)
    }
}
