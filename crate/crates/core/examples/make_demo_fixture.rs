//! Writes the bundled demo fixture set: three synthetic videos, each with one
//! target-present and one no-target spoken expression, plus mock backend
//! fixtures and two run configs (gate on / gate off).
//!
//! Usage: `cargo run -p avseg-core --example make_demo_fixture -- [DIR]`
//! (defaults to `fixtures/demo`).

use std::fs;
use std::path::{Path, PathBuf};

use avseg_core::backends::audio_digest;
use avseg_core::rle;
use avseg_core::{BinaryMask, ExpressionQuery, FrameDims, MaskSequence};
use image::{Rgb, RgbImage};

const HEIGHT: u32 = 24;
const WIDTH: u32 = 32;

struct Video {
    id: &'static str,
    frames: usize,
    colour: [u8; 3],
    /// Top-left corner of the moving object in frame `i`.
    track: fn(usize) -> (u32, u32),
    size: u32,
}

struct Expression {
    query_id: &'static str,
    video: usize,
    text: &'static str,
    has_target: bool,
}

const VIDEOS: [Video; 3] = [
    Video {
        id: "v-panda",
        frames: 8,
        colour: [230, 230, 230],
        track: |i| (10, 2 + 3 * i as u32),
        size: 8,
    },
    Video {
        id: "v-bird",
        frames: 6,
        colour: [200, 60, 40],
        track: |i| (2 + 2 * i as u32, 24 - 4 * i as u32),
        size: 6,
    },
    Video {
        id: "v-car",
        frames: 7,
        colour: [40, 80, 220],
        track: |i| (14, 4 + 2 * i as u32),
        size: 7,
    },
];

const EXPRESSIONS: [Expression; 6] = [
    Expression {
        query_id: "panda-rolling",
        video: 0,
        text: "the panda rolling on the ground",
        has_target: true,
    },
    Expression {
        query_id: "panda-no-target",
        video: 0,
        text: "the zebra drinking from the river",
        has_target: false,
    },
    Expression {
        query_id: "bird-flying",
        video: 1,
        text: "the bird flying to the upper left",
        has_target: true,
    },
    Expression {
        query_id: "bird-no-target",
        video: 1,
        text: "the cat sleeping on the sofa",
        has_target: false,
    },
    Expression {
        query_id: "car-turning",
        video: 2,
        text: "the car moving to the right",
        has_target: true,
    },
    Expression {
        query_id: "car-no-target",
        video: 2,
        text: "",
        has_target: false,
    },
];

fn object_mask(v: &Video, frame: usize) -> BinaryMask {
    let (top, left) = (v.track)(frame);
    BinaryMask::from_fn(HEIGHT, WIDTH, |r, c| {
        (top..top + v.size).contains(&r) && (left..left + v.size).contains(&c)
    })
    .unwrap()
}

/// What the mock segmenter returns for a no-target expression: a fixed blob
/// in the corner, so an ungated run never abstains.
fn distractor() -> BinaryMask {
    BinaryMask::from_fn(HEIGHT, WIDTH, |r, c| r < 4 && c < 4).unwrap()
}

fn frame_image(v: &Video, frame: usize) -> RgbImage {
    let mask = object_mask(v, frame);
    RgbImage::from_fn(WIDTH, HEIGHT, |x, y| {
        if mask.get(y, x) {
            Rgb(v.colour)
        } else {
            Rgb([20 + (x * 3) as u8, 90, 20 + (y * 4) as u8])
        }
    })
}

/// 16-bit mono PCM WAV; the tone frequency makes every clip distinct.
fn wav(seed: usize) -> Vec<u8> {
    let rate = 8000u32;
    let samples: Vec<i16> = (0..400)
        .map(|n| {
            let t = n as f64 / rate as f64;
            ((2.0 * std::f64::consts::PI * (220.0 + 55.0 * seed as f64) * t).sin() * 8000.0) as i16
        })
        .collect();
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::new();
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

fn config(label: &str, gate: bool) -> String {
    let mut text = format!(
        r#"label = "{label}"
manifest_path = "manifest.jsonl"
output_dir = "out/{label}"
gate_enabled = {gate}
gate_threshold = 0.5
workers = 1

[sampler]
policy = "uniform-plus"
clip_count = 3
compressed_per_clip = 1
"#
    );
    for kind in ["transcriber", "gate", "segmenter"] {
        text.push_str(&format!(
            "\n[[endpoints]]\nkind = \"{kind}\"\nbase_url = \"mock:mock\"\nmax_retries = 2\ninitial_backoff_ms = 1\n"
        ));
    }
    text
}

fn main() -> std::io::Result<()> {
    let root: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("fixtures/demo"));
    let write = |rel: &Path, bytes: &[u8]| -> std::io::Result<()> {
        let path = root.join(rel);
        fs::create_dir_all(path.parent().unwrap())?;
        fs::write(path, bytes)
    };

    for v in &VIDEOS {
        for i in 0..v.frames {
            let path = root.join(format!("frames/{}/{i}.png", v.id));
            fs::create_dir_all(path.parent().unwrap())?;
            frame_image(v, i).save(&path).map_err(std::io::Error::other)?;
        }
    }

    let dims = FrameDims::new(HEIGHT, WIDTH);
    let mut manifest = String::new();
    for (n, e) in EXPRESSIONS.iter().enumerate() {
        let v = &VIDEOS[e.video];
        let audio = wav(n);
        let audio_rel = format!("audio/{}.wav", e.query_id);
        write(Path::new(&audio_rel), &audio)?;

        let gt = if e.has_target {
            MaskSequence::new(v.id, (0..v.frames).map(|i| object_mask(v, i)).collect())
        } else {
            MaskSequence::empty(v.id, v.frames, dims)
        }
        .unwrap();
        let query = ExpressionQuery {
            query_id: e.query_id.into(),
            video_id: v.id.into(),
            frame_paths: (0..v.frames)
                .map(|i| PathBuf::from(format!("frames/{}/{i}.png", v.id)))
                .collect(),
            audio_path: audio_rel.into(),
            gt_masks: Some(gt.clone()),
            gt_has_target: Some(e.has_target),
            frame_dims: Some(dims),
        };
        manifest.push_str(&serde_json::to_string(&query).unwrap());
        manifest.push('\n');

        let fixture = PathBuf::from("mock").join(audio_digest(&audio));
        write(&fixture.join("transcript.txt"), format!("{}\n", e.text).as_bytes())?;
        let gate = if e.has_target { "target\n" } else { "no-target\n" };
        write(&fixture.join("gate.txt"), gate.as_bytes())?;
        for (i, m) in gt.masks().iter().enumerate() {
            let served = if e.has_target { m.clone() } else { distractor() };
            write(
                &fixture.join(format!("masks/{i}.rle")),
                rle::encode(&served).to_text().as_bytes(),
            )?;
        }
    }
    write(Path::new("manifest.jsonl"), manifest.as_bytes())?;
    write(Path::new("with-gate.toml"), config("with-gate", true).as_bytes())?;
    write(Path::new("without-gate.toml"), config("without-gate", false).as_bytes())?;
    println!("wrote demo fixture set to {}", root.display());
    Ok(())
}
