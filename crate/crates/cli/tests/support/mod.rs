#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use avseg_core::evaluate::write_query_masks;
use avseg_core::{BinaryMask, ExpressionQuery, FrameDims, MaskSequence};

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo")
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        if entry.file_name() == "out" {
            continue;
        }
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

pub fn demo_copy() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&demo_dir(), tmp.path());
    tmp
}

/// Runs the CLI in-process, returning (exit code, stdout, stderr).
pub fn avseg(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("avseg").chain(args.iter().copied());
    let code = avseg_cli::main_with_args(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

const SIDE: u32 = 16;

fn square(top: u32, left: u32, size: u32) -> BinaryMask {
    BinaryMask::from_fn(SIDE, SIDE, |r, c| {
        (top..top + size).contains(&r) && (left..left + size).contains(&c)
    })
    .unwrap()
}

/// A single-frame split whose scores land on 63.9 / 83.3 / 94.9.
///
/// 39 target queries: 24 exact, one shifted by a column (J 90/110, F 1),
/// 12 disjoint, 2 left empty. 6 no-target queries, one with a false positive.
/// Writes `manifest.jsonl` and a `predictions/` tree under `dir`.
pub fn calibrated_split(dir: &Path) {
    let dims = FrameDims::new(SIDE, SIDE);
    let gt_target = square(2, 2, 10);
    let mut manifest = String::new();
    let mut add = |qid: String, gt: Option<&BinaryMask>, pred: BinaryMask| {
        let gt_seq = match gt {
            Some(m) => MaskSequence::new(&qid, vec![m.clone()]),
            None => MaskSequence::empty(&qid, 1, dims),
        }
        .unwrap();
        let query = ExpressionQuery {
            query_id: qid.clone(),
            video_id: qid.clone(),
            frame_paths: vec![PathBuf::from(format!("frames/{qid}.png"))],
            audio_path: PathBuf::from(format!("audio/{qid}.wav")),
            gt_masks: Some(gt_seq),
            gt_has_target: Some(gt.is_some()),
            frame_dims: Some(dims),
        };
        manifest.push_str(&serde_json::to_string(&query).unwrap());
        manifest.push('\n');
        let pred = MaskSequence::new(&qid, vec![pred]).unwrap();
        write_query_masks(&dir.join("predictions"), &qid, &pred).unwrap();
    };
    for i in 0..39 {
        let pred = match i {
            0..=23 => gt_target.clone(),
            24 => square(2, 3, 10),
            25..=36 => square(13, 13, 3),
            _ => BinaryMask::empty(dims).unwrap(),
        };
        add(format!("t{i:02}"), Some(&gt_target), pred);
    }
    for i in 0..6 {
        let pred = if i == 0 {
            square(0, 0, 2)
        } else {
            BinaryMask::empty(dims).unwrap()
        };
        add(format!("n{i}"), None, pred);
    }
    fs::write(dir.join("manifest.jsonl"), manifest).unwrap();
}
