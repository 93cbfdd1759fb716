//! On-disk sequence directories.
//!
//! ```text
//! <dir>/frames/000000.vpsg ...   one label map per frame
//! <dir>/flows/000000.flo ...     flow from frame t to t+1
//! <dir>/gt_ids.json              {"<frame>": {"<instance_id>": <track id>}}
//! <dir>/provenance.jsonl         tracker output only
//! <dir>/report.json              evaluation output
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::association::TrackedVideo;
use crate::error::{Error, Result};
use crate::flow::{read_flo, write_flo, FlowField};
use crate::mask::{read_segmap, write_segmap, SegmentationMap};
use crate::simulator::{apply_gt_ids, GeneratedSequence};

pub const FRAMES_DIR: &str = "frames";
pub const FLOWS_DIR: &str = "flows";
pub const GT_IDS_FILE: &str = "gt_ids.json";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";
pub const REPORT_FILE: &str = "report.json";

pub type GtIds = Vec<BTreeMap<u16, u16>>;

pub fn frame_file(index: usize) -> String {
    format!("{index:06}.vpsg")
}

pub fn flow_file(index: usize) -> String {
    format!("{index:06}.flo")
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::from(e).at(path))
}

/// Files in `dir` with the given extension, sorted by name.
fn listing(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::from(e).at(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    out.sort();
    Ok(out)
}

pub fn write_frames(dir: &Path, frames: &[SegmentationMap]) -> Result<()> {
    create_dir(dir)?;
    for (t, f) in frames.iter().enumerate() {
        write_segmap(f, dir.join(frame_file(t)))?;
    }
    Ok(())
}

pub fn write_flows(dir: &Path, flows: &[FlowField]) -> Result<()> {
    create_dir(dir)?;
    for (t, f) in flows.iter().enumerate() {
        write_flo(f, dir.join(flow_file(t)))?;
    }
    Ok(())
}

/// Every `.vpsg` in `dir`, in file-name order.
pub fn read_frames(dir: &Path) -> Result<Vec<SegmentationMap>> {
    listing(dir, "vpsg")?.iter().map(read_segmap).collect()
}

/// Every `.flo` in `dir`, in file-name order.
pub fn read_flows(dir: &Path) -> Result<Vec<FlowField>> {
    listing(dir, "flo")?.iter().map(read_flo).collect()
}

pub fn write_gt_ids(path: &Path, ids: &GtIds) -> Result<()> {
    let keyed: BTreeMap<usize, &BTreeMap<u16, u16>> = ids.iter().enumerate().collect();
    let text = serde_json::to_string_pretty(&keyed)?;
    fs::write(path, text + "\n").map_err(|e| Error::from(e).at(path))
}

pub fn read_gt_ids(path: &Path) -> Result<GtIds> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    let keyed: BTreeMap<usize, BTreeMap<u16, u16>> =
        serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))?;
    if keyed.keys().copied().ne(0..keyed.len()) {
        return Err(Error::InvalidMap(format!("{}: frame keys are not 0..n", path.display())));
    }
    Ok(keyed.into_values().collect())
}

/// Writes a simulator sequence in the standard layout.
pub fn write_sequence(dir: &Path, seq: &GeneratedSequence) -> Result<()> {
    write_frames(&dir.join(FRAMES_DIR), &seq.frames)?;
    write_flows(&dir.join(FLOWS_DIR), &seq.flows)?;
    write_gt_ids(&dir.join(GT_IDS_FILE), &seq.gt_ids)
}

/// Reads a sequence written by [`write_sequence`].
pub fn read_sequence(dir: &Path) -> Result<GeneratedSequence> {
    let frames = read_frames(&dir.join(FRAMES_DIR))?;
    let flows = read_flows(&dir.join(FLOWS_DIR))?;
    let gt_ids = read_gt_ids(&dir.join(GT_IDS_FILE))?;
    let gt_frames = apply_gt_ids(&frames, &gt_ids)?;
    Ok(GeneratedSequence {
        frames,
        flows,
        gt_ids,
        gt_frames,
    })
}

/// Frames of a directory as evaluation input: relabelled through
/// `gt_ids.json` when the directory has one.
pub fn read_eval_frames(dir: &Path) -> Result<Vec<SegmentationMap>> {
    let frames = read_frames(&dir.join(FRAMES_DIR))?;
    let ids = dir.join(GT_IDS_FILE);
    if ids.exists() {
        apply_gt_ids(&frames, &read_gt_ids(&ids)?)
    } else {
        Ok(frames)
    }
}

/// Writes tracker output: frames with persistent ids and the provenance log.
pub fn write_tracked(dir: &Path, video: &TrackedVideo) -> Result<()> {
    write_frames(&dir.join(FRAMES_DIR), &video.frames)?;
    let path = dir.join(PROVENANCE_FILE);
    fs::write(&path, video.provenance_jsonl()?).map_err(|e| Error::from(e).at(path))
}
