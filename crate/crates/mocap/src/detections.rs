//! Per-frame 2D/3D joint detection ingest, actor-scale normalization of the
//! 3D detections, and the per-frame 3D confidence gate.
//!
//! Detections live in one JSON document: a `joint_names` header (which
//! allows permutation relative to the rig on load) and a `frames` array,
//! each frame carrying `joints2d: [[x, y, c], …]` and
//! `joints3d: [[x, y, z, c], …]`. A `null` joint entry loads as confidence
//! zero with a zero position. 2D positions may lie outside the image;
//! detectors extrapolate. A CSV converter covers
//! `(frame, joint, x, y, c, X, Y, Z, c3d)` rows for interop.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::kinematics::{Camera, SkeletonRig};
use crate::{Error, Result};

/// One 2D joint detection in pixels with confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint2d {
    pub pos: Vector2<f64>,
    pub confidence: f64,
}

/// One root-relative 3D joint detection in meters with confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint3d {
    pub pos: Vector3<f64>,
    pub confidence: f64,
}

/// All detections of one frame, in rig joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: usize,
    pub joints2d: Vec<Joint2d>,
    pub joints3d: Vec<Joint3d>,
}

impl FrameDetections {
    /// A frame with every joint missing (confidence 0).
    pub fn empty(frame: usize, joint_count: usize) -> Self {
        Self {
            frame,
            joints2d: vec![
                Joint2d {
                    pos: Vector2::zeros(),
                    confidence: 0.0,
                };
                joint_count
            ],
            joints3d: vec![
                Joint3d {
                    pos: Vector3::zeros(),
                    confidence: 0.0,
                };
                joint_count
            ],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joints2d.len()
    }
}

/// A loaded detection sequence: the joint order header plus one record per
/// frame, contiguous from frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSequence {
    pub joint_names: Vec<String>,
    pub frames: Vec<FrameDetections>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    frame: usize,
    joints2d: Vec<Option<[f64; 3]>>,
    joints3d: Vec<Option<[f64; 4]>>,
}

#[derive(Serialize, Deserialize)]
struct DetectionsFile {
    joint_names: Vec<String>,
    frames: Vec<FrameRecord>,
}

impl DetectionSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Loads detections and permutes the joint slots into `rig` order using
    /// the header names. Frames must be contiguous from 0; gaps are
    /// reported by index.
    pub fn load(path: &Path, rig: &SkeletonRig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DetectionsFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        Self::from_file(file, rig)
    }

    fn from_file(file: DetectionsFile, rig: &SkeletonRig) -> Result<Self> {
        let n = rig.joint_count();
        if file.joint_names.len() != n {
            return Err(Error::InvalidDetections(format!(
                "file has {} joint slots, rig expects {}",
                file.joint_names.len(),
                n
            )));
        }
        // Permutation: slot k of the file feeds rig joint perm[k].
        let mut perm = Vec::with_capacity(n);
        for name in &file.joint_names {
            let idx = rig
                .joint_index(name)
                .ok_or_else(|| Error::InvalidDetections(format!("unknown joint '{name}'")))?;
            perm.push(idx);
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if seen[p] {
                return Err(Error::InvalidDetections("duplicate joint name".into()));
            }
            seen[p] = true;
        }

        let mut records = file.frames;
        records.sort_by_key(|r| r.frame);
        let mut frames = Vec::with_capacity(records.len());
        for (expect, rec) in records.iter().enumerate() {
            if rec.frame != expect {
                return Err(Error::FrameGap(expect));
            }
            if rec.joints2d.len() != n || rec.joints3d.len() != n {
                return Err(Error::InvalidDetections(format!(
                    "frame {} has wrong joint slot count",
                    rec.frame
                )));
            }
            let mut fd = FrameDetections::empty(rec.frame, n);
            for (slot, entry) in rec.joints2d.iter().enumerate() {
                if let Some([x, y, c]) = entry {
                    fd.joints2d[perm[slot]] = Joint2d {
                        pos: Vector2::new(*x, *y),
                        confidence: *c,
                    };
                }
            }
            for (slot, entry) in rec.joints3d.iter().enumerate() {
                if let Some([x, y, z, c]) = entry {
                    fd.joints3d[perm[slot]] = Joint3d {
                        pos: Vector3::new(*x, *y, *z),
                        confidence: *c,
                    };
                }
            }
            frames.push(fd);
        }
        Ok(Self {
            joint_names: rig.joints().iter().map(|j| j.name.clone()).collect(),
            frames,
        })
    }

    /// Writes the canonical JSON form; `save` after `load` is
    /// byte-identical for files produced by this writer.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DetectionsFile {
            joint_names: self.joint_names.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameRecord {
                    frame: f.frame,
                    joints2d: f
                        .joints2d
                        .iter()
                        .map(|j| Some([j.pos.x, j.pos.y, j.confidence]))
                        .collect(),
                    joints3d: f
                        .joints3d
                        .iter()
                        .map(|j| Some([j.pos.x, j.pos.y, j.pos.z, j.confidence]))
                        .collect(),
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Converts interop CSV rows `(frame, joint, x, y, c, X, Y, Z, c3d)`
    /// into a sequence in rig order. `joint` is a rig joint index or name;
    /// a header row is skipped automatically.
    pub fn from_csv(path: &Path, rig: &SkeletonRig) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        let n = rig.joint_count();
        let mut rows: Vec<(usize, usize, [f64; 7])> = Vec::new();
        for (ln, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            if rec.len() < 9 {
                return Err(Error::parse(path, format!("row {}: expected 9 columns", ln + 1)));
            }
            let frame: usize = match rec[0].parse() {
                Ok(f) => f,
                // Tolerate a single header row.
                Err(_) if ln == 0 => continue,
                Err(e) => return Err(Error::parse(path, format!("row {}: {}", ln + 1, e))),
            };
            let joint = match rec[1].parse::<usize>() {
                Ok(j) => j,
                Err(_) => rig.joint_index(&rec[1]).ok_or_else(|| {
                    Error::parse(path, format!("row {}: unknown joint '{}'", ln + 1, &rec[1]))
                })?,
            };
            if joint >= n {
                return Err(Error::parse(path, format!("row {}: joint {} out of range", ln + 1, joint)));
            }
            let mut vals = [0.0f64; 7];
            for (k, v) in vals.iter_mut().enumerate() {
                *v = rec[k + 2]
                    .parse()
                    .map_err(|e| Error::parse(path, format!("row {}: {}", ln + 1, e)))?;
            }
            rows.push((frame, joint, vals));
        }
        let max_frame = rows.iter().map(|r| r.0).max();
        let count = max_frame.map_or(0, |m| m + 1);
        let mut frames: Vec<FrameDetections> =
            (0..count).map(|f| FrameDetections::empty(f, n)).collect();
        let mut touched = vec![false; count];
        for (frame, joint, v) in rows {
            touched[frame] = true;
            frames[frame].joints2d[joint] = Joint2d {
                pos: Vector2::new(v[0], v[1]),
                confidence: v[2],
            };
            frames[frame].joints3d[joint] = Joint3d {
                pos: Vector3::new(v[3], v[4], v[5]),
                confidence: v[6],
            };
        }
        if let Some(gap) = touched.iter().position(|t| !t) {
            return Err(Error::FrameGap(gap));
        }
        Ok(Self {
            joint_names: rig.joints().iter().map(|j| j.name.clone()).collect(),
            frames,
        })
    }
}

/// Uniformly rescales the root-relative 3D detections so the detection
/// skeleton's total bone length matches the actor rig. Bones where either
/// endpoint has zero 3D confidence are skipped on both sides of the ratio.
/// Root-relativity is preserved; the operation is idempotent.
pub fn rescale_d3d(dets: &FrameDetections, rig: &SkeletonRig) -> Result<FrameDetections> {
    if dets.joint_count() != rig.joint_count() {
        return Err(Error::DimensionMismatch(format!(
            "detections have {} joints, rig {}",
            dets.joint_count(),
            rig.joint_count()
        )));
    }
    let mut det_len = 0.0;
    let mut actor_len = 0.0;
    for (i, joint) in rig.joints().iter().enumerate() {
        let Some(p) = joint.parent else { continue };
        if dets.joints3d[i].confidence <= 0.0 || dets.joints3d[p].confidence <= 0.0 {
            continue;
        }
        det_len += (dets.joints3d[i].pos - dets.joints3d[p].pos).norm();
        actor_len += rig.bone_length(i);
    }
    if det_len < 1e-6 {
        return Err(Error::InvalidDetections(format!(
            "frame {}: detection skeleton length {det_len:.2e} too small to rescale",
            dets.frame
        )));
    }
    let scale = actor_len / det_len;
    let mut out = dets.clone();
    for j in out.joints3d.iter_mut() {
        j.pos *= scale;
    }
    Ok(out)
}

/// Outcome of the per-frame PCK gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PckGate {
    /// Fraction of joints whose projected 3D detection misses the 2D
    /// detection by more than `0.2 ×` the 2D torso diameter.
    pub pck_error: f64,
    /// Binary trust weight for the 3D data term.
    pub w: f64,
}

/// Torso endpoints (left shoulder, right hip) used for the PCK
/// normalization, resolved by joint name.
pub fn torso_indices(rig: &SkeletonRig) -> Option<(usize, usize)> {
    Some((rig.joint_index("left_shoulder")?, rig.joint_index("right_hip")?))
}

/// Per-frame binary 3D confidence gate. Projects every rescaled 3D
/// detection shifted by `root_t` into the image and compares against the 2D
/// detections; a joint counts as misprojected when the pixel distance
/// exceeds `0.2 ×` torso diameter, when either confidence is zero, or when
/// the projection fails. `w = 1` iff the misprojection fraction stays below
/// `thres_pck`. Missing torso joints give the conservative `w = 0`.
pub fn pck_gate(
    dets: &FrameDetections,
    cam: &Camera,
    root_t: &Vector3<f64>,
    torso: (usize, usize),
    thres_pck: f64,
) -> PckGate {
    const ALPHA: f64 = 0.2;
    let n = dets.joint_count();
    let (ts, th) = torso;
    if dets.joints2d[ts].confidence <= 0.0 || dets.joints2d[th].confidence <= 0.0 {
        return PckGate { pck_error: 1.0, w: 0.0 };
    }
    let torso_diameter = (dets.joints2d[ts].pos - dets.joints2d[th].pos).norm();
    if torso_diameter <= 0.0 {
        return PckGate { pck_error: 1.0, w: 0.0 };
    }
    let mut incorrect = 0usize;
    for i in 0..n {
        let d2 = &dets.joints2d[i];
        let d3 = &dets.joints3d[i];
        if d2.confidence <= 0.0 || d3.confidence <= 0.0 {
            incorrect += 1;
            continue;
        }
        match cam.project(&(d3.pos + root_t)) {
            Ok(px) => {
                if (px - d2.pos).norm() > ALPHA * torso_diameter {
                    incorrect += 1;
                }
            }
            Err(_) => incorrect += 1,
        }
    }
    let pck_error = incorrect as f64 / n as f64;
    PckGate {
        pck_error,
        w: if pck_error < thres_pck { 1.0 } else { 0.0 },
    }
}
