//! Pipeline file formats: pose sequences (JSON array of flattened pose
//! vectors plus a little-endian f64 binary sidecar), and mesh sequences
//! (shared face list written once, per-frame vertex files, manifest JSON).

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::kinematics::{ActorTemplate, SkeletonPose, SkeletonRig};
use crate::{Error, Result};

/// Writes the pose sequence as a JSON array of flattened `(t, R, theta)`
/// vectors, plus a binary sidecar next to it (`.f64` extension): frame-major
/// row-major little-endian f64.
pub fn save_pose_sequence(path: &Path, poses: &[SkeletonPose]) -> Result<()> {
    let rows: Vec<Vec<f64>> = poses.iter().map(|p| p.flatten().iter().copied().collect()).collect();
    let text = serde_json::to_string_pretty(&rows).map_err(|e| Error::parse(path, e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;

    let sidecar = path.with_extension("f64");
    let mut bytes = Vec::with_capacity(rows.len() * rows.first().map_or(0, |r| r.len()) * 8);
    for row in &rows {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(&sidecar, bytes).map_err(|e| Error::io(&sidecar, e))
}

/// Loads a pose sequence written by [`save_pose_sequence`].
pub fn load_pose_sequence(path: &Path, rig: &SkeletonRig) -> Result<Vec<SkeletonPose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
    rows.iter()
        .map(|r| SkeletonPose::from_flat(rig, &DVector::from_vec(r.clone())))
        .collect()
}

#[derive(Serialize, Deserialize)]
pub struct MeshManifest {
    pub vertex_count: usize,
    pub face_count: usize,
    pub topology: String,
    pub frames: Vec<String>,
}

/// Writes a mesh sequence with constant topology: `topology.obj` holds the
/// shared face list, `frame_NNNNNN.obj` files hold per-frame vertices, and
/// `manifest.json` ties them together.
pub fn write_mesh_sequence(
    dir: &Path,
    triangles: &[[usize; 3]],
    frames: &[Vec<Vector3<f64>>],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let topo_path = dir.join("topology.obj");
    let mut buf = Vec::new();
    for t in triangles {
        writeln!(buf, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to vec");
    }
    std::fs::write(&topo_path, buf).map_err(|e| Error::io(&topo_path, e))?;

    let mut names = Vec::with_capacity(frames.len());
    for (f, vertices) in frames.iter().enumerate() {
        let name = format!("frame_{f:06}.obj");
        let path = dir.join(&name);
        let mut buf = Vec::new();
        for v in vertices {
            writeln!(buf, "v {} {} {}", v.x, v.y, v.z).expect("write to vec");
        }
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        names.push(name);
    }
    let manifest = MeshManifest {
        vertex_count: frames.first().map_or(0, |f| f.len()),
        face_count: triangles.len(),
        topology: "topology.obj".into(),
        frames: names,
    };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))
}

/// Loads a mesh sequence written by [`write_mesh_sequence`]. Returns the
/// shared triangles and per-frame vertex lists.
pub fn load_mesh_sequence(dir: &Path) -> Result<(Vec<[usize; 3]>, Vec<Vec<Vector3<f64>>>)> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: MeshManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
    let topo_path = dir.join(&manifest.topology);
    let topo_text = std::fs::read_to_string(&topo_path).map_err(|e| Error::io(&topo_path, e))?;
    let mut triangles = Vec::new();
    for line in topo_text.lines() {
        let mut it = line.split_whitespace();
        if it.next() == Some("f") {
            let idx: Vec<usize> = it
                .map(|tok| {
                    tok.split('/')
                        .next()
                        .and_then(|s| s.parse::<usize>().ok())
                        .map(|v| v - 1)
                        .ok_or_else(|| Error::parse(&topo_path, "bad face index"))
                })
                .collect::<Result<_>>()?;
            if idx.len() != 3 {
                return Err(Error::parse(&topo_path, "non-triangle face"));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
    }
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for name in &manifest.frames {
        let path = dir.join(name);
        let (vertices, _) = ActorTemplate::load_obj(&path)?;
        if vertices.len() != manifest.vertex_count {
            return Err(Error::parse(&path, "vertex count differs from manifest"));
        }
        frames.push(vertices);
    }
    Ok((triangles, frames))
}

/// Lists `frame_NNNNNN.png` files under a directory in frame order,
/// verifying contiguity from zero.
pub fn frame_files(dir: &Path, count: usize) -> Result<Vec<PathBuf>> {
    let mut out = Vec::with_capacity(count);
    for f in 0..count {
        let path = dir.join(format!("frame_{f:06}.png"));
        if !path.exists() {
            return Err(Error::InvalidInput(format!(
                "missing frame file {}",
                path.display()
            )));
        }
        out.push(path);
    }
    Ok(out)
}
