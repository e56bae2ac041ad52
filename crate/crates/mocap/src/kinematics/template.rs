use nalgebra::Vector3;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

use super::SkeletonRig;

/// Actor template: triangle mesh in the rest pose plus per-vertex sparse
/// skinning weights.
#[derive(Debug, Clone)]
pub struct ActorTemplate {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Per-vertex `(joint index, weight)` pairs; weights are nonnegative and
    /// sum to one per vertex.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
}

impl ActorTemplate {
    /// Validates weights (nonnegative, sum 1 within 1e-6, known joints) and
    /// edge manifoldness (every edge bounds at most two triangles).
    pub fn validate(&self, rig: &SkeletonRig) -> Result<()> {
        if self.skin_weights.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} vertices but {} weight records",
                self.vertices.len(),
                self.skin_weights.len()
            )));
        }
        for (vi, weights) in self.skin_weights.iter().enumerate() {
            if weights.is_empty() {
                return Err(Error::InvalidMesh(format!("vertex {vi} has no skin weights")));
            }
            let mut sum = 0.0;
            for &(joint, w) in weights {
                if joint >= rig.joint_count() {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {vi} references unknown joint {joint}"
                    )));
                }
                if w < 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "vertex {vi} has a negative skin weight"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidMesh(format!(
                    "vertex {vi} weights sum to {sum}, expected 1"
                )));
            }
        }
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if a >= self.vertices.len() || b >= self.vertices.len() {
                    return Err(Error::InvalidMesh("triangle references missing vertex".into()));
                }
                let key = (a.min(b), a.max(b));
                let c = edge_count.entry(key).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({}, {}) bounds more than two triangles",
                        key.0, key.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Loads vertices and triangle faces from an OBJ file. Faces with more
    /// than three vertices are fan-triangulated; normals, texture
    /// coordinates and other statements are ignored.
    pub fn load_obj(path: &Path) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let mut c = [0.0f64; 3];
                    for v in c.iter_mut() {
                        *v = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| Error::parse(path, format!("bad vertex at line {}", ln + 1)))?;
                    }
                    vertices.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|tok| {
                            let first = tok.split('/').next().unwrap_or("");
                            first
                                .parse::<i64>()
                                .ok()
                                .and_then(|v| {
                                    if v > 0 {
                                        Some((v - 1) as usize)
                                    } else if v < 0 {
                                        let n = vertices.len() as i64 + v;
                                        if n >= 0 { Some(n as usize) } else { None }
                                    } else {
                                        None
                                    }
                                })
                                .ok_or_else(|| {
                                    Error::parse(path, format!("bad face index at line {}", ln + 1))
                                })
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(Error::parse(path, format!("face with < 3 vertices at line {}", ln + 1)));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        Ok((vertices, triangles))
    }

    /// Writes vertices and faces as OBJ (1-indexed).
    pub fn save_obj(path: &Path, vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Result<()> {
        let mut buf = Vec::new();
        for v in vertices {
            writeln!(buf, "v {} {} {}", v.x, v.y, v.z).expect("write to vec");
        }
        for t in triangles {
            writeln!(buf, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).expect("write to vec");
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Assembles a template from an OBJ mesh file and the rig file's
    /// per-vertex weights.
    pub fn load(
        obj_path: &Path,
        skin_weights: Vec<Vec<(usize, f64)>>,
        rig: &SkeletonRig,
    ) -> Result<Self> {
        let (vertices, triangles) = Self::load_obj(obj_path)?;
        let template = Self {
            vertices,
            triangles,
            skin_weights,
        };
        template.validate(rig)?;
        Ok(template)
    }
}
