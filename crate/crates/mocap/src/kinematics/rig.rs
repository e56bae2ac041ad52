use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// Parent index stored for the root joint in rig files.
pub const ROOT_PARENT_SENTINEL: i64 = -1;

/// Inclusive bounds for one articulation angle, radians.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AngleBound {
    pub min: f64,
    pub max: f64,
}

/// One joint of the skeleton hierarchy.
#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    /// `None` for the root; otherwise an index smaller than the joint's own.
    pub parent: Option<usize>,
    /// Rest offset from the parent joint, meters.
    pub offset: Vector3<f64>,
    /// Fixed unit rotation axes, applied in order. Zero to three per joint.
    pub axes: Vec<Vector3<f64>>,
}

/// Skeleton rig: joint hierarchy, rest offsets, rotation axes and
/// anatomical angle bounds. Bone lengths are derived from the rest offsets.
#[derive(Debug, Clone)]
pub struct SkeletonRig {
    joints: Vec<Joint>,
    bounds: Vec<AngleBound>,
    bone_lengths: Vec<f64>,
    angle_offsets: Vec<usize>,
    angle_count: usize,
}

impl SkeletonRig {
    /// Builds and validates a rig. `bounds` has one entry per axis, in
    /// joint order.
    pub fn new(joints: Vec<Joint>, bounds: Vec<AngleBound>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidRig("rig has no joints".into()));
        }
        let mut roots = 0;
        for (i, j) in joints.iter().enumerate() {
            match j.parent {
                None => roots += 1,
                Some(p) if p >= i => {
                    return Err(Error::InvalidRig(format!(
                        "joint {} ('{}') must come after its parent",
                        i, j.name
                    )))
                }
                Some(_) => {}
            }
            if j.axes.len() > 3 {
                return Err(Error::InvalidRig(format!(
                    "joint '{}' has {} axes, at most 3 allowed",
                    j.name,
                    j.axes.len()
                )));
            }
            for a in &j.axes {
                if (a.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidRig(format!(
                        "rotation axis of joint '{}' is not unit length",
                        j.name
                    )));
                }
            }
        }
        if roots != 1 {
            return Err(Error::InvalidRig(format!(
                "rig must have exactly one root, found {roots}"
            )));
        }
        let angle_count: usize = joints.iter().map(|j| j.axes.len()).sum();
        if bounds.len() != angle_count {
            return Err(Error::InvalidRig(format!(
                "expected {} angle bounds, got {}",
                angle_count,
                bounds.len()
            )));
        }
        for (k, b) in bounds.iter().enumerate() {
            if !(b.min <= b.max) {
                return Err(Error::InvalidRig(format!(
                    "angle bound {k} has min > max"
                )));
            }
        }
        let mut angle_offsets = Vec::with_capacity(joints.len());
        let mut off = 0;
        for j in &joints {
            angle_offsets.push(off);
            off += j.axes.len();
        }
        let bone_lengths = joints
            .iter()
            .map(|j| if j.parent.is_some() { j.offset.norm() } else { 0.0 })
            .collect();
        Ok(Self {
            joints,
            bounds,
            bone_lengths,
            angle_offsets,
            angle_count,
        })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// Total articulation DOF (27 for the default humanoid).
    pub fn angle_count(&self) -> usize {
        self.angle_count
    }

    /// Full pose DOF including the 6 root parameters (33 by default).
    pub fn pose_dof(&self) -> usize {
        6 + self.angle_count
    }

    pub fn bounds(&self) -> &[AngleBound] {
        &self.bounds
    }

    /// Start index of `joint`'s angles within the theta vector.
    pub fn angle_offset(&self, joint: usize) -> usize {
        self.angle_offsets[joint]
    }

    /// Rest bone length between `joint` and its parent (0 for the root).
    pub fn bone_length(&self, joint: usize) -> f64 {
        self.bone_lengths[joint]
    }

    /// Sum of all parent-child rest bone lengths.
    pub fn total_bone_length(&self) -> f64 {
        self.bone_lengths.iter().sum()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// The 16-joint humanoid shipped as the default rig: pelvis root, head,
    /// arms (shoulder/elbow/wrist) and legs (hip/knee/ankle/toe) with toes
    /// included. 27 articulation angles, 33 pose DOF with the root.
    ///
    /// Axis assignments and the anatomical bounds are this crate's own
    /// choices; override them with a rig file where needed. Convention:
    /// y up, x to the actor's left, z toward the camera at rest; units are
    /// meters and the standing figure is about 1.8 m tall.
    pub fn default_humanoid() -> Self {
        let x = Vector3::x();
        let y = Vector3::y();
        let z = Vector3::z();
        let mut joints = Vec::new();
        let mut bounds = Vec::new();
        let add = |name: &str,
                       parent: Option<usize>,
                       offset: [f64; 3],
                       axes: Vec<Vector3<f64>>,
                       b: Vec<[f64; 2]>,
                       joints: &mut Vec<Joint>,
                       bounds: &mut Vec<AngleBound>| {
            assert_eq!(axes.len(), b.len());
            joints.push(Joint {
                name: name.into(),
                parent,
                offset: Vector3::new(offset[0], offset[1], offset[2]),
                axes,
            });
            for bb in b {
                bounds.push(AngleBound {
                    min: bb[0],
                    max: bb[1],
                });
            }
        };

        // 0 root (pelvis)
        add("root", None, [0.0, 0.0, 0.0], vec![], vec![], &mut joints, &mut bounds);
        // 1 head: nod only
        add(
            "head",
            Some(0),
            [0.0, 0.68, 0.0],
            vec![x],
            vec![[-0.7, 0.7]],
            &mut joints,
            &mut bounds,
        );
        // 2-4 left arm: ball shoulder, elbow flexion + twist, wrist flexion
        add(
            "left_shoulder",
            Some(0),
            [0.20, 0.50, 0.0],
            vec![z, x, y],
            vec![[-1.6, 1.6], [-1.5, 1.5], [-1.4, 1.4]],
            &mut joints,
            &mut bounds,
        );
        add(
            "left_elbow",
            Some(2),
            [0.28, 0.0, 0.0],
            vec![y, x],
            vec![[-2.4, 2.4], [-1.2, 1.2]],
            &mut joints,
            &mut bounds,
        );
        add(
            "left_wrist",
            Some(3),
            [0.26, 0.0, 0.0],
            vec![z],
            vec![[-1.0, 1.0]],
            &mut joints,
            &mut bounds,
        );
        // 5-7 right arm
        add(
            "right_shoulder",
            Some(0),
            [-0.20, 0.50, 0.0],
            vec![z, x, y],
            vec![[-1.6, 1.6], [-1.5, 1.5], [-1.4, 1.4]],
            &mut joints,
            &mut bounds,
        );
        add(
            "right_elbow",
            Some(5),
            [-0.28, 0.0, 0.0],
            vec![y, x],
            vec![[-2.4, 2.4], [-1.2, 1.2]],
            &mut joints,
            &mut bounds,
        );
        add(
            "right_wrist",
            Some(6),
            [-0.26, 0.0, 0.0],
            vec![z],
            vec![[-1.0, 1.0]],
            &mut joints,
            &mut bounds,
        );
        // 8-11 left leg: ball hip, knee flexion + twist, ankle pitch/roll, toe
        add(
            "left_hip",
            Some(0),
            [0.10, -0.05, 0.0],
            vec![x, z, y],
            vec![[-2.0, 0.7], [-0.8, 0.8], [-0.9, 0.9]],
            &mut joints,
            &mut bounds,
        );
        add(
            "left_knee",
            Some(8),
            [0.0, -0.45, 0.0],
            vec![x, y],
            vec![[-0.05, 2.4], [-0.5, 0.5]],
            &mut joints,
            &mut bounds,
        );
        add(
            "left_ankle",
            Some(9),
            [0.0, -0.45, 0.0],
            vec![x, z],
            vec![[-0.9, 0.9], [-0.5, 0.5]],
            &mut joints,
            &mut bounds,
        );
        add("left_toe", Some(10), [0.0, -0.07, 0.14], vec![], vec![], &mut joints, &mut bounds);
        // 12-15 right leg
        add(
            "right_hip",
            Some(0),
            [-0.10, -0.05, 0.0],
            vec![x, z, y],
            vec![[-2.0, 0.7], [-0.8, 0.8], [-0.9, 0.9]],
            &mut joints,
            &mut bounds,
        );
        add(
            "right_knee",
            Some(12),
            [0.0, -0.45, 0.0],
            vec![x, y],
            vec![[-0.05, 2.4], [-0.5, 0.5]],
            &mut joints,
            &mut bounds,
        );
        add(
            "right_ankle",
            Some(13),
            [0.0, -0.45, 0.0],
            vec![x, z],
            vec![[-0.9, 0.9], [-0.5, 0.5]],
            &mut joints,
            &mut bounds,
        );
        add("right_toe", Some(14), [0.0, -0.07, 0.14], vec![], vec![], &mut joints, &mut bounds);

        let rig = Self::new(joints, bounds).expect("default rig is valid");
        debug_assert_eq!(rig.joint_count(), 16);
        debug_assert_eq!(rig.angle_count(), 27);
        rig
    }

    /// Loads a rig (and optional skinning weights) from the combined JSON
    /// document. Returns the rig and the per-vertex sparse weights (empty
    /// when the file has none).
    pub fn load_json(path: &Path) -> Result<(Self, Vec<Vec<(usize, f64)>>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RigFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        file.into_rig()
    }

    /// Writes the combined rig + skinning weight JSON document.
    pub fn save_json(&self, path: &Path, skin_weights: &[Vec<(usize, f64)>]) -> Result<()> {
        let file = RigFile::from_rig(self, skin_weights);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::parse(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct JointRecord {
    name: String,
    parent: i64,
    offset: [f64; 3],
    #[serde(default)]
    axes: Vec<[f64; 3]>,
    #[serde(default)]
    bounds: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct RigFile {
    joints: Vec<JointRecord>,
    #[serde(default)]
    skin_weights: Vec<Vec<(usize, f64)>>,
}

impl RigFile {
    fn from_rig(rig: &SkeletonRig, skin_weights: &[Vec<(usize, f64)>]) -> Self {
        let joints = rig
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let o = rig.angle_offset(i);
                JointRecord {
                    name: j.name.clone(),
                    parent: j.parent.map_or(ROOT_PARENT_SENTINEL, |p| p as i64),
                    offset: [j.offset.x, j.offset.y, j.offset.z],
                    axes: j.axes.iter().map(|a| [a.x, a.y, a.z]).collect(),
                    bounds: rig.bounds[o..o + j.axes.len()]
                        .iter()
                        .map(|b| [b.min, b.max])
                        .collect(),
                }
            })
            .collect();
        RigFile {
            joints,
            skin_weights: skin_weights.to_vec(),
        }
    }

    fn into_rig(self) -> Result<(SkeletonRig, Vec<Vec<(usize, f64)>>)> {
        let mut joints = Vec::with_capacity(self.joints.len());
        let mut bounds = Vec::new();
        for r in &self.joints {
            if r.bounds.len() != r.axes.len() {
                return Err(Error::InvalidRig(format!(
                    "joint '{}': {} axes but {} bounds",
                    r.name,
                    r.axes.len(),
                    r.bounds.len()
                )));
            }
            let parent = if r.parent == ROOT_PARENT_SENTINEL {
                None
            } else if r.parent < 0 {
                return Err(Error::InvalidRig(format!(
                    "joint '{}': invalid parent {}",
                    r.name, r.parent
                )));
            } else {
                Some(r.parent as usize)
            };
            joints.push(Joint {
                name: r.name.clone(),
                parent,
                offset: Vector3::new(r.offset[0], r.offset[1], r.offset[2]),
                axes: r.axes.iter().map(|a| Vector3::new(a[0], a[1], a[2])).collect(),
            });
            for b in &r.bounds {
                bounds.push(AngleBound { min: b[0], max: b[1] });
            }
        }
        let rig = SkeletonRig::new(joints, bounds)?;
        Ok((rig, self.skin_weights))
    }
}
