//! Synthetic data harness: a procedural skinned humanoid template, smooth
//! in-subspace motion, and full dataset generation (detections, masks,
//! flat-color frames, ground truth) for end-to-end verification.

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::batchpose::dct_row;
use crate::detections::{DetectionSequence, FrameDetections, Joint2d, Joint3d};
use crate::kinematics::{
    joint_positions, skin_mesh, ActorTemplate, Camera, SkeletonPose, SkeletonRig,
};
use crate::raster::{render_mask, BinaryMask};
use crate::segment::ColorImage;
use crate::{Error, Result};

/// Mean bone length of the synthetic detector's canonical skeleton;
/// 3D detections are emitted in this normalization and must be rescaled to
/// the actor before use.
pub const DETECTOR_MEAN_BONE: f64 = 0.25;

/// Motion description: either a random low-frequency trajectory per pose
/// parameter (guaranteed in-subspace) or linear interpolation between
/// keyframed pose vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionSpec {
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    /// Subspace dimension used by the generator.
    #[serde(default = "default_k")]
    pub subspace_dim: usize,
    /// Fraction of each angle's bound range used by the random motion.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Root translation center (camera space, meters).
    #[serde(default = "default_root_center")]
    pub root_center: [f64; 3],
    /// Optional keyframes `(frame, flattened pose)`; when present they
    /// replace the random in-subspace motion.
    #[serde(default)]
    pub keyframes: Vec<(usize, Vec<f64>)>,
}

fn default_k() -> usize {
    8
}
fn default_amplitude() -> f64 {
    0.3
}
fn default_root_center() -> [f64; 3] {
    [0.0, 0.0, 4.0]
}

impl MotionSpec {
    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}

/// Detection noise: per-component Gaussian sigmas for the 2D (pixels) and
/// 3D (meters, actor scale) detections.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_2d: f64,
    pub sigma_3d: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_2d: 0.0,
            sigma_3d: 0.0,
            seed: 0,
        }
    }
}

/// Smooth in-subspace motion: every pose parameter trajectory is a random
/// combination of the lowest `subspace_dim` DCT rows, scaled into the
/// bounds.
pub fn subspace_motion(rig: &SkeletonRig, spec: &MotionSpec) -> Result<Vec<SkeletonPose>> {
    let frames = spec.frames;
    if frames < spec.subspace_dim {
        return Err(Error::InvalidInput(format!(
            "{} frames is below the subspace dimension {}",
            frames, spec.subspace_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dof = rig.pose_dof();
    let rows: Vec<DVector<f64>> = (1..spec.subspace_dim).map(|r| dct_row(frames, r)).collect();
    let mut poses: Vec<SkeletonPose> = (0..frames).map(|_| SkeletonPose::rest(rig)).collect();
    for p in 0..dof {
        let (center, span) = if p < 3 {
            (spec.root_center[p], 0.25)
        } else if p < 6 {
            (0.0, 0.5 * spec.amplitude)
        } else {
            let b = &rig.bounds()[p - 6];
            (
                0.5 * (b.min + b.max),
                0.5 * spec.amplitude * (b.max - b.min),
            )
        };
        let mut sum = DVector::zeros(frames);
        for row in &rows {
            let c: f64 = rng.random_range(-1.0..1.0);
            sum += row * c;
        }
        let max_dev = sum.amax().max(1e-9);
        for f in 0..frames {
            let v = center + sum[f] * (span / max_dev);
            if p < 3 {
                poses[f].root_t[p] = v;
            } else if p < 6 {
                poses[f].root_r[p - 3] = v;
            } else {
                poses[f].theta[p - 6] = v;
            }
        }
    }
    Ok(poses)
}

/// Motion from the spec: keyframed linear interpolation when keyframes are
/// present, random in-subspace motion otherwise. Errors list every frame
/// whose angles violate the rig bounds.
pub fn generate_motion(rig: &SkeletonRig, spec: &MotionSpec) -> Result<Vec<SkeletonPose>> {
    let poses = if spec.keyframes.is_empty() {
        subspace_motion(rig, spec)?
    } else {
        let mut keys = spec.keyframes.clone();
        keys.sort_by_key(|k| k.0);
        if keys[0].0 != 0 || keys.last().unwrap().0 + 1 < spec.frames {
            return Err(Error::InvalidInput(
                "keyframes must start at frame 0 and reach the last frame".into(),
            ));
        }
        let mut poses = Vec::with_capacity(spec.frames);
        for f in 0..spec.frames {
            let hi = keys.iter().position(|k| k.0 >= f).unwrap_or(keys.len() - 1);
            let (f1, v1) = &keys[hi];
            let pose = if *f1 == f || hi == 0 {
                DVector::from_vec(v1.clone())
            } else {
                let (f0, v0) = &keys[hi - 1];
                let t = (f - f0) as f64 / (f1 - f0) as f64;
                let a = DVector::from_vec(v0.clone());
                let b = DVector::from_vec(v1.clone());
                &a + (&b - &a) * t
            };
            poses.push(SkeletonPose::from_flat(rig, &pose)?);
        }
        poses
    };
    let mut violations = Vec::new();
    for (f, pose) in poses.iter().enumerate() {
        if !pose.within_bounds(rig, 1e-12) {
            violations.push(f);
        }
    }
    if !violations.is_empty() {
        return Err(Error::InvalidInput(format!(
            "motion violates angle bounds at frames {violations:?}"
        )));
    }
    Ok(poses)
}

fn orthonormal_basis(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = d.cross(&helper).normalize();
    let v = d.cross(&u);
    (u, v)
}

/// Mesh builder that accumulates capped tubes and spheres with per-vertex
/// skinning weights.
struct MeshBuilder {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    weights: Vec<Vec<(usize, f64)>>,
}

impl MeshBuilder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Capped tube from `p0` to `p1`, radius lerping `r0 → r1`, skinned to
    /// `joint_a` with a blend toward `joint_b` over the final 30%.
    fn tube(
        &mut self,
        p0: Vector3<f64>,
        p1: Vector3<f64>,
        r0: f64,
        r1: f64,
        rings: usize,
        segments: usize,
        joint_a: usize,
        joint_b: Option<usize>,
    ) {
        let axis = p1 - p0;
        let len = axis.norm();
        let d = axis / len;
        let (u, v) = orthonormal_basis(&d);
        let base = self.vertices.len();
        for ring in 0..rings {
            let t = ring as f64 / (rings - 1) as f64;
            let center = p0 + axis * t;
            let radius = r0 + (r1 - r0) * t;
            let weight = match joint_b {
                Some(b) => {
                    let s = 0.5 * ((t - 0.7) / 0.3).clamp(0.0, 1.0);
                    if s > 0.0 {
                        vec![(joint_a, 1.0 - s), (b, s)]
                    } else {
                        vec![(joint_a, 1.0)]
                    }
                }
                None => vec![(joint_a, 1.0)],
            };
            for seg in 0..segments {
                let a = 2.0 * std::f64::consts::PI * seg as f64 / segments as f64;
                self.vertices.push(center + (u * a.cos() + v * a.sin()) * radius);
                self.weights.push(weight.clone());
            }
        }
        for ring in 0..rings - 1 {
            for seg in 0..segments {
                let a = base + ring * segments + seg;
                let b = base + ring * segments + (seg + 1) % segments;
                let c = a + segments;
                let d2 = b + segments;
                self.triangles.push([a, b, c]);
                self.triangles.push([b, d2, c]);
            }
        }
        // End caps.
        let cap0 = self.vertices.len();
        self.vertices.push(p0);
        self.weights.push(vec![(joint_a, 1.0)]);
        for seg in 0..segments {
            let a = base + seg;
            let b = base + (seg + 1) % segments;
            self.triangles.push([cap0, b, a]);
        }
        let cap1 = self.vertices.len();
        self.vertices.push(p1);
        self.weights
            .push(vec![(joint_b.unwrap_or(joint_a), 1.0)]);
        let last = base + (rings - 1) * segments;
        for seg in 0..segments {
            let a = last + seg;
            let b = last + (seg + 1) % segments;
            self.triangles.push([cap1, a, b]);
        }
    }

    fn sphere(&mut self, center: Vector3<f64>, radius: f64, joint: usize) {
        let (nu, nv) = (10usize, 6usize);
        let base = self.vertices.len();
        // Interior rings plus two pole vertices keep the sphere manifold.
        for iv in 1..nv {
            let theta = std::f64::consts::PI * iv as f64 / nv as f64;
            for iu in 0..nu {
                let phi = 2.0 * std::f64::consts::PI * iu as f64 / nu as f64;
                self.vertices.push(
                    center
                        + Vector3::new(
                            radius * theta.sin() * phi.cos(),
                            radius * theta.cos(),
                            radius * theta.sin() * phi.sin(),
                        ),
                );
                self.weights.push(vec![(joint, 1.0)]);
            }
        }
        let top = self.vertices.len();
        self.vertices.push(center + Vector3::new(0.0, radius, 0.0));
        self.weights.push(vec![(joint, 1.0)]);
        let bottom = self.vertices.len();
        self.vertices.push(center - Vector3::new(0.0, radius, 0.0));
        self.weights.push(vec![(joint, 1.0)]);
        for iu in 0..nu {
            let a = base + iu;
            let b = base + (iu + 1) % nu;
            self.triangles.push([top, b, a]);
        }
        for iv in 0..nv - 2 {
            for iu in 0..nu {
                let a = base + iv * nu + iu;
                let b = base + iv * nu + (iu + 1) % nu;
                let c = a + nu;
                let d = b + nu;
                self.triangles.push([a, b, c]);
                self.triangles.push([b, d, c]);
            }
        }
        let last = base + (nv - 2) * nu;
        for iu in 0..nu {
            let a = last + iu;
            let b = last + (iu + 1) % nu;
            self.triangles.push([bottom, a, b]);
        }
    }
}

/// A procedural capsule-limb humanoid skinned to the default rig layout:
/// a torso tube from the pelvis to the head joint, a head sphere, and
/// capped tubes along every limb bone with cross-joint weight blending.
pub fn synthetic_humanoid_template(rig: &SkeletonRig) -> Result<ActorTemplate> {
    let rest = joint_positions(rig, &SkeletonPose::rest(rig))?;
    let idx = |name: &str| {
        rig.joint_index(name)
            .ok_or_else(|| Error::InvalidRig(format!("default joint '{name}' missing")))
    };
    let root = idx("root")?;
    let head = idx("head")?;
    let mut b = MeshBuilder::new();

    // Torso: pelvis up to the head joint, blending into the head.
    b.tube(rest[root] - Vector3::new(0.0, 0.10, 0.0), rest[head], 0.17, 0.085, 8, 12, root, Some(head));
    b.sphere(rest[head] + Vector3::new(0.0, 0.06, 0.0), 0.11, head);

    // Limb chains: (parent joint drives the tube, blend into the child).
    for (a, bname, r0, r1) in [
        ("left_shoulder", "left_elbow", 0.055, 0.045),
        ("left_elbow", "left_wrist", 0.042, 0.034),
        ("right_shoulder", "right_elbow", 0.055, 0.045),
        ("right_elbow", "right_wrist", 0.042, 0.034),
        ("left_hip", "left_knee", 0.08, 0.06),
        ("left_knee", "left_ankle", 0.055, 0.042),
        ("right_hip", "right_knee", 0.08, 0.06),
        ("right_knee", "right_ankle", 0.055, 0.042),
        ("left_ankle", "left_toe", 0.04, 0.032),
        ("right_ankle", "right_toe", 0.04, 0.032),
    ] {
        let ja = idx(a)?;
        let jb = idx(bname)?;
        b.tube(rest[ja], rest[jb], r0, r1, 6, 10, ja, Some(jb));
    }
    // Hands extend past the wrists along the arm.
    for (wrist, elbow) in [("left_wrist", "left_elbow"), ("right_wrist", "right_elbow")] {
        let jw = idx(wrist)?;
        let je = idx(elbow)?;
        let dir = (rest[jw] - rest[je]).normalize();
        b.tube(rest[jw], rest[jw] + dir * 0.11, 0.035, 0.02, 4, 8, jw, None);
    }

    let template = ActorTemplate {
        vertices: b.vertices,
        triangles: b.triangles,
        skin_weights: b.weights,
    };
    template.validate(rig)?;
    Ok(template)
}

/// A generated dataset, in memory and on disk.
pub struct SynthDataset {
    pub dir: PathBuf,
    pub rig: SkeletonRig,
    pub template: ActorTemplate,
    pub camera: Camera,
    pub gt_poses: Vec<SkeletonPose>,
    pub gt_vertices: Vec<Vec<Vector3<f64>>>,
    pub gt_masks: Vec<BinaryMask>,
    pub detections: DetectionSequence,
}

/// Flat colors of the composited frames.
pub const SYNTH_FG: [f64; 3] = [0.75, 0.35, 0.25];
pub const SYNTH_BG: [f64; 3] = [0.2, 0.35, 0.65];

/// Generates the synthetic dataset: ground-truth poses and meshes via
/// FK/skinning, detections (projections plus Gaussian noise; root-relative
/// 3D joints emitted in the detector's average-bone-length normalization),
/// ground truth masks, and optional flat-color frames. Everything is
/// written under `dir` alongside the rig, camera and template files.
pub fn synth_generate(
    rig: &SkeletonRig,
    template: &ActorTemplate,
    cam: &Camera,
    motion: &[SkeletonPose],
    noise: &NoiseSpec,
    with_frames: bool,
    dir: &Path,
) -> Result<SynthDataset> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let masks_dir = dir.join("masks");
    std::fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    let frames_dir = dir.join("frames");
    if with_frames {
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal_2d = Normal::new(0.0, noise.sigma_2d.max(1e-300)).unwrap();
    let normal_3d = Normal::new(0.0, noise.sigma_3d.max(1e-300)).unwrap();

    // The detector convention: a uniform scale mapping the actor skeleton
    // to the canonical mean bone length.
    let bone_count = rig.joint_count() - 1;
    let actor_mean_bone = rig.total_bone_length() / bone_count as f64;
    let detector_scale = DETECTOR_MEAN_BONE / actor_mean_bone;

    let mut frames = Vec::with_capacity(motion.len());
    let mut gt_vertices = Vec::with_capacity(motion.len());
    let mut gt_masks = Vec::with_capacity(motion.len());
    for (f, pose) in motion.iter().enumerate() {
        let joints = joint_positions(rig, pose)?;
        let mut fd = FrameDetections::empty(f, rig.joint_count());
        for i in 0..rig.joint_count() {
            let px = cam.project(&joints[i])?;
            let noisy_px = if noise.sigma_2d > 0.0 {
                px + nalgebra::Vector2::new(normal_2d.sample(&mut rng), normal_2d.sample(&mut rng))
            } else {
                px
            };
            fd.joints2d[i] = Joint2d {
                pos: noisy_px,
                confidence: 1.0,
            };
            let mut rel = joints[i] - joints[0];
            if noise.sigma_3d > 0.0 {
                rel += Vector3::new(
                    normal_3d.sample(&mut rng),
                    normal_3d.sample(&mut rng),
                    normal_3d.sample(&mut rng),
                );
            }
            fd.joints3d[i] = Joint3d {
                pos: rel * detector_scale,
                confidence: 1.0,
            };
        }
        frames.push(fd);

        let vertices = skin_mesh(template, rig, pose)?;
        let mask = render_mask(&vertices, &template.triangles, cam);
        mask.save_png(&masks_dir.join(format!("frame_{f:06}.png")))?;
        if with_frames {
            let mut img = ColorImage::new(
                cam.width as usize,
                cam.height as usize,
                Vector3::new(SYNTH_BG[0], SYNTH_BG[1], SYNTH_BG[2]),
            );
            for y in 0..img.height {
                for x in 0..img.width {
                    if mask.get(x, y) {
                        img.set(x, y, Vector3::new(SYNTH_FG[0], SYNTH_FG[1], SYNTH_FG[2]));
                    }
                }
            }
            img.save_png(&frames_dir.join(format!("frame_{f:06}.png")))?;
        }
        gt_vertices.push(vertices);
        gt_masks.push(mask);
    }

    let detections = DetectionSequence {
        joint_names: rig.joints().iter().map(|j| j.name.clone()).collect(),
        frames,
    };
    detections.save(&dir.join("detections.json"))?;
    cam.save_json(&dir.join("camera.json"))?;
    rig.save_json(&dir.join("rig.json"), &template.skin_weights)?;
    ActorTemplate::save_obj(&dir.join("template.obj"), &template.vertices, &template.triangles)?;
    super::io::save_pose_sequence(&dir.join("gt_poses.json"), motion)?;
    super::io::write_mesh_sequence(&dir.join("gt_meshes"), &template.triangles, &gt_vertices)?;

    Ok(SynthDataset {
        dir: dir.to_path_buf(),
        rig: rig.clone(),
        template: template.clone(),
        camera: *cam,
        gt_poses: motion.to_vec(),
        gt_vertices,
        gt_masks,
        detections,
    })
}
