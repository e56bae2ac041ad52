//! Batch reconstruction of articulated human motion and medium-scale surface
//! deformation from monocular per-frame inputs.
//!
//! The library consumes per-frame 2D/3D joint detections, camera intrinsics
//! and a rigged template mesh, and produces temporally coherent skeleton
//! poses plus a silhouette-refined deforming surface. The stages are:
//!
//! 1. **kinematics** — skeleton rig, forward kinematics, dual quaternion
//!    skinning, full-perspective projection.
//! 2. **detections** — detection ingest, actor-scale normalization of 3D
//!    detections, per-frame 3D confidence gating.
//! 3. **solver** — box-constrained Levenberg–Marquardt over weighted
//!    residual blocks, plus a finite-difference Jacobian checker.
//! 4. **batchpose** — batched pose estimation regularized by a
//!    low-frequency DCT trajectory subspace, batch partitioning and overlap
//!    blending.
//! 5. **raster** — software rasterization to binary masks, contour
//!    extraction with normals, normal-compatible correspondence search.
//! 6. **segment** — model-guided trimap construction and iterated
//!    GMM/graph-cut foreground segmentation with motion cues.
//! 7. **refine** — silhouette ICP pose refinement and embedded deformation
//!    graph surface refinement with ARAP regularization.
//! 8. **pipeline** — configuration, orchestration, synthetic data
//!    generation, evaluation metrics and reports.
//!
//! Per-frame and per-batch stages fan out through [`parallel`]; with the
//! `parallel` feature disabled (or a worker count of one) every loop runs
//! the sequential fallback and outputs are byte-reproducible.

mod error;
pub mod batchpose;
pub mod detections;
pub mod raster;
pub mod refine;
pub mod segment;
pub mod solver;
pub mod kinematics;
pub mod math;
pub mod parallel;
pub mod pipeline;

pub use error::{Error, Result};
