//! Embedded-deformation surface refinement: ICP over the graph parameters
//! of `E_surf = E_con(D) + w_arap·E_arap(D)`, with the ARAP weight
//! following the per-iteration schedule.

use nalgebra::{DVector, Vector3};

use crate::kinematics::Camera;
use crate::math::rotate_axis_angle_jac;
use crate::raster::{find_correspondences, model_boundary_vertices, Contour, Correspondence};
use crate::solver::{
    lm_minimize, BlockJacobian, BoxConstraints, LinearSolver, LmOptions, ResidualBlock,
};
use crate::Result;

use super::arap::arap_blocks;
use super::{apply_graph, DeformGraph, RefinementConfig};

/// Point-to-line silhouette residuals over the graph parameters:
/// `n_kᵀ (Π(v_k(D)) − s_k) / √|S|` where
/// `v_k(D) = v̂_k + Σ_j b_j [(R_j − I)(v̂_k − ĝ_j) + t_j]`.
pub struct EconGraphBlock<'a> {
    cam: &'a Camera,
    correspondences: &'a [Correspondence],
    /// Canonical vertex position and its node influences, per residual.
    anchors: Vec<(Vector3<f64>, Vec<(usize, f64)>)>,
    nodes: Vec<Vector3<f64>>,
    scale: f64,
}

impl<'a> EconGraphBlock<'a> {
    pub fn new(
        graph: &DeformGraph,
        canonical: &[Vector3<f64>],
        cam: &'a Camera,
        correspondences: &'a [Correspondence],
    ) -> Self {
        let anchors = correspondences
            .iter()
            .map(|c| (canonical[c.vertex], graph.influences[c.vertex].clone()))
            .collect();
        Self {
            cam,
            correspondences,
            anchors,
            nodes: graph.nodes.clone(),
            scale: 1.0 / (correspondences.len().max(1) as f64).sqrt(),
        }
    }

    fn deformed(&self, x: &DVector<f64>, k: usize) -> Vector3<f64> {
        let (v_hat, influences) = &self.anchors[k];
        let mut out = *v_hat;
        for &(node, b) in influences {
            let phi = Vector3::new(x[6 * node], x[6 * node + 1], x[6 * node + 2]);
            let t = Vector3::new(x[6 * node + 3], x[6 * node + 4], x[6 * node + 5]);
            let d = v_hat - self.nodes[node];
            let (rotated, _) = rotate_axis_angle_jac(&phi, &d);
            out += (rotated - d + t) * b;
        }
        out
    }
}

impl ResidualBlock for EconGraphBlock<'_> {
    fn name(&self) -> &str {
        "E_con(graph)"
    }

    fn residual_count(&self) -> usize {
        self.correspondences.len()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.correspondences.len());
        for (k, corr) in self.correspondences.iter().enumerate() {
            let v = self.deformed(x, k);
            let (px, _) = self.cam.project_clamped(&v);
            r[k] = corr.normal.dot(&(px - corr.target)) * self.scale;
        }
        r
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        let mut rows = Vec::with_capacity(self.correspondences.len());
        for (k, corr) in self.correspondences.iter().enumerate() {
            let (v_hat, influences) = &self.anchors[k];
            let v = self.deformed(x, k);
            let proj = self.cam.project_jacobian(&v);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(6 * influences.len());
            for &(node, b) in influences {
                let phi = Vector3::new(x[6 * node], x[6 * node + 1], x[6 * node + 2]);
                let d = v_hat - self.nodes[node];
                let (_, drot) = rotate_axis_angle_jac(&phi, &d);
                for c in 0..3 {
                    // d v / d φ_c, then through projection and normal.
                    let dv = drot.column(c) * b;
                    let dpx = proj * dv;
                    row.push((6 * node + c, corr.normal.dot(&dpx) * self.scale));
                }
                for c in 0..3 {
                    let mut dv = Vector3::zeros();
                    dv[c] = b;
                    let dpx = proj * dv;
                    row.push((6 * node + 3 + c, corr.normal.dot(&dpx) * self.scale));
                }
            }
            rows.push(row);
        }
        BlockJacobian::Rows(rows)
    }
}

struct WeightedBlock<B: ResidualBlock> {
    inner: B,
    weight: f64,
}

impl<B: ResidualBlock> ResidualBlock for WeightedBlock<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn residual_count(&self) -> usize {
        self.inner.residual_count()
    }
    fn active_params(&self) -> Option<&[usize]> {
        self.inner.active_params()
    }
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.residuals(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        self.inner.jacobian(x)
    }
    fn weight(&self) -> f64 {
        self.weight * self.inner.weight()
    }
}

/// Outcome of one surface refinement.
#[derive(Debug, Clone)]
pub struct SurfaceOutcome {
    pub vertices: Vec<Vector3<f64>>,
    pub correspondences: Vec<usize>,
    pub starved: bool,
}

/// Runs the surface ICP: per iteration, deform the canonical mesh with the
/// current graph, search silhouette correspondences on its rim, and solve
/// `E_con(D) + w_arap·E_arap(D)` over all node parameters (conjugate
/// gradient with per-node preconditioner blocks). Vertices without
/// correspondences move only through the ARAP coupling; with no
/// correspondences at all the graph is left untouched.
pub fn refine_surface(
    graph: &mut DeformGraph,
    canonical: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    silhouette: &Contour,
    cam: &Camera,
    cfg: &RefinementConfig,
    opts: &LmOptions,
) -> Result<SurfaceOutcome> {
    cfg.validate()?;
    let mut outcome = SurfaceOutcome {
        vertices: apply_graph(graph, canonical),
        correspondences: Vec::new(),
        starved: false,
    };
    let n_params = 6 * graph.node_count();
    let bounds = BoxConstraints::unbounded(n_params);
    let mut opts = opts.clone();
    opts.cg_block_size = 6;
    if graph.node_count() > opts.dense_threshold / 6 {
        opts.linear_solver = LinearSolver::ConjugateGradient;
    }

    for iter in 0..cfg.surface_icp_iters {
        let deformed = apply_graph(graph, canonical);
        let boundary =
            model_boundary_vertices(&deformed, triangles, cam, cfg.boundary_tolerance_px);
        let corrs = find_correspondences(
            &boundary,
            silhouette,
            cfg.max_corr_dist_px,
            cfg.max_normal_angle_deg,
        );
        if corrs.is_empty() {
            outcome.starved = true;
            break;
        }
        outcome.correspondences.push(corrs.len());

        let econ = EconGraphBlock::new(graph, canonical, cam, &corrs);
        let arap = arap_blocks(graph);
        let w_arap = cfg.w_arap_for_iter(iter);
        let weighted: Vec<WeightedBlock<&dyn ResidualBlock>> = arap
            .iter()
            .map(|b| WeightedBlock {
                inner: b as &dyn ResidualBlock,
                weight: w_arap,
            })
            .collect();
        let mut blocks: Vec<&dyn ResidualBlock> = vec![&econ];
        for b in &weighted {
            blocks.push(b);
        }
        let (x, _) = lm_minimize(&blocks, &graph.params(), &bounds, &opts)?;
        graph.set_params(&x);
    }
    outcome.vertices = apply_graph(graph, canonical);
    Ok(outcome)
}
