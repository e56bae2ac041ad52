//! As-rigid-as-possible regularization of the deformation graph:
//! `E_arap = (1/M) Σ_i Σ_{j∈N_i} ‖(g_i − g_j) − R_i (ĝ_i − ĝ_j)‖²`
//! with `g_i = ĝ_i + t_i`, summed over directed edges both ways.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::math::{rotate_axis_angle_jac, rotation_from_axis_angle};
use crate::solver::{BlockJacobian, ResidualBlock};

use super::DeformGraph;

/// Direct evaluation of the ARAP energy on the graph's current parameters.
pub fn energy_arap(graph: &DeformGraph) -> f64 {
    let m = graph.node_count();
    if m == 0 {
        return 0.0;
    }
    let rotations: Vec<Matrix3<f64>> = graph
        .rotations
        .iter()
        .map(rotation_from_axis_angle)
        .collect();
    let mut total = 0.0;
    for i in 0..m {
        let gi = graph.nodes[i] + graph.translations[i];
        for &j in &graph.neighbors[i] {
            let gj = graph.nodes[j] + graph.translations[j];
            let rest = graph.nodes[i] - graph.nodes[j];
            total += ((gi - gj) - rotations[i] * rest).norm_squared();
        }
    }
    total / m as f64
}

/// Residuals of one directed ARAP edge `i → j` over the node-major
/// parameter vector `(φ_0, t_0, φ_1, t_1, …)`:
/// `√(1/M) · [(ĝ_i + t_i − ĝ_j − t_j) − R(φ_i)(ĝ_i − ĝ_j)]`.
pub struct ArapEdgeBlock {
    pub node_i: usize,
    pub node_j: usize,
    rest_i: Vector3<f64>,
    rest_j: Vector3<f64>,
    scale: f64,
    active: Vec<usize>,
}

impl ArapEdgeBlock {
    pub fn new(graph: &DeformGraph, node_i: usize, node_j: usize) -> Self {
        let scale = (1.0 / graph.node_count() as f64).sqrt();
        // φ_i, t_i, then t_j (φ_j does not appear in this direction).
        let mut active = Vec::with_capacity(9);
        for c in 0..6 {
            active.push(6 * node_i + c);
        }
        for c in 0..3 {
            active.push(6 * node_j + 3 + c);
        }
        Self {
            node_i,
            node_j,
            rest_i: graph.nodes[node_i],
            rest_j: graph.nodes[node_j],
            scale,
            active,
        }
    }
}

impl ResidualBlock for ArapEdgeBlock {
    fn name(&self) -> &str {
        "E_arap"
    }

    fn residual_count(&self) -> usize {
        3
    }

    fn active_params(&self) -> Option<&[usize]> {
        Some(&self.active)
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let phi_i = Vector3::new(
            x[6 * self.node_i],
            x[6 * self.node_i + 1],
            x[6 * self.node_i + 2],
        );
        let t_i = Vector3::new(
            x[6 * self.node_i + 3],
            x[6 * self.node_i + 4],
            x[6 * self.node_i + 5],
        );
        let t_j = Vector3::new(
            x[6 * self.node_j + 3],
            x[6 * self.node_j + 4],
            x[6 * self.node_j + 5],
        );
        let rest = self.rest_i - self.rest_j;
        let (rotated, _) = rotate_axis_angle_jac(&phi_i, &rest);
        let r = ((self.rest_i + t_i) - (self.rest_j + t_j) - rotated) * self.scale;
        DVector::from_column_slice(r.as_slice())
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        let phi_i = Vector3::new(
            x[6 * self.node_i],
            x[6 * self.node_i + 1],
            x[6 * self.node_i + 2],
        );
        let rest = self.rest_i - self.rest_j;
        let (_, drot) = rotate_axis_angle_jac(&phi_i, &rest);
        let mut j = nalgebra::DMatrix::zeros(3, 9);
        for r in 0..3 {
            for c in 0..3 {
                j[(r, c)] = -drot[(r, c)] * self.scale; // d/dφ_i
            }
            j[(r, 3 + r)] = self.scale; // d/dt_i
            j[(r, 6 + r)] = -self.scale; // d/dt_j
        }
        BlockJacobian::Dense(j)
    }
}

/// All directed-edge blocks of a graph.
pub fn arap_blocks(graph: &DeformGraph) -> Vec<ArapEdgeBlock> {
    let mut blocks = Vec::with_capacity(2 * graph.edges.len());
    for i in 0..graph.node_count() {
        for &j in &graph.neighbors[i] {
            blocks.push(ArapEdgeBlock::new(graph, i, j));
        }
    }
    blocks
}
