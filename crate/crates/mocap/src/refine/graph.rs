//! Embedded deformation graph: node sampling by shortest-edge collapse,
//! geodesic influence radii, exponential-falloff partition-of-unity blend
//! weights, and the blended warp field
//! `W_i(x) = R_i (x − ĝ_i) + ĝ_i + t_i`.

use nalgebra::Vector3;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::math::rotation_from_axis_angle;
use crate::{Error, Result};

/// Deformation graph over a posed mesh. Node positions are the canonical
/// (posed) positions of surviving mesh vertices; per-node parameters are an
/// axis-angle rotation and a translation.
#[derive(Debug, Clone)]
pub struct DeformGraph {
    /// Canonical node positions ĝ_i.
    pub nodes: Vec<Vector3<f64>>,
    /// Original mesh vertex behind each node.
    pub node_vertices: Vec<usize>,
    /// Unique undirected edges (a < b) of the decimated connectivity.
    pub edges: Vec<(usize, usize)>,
    pub neighbors: Vec<Vec<usize>>,
    /// Influence radius r_i: the maximum geodesic distance to the node's
    /// graph neighbours.
    pub radii: Vec<f64>,
    /// Per mesh vertex: influencing nodes with partition-of-unity weights.
    pub influences: Vec<Vec<(usize, f64)>>,
    /// Per-node axis-angle rotation parameters.
    pub rotations: Vec<Vector3<f64>>,
    pub translations: Vec<Vector3<f64>>,
}

impl DeformGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Graph parameters flattened node-major as `(φ, t)` per node.
    pub fn params(&self) -> nalgebra::DVector<f64> {
        let mut x = nalgebra::DVector::zeros(6 * self.node_count());
        for i in 0..self.node_count() {
            for c in 0..3 {
                x[6 * i + c] = self.rotations[i][c];
                x[6 * i + 3 + c] = self.translations[i][c];
            }
        }
        x
    }

    pub fn set_params(&mut self, x: &nalgebra::DVector<f64>) {
        assert_eq!(x.len(), 6 * self.node_count());
        for i in 0..self.node_count() {
            for c in 0..3 {
                self.rotations[i][c] = x[6 * i + c];
                self.translations[i][c] = x[6 * i + 3 + c];
            }
        }
    }

    pub fn reset_params(&mut self) {
        for r in self.rotations.iter_mut() {
            *r = Vector3::zeros();
        }
        for t in self.translations.iter_mut() {
            *t = Vector3::zeros();
        }
    }
}

/// Applies the blended warp field to canonical vertices:
/// `v = v̂ + Σ_k b_k [(R_k − I)(v̂ − ĝ_k) + t_k]`, which is the partition-
/// of-unity blend of the per-node warps and reduces to the exact identity
/// for identity parameters.
pub fn apply_graph(graph: &DeformGraph, vertices: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let rotations: Vec<nalgebra::Matrix3<f64>> = graph
        .rotations
        .iter()
        .map(rotation_from_axis_angle)
        .collect();
    vertices
        .iter()
        .enumerate()
        .map(|(vi, v)| {
            let mut out = *v;
            for &(node, b) in &graph.influences[vi] {
                let d = v - graph.nodes[node];
                out += ((rotations[node] - nalgebra::Matrix3::identity()) * d
                    + graph.translations[node])
                    * b;
            }
            out
        })
        .collect()
}

/// Edge list with lengths from triangle connectivity.
fn mesh_edges(vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let _ = vertices;
    edges
}

/// Connects disconnected components with their closest vertex pairs so the
/// decimation and the geodesics see a single component. Returns the extra
/// edges.
fn bridge_components(
    vertices: &[Vector3<f64>],
    adjacency: &[Vec<usize>],
) -> Vec<(usize, usize)> {
    let n = vertices.len();
    let mut component = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = count;
        while let Some(u) = stack.pop() {
            for &v in &adjacency[u] {
                if component[v] == usize::MAX {
                    component[v] = count;
                    stack.push(v);
                }
            }
        }
        count += 1;
    }
    let mut bridges = Vec::new();
    if count <= 1 {
        return bridges;
    }
    // Greedily merge the lowest-id component with its nearest neighbour
    // until one remains.
    let mut merged: Vec<usize> = (0..count).collect();
    let find = |merged: &Vec<usize>, mut c: usize| {
        while merged[c] != c {
            c = merged[c];
        }
        c
    };
    for _ in 1..count {
        // Closest pair between the component containing vertex 0 and the rest.
        let base = find(&merged, component[0]);
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for a in 0..n {
            if find(&merged, component[a]) != base {
                continue;
            }
            for b in 0..n {
                if find(&merged, component[b]) == base {
                    continue;
                }
                let d = (vertices[a] - vertices[b]).norm();
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        if !best.0.is_finite() {
            break;
        }
        bridges.push((best.1.min(best.2), best.1.max(best.2)));
        let other = find(&merged, component[best.2]);
        merged[other] = base;
    }
    bridges
}

/// Dijkstra over weighted adjacency, truncated at `limit` (or exhaustive
/// when `limit` is infinite). Returns `(vertex, distance)` pairs in
/// ascending distance order.
fn dijkstra_within(
    adjacency: &[Vec<(usize, f64)>],
    source: usize,
    limit: f64,
) -> Vec<(usize, f64)> {
    let n = adjacency.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut out = Vec::new();
    let mut heap: BinaryHeap<Reverse<(OrderedF64, usize)>> = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((OrderedF64(0.0), source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        let d = d.0;
        if d > dist[u] {
            continue;
        }
        out.push((u, d));
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            if nd < dist[v] && nd <= limit {
                dist[v] = nd;
                heap.push(Reverse((OrderedF64(nd), v)));
            }
        }
    }
    out
}

/// Total-ordering wrapper for f64 heap keys.
#[derive(PartialEq, PartialOrd)]
struct OrderedF64(f64);
impl Eq for OrderedF64 {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Builds the deformation graph on a posed mesh by iterative
/// shortest-edge collapse down to `target_nodes` (all vertices when the
/// mesh is smaller), with geodesic radii and Gaussian blend weights
/// (`σ = r_i / 2`) normalized to a partition of unity. Disconnected
/// meshes are bridged through their closest vertex pairs first.
pub fn build_graph(
    vertices: &[Vector3<f64>],
    triangles: &[[usize; 3]],
    target_nodes: usize,
) -> Result<DeformGraph> {
    let n = vertices.len();
    if n == 0 {
        return Err(Error::InvalidMesh("cannot build a graph on an empty mesh".into()));
    }
    if target_nodes == 0 {
        return Err(Error::InvalidInput("target node count must be positive".into()));
    }
    let mut edges = mesh_edges(vertices, triangles);
    let mut plain_adj = vec![Vec::new(); n];
    for &(a, b) in &edges {
        plain_adj[a].push(b);
        plain_adj[b].push(a);
    }
    let bridges = bridge_components(vertices, &plain_adj);
    edges.extend(bridges.iter().copied());
    edges.sort_unstable();
    edges.dedup();

    // Weighted adjacency over the original mesh (plus bridges) for
    // geodesics.
    let mut geo_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b) in &edges {
        let len = (vertices[a] - vertices[b]).norm();
        geo_adj[a].push((b, len));
        geo_adj[b].push((a, len));
    }

    // The trivial case keeps the mesh as the graph, one node per vertex
    // with full self-weight.
    if n <= target_nodes {
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|v| geo_adj[v].iter().map(|&(u, _)| u).collect())
            .collect();
        let radii: Vec<f64> = (0..n)
            .map(|v| {
                geo_adj[v]
                    .iter()
                    .map(|&(_, w)| w)
                    .fold(0.0f64, f64::max)
            })
            .collect();
        return Ok(DeformGraph {
            nodes: vertices.to_vec(),
            node_vertices: (0..n).collect(),
            edges,
            neighbors,
            radii,
            influences: (0..n).map(|v| vec![(v, 1.0)]).collect(),
            rotations: vec![Vector3::zeros(); n],
            translations: vec![Vector3::zeros(); n],
        });
    }

    // Shortest-edge collapse. Collapsing (a, b) keeps the lower index at
    // its original position and transfers b's adjacency to a.
    let mut alive = vec![true; n];
    let mut adj: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); n];
    for &(a, b) in &edges {
        adj[a].insert(b);
        adj[b].insert(a);
    }
    let mut heap: BinaryHeap<Reverse<(OrderedF64, usize, usize)>> = BinaryHeap::new();
    for &(a, b) in &edges {
        heap.push(Reverse((
            OrderedF64((vertices[a] - vertices[b]).norm()),
            a,
            b,
        )));
    }
    let mut live_count = n;
    while live_count > target_nodes {
        let Some(Reverse((_, a, b))) = heap.pop() else { break };
        if !alive[a] || !alive[b] || !adj[a].contains(&b) {
            continue;
        }
        let (keep, drop) = (a.min(b), a.max(b));
        alive[drop] = false;
        live_count -= 1;
        let drop_neighbors: Vec<usize> = adj[drop].iter().copied().collect();
        for v in drop_neighbors {
            adj[v].remove(&drop);
            if v != keep {
                if adj[keep].insert(v) {
                    adj[v].insert(keep);
                    heap.push(Reverse((
                        OrderedF64((vertices[keep] - vertices[v]).norm()),
                        keep.min(v),
                        keep.max(v),
                    )));
                } else {
                    adj[v].insert(keep);
                }
            }
        }
        adj[drop].clear();
        adj[keep].remove(&drop);
    }

    let node_vertices: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
    let node_of: std::collections::HashMap<usize, usize> = node_vertices
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let m = node_vertices.len();
    let mut graph_edges = Vec::new();
    let mut neighbors = vec![Vec::new(); m];
    for (i, &v) in node_vertices.iter().enumerate() {
        for &u in &adj[v] {
            let j = node_of[&u];
            if i < j {
                graph_edges.push((i, j));
            }
            neighbors[i].push(j);
        }
        neighbors[i].sort_unstable();
    }

    // Influence radius: the maximum geodesic distance to the connected
    // graph neighbours, measured over the original mesh edges.
    let mut radii = vec![0.0f64; m];
    for i in 0..m {
        let targets: std::collections::HashSet<usize> =
            neighbors[i].iter().map(|&j| node_vertices[j]).collect();
        if targets.is_empty() {
            continue;
        }
        let mut remaining = targets.len();
        let mut max_d = 0.0f64;
        for (v, d) in dijkstra_within(&geo_adj, node_vertices[i], f64::INFINITY) {
            if targets.contains(&v) {
                max_d = max_d.max(d);
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
        }
        radii[i] = max_d;
    }

    // Blend weights: Gaussian falloff over geodesic distance within each
    // node's radius, normalized per vertex.
    let mut influences: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..m {
        let r = radii[i];
        if r <= 0.0 {
            continue;
        }
        let sigma = r / 2.0;
        for (v, d) in dijkstra_within(&geo_adj, node_vertices[i], r) {
            influences[v].push((i, (-d * d / (2.0 * sigma * sigma)).exp()));
        }
    }
    // Vertices not reached by any node fall back to their geodesically
    // nearest node with full weight.
    let uncovered: Vec<usize> = (0..n).filter(|&v| influences[v].is_empty()).collect();
    if !uncovered.is_empty() {
        let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); n];
        for i in 0..m {
            for (v, d) in dijkstra_within(&geo_adj, node_vertices[i], f64::INFINITY) {
                if d < best[v].0 {
                    best[v] = (d, i);
                }
            }
        }
        for v in uncovered {
            if best[v].1 != usize::MAX {
                influences[v].push((best[v].1, 1.0));
            } else {
                return Err(Error::InvalidMesh(format!(
                    "vertex {v} is unreachable from every graph node"
                )));
            }
        }
    }
    for w in influences.iter_mut() {
        let total: f64 = w.iter().map(|&(_, b)| b).sum();
        for (_, b) in w.iter_mut() {
            *b /= total;
        }
    }

    Ok(DeformGraph {
        nodes: node_vertices.iter().map(|&v| vertices[v]).collect(),
        node_vertices,
        edges: graph_edges,
        neighbors,
        radii,
        influences,
        rotations: vec![Vector3::zeros(); m],
        translations: vec![Vector3::zeros(); m],
    })
}
