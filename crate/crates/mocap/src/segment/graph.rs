//! Deterministic max-flow / min-cut on integer capacities (Dinic's
//! algorithm with fixed adjacency order).

/// Directed flow network with residual edge pairs.
pub struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    initial_cap: Vec<i64>,
}

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            initial_cap: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.head.len()
    }

    /// Adds a directed edge `u → v` with capacity `cap` and its residual
    /// partner `v → u` with capacity `rev_cap` (nonzero for undirected
    /// pairwise edges).
    pub fn add_edge(&mut self, u: usize, v: usize, cap: i64, rev_cap: i64) {
        debug_assert!(cap >= 0 && rev_cap >= 0);
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(cap);
        self.initial_cap.push(cap);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(rev_cap);
        self.initial_cap.push(rev_cap);
    }

    fn bfs_levels(&self, s: usize, t: usize) -> Option<Vec<i32>> {
        let mut level = vec![-1i32; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (level[t] >= 0).then_some(level)
    }

    fn dfs_push(
        &mut self,
        u: usize,
        t: usize,
        pushed: i64,
        level: &[i32],
        iter: &mut [usize],
    ) -> i64 {
        if u == t {
            return pushed;
        }
        while iter[u] < self.head[u].len() {
            let e = self.head[u][iter[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 {
                let d = self.dfs_push(v, t, pushed.min(self.cap[e]), level, iter);
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            iter[u] += 1;
        }
        0
    }

    /// Computes the maximum flow from `s` to `t`.
    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let mut flow = 0i64;
        while let Some(level) = self.bfs_levels(s, t) {
            let mut iter = vec![0usize; self.node_count()];
            loop {
                let pushed = self.dfs_push(s, t, i64::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                flow += pushed;
            }
        }
        flow
    }

    /// After `max_flow`: the source side of the minimum cut (nodes
    /// reachable from `s` in the residual network).
    pub fn min_cut_side(&self, s: usize) -> Vec<bool> {
        let mut side = vec![false; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        side[s] = true;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > 0 && !side[v] {
                    side[v] = true;
                    queue.push_back(v);
                }
            }
        }
        side
    }

    /// Net outgoing flow of a node; zero for all nodes except the source
    /// and sink when the flow is valid.
    pub fn net_outflow(&self, u: usize) -> i64 {
        let mut net = 0i64;
        for &e in &self.head[u] {
            // Positive flow on this edge = initial − residual.
            net += self.initial_cap[e] - self.cap[e];
        }
        net
    }

    /// Capacity of the cut induced by a node partition (true = source
    /// side), evaluated on the initial capacities.
    pub fn cut_capacity(&self, side: &[bool]) -> i64 {
        let mut total = 0i64;
        for u in 0..self.node_count() {
            if !side[u] {
                continue;
            }
            for &e in &self.head[u] {
                let v = self.to[e];
                if !side[v] {
                    total += self.initial_cap[e];
                }
            }
        }
        total
    }
}
