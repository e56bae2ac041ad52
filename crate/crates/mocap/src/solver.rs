//! Box-constrained Levenberg–Marquardt over stacked weighted residual
//! blocks.
//!
//! Each [`ResidualBlock`] contributes `w · ‖r(x)‖²` to the objective; the
//! square root of the weight is folded into the residuals and Jacobian rows
//! during assembly. Steps come from the damped normal equations
//! `(JᵀJ + μ·diag(JᵀJ)) δ = −Jᵀr`; candidates are projected onto the box
//! and accepted only when the objective strictly decreases, so accepted
//! iterates are monotone and always feasible. The damping factor follows
//! the classic ×10 / ÷10 schedule.
//!
//! Blocks touch either the full parameter vector or a sparse subset
//! ([`ResidualBlock::active_params`]); per-frame terms stay block-local
//! while trajectory terms couple a whole batch. Normal equations are
//! assembled sparsely and solved either by dense Cholesky or by a
//! Jacobi-preconditioned conjugate gradient, chosen by problem size unless
//! forced through [`LmOptions::linear_solver`].

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use crate::{Error, Result};

/// Jacobian of one block with respect to its active parameters.
pub enum BlockJacobian {
    /// Dense `residual_count × active_count` matrix.
    Dense(DMatrix<f64>),
    /// Sparse rows of `(local column, value)` pairs, one per residual.
    Rows(Vec<Vec<(usize, f64)>>),
}

/// One weighted least-squares term: a residual callback, its analytic
/// Jacobian, and a scalar weight applied as `√w` to the residuals.
pub trait ResidualBlock {
    /// Identifies the block in error messages.
    fn name(&self) -> &str {
        "block"
    }

    /// Number of residual entries.
    fn residual_count(&self) -> usize;

    /// Ascending parameter indices this block depends on; `None` means all.
    fn active_params(&self) -> Option<&[usize]> {
        None
    }

    /// Residual vector at `x` (full parameter vector, unweighted).
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Jacobian with respect to the active parameters at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian;

    fn weight(&self) -> f64 {
        1.0
    }
}

/// Per-parameter optional lower/upper bounds, stored as ±∞ when absent.
#[derive(Debug, Clone)]
pub struct BoxConstraints {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxConstraints {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(
                "box constraint bounds differ in length".into(),
            ));
        }
        for i in 0..lower.len() {
            if !(lower[i] <= upper[i]) {
                return Err(Error::InvalidInput(format!(
                    "box constraint {i} has lower > upper"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.len() == 0
    }

    pub fn set(&mut self, i: usize, lower: f64, upper: f64) {
        assert!(lower <= upper);
        self.lower[i] = lower;
        self.upper[i] = upper;
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| x[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        (0..x.len()).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }
}

/// Linear solver for the damped normal equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Pick dense Cholesky below [`LmOptions::dense_threshold`] parameters,
    /// conjugate gradient above.
    Auto,
    DenseCholesky,
    /// Jacobi-preconditioned conjugate gradient on the damped normal matrix.
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Convergence threshold on the ∞-norm of the projected gradient Jᵀr.
    pub gradient_tol: f64,
    /// Convergence threshold on the accepted relative step length.
    pub step_tol: f64,
    /// Convergence threshold on the relative objective decrease of an
    /// accepted step.
    pub function_tol: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
    pub min_damping: f64,
    pub linear_solver: LinearSolver,
    pub dense_threshold: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    /// Size of the consecutive-index diagonal blocks used by the CG
    /// preconditioner; 1 is plain Jacobi. Problems with a fixed per-item
    /// parameter stride (a pose per frame, a transform per graph node)
    /// should set the stride here.
    pub cg_block_size: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            function_tol: 1e-12,
            initial_damping: 1e-3,
            max_damping: 1e14,
            min_damping: 1e-12,
            linear_solver: LinearSolver::Auto,
            dense_threshold: 256,
            cg_tol: 1e-8,
            cg_max_iters: 0, // 0 = min(2·n + 100, 600)
            cg_block_size: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    /// An accepted step decreased the objective by less than the relative
    /// function tolerance.
    FunctionTolerance,
    MaxIterations,
    /// Damping grew past its cap without finding a decreasing step; the
    /// best iterate is returned.
    Stalled,
}

/// Outcome summary of one [`lm_minimize`] run.
#[derive(Debug, Clone)]
pub struct LmReport {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub termination: Termination,
    /// Set when `x0` violated the box and was projected onto it.
    pub projected_initial: bool,
}

impl LmReport {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance
                | Termination::StepTolerance
                | Termination::FunctionTolerance
        )
    }
}

/// Sparse symmetric accumulator for JᵀJ plus the gradient Jᵀr.
struct NormalEquations {
    n: usize,
    dense: Option<DMatrix<f64>>,
    // Upper triangle (i ≤ j); BTreeMap keeps assembly and iteration
    // deterministic.
    sparse: Option<BTreeMap<(u32, u32), f64>>,
    gradient: DVector<f64>,
}

impl NormalEquations {
    fn new(n: usize, dense: bool) -> Self {
        Self {
            n,
            dense: dense.then(|| DMatrix::zeros(n, n)),
            sparse: (!dense).then(BTreeMap::new),
            gradient: DVector::zeros(n),
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        if let Some(m) = self.dense.as_mut() {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        } else {
            let key = if i <= j { (i as u32, j as u32) } else { (j as u32, i as u32) };
            *self.sparse.as_mut().unwrap().entry(key).or_insert(0.0) += v;
        }
    }

    fn diag(&self) -> DVector<f64> {
        if let Some(m) = self.dense.as_ref() {
            m.diagonal()
        } else {
            let mut d = DVector::zeros(self.n);
            for (&(i, j), &v) in self.sparse.as_ref().unwrap() {
                if i == j {
                    d[i as usize] = v;
                }
            }
            d
        }
    }

    fn to_csr(&self) -> Csr {
        let map = self.sparse.as_ref().expect("sparse mode");
        let mut row_counts = vec![0usize; self.n + 1];
        let mut nnz = 0;
        for &(i, j) in map.keys() {
            row_counts[i as usize + 1] += 1;
            nnz += 1;
            if i != j {
                row_counts[j as usize + 1] += 1;
                nnz += 1;
            }
        }
        for r in 0..self.n {
            row_counts[r + 1] += row_counts[r];
        }
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0.0f64; nnz];
        let mut cursor = row_counts.clone();
        for (&(i, j), &v) in map {
            let (i, j) = (i as usize, j as usize);
            cols[cursor[i]] = j;
            vals[cursor[i]] = v;
            cursor[i] += 1;
            if i != j {
                cols[cursor[j]] = i;
                vals[cursor[j]] = v;
                cursor[j] += 1;
            }
        }
        Csr {
            row_ptr: row_counts,
            cols,
            vals,
        }
    }
}

struct Csr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn matvec(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for r in 0..self.row_ptr.len() - 1 {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[r] = acc;
        }
    }
}

fn eval_objective(blocks: &[&dyn ResidualBlock], x: &DVector<f64>) -> Result<f64> {
    let mut total = 0.0;
    for b in blocks {
        let r = b.residuals(x);
        if r.len() != b.residual_count() {
            return Err(Error::Solver(format!(
                "block '{}' returned {} residuals, declared {}",
                b.name(),
                r.len(),
                b.residual_count()
            )));
        }
        let s = r.norm_squared();
        if !s.is_finite() {
            return Err(Error::NonFinite { block: b.name().into() });
        }
        total += b.weight() * s;
    }
    Ok(total)
}

/// Assembles sqrt-weighted JᵀJ and Jᵀr over all blocks.
fn assemble(
    blocks: &[&dyn ResidualBlock],
    x: &DVector<f64>,
    dense: bool,
) -> Result<NormalEquations> {
    let n = x.len();
    let mut ne = NormalEquations::new(n, dense);
    for b in blocks {
        let w = b.weight();
        let r = b.residuals(x);
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { block: b.name().into() });
        }
        let active_owned: Vec<usize>;
        let active: &[usize] = match b.active_params() {
            Some(a) => a,
            None => {
                active_owned = (0..n).collect();
                &active_owned
            }
        };
        match b.jacobian(x) {
            BlockJacobian::Dense(j) => {
                if j.nrows() != r.len() || j.ncols() != active.len() {
                    return Err(Error::Solver(format!(
                        "block '{}' Jacobian is {}×{}, expected {}×{}",
                        b.name(),
                        j.nrows(),
                        j.ncols(),
                        r.len(),
                        active.len()
                    )));
                }
                if !j.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite { block: b.name().into() });
                }
                // JᵀJ over the active subset.
                for a in 0..active.len() {
                    for bcol in a..active.len() {
                        let mut acc = 0.0;
                        for row in 0..j.nrows() {
                            acc += j[(row, a)] * j[(row, bcol)];
                        }
                        ne.add(active[a], active[bcol], w * acc);
                    }
                    let mut g = 0.0;
                    for row in 0..j.nrows() {
                        g += j[(row, a)] * r[row];
                    }
                    ne.gradient[active[a]] += w * g;
                }
            }
            BlockJacobian::Rows(rows) => {
                if rows.len() != r.len() {
                    return Err(Error::Solver(format!(
                        "block '{}' returned {} Jacobian rows, expected {}",
                        b.name(),
                        rows.len(),
                        r.len()
                    )));
                }
                for (row, entries) in rows.iter().enumerate() {
                    for &(ca, va) in entries {
                        if !va.is_finite() {
                            return Err(Error::NonFinite { block: b.name().into() });
                        }
                        for &(cb, vb) in entries {
                            if active[ca] <= active[cb] {
                                ne.add(active[ca], active[cb], w * va * vb);
                            }
                        }
                        ne.gradient[active[ca]] += w * va * r[row];
                    }
                }
            }
        }
    }
    Ok(ne)
}

/// Gradient with components pointing out of the feasible box zeroed.
fn projected_gradient(
    g: &DVector<f64>,
    x: &DVector<f64>,
    bounds: &BoxConstraints,
) -> DVector<f64> {
    DVector::from_fn(g.len(), |i, _| {
        if (x[i] <= bounds.lower[i] && g[i] > 0.0) || (x[i] >= bounds.upper[i] && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        }
    })
}

/// Block-Jacobi preconditioner over consecutive index blocks; each damped
/// diagonal block is Cholesky-factored once per solve.
struct BlockPrecond {
    sizes: Vec<usize>,
    factors: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl BlockPrecond {
    fn build(
        map: &BTreeMap<(u32, u32), f64>,
        damp: &DVector<f64>,
        n: usize,
        block_size: usize,
    ) -> Option<Self> {
        let bs = block_size.max(1);
        let mut factors = Vec::with_capacity(n.div_ceil(bs));
        let mut sizes = Vec::with_capacity(factors.capacity());
        let mut start = 0usize;
        while start < n {
            let len = bs.min(n - start);
            let mut block = DMatrix::zeros(len, len);
            for i in 0..len {
                block[(i, i)] = damp[start + i];
            }
            for (&(i, j), &v) in
                map.range((start as u32, 0u32)..((start + len) as u32, 0u32))
            {
                let (i, j) = (i as usize, j as usize);
                if j >= start && j < start + len {
                    block[(i - start, j - start)] += v;
                    if i != j {
                        block[(j - start, i - start)] += v;
                    }
                }
            }
            factors.push(nalgebra::Cholesky::new(block)?);
            sizes.push(len);
            start += len;
        }
        Some(Self { sizes, factors })
    }

    fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(r.len());
        let mut start = 0usize;
        for (f, &len) in self.factors.iter().zip(self.sizes.iter()) {
            let seg = r.rows(start, len).into_owned();
            z.rows_mut(start, len).copy_from(&f.solve(&seg));
            start += len;
        }
        z
    }
}

fn solve_damped(
    ne: &NormalEquations,
    diag: &DVector<f64>,
    mu: f64,
    opts: &LmOptions,
) -> Option<DVector<f64>> {
    let n = ne.n;
    let rhs = -&ne.gradient;
    // Marquardt scaling with a floor so unobserved parameters stay put.
    let damp = DVector::from_fn(n, |i, _| mu * diag[i].max(1e-12));
    if let Some(m) = ne.dense.as_ref() {
        let mut h = m.clone();
        for i in 0..n {
            h[(i, i)] += damp[i];
        }
        return h.cholesky().map(|c| c.solve(&rhs));
    }
    let map = ne.sparse.as_ref().unwrap();
    let precond = BlockPrecond::build(map, &damp, n, opts.cg_block_size)?;
    let csr = ne.to_csr();
    let matvec = |x: &DVector<f64>, out: &mut DVector<f64>| {
        csr.matvec(x, out);
        for i in 0..n {
            out[i] += damp[i] * x[i];
        }
    };
    let max_iters = if opts.cg_max_iters == 0 {
        (2 * n + 100).min(600)
    } else {
        opts.cg_max_iters
    };
    conjugate_gradient(&matvec, &precond, &rhs, opts.cg_tol, max_iters)
}

fn conjugate_gradient<F>(
    matvec: &F,
    precond: &BlockPrecond,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>, &mut DVector<f64>),
{
    let n = b.len();
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Some(x);
    }
    let mut z = precond.apply(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut ap = DVector::zeros(n);
    for _ in 0..max_iters {
        matvec(&p, &mut ap);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            // Not positive definite along p; let the caller raise damping.
            return None;
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        if r.norm() <= tol * b_norm {
            return Some(x);
        }
        z = precond.apply(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    // CG ran out of iterations; the partial solution is still a descent
    // direction for the damped system, so use it.
    Some(x)
}

/// Minimizes the weighted sum of squared block residuals subject to box
/// constraints via projected Levenberg–Marquardt.
///
/// The start point is projected onto the box (flagged in the report). Every
/// candidate step is projected before evaluation, so all iterates and the
/// result satisfy the constraints exactly, and accepted steps never increase
/// the objective. Non-finite residuals or Jacobians abort with
/// [`Error::NonFinite`] naming the offending block; an indefinite or
/// unsolvable normal system raises the damping instead of failing.
pub fn lm_minimize(
    blocks: &[&dyn ResidualBlock],
    x0: &DVector<f64>,
    bounds: &BoxConstraints,
    opts: &LmOptions,
) -> Result<(DVector<f64>, LmReport)> {
    if bounds.len() != x0.len() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has {} parameters, box has {}",
            x0.len(),
            bounds.len()
        )));
    }
    let n = x0.len();
    let dense = match opts.linear_solver {
        LinearSolver::DenseCholesky => true,
        LinearSolver::ConjugateGradient => false,
        LinearSolver::Auto => n <= opts.dense_threshold,
    };

    let mut x = bounds.project(x0);
    let projected_initial = (&x - x0).norm() > 0.0;
    let mut objective = eval_objective(blocks, &x)?;
    let initial_objective = objective;
    let mut mu = opts.initial_damping;
    let mut report = LmReport {
        iterations: 0,
        initial_objective,
        final_objective: objective,
        termination: Termination::MaxIterations,
        projected_initial,
    };

    for iter in 0..opts.max_iters {
        report.iterations = iter + 1;
        let ne = assemble(blocks, &x, dense)?;
        let pg = projected_gradient(&ne.gradient, &x, bounds);
        if pg.amax() <= opts.gradient_tol {
            report.termination = Termination::GradientTolerance;
            report.final_objective = objective;
            return Ok((x, report));
        }
        let diag = ne.diag();

        // Inner damping loop: retry with larger μ until a step decreases
        // the objective or the damping cap is hit.
        loop {
            let step = match solve_damped(&ne, &diag, mu, opts) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    mu *= 10.0;
                    if mu > opts.max_damping {
                        report.termination = Termination::Stalled;
                        report.final_objective = objective;
                        return Ok((x, report));
                    }
                    continue;
                }
            };
            let candidate = bounds.project(&(&x + &step));
            let actual_step = &candidate - &x;
            let cand_objective = eval_objective(blocks, &candidate)?;
            if cand_objective < objective {
                let decrease = objective - cand_objective;
                x = candidate;
                objective = cand_objective;
                mu = (mu * 0.1).max(opts.min_damping);
                if actual_step.norm() <= opts.step_tol * (x.norm() + opts.step_tol) {
                    report.termination = Termination::StepTolerance;
                    report.final_objective = objective;
                    return Ok((x, report));
                }
                if decrease <= opts.function_tol * objective.max(f64::MIN_POSITIVE) {
                    report.termination = Termination::FunctionTolerance;
                    report.final_objective = objective;
                    return Ok((x, report));
                }
                break;
            }
            mu *= 10.0;
            if mu > opts.max_damping {
                report.termination = Termination::Stalled;
                report.final_objective = objective;
                return Ok((x, report));
            }
        }
    }
    report.final_objective = objective;
    Ok((x, report))
}

/// Maximum relative deviation between a block's analytic Jacobian and a
/// central-difference approximation at `x`:
/// `max |J_a − J_fd| / (1 + |J_fd|)`. Returns +∞ when anything non-finite
/// shows up.
pub fn check_jacobian(block: &dyn ResidualBlock, x: &DVector<f64>, eps: f64) -> f64 {
    let n = x.len();
    let active_owned: Vec<usize>;
    let active: &[usize] = match block.active_params() {
        Some(a) => a,
        None => {
            active_owned = (0..n).collect();
            &active_owned
        }
    };
    let m = block.residual_count();
    let mut analytic = DMatrix::zeros(m, active.len());
    match block.jacobian(x) {
        BlockJacobian::Dense(j) => {
            if j.nrows() != m || j.ncols() != active.len() {
                return f64::INFINITY;
            }
            analytic.copy_from(&j);
        }
        BlockJacobian::Rows(rows) => {
            if rows.len() != m {
                return f64::INFINITY;
            }
            for (r, entries) in rows.iter().enumerate() {
                for &(c, v) in entries {
                    analytic[(r, c)] += v;
                }
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (slot, &p) in active.iter().enumerate() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[p] += eps;
        xm[p] -= eps;
        let rp = block.residuals(&xp);
        let rm = block.residuals(&xm);
        if rp.len() != m || rm.len() != m {
            return f64::INFINITY;
        }
        for row in 0..m {
            let fd = (rp[row] - rm[row]) / (2.0 * eps);
            let dev = (analytic[(row, slot)] - fd).abs() / (1.0 + fd.abs());
            if !dev.is_finite() {
                return f64::INFINITY;
            }
            worst = worst.max(dev);
        }
    }
    worst
}

impl<B: ResidualBlock + ?Sized> ResidualBlock for &B {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn residual_count(&self) -> usize {
        (**self).residual_count()
    }
    fn active_params(&self) -> Option<&[usize]> {
        (**self).active_params()
    }
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).residuals(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        (**self).jacobian(x)
    }
    fn weight(&self) -> f64 {
        (**self).weight()
    }
}

/// Residual block defined by plain closures; the workhorse for tests and
/// small custom terms.
pub struct FnBlock<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub name: String,
    pub count: usize,
    pub active: Option<Vec<usize>>,
    pub weight: f64,
    pub residual_fn: R,
    pub jacobian_fn: J,
}

impl<R, J> FnBlock<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    pub fn new(name: &str, count: usize, residual_fn: R, jacobian_fn: J) -> Self {
        Self {
            name: name.into(),
            count,
            active: None,
            weight: 1.0,
            residual_fn,
            jacobian_fn,
        }
    }
}

impl<R, J> ResidualBlock for FnBlock<R, J>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn residual_count(&self) -> usize {
        self.count
    }

    fn active_params(&self) -> Option<&[usize]> {
        self.active.as_deref()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.residual_fn)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> BlockJacobian {
        BlockJacobian::Dense((self.jacobian_fn)(x))
    }

    fn weight(&self) -> f64 {
        self.weight
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_shift_block() -> impl ResidualBlock {
        FnBlock::new(
            "x minus 3",
            1,
            |x: &DVector<f64>| DVector::from_vec(vec![x[0] - 3.0]),
            |_| DMatrix::from_element(1, 1, 1.0),
        )
    }

    #[test]
    fn linear_least_squares_hits_exact_solution() {
        let block = scalar_shift_block();
        let x0 = DVector::zeros(1);
        let (x, report) = lm_minimize(
            &[&block],
            &x0,
            &BoxConstraints::unbounded(1),
            &LmOptions::default(),
        )
        .unwrap();
        assert!((x[0] - 3.0).abs() < 1e-10, "x = {}", x[0]);
        assert!(report.converged());
    }

    #[test]
    fn active_bound_clamps_the_optimum() {
        let block = scalar_shift_block();
        let x0 = DVector::zeros(1);
        let bounds = BoxConstraints::new(
            DVector::from_vec(vec![-1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let (x, report) = lm_minimize(&[&block], &x0, &bounds, &LmOptions::default()).unwrap();
        assert_relative_eq!(x[0], 1.0);
        assert!(report.converged());
    }

    #[test]
    fn rosenbrock_converges_from_the_standard_start() {
        let block = FnBlock::new(
            "rosenbrock",
            2,
            |x: &DVector<f64>| {
                DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])
            },
            |x: &DVector<f64>| {
                DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0])
            },
        );
        let x0 = DVector::from_vec(vec![-1.2, 1.0]);
        let mut opts = LmOptions::default();
        opts.max_iters = 200;
        let (x, report) = lm_minimize(&[&block], &x0, &BoxConstraints::unbounded(2), &opts).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "x = {x:?}");
        assert!(report.iterations < 200);
        assert!(report.final_objective < 1e-12);
    }

    #[test]
    fn convex_quadratic_matches_normal_equations() {
        // r = A x - b with a well-conditioned A: the minimizer solves
        // AᵀA x = Aᵀ b exactly.
        let a = DMatrix::from_row_slice(3, 2, &[2.0, 1.0, -1.0, 3.0, 0.5, -2.0]);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let expect = (a.transpose() * &a)
            .cholesky()
            .unwrap()
            .solve(&(a.transpose() * &b));
        let (aj, ar, br) = (a.clone(), a.clone(), b.clone());
        let block = FnBlock::new(
            "affine",
            3,
            move |x: &DVector<f64>| &ar * x - &br,
            move |_| aj.clone(),
        );
        let (x, _) = lm_minimize(
            &[&block],
            &DVector::zeros(2),
            &BoxConstraints::unbounded(2),
            &LmOptions::default(),
        )
        .unwrap();
        assert!((x - expect).norm() < 1e-8);
    }

    #[test]
    fn objective_is_monotone_across_accepted_steps() {
        // Track objectives by running one iteration at a time from the last
        // iterate; each restart must not increase the objective.
        let block = FnBlock::new(
            "himmelblau",
            2,
            |x: &DVector<f64>| {
                DVector::from_vec(vec![
                    x[0] * x[0] + x[1] - 11.0,
                    x[0] + x[1] * x[1] - 7.0,
                ])
            },
            |x: &DVector<f64>| {
                DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 1.0, 1.0, 2.0 * x[1]])
            },
        );
        let mut x = DVector::from_vec(vec![0.0, 0.0]);
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let mut opts = LmOptions::default();
            opts.max_iters = 1;
            let (xn, report) = lm_minimize(&[&block], &x, &BoxConstraints::unbounded(2), &opts).unwrap();
            assert!(report.final_objective <= last.min(report.initial_objective) + 1e-15);
            last = report.final_objective;
            x = xn;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn infeasible_start_is_projected_and_reported() {
        let block = scalar_shift_block();
        let bounds = BoxConstraints::new(
            DVector::from_vec(vec![-1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let x0 = DVector::from_vec(vec![5.0]);
        let (x, report) = lm_minimize(&[&block], &x0, &bounds, &LmOptions::default()).unwrap();
        assert!(report.projected_initial);
        assert!(bounds.contains(&x));
    }

    #[test]
    fn non_finite_residual_identifies_the_block() {
        let block = FnBlock::new(
            "bad block",
            1,
            |_x: &DVector<f64>| DVector::from_vec(vec![f64::NAN]),
            |_| DMatrix::from_element(1, 1, 1.0),
        );
        let err = lm_minimize(
            &[&block],
            &DVector::zeros(1),
            &BoxConstraints::unbounded(1),
            &LmOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::NonFinite { block } => assert_eq!(block, "bad block"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn jacobian_checker_on_linear_block() {
        let a = DMatrix::from_row_slice(3, 2, &[2.0, 1.0, -1.0, 3.0, 0.5, -2.0]);
        let a2 = a.clone();
        let block = FnBlock::new(
            "linear",
            3,
            move |x: &DVector<f64>| &a * x,
            move |_| a2.clone(),
        );
        let dev = check_jacobian(&block, &DVector::from_vec(vec![0.3, -0.8]), 1e-6);
        assert!(dev < 1e-9, "deviation {dev}");
    }

    #[test]
    fn jacobian_checker_flags_a_wrong_column() {
        let block = FnBlock::new(
            "broken",
            2,
            |x: &DVector<f64>| DVector::from_vec(vec![x[0] * x[0], x[1]]),
            |x: &DVector<f64>| {
                // d(x0²)/dx0 deliberately wrong by a factor of two.
                DMatrix::from_row_slice(2, 2, &[4.0 * x[0], 0.0, 0.0, 1.0])
            },
        );
        let dev = check_jacobian(&block, &DVector::from_vec(vec![1.0, 1.0]), 1e-6);
        assert!(dev > 1e-2, "deviation {dev}");
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        // A separable quadratic with sparse active sets, solved both ways.
        let blocks: Vec<_> = (0..6usize)
            .map(|i| {
                let mut b = FnBlock::new(
                    "sep",
                    1,
                    move |x: &DVector<f64>| DVector::from_vec(vec![x[i] - (i as f64)]),
                    |_| DMatrix::from_element(1, 1, 1.0),
                );
                // Each block sees only its own coordinate.
                b.active = Some(vec![i]);
                b
            })
            .collect();
        let refs: Vec<&dyn ResidualBlock> = blocks.iter().map(|b| b as &dyn ResidualBlock).collect();
        let x0 = DVector::zeros(6);
        let mut dense_opts = LmOptions::default();
        dense_opts.linear_solver = LinearSolver::DenseCholesky;
        let mut cg_opts = LmOptions::default();
        cg_opts.linear_solver = LinearSolver::ConjugateGradient;
        let (xd, _) = lm_minimize(&refs, &x0, &BoxConstraints::unbounded(6), &dense_opts).unwrap();
        let (xc, _) = lm_minimize(&refs, &x0, &BoxConstraints::unbounded(6), &cg_opts).unwrap();
        for i in 0..6 {
            assert_relative_eq!(xd[i], i as f64, epsilon = 1e-9);
            assert_relative_eq!(xc[i], i as f64, epsilon = 1e-8);
        }
    }
}
