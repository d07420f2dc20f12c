//! Entropic optimal transport between point clouds in `R^d`.
//!
//! The input-side transport map is estimated in three steps: solve the
//! entropic problem between the two empirical measures with Sinkhorn, send
//! every source point to the conditional mean of its coupled targets
//! (barycentric projection), then extend off the support with a Gaussian
//! kernel average of the projected images.
//!
//! Sinkhorn runs on the scaling vectors `u, v` with a precomputed Gibbs
//! kernel `K = exp(-C / eps)` while `eps / mean(C) >= 0.01`; below that the
//! kernel underflows on realistic clouds, so the solver switches to
//! log-domain potentials updated with log-sum-exp.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::map::EvaluableMap;
use crate::sample::{fmt_f64, SampleSet};

/// Below this `eps / mean cost` ratio only the log-domain solver is used.
pub const LOG_DOMAIN_THRESHOLD: f64 = 0.01;
pub const DEFAULT_EPSILON_REL: f64 = 0.05;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest instance the exhaustive assignment oracle accepts.
pub const ORACLE_MAX_N: usize = 10;

/// Dense squared-Euclidean cost matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(invalid(format!(
                "cost matrix {rows}x{cols} with {} entries",
                entries.len()
            )));
        }
        if entries.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(invalid("cost entries must be finite and nonnegative"));
        }
        Ok(CostMatrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }
}

/// `C_ij = |a_i - b_j|^2`.
pub fn squared_cost(a: &SampleSet, b: &SampleSet) -> Result<CostMatrix> {
    if a.dim() != b.dim() {
        return Err(invalid(format!(
            "cost between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut entries = Vec::with_capacity(a.len() * b.len());
    for p in a.points() {
        for q in b.points() {
            entries.push(sq_dist(p, q));
        }
    }
    CostMatrix::new(a.len(), b.len(), entries)
}

#[inline]
pub fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A transport plan together with the marginals it was solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

impl Coupling {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        row_marginal: Vec<f64>,
        col_marginal: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != rows * cols
            || row_marginal.len() != rows
            || col_marginal.len() != cols
        {
            return Err(invalid("coupling shape mismatch"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("coupling weights must be finite and nonnegative"));
        }
        Ok(Coupling {
            rows,
            cols,
            weights,
            row_marginal,
            col_marginal,
        })
    }

    /// Independent coupling `a b^T`.
    pub fn product(row_marginal: &[f64], col_marginal: &[f64]) -> Self {
        let weights = row_marginal
            .iter()
            .flat_map(|a| col_marginal.iter().map(move |b| a * b))
            .collect();
        Coupling {
            rows: row_marginal.len(),
            cols: col_marginal.len(),
            weights,
            row_marginal: row_marginal.to_vec(),
            col_marginal: col_marginal.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.cols..(i + 1) * self.cols]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.weights
            .chunks_exact(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for r in self.weights.chunks_exact(self.cols) {
            for (acc, w) in s.iter_mut().zip(r) {
                *acc += w;
            }
        }
        s
    }

    /// Largest absolute per-entry deviation of row and column sums from the marginals.
    pub fn max_marginal_error(&self) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(&self.row_marginal)
            .map(|(s, a)| (s - a).abs())
            .fold(0.0, f64::max);
        let c = self
            .col_sums()
            .iter()
            .zip(&self.col_marginal)
            .map(|(s, b)| (s - b).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }

    /// L1 violations `(rows, cols)`.
    pub fn marginal_violation(&self) -> (f64, f64) {
        let r = self
            .row_sums()
            .iter()
            .zip(&self.row_marginal)
            .map(|(s, a)| (s - a).abs())
            .sum();
        let c = self
            .col_sums()
            .iter()
            .zip(&self.col_marginal)
            .map(|(s, b)| (s - b).abs())
            .sum();
        (r, c)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_ij P_ij C_ij`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> Result<f64> {
        if cost.rows != self.rows || cost.cols != self.cols {
            return Err(invalid("cost and coupling shapes differ"));
        }
        Ok(self
            .weights
            .iter()
            .zip(&cost.entries)
            .map(|(p, c)| p * c)
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    /// Sweep budget exhausted; the plan is the last iterate.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    pub iterations: usize,
    /// Larger of the row and column L1 marginal violations of `coupling`.
    pub violation: f64,
    pub status: Convergence,
    pub log_domain: bool,
}

impl SinkhornResult {
    pub fn converged(&self) -> bool {
        self.status == Convergence::Converged
    }

    /// The plan if converged, otherwise [`Error::NotConverged`].
    pub fn into_converged(self) -> Result<Coupling> {
        match self.status {
            Convergence::Converged => Ok(self.coupling),
            Convergence::NotConverged => Err(Error::NotConverged {
                iterations: self.iterations,
                violation: self.violation,
            }),
        }
    }
}

fn check_marginal(m: &[f64], n: usize, role: &str) -> Result<()> {
    if m.len() != n {
        return Err(invalid(format!(
            "{role} marginal has length {}, cost needs {n}",
            m.len()
        )));
    }
    if m.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(invalid(format!("{role} marginal has negative or non-finite mass")));
    }
    let total: f64 = m.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("{role} marginal sums to {total}, not 1")));
    }
    Ok(())
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Entropic OT by alternating scaling.
///
/// Epsilon is annealed down from the mean cost in powers of two, each stage
/// warm-started from the last. Stops once the L1 marginal violation is below
/// `tol`, or after `max_iter` sweeps with [`Convergence::NotConverged`].
/// Small problems that scaling leaves short of `tol` get a damped Newton
/// polish on the potentials; its steps count as iterations.
pub fn sinkhorn(
    cost: &CostMatrix,
    row_marginal: &[f64],
    col_marginal: &[f64],
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornResult> {
    check_marginal(row_marginal, cost.rows, "row")?;
    check_marginal(col_marginal, cost.cols, "column")?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(invalid("tol and max_iter must be positive"));
    }
    // written as a product so that epsilon = 0.01 * mean stays in the scaling domain
    let log_domain = epsilon < LOG_DOMAIN_THRESHOLD * cost.mean();
    sinkhorn_annealed(cost, row_marginal, col_marginal, epsilon, tol, max_iter, log_domain)
}

fn finish(
    weights: Vec<f64>,
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    iterations: usize,
    tol: f64,
    log_domain: bool,
) -> Result<SinkhornResult> {
    let coupling = Coupling::new(cost.rows, cost.cols, weights, a.to_vec(), b.to_vec())
        .map_err(|_| Error::NumericalFailure("sinkhorn produced a non-finite plan".into()))?;
    let (vr, vc) = coupling.marginal_violation();
    let violation = vr.max(vc);
    let status = if violation < tol {
        Convergence::Converged
    } else {
        Convergence::NotConverged
    };
    Ok(SinkhornResult {
        coupling,
        iterations,
        violation,
        status,
        log_domain,
    })
}

/// Loosest marginal violation at which an intermediate annealing stage hands
/// over to the next one.
const STAGE_TOL: f64 = 1e-3;

/// Target epsilons of the annealing schedule, largest first: `epsilon` times
/// powers of two, starting at the first one not below the mean cost.
fn annealing_schedule(epsilon: f64, mean_cost: f64) -> Vec<f64> {
    let mut stages = vec![epsilon];
    let mut e = epsilon;
    while e < mean_cost {
        e *= 2.0;
        stages.push(e);
    }
    stages.reverse();
    stages
}

// Sinkhorn with epsilon annealing. Each stage starts from the potentials of
// the previous one; in the scaling domain they are absorbed into a stabilised
// kernel exp((f_i + g_j - C_ij) / eps). Without the warm start small
// epsilons stall in the sublinear phase long before the marginals are tight.
fn sinkhorn_annealed(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    log_domain: bool,
) -> Result<SinkhornResult> {
    let (n, m) = (cost.rows, cost.cols);
    let stages = annealing_schedule(epsilon, cost.mean());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    let last = stages.len() - 1;
    // small problems keep part of the sweep budget for the Newton polish
    let polish_budget = if n + m <= NEWTON_MAX_DIM { NEWTON_MAX_STEPS.min(max_iter / 2) } else { 0 };
    for (s, &eps) in stages.iter().enumerate() {
        let stage_tol = if s == last { tol } else { tol.max(STAGE_TOL) };
        let budget = (max_iter - polish_budget).saturating_sub(iterations);
        iterations += if log_domain {
            log_stage(cost, a, b, eps, &mut f, &mut g, stage_tol, budget)?
        } else {
            scaling_stage(cost, a, b, eps, &mut f, &mut g, stage_tol, budget)?
        };
    }
    let result = finish(gibbs_plan(cost, epsilon, &f, &g), cost, a, b, iterations, tol, log_domain)?;
    if result.converged() || polish_budget == 0 {
        return Ok(result);
    }
    let (plan, steps) = newton_polish(cost, a, b, epsilon, &mut f, &mut g, tol, polish_budget);
    let polished = finish(plan, cost, a, b, iterations + steps, tol, log_domain)?;
    Ok(if polished.violation < result.violation { polished } else { result })
}

/// Alternating scaling on the stabilised kernel for at most `budget` sweeps;
/// the scalings are absorbed into `f` and `g` on return. Returns the sweeps
/// used.
#[allow(clippy::too_many_arguments)]
fn scaling_stage(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    budget: usize,
) -> Result<usize> {
    let (n, m) = (cost.rows, cost.cols);
    let kernel = gibbs_plan(cost, epsilon, f, g);
    let underflow = || {
        Error::NumericalFailure(format!(
            "Gibbs kernel underflows at epsilon = {epsilon:e}; use a larger epsilon or the log-domain solver"
        ))
    };
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut u_next = vec![0.0; n];
    let mut ktu = vec![0.0; m];

    // One streaming pass per sweep: row i yields (Kv)_i, hence the new u_i,
    // whose contribution to K^T u is added while the row is still in cache.
    let mut iterations = 0;
    while iterations < budget {
        iterations += 1;
        ktu.iter_mut().for_each(|x| *x = 0.0);
        let mut row_violation = 0.0;
        for (((row, ui), un), ai) in kernel.chunks_exact(m).zip(&u).zip(u_next.iter_mut()).zip(a) {
            let kvi = dot(row, &v);
            row_violation += (ui * kvi - ai).abs();
            if kvi <= 0.0 {
                if *ai > 0.0 {
                    return Err(underflow());
                }
                *un = 0.0;
                continue;
            }
            *un = ai / kvi;
            axpy(*un, row, &mut ktu);
        }
        // columns are exact after every v-update, so the row check decides
        if iterations > 1 && row_violation < tol {
            break;
        }
        std::mem::swap(&mut u, &mut u_next);
        for ((vj, ktj), bj) in v.iter_mut().zip(&ktu).zip(b) {
            if *ktj <= 0.0 {
                if *bj > 0.0 {
                    return Err(underflow());
                }
                *vj = 0.0;
            } else {
                *vj = bj / ktj;
            }
        }
        if u.iter().chain(&v).any(|s| !s.is_finite()) {
            return Err(underflow());
        }
    }
    for (fi, ui) in f.iter_mut().zip(&u) {
        *fi += epsilon * ui.ln();
    }
    for (gj, vj) in g.iter_mut().zip(&v) {
        *gj += epsilon * vj.ln();
    }
    Ok(iterations)
}

/// Problems with at most this many rows plus columns get a Newton polish
/// when scaling alone does not reach the tolerance.
const NEWTON_MAX_DIM: usize = 600;
const NEWTON_MAX_STEPS: usize = 100;

fn gibbs_plan(cost: &CostMatrix, epsilon: f64, f: &[f64], g: &[f64]) -> Vec<f64> {
    let m = cost.cols;
    let mut plan = Vec::with_capacity(cost.rows * m);
    for (row, fi) in cost.entries.chunks_exact(m).zip(f) {
        plan.extend(row.iter().zip(g).map(|(c, gj)| ((fi + gj - c) / epsilon).exp()));
    }
    plan
}

/// Damped Newton ascent on the dual potentials.
///
/// Near a sparse optimum the plan is close to a permutation and alternating
/// scaling contracts at a rate close to one; the Newton system resolves those
/// flat directions directly. The last column potential is pinned to remove
/// the constant shift. Returns the plan and the number of steps taken.
#[allow(clippy::too_many_arguments)]
fn newton_polish(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    max_steps: usize,
) -> (Vec<f64>, usize) {
    let (n, m) = (cost.rows, cost.cols);
    let state = |f: &[f64], g: &[f64]| {
        let plan = gibbs_plan(cost, epsilon, f, g);
        let mut r = vec![0.0; n];
        let mut c = vec![0.0; m];
        for (i, row) in plan.chunks_exact(m).enumerate() {
            for (j, p) in row.iter().enumerate() {
                r[i] += p;
                c[j] += p;
            }
        }
        let dual = f.iter().zip(a).map(|(x, y)| x * y).sum::<f64>()
            + g.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
            - epsilon * plan.iter().sum::<f64>();
        let viol_r: f64 = r.iter().zip(a).map(|(x, y)| (x - y).abs()).sum();
        let viol_c: f64 = c.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        (plan, r, c, dual, viol_r.max(viol_c))
    };
    let k = n + m - 1;
    let (mut plan, mut r, mut c, mut dual, mut viol) = state(f, g);
    let mut steps = 0;
    // Levenberg-style ridge, relative to the largest marginal entry; it only
    // grows when the plain step fails, e.g. once underflowed entries split
    // the support graph and the Hessian picks up a second null direction
    let mut ridge = 0.0;
    while steps < max_steps && viol >= tol && viol.is_finite() {
        steps += 1;
        let scale = r.iter().chain(&c).cloned().fold(0.0, f64::max);
        let mut hess = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for i in 0..n {
            hess[(i, i)] = r[i] + ridge * scale;
            rhs[i] = epsilon * (a[i] - r[i]);
            for j in 0..m - 1 {
                hess[(i, n + j)] = plan[i * m + j];
                hess[(n + j, i)] = plan[i * m + j];
            }
        }
        for j in 0..m - 1 {
            hess[(n + j, n + j)] = c[j] + ridge * scale;
            rhs[n + j] = epsilon * (b[j] - c[j]);
        }
        let step = hess
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .or_else(|| hess.lu().solve(&rhs));
        let mut accepted = false;
        if let Some(step) = step {
            let slope: f64 = (0..n).map(|i| (a[i] - r[i]) * step[i]).sum::<f64>()
                + (0..m - 1).map(|j| (b[j] - c[j]) * step[n + j]).sum::<f64>();
            let mut t = 1.0;
            for _ in 0..30 {
                let f_new: Vec<f64> = f.iter().enumerate().map(|(i, x)| x + t * step[i]).collect();
                let g_new: Vec<f64> = g
                    .iter()
                    .enumerate()
                    .map(|(j, x)| if j + 1 < m { x + t * step[n + j] } else { *x })
                    .collect();
                let next = state(&f_new, &g_new);
                // the dual gain drowns in rounding near the optimum, where a
                // smaller violation decides instead
                if next.3 >= dual + 1e-4 * t * slope || next.4 < viol {
                    f.copy_from_slice(&f_new);
                    g.copy_from_slice(&g_new);
                    (plan, r, c, dual, viol) = next;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if accepted {
            ridge = if ridge > 1e-12 { ridge * 0.01 } else { 0.0 };
        } else {
            ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
            if ridge > 1.0 {
                break;
            }
        }
    }
    (plan, steps)
}

/// Dot product with independent partial sums, so the loop vectorises.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn logsumexp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + vals.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-domain alternating updates of the potentials for at most `budget`
/// sweeps. Returns the sweeps used.
#[allow(clippy::too_many_arguments)]
fn log_stage(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    epsilon: f64,
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    budget: usize,
) -> Result<usize> {
    let (n, m) = (cost.rows, cost.cols);
    let mut iterations = 0;
    let mut lse_rows = vec![0.0; n];
    while iterations < budget {
        iterations += 1;
        let mut row_violation = 0.0;
        for (i, lse) in lse_rows.iter_mut().enumerate() {
            let c = cost.row(i);
            *lse = logsumexp((0..m).map(|j| (g[j] - c[j]) / epsilon));
            row_violation += ((f[i] / epsilon + *lse).exp() - a[i]).abs();
        }
        if iterations > 1 && row_violation < tol {
            break;
        }
        for ((fi, lse), ai) in f.iter_mut().zip(&lse_rows).zip(a) {
            *fi = if *ai > 0.0 { epsilon * (ai.ln() - lse) } else { f64::NEG_INFINITY };
        }
        for j in 0..m {
            let lse = logsumexp((0..n).map(|i| (f[i] - cost.get(i, j)) / epsilon));
            g[j] = if b[j] > 0.0 {
                epsilon * (b[j].ln() - lse)
            } else {
                f64::NEG_INFINITY
            };
        }
        if f.iter().chain(g.iter()).any(|x| x.is_nan()) {
            return Err(Error::NumericalFailure("log-domain sinkhorn produced NaN".into()));
        }
    }
    Ok(iterations)
}

/// Conditional mean of the coupled targets for every row.
pub fn barycentric_projection(plan: &Coupling, tgt_points: &SampleSet) -> Result<Vec<Vec<f64>>> {
    if plan.cols != tgt_points.len() {
        return Err(invalid(format!(
            "plan has {} columns but {} target points",
            plan.cols,
            tgt_points.len()
        )));
    }
    let d = tgt_points.dim();
    let mut images = Vec::with_capacity(plan.rows);
    for i in 0..plan.rows {
        let mass = plan.row_marginal[i];
        if mass <= 0.0 {
            return Err(invalid(format!("row {i} has zero marginal mass")));
        }
        let mut img = vec![0.0; d];
        for (w, q) in plan.row(i).iter().zip(tgt_points.points()) {
            if *w == 0.0 {
                continue;
            }
            for (acc, qk) in img.iter_mut().zip(q) {
                *acc += w * qk;
            }
        }
        img.iter_mut().for_each(|x| *x /= mass);
        images.push(img);
    }
    Ok(images)
}

/// How `epsilon` is chosen for a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Absolute(f64),
    /// Multiple of the mean cost entry.
    RelativeToMeanCost(f64),
}

impl Epsilon {
    pub fn resolve(self, cost: &CostMatrix) -> f64 {
        match self {
            Epsilon::Absolute(e) => e,
            Epsilon::RelativeToMeanCost(r) => {
                let mean = cost.mean();
                // all-zero cost: any positive value gives the product plan
                if mean > 0.0 {
                    r * mean
                } else {
                    r
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropicOptions {
    pub epsilon: Epsilon,
    /// `None` selects [`default_bandwidth`].
    pub bandwidth: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        EntropicOptions {
            epsilon: Epsilon::RelativeToMeanCost(DEFAULT_EPSILON_REL),
            bandwidth: None,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// `1.06 * sd * m^(-1/(4+d))`, with `sd` the mean per-coordinate sample
/// standard deviation.
pub fn default_bandwidth(points: &SampleSet) -> f64 {
    bandwidth_rule(points, 1.06, 1.0 / (4.0 + points.dim() as f64))
}

/// `scale * sd * m^(-exponent)`; degenerate clouds get bandwidth 1.
pub fn bandwidth_rule(points: &SampleSet, scale: f64, exponent: f64) -> f64 {
    let sds = points.coord_std();
    let sd = sds.iter().sum::<f64>() / sds.len() as f64;
    let h = scale * sd * (points.len() as f64).powf(-exponent);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

/// Kernel-extended barycentric-projection map.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropicMap {
    support_in: SampleSet,
    support_out: SampleSet,
    bandwidth: f64,
    epsilon: f64,
}

impl EntropicMap {
    pub fn new(support_in: SampleSet, support_out: SampleSet, bandwidth: f64, epsilon: f64) -> Result<Self> {
        if support_in.len() != support_out.len() {
            return Err(invalid(format!(
                "support lists of lengths {} and {}",
                support_in.len(),
                support_out.len()
            )));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(EntropicMap {
            support_in: support_in.without_responses(),
            support_out: support_out.without_responses(),
            bandwidth,
            epsilon,
        })
    }

    pub fn support_in(&self) -> &SampleSet {
        &self.support_in
    }

    pub fn support_out(&self) -> &SampleSet {
        &self.support_out
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        eval_entropic(self, x)
    }

    /// Header comment line, then `x1..xd,t1..td'` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# bandwidth={} epsilon={}",
            fmt_f64(self.bandwidth),
            fmt_f64(self.epsilon)
        )?;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.support_in.dim()).map(|k| format!("x{k}")).collect();
        header.extend((1..=self.support_out.dim()).map(|k| format!("t{k}")));
        wtr.write_record(&header)?;
        for (p, q) in self.support_in.points().zip(self.support_out.points()) {
            let row: Vec<String> = p.iter().chain(q).map(|v| fmt_f64(*v)).collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut bandwidth = None;
        let mut epsilon = None;
        // leading comment lines; the one carrying bandwidth/epsilon may follow others
        while reader.fill_buf()?.first() == Some(&b'#') {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            for tok in line.trim_start_matches('#').split_whitespace() {
                match tok.split_once('=') {
                    Some(("bandwidth", v)) => bandwidth = v.parse::<f64>().ok(),
                    Some(("epsilon", v)) => epsilon = v.parse::<f64>().ok(),
                    _ => {}
                }
            }
        }
        let (bandwidth, epsilon) = bandwidth
            .zip(epsilon)
            .ok_or_else(|| invalid("missing bandwidth/epsilon header line"))?;
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let d_in = headers.iter().filter(|h| h.starts_with('x')).count();
        let d_out = headers.len() - d_in;
        let (mut xin, mut xout) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| invalid(format!("bad number {field:?}")))?;
                if k < d_in {
                    xin.push(v)
                } else {
                    xout.push(v)
                }
            }
        }
        Self::new(
            SampleSet::from_flat(d_in, xin, None)?,
            SampleSet::from_flat(d_out, xout, None)?,
            bandwidth,
            epsilon,
        )
    }
}

/// Gaussian-kernel average of the support images, max-stabilised.
pub fn eval_entropic(map: &EntropicMap, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; map.support_out.dim()];
    eval_entropic_into(map, x, &mut out);
    out
}

fn eval_entropic_into(map: &EntropicMap, x: &[f64], out: &mut [f64]) {
    let scale = -0.5 / (map.bandwidth * map.bandwidth);
    let n = map.support_in.len();
    let mut expo = Vec::with_capacity(n);
    let mut max = f64::NEG_INFINITY;
    for p in map.support_in.points() {
        let e = scale * sq_dist(x, p);
        max = max.max(e);
        expo.push(e);
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut total = 0.0;
    for (e, q) in expo.iter().zip(map.support_out.points()) {
        let w = (e - max).exp();
        if w == 0.0 {
            continue;
        }
        total += w;
        for (o, qk) in out.iter_mut().zip(q) {
            *o += w * qk;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
}

impl EvaluableMap for EntropicMap {
    fn dim_in(&self) -> usize {
        self.support_in.dim()
    }
    fn dim_out(&self) -> usize {
        self.support_out.dim()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        eval_entropic_into(self, x, out)
    }
}

/// Entropic map `src -> tgt` with uniform marginals and default solver settings.
pub fn fit_entropic_map(src: &SampleSet, tgt: &SampleSet, epsilon: f64, bandwidth: f64) -> Result<EntropicMap> {
    fit_entropic_map_with(
        src,
        tgt,
        &EntropicOptions {
            epsilon: Epsilon::Absolute(epsilon),
            bandwidth: Some(bandwidth),
            ..EntropicOptions::default()
        },
    )
}

pub fn fit_entropic_map_with(src: &SampleSet, tgt: &SampleSet, opts: &EntropicOptions) -> Result<EntropicMap> {
    if src.dim() != tgt.dim() {
        return Err(invalid(format!(
            "entropic map between dimensions {} and {}",
            src.dim(),
            tgt.dim()
        )));
    }
    let cost = squared_cost(src, tgt)?;
    let epsilon = opts.epsilon.resolve(&cost);
    let plan = sinkhorn(
        &cost,
        &uniform(src.len()),
        &uniform(tgt.len()),
        epsilon,
        opts.tol,
        opts.max_iter,
    )?
    .into_converged()?;
    drop(cost);
    let images = barycentric_projection(&plan, tgt)?;
    drop(plan);
    let out = SampleSet::from_rows(&images, None)?;
    let bandwidth = opts.bandwidth.unwrap_or_else(|| default_bandwidth(src));
    EntropicMap::new(src.clone(), out, bandwidth, epsilon)
}

/// Exhaustive optimal assignment for `n <= 10`; ties keep the
/// lexicographically first permutation. Returns `(perm, total cost)` with
/// row `i` assigned to column `perm[i]`.
pub fn exact_assignment_oracle(cost: &CostMatrix) -> Result<(Vec<usize>, f64)> {
    let n = cost.rows;
    if cost.cols != n {
        return Err(invalid("assignment oracle needs a square cost matrix"));
    }
    if n > ORACLE_MAX_N {
        return Err(invalid(format!(
            "assignment oracle refuses n = {n} > {ORACLE_MAX_N}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum() };
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    while next_permutation(&mut perm) {
        let c = total(&perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    Ok((best, best_cost))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
