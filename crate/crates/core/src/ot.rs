//! Discrete optimal transport between two probability vectors.
//!
//! [`solve_exact`] runs the transportation simplex (northwest-corner start,
//! potential-based pricing, cycle pivots) and is limited to 8×8 instances.
//! [`solve_sinkhorn`] solves the entropic problem with log-domain scaling
//! updates and works at any size.

use serde::{Deserialize, Serialize};

pub const EXACT_MAX_SIZE: usize = 8;
const MASS_TOL: f64 = 1e-9;
const ANNEAL_SWEEPS: usize = 50;
const ANNEAL_TOL: f64 = 1e-4;
const STALL_WINDOW: usize = 200;
const STALL_RATIO: f64 = 0.5;
const NEWTON_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OtError {
    #[error("exact solver is limited to {max}x{max}, got {rows}x{cols}")]
    TooLarge { rows: usize, cols: usize, max: usize },
    #[error("{side} masses must be nonnegative and finite (entry {index} is {value})")]
    BadMass {
        side: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{side} masses sum to {sum}, expected 1")]
    MassSum { side: &'static str, sum: f64 },
    #[error("cost matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("cost entry ({row}, {col}) = {value} must be finite and nonnegative")]
    BadCost { row: usize, col: usize, value: f64 },
    #[error("regularization must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("sinkhorn stopped after {iterations} iterations with marginal violation {violation:e}")]
    NotConverged { iterations: usize, violation: f64 },
    #[error("transportation simplex did not terminate within {0} pivots")]
    PivotLimit(usize),
}

pub type Result<T, E = OtError> = std::result::Result<T, E>;

/// Which solver produced a transport cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub cost: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    pub cost: f64,
    pub plan: Vec<Vec<f64>>,
}

impl TransportProblem {
    pub fn new(a: Vec<f64>, b: Vec<f64>, cost: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { a, b, cost };
        p.validate()?;
        Ok(p)
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn cols(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (side, masses) in [("source", &self.a), ("target", &self.b)] {
            for (index, &value) in masses.iter().enumerate() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(OtError::BadMass { side, index, value });
                }
            }
            let sum: f64 = masses.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(OtError::MassSum { side, sum });
            }
        }
        let bad_shape = self.cost.len() != self.rows()
            || self.cost.iter().any(|r| r.len() != self.cols());
        if bad_shape {
            return Err(OtError::Shape {
                rows: self.cost.len(),
                cols: self.cost.first().map_or(0, Vec::len),
                expected_rows: self.rows(),
                expected_cols: self.cols(),
            });
        }
        for (row, r) in self.cost.iter().enumerate() {
            for (col, &value) in r.iter().enumerate() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(OtError::BadCost { row, col, value });
                }
            }
        }
        Ok(())
    }

    /// `⟨plan, C⟩`.
    pub fn plan_cost(&self, plan: &[Vec<f64>]) -> f64 {
        plan.iter()
            .zip(&self.cost)
            .flat_map(|(p, c)| p.iter().zip(c).map(|(x, y)| x * y))
            .sum()
    }
}

/// Exact optimal transport by the transportation simplex.
pub fn solve_exact(p: &TransportProblem) -> Result<Transport> {
    p.validate()?;
    let (m, n) = (p.rows(), p.cols());
    if m > EXACT_MAX_SIZE || n > EXACT_MAX_SIZE {
        return Err(OtError::TooLarge {
            rows: m,
            cols: n,
            max: EXACT_MAX_SIZE,
        });
    }
    if m == 0 || n == 0 {
        return Ok(Transport {
            cost: 0.0,
            plan: vec![vec![0.0; n]; m],
        });
    }

    let mut plan = vec![vec![0.0; n]; m];
    let mut basic = vec![vec![false; n]; m];
    northwest_corner(&p.a, &p.b, &mut plan, &mut basic);

    let max_pivots = 64 * m * n;
    for _ in 0..max_pivots {
        let (u, v) = potentials(&p.cost, &basic);
        let mut entering = None;
        let mut best = -1e-12;
        for i in 0..m {
            for j in 0..n {
                if !basic[i][j] {
                    let reduced = p.cost[i][j] - u[i] - v[j];
                    if reduced < best {
                        best = reduced;
                        entering = Some((i, j));
                    }
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let cost = p.plan_cost(&plan);
            return Ok(Transport { cost, plan });
        };

        // Path through the basis tree from row `ei` to column `ej`; the cells
        // alternate -, +, -, ... and together with the entering cell form the
        // pivot cycle.
        let path = tree_path(&basic, ei, ej);
        let (leave_pos, theta) = path
            .iter()
            .enumerate()
            .step_by(2)
            .map(|(k, &(i, j))| (k, plan[i][j]))
            .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        for (k, &(i, j)) in path.iter().enumerate() {
            if k % 2 == 0 {
                plan[i][j] -= theta;
            } else {
                plan[i][j] += theta;
            }
        }
        plan[ei][ej] += theta;
        let (li, lj) = path[leave_pos];
        plan[li][lj] = 0.0;
        basic[li][lj] = false;
        basic[ei][ej] = true;
    }
    Err(OtError::PivotLimit(max_pivots))
}

fn northwest_corner(a: &[f64], b: &[f64], plan: &mut [Vec<f64>], basic: &mut [Vec<bool>]) {
    let (m, n) = (a.len(), b.len());
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]);
        plan[i][j] = x;
        basic[i][j] = true;
        supply[i] -= x;
        demand[j] -= x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        // Degenerate ties still advance one index only, so the basis keeps
        // m + n - 1 cells.
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
}

/// Dual potentials with `u[0] = 0` and `u[i] + v[j] = c[i][j]` on basic cells.
fn potentials(cost: &[Vec<f64>], basic: &[Vec<bool>]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (cost.len(), cost[0].len());
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    // rows are nodes 0..m, columns m..m+n
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        if node < m {
            let i = node;
            for j in 0..n {
                if basic[i][j] && v[j].is_nan() {
                    v[j] = cost[i][j] - u[i];
                    stack.push(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i][j] && u[i].is_nan() {
                    u[i] = cost[i][j] - v[j];
                    stack.push(i);
                }
            }
        }
    }
    (u, v)
}

fn tree_path(basic: &[Vec<bool>], from_row: usize, to_col: usize) -> Vec<(usize, usize)> {
    let (m, n) = (basic.len(), basic[0].len());
    let target = m + to_col;
    let mut parent = vec![usize::MAX; m + n];
    parent[from_row] = from_row;
    let mut stack = vec![from_row];
    while let Some(node) = stack.pop() {
        if node == target {
            break;
        }
        let neighbours: Vec<usize> = if node < m {
            (0..n).filter(|&j| basic[node][j]).map(|j| m + j).collect()
        } else {
            (0..m).filter(|&i| basic[i][node - m]).collect()
        };
        for next in neighbours {
            if parent[next] == usize::MAX {
                parent[next] = node;
                stack.push(next);
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = target;
    while node != from_row {
        let prev = parent[node];
        let cell = if node < m { (node, prev - m) } else { (prev, node - m) };
        cells.push(cell);
        node = prev;
    }
    cells.reverse();
    cells
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iter: 10_000,
            tol: 1e-9,
        }
    }
}

/// Entropic optimal transport. Returns the unregularized cost `⟨plan, C⟩`
/// of the entropic plan. Stops once the L1 row-marginal violation drops
/// below `tol` (columns are exact after each update).
pub fn solve_sinkhorn(p: &TransportProblem, cfg: SinkhornConfig) -> Result<Transport> {
    p.validate()?;
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(OtError::BadEpsilon(cfg.epsilon));
    }
    let (m, n) = (p.rows(), p.cols());
    let log_a: Vec<f64> = p.a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = p.b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut scratch = Vec::with_capacity(m.max(n));

    let mut sweep = |f: &mut [f64], g: &mut [f64], eps: f64| -> f64 {
        for i in 0..m {
            scratch.clear();
            scratch.extend((0..n).map(|j| (g[j] - p.cost[i][j]) / eps));
            f[i] = eps * (log_a[i] - log_sum_exp(&scratch));
        }
        for j in 0..n {
            scratch.clear();
            scratch.extend((0..m).map(|i| (f[i] - p.cost[i][j]) / eps));
            g[j] = eps * (log_b[j] - log_sum_exp(&scratch));
        }
        (0..m)
            .map(|i| {
                let row: f64 = (0..n).map(|j| entry(f, g, &p.cost, eps, i, j)).sum();
                (row - p.a[i]).abs()
            })
            .sum()
    };

    // Anneal from a blurry problem down to the requested epsilon, warm
    // starting the potentials at each stage.
    let max_cost = p.cost.iter().flatten().copied().fold(0.0, f64::max);
    let mut eps = max_cost.max(cfg.epsilon);
    let mut iterations = 0;
    while eps > cfg.epsilon && iterations < cfg.max_iter {
        for _ in 0..ANNEAL_SWEEPS {
            if iterations == cfg.max_iter {
                break;
            }
            iterations += 1;
            if sweep(&mut f, &mut g, eps) < ANNEAL_TOL {
                break;
            }
        }
        eps = (eps * 0.5).max(cfg.epsilon);
    }
    let eps = cfg.epsilon;
    let mut violation = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut since_checkpoint = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        violation = sweep(&mut f, &mut g, eps);
        if violation < cfg.tol {
            break;
        }
        since_checkpoint += 1;
        if since_checkpoint == STALL_WINDOW {
            if violation > STALL_RATIO * checkpoint {
                // Scaling sweeps have hit a slow mode; finish with Newton
                // steps on the dual, which converge quadratically.
                let budget = (cfg.max_iter - iterations).min(NEWTON_STEPS);
                let (v, used) = newton_polish(p, &log_a, &mut f, &mut g, eps, cfg.tol, budget);
                violation = v;
                iterations += used;
                break;
            }
            checkpoint = violation;
            since_checkpoint = 0;
        }
    }
    if violation < cfg.tol {
        let plan: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..n).map(|j| entry(&f, &g, &p.cost, eps, i, j)).collect())
            .collect();
        let cost = p.plan_cost(&plan);
        return Ok(Transport { cost, plan });
    }
    Err(OtError::NotConverged {
        iterations,
        violation,
    })
}

/// Row potentials making every row sum exact for the given column potentials.
fn row_potentials(p: &TransportProblem, log_a: &[f64], g: &[f64], eps: f64, f: &mut [f64]) {
    let mut scratch = Vec::with_capacity(g.len());
    for (i, fi) in f.iter_mut().enumerate() {
        scratch.clear();
        scratch.extend(g.iter().zip(&p.cost[i]).map(|(gj, c)| (gj - c) / eps));
        *fi = eps * (log_a[i] - log_sum_exp(&scratch));
    }
}

/// Semi-dual objective `sum_i a_i f_i(g) + sum_j b_j g_j` (concave in `g`).
fn semi_dual(p: &TransportProblem, f: &[f64], g: &[f64]) -> f64 {
    let fa: f64 = p.a.iter().zip(f).filter(|(a, _)| **a > 0.0).map(|(a, fi)| a * fi).sum();
    let gb: f64 = p.b.iter().zip(g).filter(|(b, _)| **b > 0.0).map(|(b, gj)| b * gj).sum();
    fa + gb
}

/// Newton ascent on the semi-dual in the column potentials. Returns the
/// final L1 marginal violation and the number of steps taken.
fn newton_polish(
    p: &TransportProblem,
    log_a: &[f64],
    f: &mut [f64],
    g: &mut [f64],
    eps: f64,
    tol: f64,
    budget: usize,
) -> (f64, usize) {
    let (m, n) = (p.rows(), p.cols());
    let max_step = p.cost.iter().flatten().copied().fold(eps, f64::max);
    // columns with zero mass carry no constraint
    let active: Vec<usize> = (0..n).filter(|&j| p.b[j] > 0.0).collect();
    let column_violation = |f: &[f64], g: &[f64]| -> (Vec<f64>, f64) {
        let mut grad = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                grad[j] -= entry(f, g, &p.cost, eps, i, j);
            }
        }
        for j in 0..n {
            grad[j] += p.b[j];
        }
        let v = grad.iter().map(|x| x.abs()).sum();
        (grad, v)
    };

    row_potentials(p, log_a, g, eps, f);
    let (mut grad, mut violation) = column_violation(f, g);
    let mut steps = 0;
    while steps < budget && violation >= tol && active.len() > 1 {
        steps += 1;
        let plan: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..n).map(|j| entry(f, g, &p.cost, eps, i, j)).collect())
            .collect();
        // The negated Hessian is the Laplacian of the column graph with
        // weights w[j][l] = sum_i P[i][j] P[i][l] / a[i]. Building the
        // diagonal from off-diagonal weights avoids the cancellation in
        // colsum - sum P^2 / a. Restricted to active columns minus the last
        // one (the objective is invariant to a common shift of g).
        let mut weights = vec![vec![0.0; n]; n];
        for i in 0..m {
            if p.a[i] <= 0.0 {
                continue;
            }
            for j in 0..n {
                for l in j + 1..n {
                    let w = plan[i][j] * plan[i][l] / p.a[i];
                    weights[j][l] += w;
                    weights[l][j] += w;
                }
            }
        }
        let free = &active[..active.len() - 1];
        let k = free.len();
        let mut h = vec![vec![0.0; k]; k];
        for (r, &j) in free.iter().enumerate() {
            for (c, &l) in free.iter().enumerate() {
                h[r][c] = if r == c {
                    weights[j].iter().sum::<f64>() / eps
                } else {
                    -weights[j][l] / eps
                };
            }
        }
        let rhs: Vec<f64> = free.iter().map(|&j| grad[j]).collect();
        let Some(dir) = solve_linear(h, rhs) else { break };
        let slope: f64 = free.iter().zip(&dir).map(|(&j, d)| grad[j] * d).sum();
        if !(slope > 0.0) {
            break;
        }
        let base = semi_dual(p, f, g);
        // Weakly coupled columns give enormous Newton steps; cap the move in
        // potential units at the cost scale and let the line search shrink it.
        let longest = dir.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        let mut t = (max_step / longest).min(1.0);
        let mut trial_g = g.to_vec();
        let mut trial_f = f.to_vec();
        let mut accepted = false;
        for _ in 0..60 {
            trial_g.copy_from_slice(g);
            for (&j, d) in free.iter().zip(&dir) {
                trial_g[j] += t * d;
            }
            row_potentials(p, log_a, &trial_g, eps, &mut trial_f);
            // Near the optimum the objective gain drowns in rounding, so a
            // smaller marginal violation also counts as progress.
            let trial_violation = column_violation(&trial_f, &trial_g).1;
            if semi_dual(p, &trial_f, &trial_g) >= base + 1e-4 * t * slope
                || trial_violation < violation
            {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        g.copy_from_slice(&trial_g);
        f.copy_from_slice(&trial_f);
        (grad, violation) = column_violation(f, g);
    }
    (violation, steps)
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let k = b.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..k {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for c in col..k {
                    a[row][c] -= factor * a[col][c];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

fn entry(f: &[f64], g: &[f64], cost: &[Vec<f64>], eps: f64, i: usize, j: usize) -> f64 {
    let z = (f[i] + g[j] - cost[i][j]) / eps;
    if z == f64::NEG_INFINITY || z.is_nan() {
        0.0
    } else {
        z.exp()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
