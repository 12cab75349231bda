//! Convex quadratic programs over (capped) simplices.
//!
//! The objective is `wᵀQw + 2cᵀw`. Coordinates are split into groups, each
//! constrained to `{0 ≤ w ≤ u, Σw = b}`; a plain problem has one group and
//! the signed condenser problem has two.

mod nonneg;
mod projection;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

pub use nonneg::{NonnegSolution, NonnegSolver};
pub use projection::{project_capped_simplex, PROJECTION_TOL};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    /// Bound on the KKT residual `‖w − P(w − ∇f)‖₁`.
    pub tol: f64,
    pub max_iter: usize,
    /// Interleave Newton steps on the current face with the gradient steps.
    pub subspace: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            subspace: true,
        }
    }
}

impl QpOptions {
    pub fn with_tol(tol: f64) -> Self {
        QpOptions { tol, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: Matrix,
    pub c: Vec<f64>,
    pub mass: f64,
    pub caps: Option<Vec<f64>>,
}

impl QpProblem {
    pub fn new(q: Matrix, c: Vec<f64>, mass: f64, caps: Option<Vec<f64>>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n || c.len() != n || caps.as_ref().is_some_and(|u| u.len() != n) {
            return Err(Error::CloudMismatch(format!("QP of size {n} with mismatched c or caps")));
        }
        if !(mass > 0.0) {
            return Err(Error::Infeasible(format!("mass {mass} must be positive")));
        }
        if let Some(u) = &caps {
            if u.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::Infeasible("caps must be nonnegative".into()));
            }
            let caps_sum: f64 = u.iter().sum();
            if caps_sum <= mass {
                return Err(Error::InfeasibleCaps { caps_sum, mass });
            }
        }
        Ok(QpProblem { q, c, mass, caps })
    }

    /// `min wᵀQw` over the probability simplex.
    pub fn simplex(q: Matrix) -> Self {
        let n = q.nrows();
        QpProblem {
            q,
            c: vec![0.0; n],
            mass: 1.0,
            caps: None,
        }
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        objective(&self.q, &self.c, w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Multiplier of `Σw = b` in gradient units (`∇f_i = multiplier` on free nodes).
    pub multiplier: f64,
    /// Objective after every iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

pub fn solve(problem: &QpProblem, start: Option<&[f64]>, opts: &QpOptions) -> Result<QpSolution> {
    let n = problem.q.nrows();
    let groups = [Group {
        start: 0,
        end: n,
        mass: problem.mass,
        caps: problem.caps.clone(),
    }];
    let out = solve_groups(&problem.q, &problem.c, &groups, start, opts)?;
    Ok(QpSolution {
        weights: out.w,
        objective: out.objective,
        kkt_residual: out.kkt,
        iterations: out.iterations,
        multiplier: out.multipliers[0],
        objective_trace: out.trace,
    })
}

/// Blocks of one Riesz operator restricted to the positive plate `p` and the
/// negative plate `q`.
#[derive(Debug, Clone)]
pub struct TwoBlockProblem {
    pub k_pp: Matrix,
    pub k_pq: Matrix,
    pub k_qq: Matrix,
    pub c_p: Vec<f64>,
    pub caps_p: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBlockSolution {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub multipliers: (f64, f64),
    pub objective_trace: Vec<f64>,
}

impl TwoBlockProblem {
    /// `‖μ⁺ − μ⁻‖² + 2⟨c, μ⁺⟩`.
    pub fn objective(&self, plus: &[f64], minus: &[f64]) -> f64 {
        let (q, c) = self.stacked();
        let w: Vec<f64> = plus.iter().chain(minus).copied().collect();
        objective(&q, &c, &w)
    }

    fn stacked(&self) -> (Matrix, Vec<f64>) {
        let (np, nq) = (self.k_pp.nrows(), self.k_qq.nrows());
        let mut q = Matrix::zeros(np + nq, np + nq);
        q.view_mut((0, 0), (np, np)).copy_from(&self.k_pp);
        q.view_mut((np, np), (nq, nq)).copy_from(&self.k_qq);
        q.view_mut((0, np), (np, nq)).copy_from(&(-&self.k_pq));
        q.view_mut((np, 0), (nq, np)).copy_from(&(-self.k_pq.transpose()));
        let mut c = self.c_p.clone();
        c.resize(np + nq, 0.0);
        (q, c)
    }
}

/// Minimizes `‖μ⁺ − μ⁻‖² + 2⟨c, μ⁺⟩` over unit-mass `μ⁺ ≤ caps` and unit-mass `μ⁻ ≥ 0`.
pub fn solve_two_block(problem: &TwoBlockProblem, start: Option<(&[f64], &[f64])>, opts: &QpOptions) -> Result<TwoBlockSolution> {
    let (np, nq) = (problem.k_pp.nrows(), problem.k_qq.nrows());
    if problem.k_pq.shape() != (np, nq) || problem.c_p.len() != np {
        return Err(Error::CloudMismatch("two-block shapes disagree".into()));
    }
    if let Some(u) = &problem.caps_p {
        let caps_sum: f64 = u.iter().sum();
        if caps_sum <= 1.0 {
            return Err(Error::InfeasibleCaps { caps_sum, mass: 1.0 });
        }
    }
    let (q, c) = problem.stacked();
    let groups = [
        Group {
            start: 0,
            end: np,
            mass: 1.0,
            caps: problem.caps_p.clone(),
        },
        Group {
            start: np,
            end: np + nq,
            mass: 1.0,
            caps: None,
        },
    ];
    let joined: Option<Vec<f64>> = start.map(|(p, m)| p.iter().chain(m).copied().collect());
    let out = solve_groups(&q, &c, &groups, joined.as_deref(), opts)?;
    Ok(TwoBlockSolution {
        plus: out.w[..np].to_vec(),
        minus: out.w[np..].to_vec(),
        objective: out.objective,
        kkt_residual: out.kkt,
        iterations: out.iterations,
        multipliers: (out.multipliers[0], out.multipliers[1]),
        objective_trace: out.trace,
    })
}

pub fn objective(q: &Matrix, c: &[f64], w: &[f64]) -> f64 {
    let v = Vector::from_column_slice(w);
    let qw = q * &v;
    linalg::dot(w, qw.as_slice()) + 2.0 * linalg::dot(c, w)
}

/// `‖w − P(w − ∇f)‖₁` for the single-group problem.
pub fn kkt_residual(problem: &QpProblem, w: &[f64]) -> Result<f64> {
    let groups = [Group {
        start: 0,
        end: w.len(),
        mass: problem.mass,
        caps: problem.caps.clone(),
    }];
    let g = gradient(&problem.q, &problem.c, w);
    residual(w, &g, &groups)
}

#[derive(Debug, Clone)]
struct Group {
    start: usize,
    end: usize,
    mass: f64,
    caps: Option<Vec<f64>>,
}

impl Group {
    fn cap(&self, i: usize) -> f64 {
        self.caps.as_ref().map_or(f64::INFINITY, |u| u[i - self.start])
    }
}

struct GroupOutcome {
    w: Vec<f64>,
    objective: f64,
    kkt: f64,
    iterations: usize,
    multipliers: Vec<f64>,
    trace: Vec<f64>,
}

fn project(v: &[f64], groups: &[Group]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    for g in groups {
        let p = project_capped_simplex(&v[g.start..g.end], g.caps.as_deref(), g.mass)?;
        out[g.start..g.end].copy_from_slice(&p);
    }
    Ok(out)
}

fn gradient(q: &Matrix, c: &[f64], w: &[f64]) -> Vec<f64> {
    let qw = q * Vector::from_column_slice(w);
    qw.iter().zip(c).map(|(a, b)| 2.0 * (a + b)).collect()
}

fn residual(w: &[f64], g: &[f64], groups: &[Group]) -> Result<f64> {
    let step: Vec<f64> = w.iter().zip(g).map(|(x, d)| x - d).collect();
    let p = project(&step, groups)?;
    Ok(linalg::l1_distance(w, &p))
}

fn mat_vec(q: &Matrix, w: &[f64]) -> Vec<f64> {
    (q * Vector::from_column_slice(w)).as_slice().to_vec()
}

fn solve_groups(q: &Matrix, c: &[f64], groups: &[Group], start: Option<&[f64]>, opts: &QpOptions) -> Result<GroupOutcome> {
    let n = q.nrows();
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("QP tolerance {} must be positive", opts.tol)));
    }
    let initial: Vec<f64> = match start {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => {
            return Err(Error::CloudMismatch(format!("start vector of length {} for QP of size {n}", s.len())));
        }
        None => {
            let mut v = vec![0.0; n];
            for g in groups {
                let len = (g.end - g.start).max(1) as f64;
                v[g.start..g.end].fill(g.mass / len);
            }
            v
        }
    };
    let mut w = project(&initial, groups)?;
    let mut qw = mat_vec(q, &w);
    let mut obj = linalg::dot(&w, &qw) + 2.0 * linalg::dot(c, &w);
    let mut trace = vec![obj];
    let lipschitz = 2.0
        * (0..n)
            .map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max);
    let mut step = 1.0 / lipschitz.max(f64::MIN_POSITIVE);

    let mut iterations = 0;
    loop {
        let g: Vec<f64> = qw.iter().zip(c).map(|(a, b)| 2.0 * (a + b)).collect();
        let kkt = residual(&w, &g, groups)?;
        if kkt <= opts.tol {
            let multipliers = groups.iter().map(|gr| multiplier(&w, &g, gr)).collect();
            debug!("qp converged in {iterations} iterations, residual {kkt:e}");
            return Ok(GroupOutcome {
                objective: objective(q, c, &w),
                w,
                kkt,
                iterations,
                multipliers,
                trace,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: kkt,
                tol: opts.tol,
            });
        }
        iterations += 1;
        // Directional derivatives use the gradient minus a per-group constant;
        // moves preserve each group's mass, so this only removes cancellation.
        let gc = centered(&w, &g, groups);

        // Projected gradient step with Barzilai–Borwein length and exact line search.
        let trial: Vec<f64> = w.iter().zip(&g).map(|(x, d)| x - step * d).collect();
        let y = project(&trial, groups)?;
        let d: Vec<f64> = y.iter().zip(&w).map(|(a, b)| a - b).collect();
        let qd = mat_vec(q, &d);
        let dqd = linalg::dot(&d, &qd);
        let gd = linalg::dot(&gc, &d);
        if dqd > 0.0 && gd < 0.0 {
            let t = (-gd / (2.0 * dqd)).min(1.0);
            for i in 0..n {
                w[i] += t * d[i];
                qw[i] += t * qd[i];
            }
            clip_to_bounds(&mut w, groups);
            obj += t * gd + t * t * dqd;
            let dd = linalg::dot(&d, &d);
            step = (dd / (2.0 * dqd)).clamp(1e-3 / lipschitz, 1e6 / lipschitz);
        } else {
            step = 1.0 / lipschitz;
        }

        if opts.subspace {
            let g: Vec<f64> = qw.iter().zip(c).map(|(a, b)| 2.0 * (a + b)).collect();
            let gc = centered(&w, &g, groups);
            if let Some((nw, nqw, delta)) = subspace_step(q, c, groups, &w, &qw, &gc)? {
                w = nw;
                qw = nqw;
                obj += delta;
            }
        }
        // Refresh the cached product now and then to keep round-off from drifting.
        if iterations % 50 == 0 {
            qw = mat_vec(q, &w);
        }
        trace.push(obj);
    }
}

/// `g` minus the current multiplier estimate of each group.
fn centered(w: &[f64], g: &[f64], groups: &[Group]) -> Vec<f64> {
    let mut out = g.to_vec();
    for gr in groups {
        let level = multiplier(w, g, gr);
        for v in &mut out[gr.start..gr.end] {
            *v -= level;
        }
    }
    out
}

/// Keeps coordinates inside their boxes after a convex combination.
fn clip_to_bounds(w: &mut [f64], groups: &[Group]) {
    for g in groups {
        for i in g.start..g.end {
            w[i] = w[i].max(0.0).min(g.cap(i));
        }
    }
}

/// Newton step on the face fixed by the current active bounds, followed by a
/// projected backtracking search. Returns the new point if it is feasible.
/// The returned triple is the new point, its product with `Q`, and the exact
/// change in objective.
fn subspace_step(q: &Matrix, c: &[f64], groups: &[Group], w: &[f64], qw: &[f64], gc: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>, f64)>> {
    let free: Vec<usize> = groups
        .iter()
        .flat_map(|g| (g.start..g.end).filter(move |&i| w[i] > 0.0 && w[i] < g.cap(i)))
        .collect();
    if free.is_empty() {
        return Ok(None);
    }
    let qff = linalg::principal(q, &free);
    let Ok(chol) = linalg::cholesky(&qff) else {
        return Ok(None);
    };
    // r = c_I + Q_{I,fixed} w_fixed
    let r: Vec<f64> = free
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            let own: f64 = free.iter().enumerate().map(|(b, &j)| qff[(a, b)] * w[j]).sum();
            c[i] + qw[i] - own
        })
        .collect();
    let active_groups: Vec<&Group> = groups.iter().filter(|g| free.iter().any(|&i| i >= g.start && i < g.end)).collect();
    let m = active_groups.len();
    let mut rhs = Matrix::zeros(free.len(), m + 1);
    for (a, &i) in free.iter().enumerate() {
        for (k, g) in active_groups.iter().enumerate() {
            if i >= g.start && i < g.end {
                rhs[(a, k)] = 1.0;
            }
        }
        rhs[(a, m)] = r[a];
    }
    let sol = chol.solve(&rhs);
    // Face mass of each active group.
    let mut small = Matrix::zeros(m, m);
    let mut target = Vector::zeros(m);
    for (h, g) in active_groups.iter().enumerate() {
        let fixed: f64 = (g.start..g.end).filter(|i| free.binary_search(i).is_err()).map(|i| w[i]).sum();
        let mut proj_d = 0.0;
        for (a, &i) in free.iter().enumerate() {
            if i >= g.start && i < g.end {
                for k in 0..m {
                    small[(h, k)] += sol[(a, k)];
                }
                proj_d += sol[(a, m)];
            }
        }
        target[h] = g.mass - fixed + proj_d;
    }
    let Some(half_nu) = small.lu().solve(&target) else {
        return Ok(None);
    };
    let z: Vec<f64> = (0..free.len())
        .map(|a| (0..m).map(|k| half_nu[k] * sol[(a, k)]).sum::<f64>() - sol[(a, m)])
        .collect();

    let mut t = 1.0;
    for _ in 0..30 {
        let mut cand = w.to_vec();
        for (a, &i) in free.iter().enumerate() {
            cand[i] = w[i] + t * (z[a] - w[i]);
        }
        let cand = project(&cand, groups)?;
        let delta: Vec<f64> = cand.iter().zip(w).map(|(a, b)| a - b).collect();
        let qdelta = mat_vec(q, &delta);
        let change = linalg::dot(gc, &delta) + linalg::dot(&delta, &qdelta);
        if change < 0.0 {
            let cqw = qw.iter().zip(&qdelta).map(|(a, b)| a + b).collect();
            return Ok(Some((cand, cqw, change)));
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Equality multiplier in gradient units: median gradient over free nodes, or
/// the middle of the KKT interval when every node sits on a bound.
fn multiplier(w: &[f64], g: &[f64], group: &Group) -> f64 {
    let mut free: Vec<f64> = (group.start..group.end)
        .filter(|&i| w[i] > 0.0 && w[i] < group.cap(i))
        .map(|i| g[i])
        .collect();
    if !free.is_empty() {
        free.sort_by(f64::total_cmp);
        return free[free.len() / 2];
    }
    let upper = (group.start..group.end).filter(|&i| w[i] <= 0.0).map(|i| g[i]).fold(f64::INFINITY, f64::min);
    let lower = (group.start..group.end)
        .filter(|&i| w[i] > 0.0)
        .map(|i| g[i])
        .fold(f64::NEG_INFINITY, f64::max);
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}
