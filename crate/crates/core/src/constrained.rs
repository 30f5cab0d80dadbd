//! EH-constrained fairness precoder.
//!
//! Maximizes `‖A x‖²` subject to `‖x‖² ≤ Pₓ` and `ϖ₁ ≤ p_k(x) ≤ ϖ₂` for every
//! terminal, where `p_k(x) = ‖C_k x‖²` is either the fading-averaged power
//! (statistical mode) or the instantaneous power (full-CSIT mode).
//!
//! The problem is solved on the real-equivalent variable `z = [Re x; Im x]`
//! with a Powell–Hestenes–Rockafellar augmented Lagrangian whose subproblems
//! are handled by projected gradient with Barzilai–Borwein steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, ClusterStatistics};
use crate::error::{Error, Result};
use crate::linalg::{dominant_right_singular, normalize_phase, CMatrix, CVector};
use crate::precoding::{build_stat_matrix, precoder_aa, BeamScheme, BeamVector};

pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Reported feasibility slack on per-terminal powers, watts.
pub const POWER_TOLERANCE_W: f64 = 1e-9;
/// Relative slack on the transmit budget.
pub const BUDGET_TOLERANCE: f64 = 1e-8;

/// `[[Re A, −Im A], [Im A, Re A]]`.
pub fn real_equivalent(a: &CMatrix) -> RMatrix {
    let (p, m) = a.shape();
    RMatrix::from_fn(2 * p, 2 * m, |i, j| {
        let z = a[(i % p, j % m)];
        match (i < p, j < m) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn to_real(x: &CVector) -> RVector {
    let m = x.len();
    RVector::from_fn(2 * m, |i, _| if i < m { x[i].re } else { x[i - m].im })
}

pub fn to_complex(z: &RVector) -> CVector {
    let m = z.len() / 2;
    CVector::from_fn(m, |i, _| Complex64::new(z[i], z[i + m]))
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Powers averaged over the fast fading.
    Expected,
    /// Powers of one channel realization.
    Instantaneous,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub multistarts: usize,
    pub tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { multistarts: 8, tolerance: 1e-7, max_outer_iterations: 5000, max_inner_iterations: 2000 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.multistarts == 0 {
            return Err(Error::Config("solver.multistarts must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config("solver.tolerance must be positive".into()));
        }
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::Config("solver iteration limits must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    /// `A` (statistical) or `B` (realized channels).
    pub objective: CMatrix,
    /// One factor per terminal with `p_k(x) = ‖C_k x‖²`.
    pub terminals: Vec<CMatrix>,
    /// Cluster index of each terminal.
    pub cluster_of: Vec<usize>,
    pub mode: ConstraintMode,
    pub px: f64,
    pub lower: f64,
    pub upper: f64,
    pub options: SolverOptions,
}

impl ConstrainedProblem {
    /// Constraints on the fading-averaged power of every terminal.
    pub fn statistical(
        stats: &[ClusterStatistics],
        px: f64,
        lower: f64,
        upper: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        let a = build_stat_matrix(stats)?;
        let mut terminals = Vec::new();
        let mut cluster_of = Vec::new();
        for (l, s) in stats.iter().enumerate() {
            let r = s.rank();
            let mp = &s.mp_factor * Complex64::from(s.alpha_mp);
            for k in 0..s.num_terminals() {
                let mut c = CMatrix::zeros(1 + r, s.num_antennas());
                c.row_mut(0).copy_from(&(s.los.row(k) * Complex64::from(s.alpha_los)));
                c.rows_mut(1, r).copy_from(&mp);
                terminals.push(c);
                cluster_of.push(l);
            }
        }
        Self::new(a.matrix, terminals, cluster_of, ConstraintMode::Expected, px, lower, upper, options)
    }

    /// Constraints on the instantaneous power of one realization.
    pub fn full_csit(
        realization: &ChannelRealization,
        px: f64,
        lower: f64,
        upper: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        let mut terminals = Vec::new();
        let mut cluster_of = Vec::new();
        for (l, c) in realization.clusters.iter().enumerate() {
            for k in 0..c.effective.nrows() {
                terminals.push(c.effective.rows(k, 1).into_owned());
                cluster_of.push(l);
            }
        }
        let b = realization.stacked();
        Self::new(b, terminals, cluster_of, ConstraintMode::Instantaneous, px, lower, upper, options)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        objective: CMatrix,
        terminals: Vec<CMatrix>,
        cluster_of: Vec<usize>,
        mode: ConstraintMode,
        px: f64,
        lower: f64,
        upper: f64,
        options: SolverOptions,
    ) -> Result<Self> {
        if !(px > 0.0 && px.is_finite()) {
            return Err(Error::Domain(format!("transmit power must be positive, got {px}")));
        }
        if !(lower >= 0.0 && lower < upper) || lower.is_infinite() {
            return Err(Error::Domain(format!("bounds must satisfy 0 <= lower < upper, got [{lower}, {upper}]")));
        }
        options.validate()?;
        let m = objective.ncols();
        if m == 0 || objective.nrows() == 0 {
            return Err(Error::Empty);
        }
        if terminals.len() != cluster_of.len() {
            return Err(Error::Dimension("one cluster index per terminal is required".into()));
        }
        if let Some(k) = terminals.iter().position(|c| c.ncols() != m) {
            return Err(Error::Dimension(format!("terminal {k} factor does not have {m} columns")));
        }
        Ok(Self { objective, terminals, cluster_of, mode, px, lower, upper, options })
    }

    pub fn num_antennas(&self) -> usize {
        self.objective.ncols()
    }

    pub fn objective_value(&self, x: &CVector) -> f64 {
        (&self.objective * x).norm_squared()
    }

    pub fn terminal_powers(&self, x: &CVector) -> Vec<f64> {
        self.terminals.iter().map(|c| (c * x).norm_squared()).collect()
    }

    fn scheme(&self) -> BeamScheme {
        match self.mode {
            ConstraintMode::Expected => BeamScheme::ConstrainedStat,
            ConstraintMode::Instantaneous => BeamScheme::ConstrainedFull,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    OptimalFeasible,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    pub beam: BeamVector,
    pub objective_value: f64,
    pub per_terminal_powers: Vec<f64>,
    pub status: SolveStatus,
    /// Largest bound or budget violation, watts.
    pub constraint_violation: f64,
    /// Which multistart produced the result.
    pub start_index: usize,
    pub outer_iterations: usize,
}

/// Signed slacks, positive when satisfied.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub budget: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FeasibilityReport {
    pub fn min_slack(&self) -> f64 {
        self.lower.iter().chain(&self.upper).fold(self.budget, |a, &b| a.min(b))
    }
}

pub fn feasibility_report(problem: &ConstrainedProblem, x: &CVector) -> FeasibilityReport {
    let powers = problem.terminal_powers(x);
    FeasibilityReport {
        budget: problem.px - x.norm_squared(),
        lower: powers.iter().map(|p| p - problem.lower).collect(),
        upper: powers.iter().map(|p| problem.upper - p).collect(),
    }
}

fn violation(problem: &ConstrainedProblem, x: &CVector) -> f64 {
    let powers = problem.terminal_powers(x);
    let bounds = powers
        .iter()
        .map(|&p| (problem.lower - p - POWER_TOLERANCE_W).max(p - problem.upper - POWER_TOLERANCE_W))
        .fold(0.0_f64, f64::max);
    let budget = x.norm_squared() - problem.px * (1.0 + BUDGET_TOLERANCE);
    bounds.max(budget).max(0.0)
}

/// Normalized real quadratic forms seen by the inner solver.
struct Scaled {
    objective: RMatrix,
    /// Distinct constraint Grams; terminals with identical factors share one.
    constraints: Vec<RMatrix>,
    lower: f64,
    upper: f64,
}

impl Scaled {
    fn new(problem: &ConstrainedProblem, sigma_max: f64) -> Self {
        let f0 = problem.px * sigma_max * sigma_max;
        let n_terminals = problem.terminals.len().max(1) as f64;
        let unit = f0 / n_terminals;
        let gram = |c: &CMatrix, scale: f64| {
            let r = real_equivalent(c);
            r.transpose() * r * scale
        };
        let mut constraints: Vec<RMatrix> = Vec::new();
        let mut seen: Vec<&CMatrix> = Vec::new();
        for c in &problem.terminals {
            if !seen.contains(&c) {
                seen.push(c);
                constraints.push(gram(c, problem.px / unit));
            }
        }
        Scaled {
            objective: gram(&problem.objective, problem.px / f0),
            constraints,
            lower: problem.lower / unit,
            upper: problem.upper / unit,
        }
    }

    /// Inequality constraints `c_i(y) ≤ 0`, lower bounds first.
    fn constraint_values(&self, y: &RVector) -> (Vec<f64>, Vec<RVector>) {
        let mut values = Vec::with_capacity(2 * self.constraints.len());
        let mut grads = Vec::with_capacity(2 * self.constraints.len());
        for q in &self.constraints {
            let qy = q * y;
            let g = y.dot(&qy);
            if self.lower > 0.0 {
                values.push(self.lower - g);
                grads.push(&qy * -2.0);
            }
            if self.upper.is_finite() {
                values.push(g - self.upper);
                grads.push(qy * 2.0);
            }
        }
        (values, grads)
    }

    fn merit(&self, y: &RVector, lambda: &[f64], rho: f64) -> (f64, RVector) {
        let qy = &self.objective * y;
        let mut value = -y.dot(&qy);
        let mut grad = qy * -2.0;
        let (values, grads) = self.constraint_values(y);
        for ((c, g), &l) in values.iter().zip(&grads).zip(lambda) {
            let shifted = (l + rho * c).max(0.0);
            value += (shifted * shifted - l * l) / (2.0 * rho);
            if shifted > 0.0 {
                grad.axpy(shifted, g, 1.0);
            }
        }
        (value, grad)
    }

    fn lagrangian_gradient(&self, y: &RVector, lambda: &[f64]) -> RVector {
        let mut grad = (&self.objective * y) * -2.0;
        let (_, grads) = self.constraint_values(y);
        for (g, &l) in grads.iter().zip(lambda) {
            if l > 0.0 {
                grad.axpy(l, g, 1.0);
            }
        }
        grad
    }
}

fn project(mut y: RVector) -> RVector {
    let n = y.norm();
    if n > 1.0 {
        y /= n;
    }
    y
}

fn projected_residual(y: &RVector, grad: &RVector) -> f64 {
    (y - project(y - grad)).norm()
}

struct Run {
    y: RVector,
    converged: bool,
    outer_iterations: usize,
}

/// Approximately minimizes the augmented Lagrangian over the unit ball.
fn inner_solve(scaled: &Scaled, mut y: RVector, lambda: &[f64], rho: f64, tol: f64, max_iter: usize) -> RVector {
    let (mut value, mut grad) = scaled.merit(&y, lambda, rho);
    let mut step = 1.0;
    for _ in 0..max_iter {
        if projected_residual(&y, &grad) <= tol {
            break;
        }
        let mut alpha = step;
        let (next, next_value, next_grad) = loop {
            let candidate = project(&y - &grad * alpha);
            let (v, g) = scaled.merit(&candidate, lambda, rho);
            let decrease = grad.dot(&(&candidate - &y));
            if v <= value + 1e-4 * decrease || alpha < 1e-14 {
                break (candidate, v, g);
            }
            alpha *= 0.5;
        };
        let s = &next - &y;
        let r = &next_grad - &grad;
        let sr = s.dot(&r);
        step = if sr > 0.0 { (s.norm_squared() / sr).clamp(1e-10, 1e10) } else { 1e2 };
        let moved = s.norm();
        y = next;
        value = next_value;
        grad = next_grad;
        if moved <= 1e-16 {
            break;
        }
    }
    y
}

fn solve_from(scaled: &Scaled, start: RVector, options: &SolverOptions) -> Run {
    let n_constraints = scaled.constraint_values(&start).0.len();
    let mut lambda = vec![0.0; n_constraints];
    let mut rho = 10.0;
    let mut y = project(start);
    let mut inner_tol = 1e-2_f64;
    let mut prev_violation = f64::INFINITY;
    let mut best_kkt = f64::INFINITY;
    let mut since_best = 0;
    for outer in 1..=options.max_outer_iterations {
        y = inner_solve(scaled, y, &lambda, rho, inner_tol.max(0.1 * options.tolerance), options.max_inner_iterations);
        let (values, _) = scaled.constraint_values(&y);
        for (l, c) in lambda.iter_mut().zip(&values) {
            *l = (*l + rho * c).max(0.0);
        }
        let infeasibility = values.iter().fold(0.0_f64, |a, &c| a.max(c));
        let complementarity = values.iter().zip(&lambda).fold(0.0_f64, |a, (c, l)| a.max((c * l).abs()));
        let stationarity = projected_residual(&y, &scaled.lagrangian_gradient(&y, &lambda));
        let kkt = infeasibility.max(complementarity).max(stationarity);
        if kkt <= options.tolerance {
            return Run { y, converged: true, outer_iterations: outer };
        }
        if infeasibility > 0.25 * prev_violation {
            rho = (rho * 10.0).min(1e12);
        }
        prev_violation = infeasibility;
        inner_tol = (inner_tol * 0.1).max(0.1 * options.tolerance);
        if kkt < 0.999 * best_kkt {
            best_kkt = kkt;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= 100 {
                return Run { y, converged: false, outer_iterations: outer };
            }
        }
    }
    Run { y, converged: false, outer_iterations: options.max_outer_iterations }
}

fn random_sphere<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(m, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let n = v.norm();
        if n > 0.0 {
            return v / Complex64::from(n);
        }
    }
}

/// Best-of-multistart local solution. Starts are `x_init` (or the
/// unconstrained optimum), the equal-power vector, then random directions.
pub fn solve_constrained<R: Rng + ?Sized>(
    problem: &ConstrainedProblem,
    x_init: Option<&CVector>,
    rng: &mut R,
) -> Result<ConstrainedSolution> {
    let m = problem.num_antennas();
    let dom = dominant_right_singular(&problem.objective)?;
    let sqrt_px = problem.px.sqrt();

    let mut starts: Vec<CVector> = Vec::with_capacity(problem.options.multistarts);
    let first = match x_init {
        Some(x) if x.len() != m => {
            return Err(Error::Dimension(format!("initial beam has {} entries, array has {m}", x.len())))
        }
        Some(x) if x.norm_squared() > 0.0 => {
            let n = x.norm_squared();
            if n > problem.px {
                x * Complex64::from((problem.px / n).sqrt())
            } else {
                x.clone()
            }
        }
        _ => &dom.vector * Complex64::from(sqrt_px),
    };
    starts.push(first);
    if problem.options.multistarts > 1 {
        starts.push(precoder_aa(m, problem.px)?.x);
    }
    while starts.len() < problem.options.multistarts {
        starts.push(random_sphere(m, rng) * Complex64::from(sqrt_px));
    }

    // A terminal can never collect more than Pₓ·‖C_k‖₂².
    let unreachable = problem.lower > 0.0
        && problem.terminals.iter().any(|c| {
            let cap = dominant_right_singular(c).map_or(0.0, |d| d.sigma_max * d.sigma_max);
            problem.lower > problem.px * cap
        });
    if unreachable || problem.lower > problem.px * dom.sigma_max * dom.sigma_max {
        return Ok(finish(problem, starts.swap_remove(0), SolveStatus::Infeasible, 0, 0));
    }

    let scaled = Scaled::new(problem, dom.sigma_max);
    let mut best: Option<(f64, usize, CVector, bool, usize)> = None;
    let mut least_violating: Option<(f64, usize, CVector, usize)> = None;
    for (index, start) in starts.iter().enumerate() {
        let run = solve_from(&scaled, to_real(start) / sqrt_px, &problem.options);
        let x = to_complex(&run.y) * Complex64::from(sqrt_px);
        let v = violation(problem, &x);
        if v <= 0.0 {
            let obj = problem.objective_value(&x);
            if best.as_ref().is_none_or(|b| obj > b.0) {
                best = Some((obj, index, x, run.converged, run.outer_iterations));
            }
        } else if least_violating.as_ref().is_none_or(|b| v < b.0) {
            least_violating = Some((v, index, x, run.outer_iterations));
        }
    }
    Ok(match (best, least_violating) {
        (Some((_, index, x, converged, iters)), _) => {
            let status = if converged { SolveStatus::OptimalFeasible } else { SolveStatus::MaxIterations };
            finish(problem, x, status, index, iters)
        }
        (None, Some((_, index, x, iters))) => finish(problem, x, SolveStatus::Infeasible, index, iters),
        (None, None) => unreachable!("at least one start is always evaluated"),
    })
}

fn finish(
    problem: &ConstrainedProblem,
    mut x: CVector,
    status: SolveStatus,
    start_index: usize,
    outer_iterations: usize,
) -> ConstrainedSolution {
    normalize_phase(&mut x);
    let per_terminal_powers = problem.terminal_powers(&x);
    ConstrainedSolution {
        objective_value: problem.objective_value(&x),
        constraint_violation: violation(problem, &x),
        beam: BeamVector { x, scheme: problem.scheme(), degenerate: false },
        per_terminal_powers,
        status,
        start_index,
        outer_iterations,
    }
}
