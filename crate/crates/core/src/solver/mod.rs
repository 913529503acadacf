//! Local NLP solves of [`ScalarProblem`]s with deterministic multistart.
//!
//! Starts are the caller's warm starts followed by `multistart_count`
//! uniform Dirichlet draws, each projected onto the linear feasible set. The
//! merged result is the feasible start with the lowest objective; exact ties
//! go to the lexicographically smallest variable vector, so the merge does not
//! depend on the order in which starts finish.

pub mod qp;
pub mod sqp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ModelSpec, PortfolioWeights};
use crate::exec::Execution;
use crate::problem::LinearRegion;
use crate::scalarization::{BuildOptions, LinearRow, ScalarProblem};
use qp::{solve_qp, QpError, Row};
pub use sqp::LocalResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    BudgetExceeded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Largest accepted constraint violation.
    pub tol_feas: f64,
    /// Stationarity tolerance on the QP-model KKT residual.
    pub tol_opt: f64,
    /// Point evaluations per start.
    pub max_evals: usize,
    pub multistart_count: usize,
    pub seed: u64,
    pub lift_l1: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_opt: 1e-6,
            max_evals: 5000,
            multistart_count: 8,
            seed: 1,
            lift_l1: true,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("solver tolerances must be positive and finite")]
    Tolerance,
    #[error("max_evals must be at least 1")]
    Budget,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.tol_feas) || !ok(self.tol_opt) {
            return Err(ConfigError::Tolerance);
        }
        if self.max_evals == 0 {
            return Err(ConfigError::Budget);
        }
        Ok(())
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions { lift_l1: self.lift_l1 }
    }

    /// Same configuration with a seed derived from `salt`.
    pub fn salted(&self, salt: u64) -> Self {
        Self { seed: mix(self.seed, salt), ..self.clone() }
    }
}

/// SplitMix64 finalizer over `seed ^ salt`.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub evaluations: usize,
    pub iterations: usize,
    pub max_violation: f64,
    pub stationarity: f64,
    pub starts: usize,
    pub optimal_starts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: Status,
    /// Weights, when any start produced a finite point.
    pub x: Option<PortfolioWeights>,
    /// Full variable vector of the returned point.
    pub y: Vec<f64>,
    pub objective: f64,
    /// Level variable of a Tchebycheff problem.
    pub t: Option<f64>,
    pub diagnostics: Diagnostics,
}

impl SolverResult {
    fn empty(status: Status) -> Self {
        Self {
            status,
            x: None,
            y: Vec::new(),
            objective: f64::NAN,
            t: None,
            diagnostics: Diagnostics { max_violation: f64::INFINITY, stationarity: f64::INFINITY, ..Default::default() },
        }
    }
}

/// Dirichlet(1, ..., 1) sample: normalized unit exponentials.
pub fn dirichlet_sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|v| v / total).collect()
}

/// Euclidean projection onto `{eq rows} ∩ {le rows} ∩ [lower, upper]`.
fn project(
    y0: &[f64],
    eq: &[LinearRow],
    le: &[LinearRow],
    lower: &[f64],
    upper: &[f64],
) -> Result<Vec<f64>, QpError> {
    let n = y0.len();
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        g[i * n + i] = 1.0;
    }
    let c: Vec<f64> = y0.iter().map(|v| -v).collect();
    let eq_rows: Vec<Row> = eq.iter().map(|r| Row { a: r.coeffs.clone(), b: r.rhs }).collect();
    let mut ge_rows: Vec<Row> = le
        .iter()
        .map(|r| Row { a: r.coeffs.iter().map(|v| -v).collect(), b: -r.rhs })
        .collect();
    for i in 0..n {
        if lower[i].is_finite() {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            ge_rows.push(Row { a, b: lower[i] });
        }
        if upper[i].is_finite() {
            let mut a = vec![0.0; n];
            a[i] = -1.0;
            ge_rows.push(Row { a, b: -upper[i] });
        }
    }
    Ok(solve_qp(n, &g, &c, &eq_rows, &ge_rows)?.x)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StartError {
    #[error("the linear constraints admit no portfolio")]
    Infeasible,
    #[error("objective evaluation failed: {0}")]
    Eval(#[from] crate::objectives::EvalError),
}

fn region_rows(region: &LinearRegion) -> (Vec<LinearRow>, Vec<LinearRow>) {
    let n = region.n;
    let eq = vec![LinearRow { coeffs: vec![1.0; n], rhs: 1.0 }];
    let mut le = Vec::new();
    for g in &region.groups {
        let mut row = vec![0.0; n];
        for &i in &g.indices {
            row[i] = 1.0;
        }
        le.push(LinearRow { coeffs: row.iter().map(|v| -v).collect(), rhs: -g.lower });
        le.push(LinearRow { coeffs: row, rhs: g.upper });
    }
    (eq, le)
}

/// Nearest point of the simplex-and-groups region to `x`.
pub fn project_to_region(region: &LinearRegion, x: &[f64]) -> Result<Vec<f64>, StartError> {
    let (eq, le) = region_rows(region);
    let mut y = project(x, &eq, &le, &vec![0.0; region.n], &vec![1.0; region.n]).map_err(|_| StartError::Infeasible)?;
    for v in &mut y {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(y)
}

/// A seeded Dirichlet draw moved onto the simplex-and-groups region.
pub fn feasible_start(spec: &ModelSpec, seed: u64) -> Result<PortfolioWeights, StartError> {
    let region = LinearRegion { n: spec.n_assets(), groups: spec.groups.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = dirichlet_sample(&mut rng, region.n);
    if region.violation(&w) <= 1e-12 {
        return Ok(PortfolioWeights::from_solution(w));
    }
    Ok(PortfolioWeights::from_solution(project_to_region(&region, &w)?))
}

impl ScalarProblem<'_> {
    /// Full start vector for weights `x`: extended, then projected onto every
    /// linear row, then `t` raised to satisfy the nonlinear rows.
    pub fn start_from(&self, x: &[f64]) -> Result<Vec<f64>, StartError> {
        let y0 = self.extend(x)?;
        let mut y = project(&y0, &self.linear_eq, &self.linear_le, &self.lower, &self.upper)
            .map_err(|_| StartError::Infeasible)?;
        if let Some(t) = self.t_index {
            y[t] = y[t].max(self.t_lower_limit(&y)?);
        }
        Ok(y)
    }
}

fn better(a: &LocalResult, b: &LocalResult) -> bool {
    match a.objective.total_cmp(&b.objective) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            for (x, y) in a.y.iter().zip(&b.y) {
                match x.total_cmp(y) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    _ => {}
                }
            }
            false
        }
    }
}

/// Start vectors for a solve: projected warm starts then random draws.
pub fn starts(sp: &ScalarProblem, cfg: &SolverConfig, warm: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StartError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(warm.len() + cfg.multistart_count);
    for w in warm {
        out.push(sp.start_from(w)?);
    }
    for _ in 0..cfg.multistart_count {
        let w = dirichlet_sample(&mut rng, sp.n_weights);
        out.push(sp.start_from(&w)?);
    }
    Ok(out)
}

/// Runs every start and returns the per-start outcomes in start order.
pub fn solve_each(sp: &ScalarProblem, cfg: &SolverConfig, warm: &[Vec<f64>]) -> Result<Vec<LocalResult>, StartError> {
    let ys = starts(sp, cfg, warm)?;
    Ok(cfg.execution.map(&ys, |y| sqp::local_solve(sp, y.clone(), cfg)))
}

/// Merges per-start outcomes; see the module docs for the rule.
pub fn merge(sp: &ScalarProblem, results: &[LocalResult]) -> SolverResult {
    let mut diag = Diagnostics {
        starts: results.len(),
        optimal_starts: results.iter().filter(|r| r.status == Status::Optimal).count(),
        ..Default::default()
    };
    diag.evaluations = results.iter().map(|r| r.evaluations).sum();
    diag.iterations = results.iter().map(|r| r.iterations).sum();

    let pick = |status: Status| -> Option<&LocalResult> {
        results
            .iter()
            .filter(|r| r.status == status && r.objective.is_finite())
            .fold(None, |best: Option<&LocalResult>, r| match best {
                Some(b) if !better(r, b) => Some(b),
                _ => Some(r),
            })
    };
    let chosen = pick(Status::Optimal)
        .or_else(|| pick(Status::BudgetExceeded).filter(|r| r.violation <= 1e-6))
        .or_else(|| pick(Status::NumericalFailure).filter(|r| r.violation <= 1e-6));
    let (status, best) = match chosen {
        Some(r) => (r.status, r),
        None => {
            // least infeasible point, if any start got that far
            let r = results
                .iter()
                .filter(|r| r.violation.is_finite())
                .min_by(|a, b| a.violation.total_cmp(&b.violation));
            match r {
                Some(r) => (
                    if results.iter().all(|r| r.status == Status::NumericalFailure) {
                        Status::NumericalFailure
                    } else {
                        Status::Infeasible
                    },
                    r,
                ),
                None => {
                    let mut out = SolverResult::empty(if results.is_empty() {
                        Status::Infeasible
                    } else {
                        Status::NumericalFailure
                    });
                    out.diagnostics = Diagnostics { max_violation: f64::INFINITY, stationarity: f64::INFINITY, ..diag };
                    return out;
                }
            }
        }
    };
    diag.max_violation = best.violation;
    diag.stationarity = best.stationarity;
    SolverResult {
        status,
        x: Some(PortfolioWeights::from_solution(best.y[..sp.n_weights].to_vec())),
        y: best.y.clone(),
        objective: best.objective,
        t: sp.t_index.map(|t| best.y[t]),
        diagnostics: diag,
    }
}

/// Multistart solve with extra warm starts (weights only).
pub fn solve_from(sp: &ScalarProblem, cfg: &SolverConfig, warm: &[Vec<f64>]) -> SolverResult {
    match solve_each(sp, cfg, warm) {
        Ok(results) => merge(sp, &results),
        Err(StartError::Infeasible) => SolverResult::empty(Status::Infeasible),
        Err(StartError::Eval(_)) => SolverResult::empty(Status::NumericalFailure),
    }
}

pub fn solve(sp: &ScalarProblem, cfg: &SolverConfig) -> SolverResult {
    solve_from(sp, cfg, &[])
}

/// A scalar-problem solver usable by the box algorithm.
pub trait Backend: Sync {
    /// `warm` holds weight vectors worth trying as starts.
    fn solve(&self, sp: &ScalarProblem, cfg: &SolverConfig, warm: &[Vec<f64>]) -> SolverResult;
}

/// The built-in SQP with deterministic multistart.
#[derive(Debug, Clone, Copy, Default)]
pub struct Multistart;

impl Backend for Multistart {
    fn solve(&self, sp: &ScalarProblem, cfg: &SolverConfig, warm: &[Vec<f64>]) -> SolverResult {
        solve_from(sp, cfg, warm)
    }
}
