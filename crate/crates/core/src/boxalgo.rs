//! The box algorithm.
//!
//! All box geometry lives in normalized objective space, where the payoff
//! table maps to `[0, 1]^m`: `y = (f - l0) / (u0 - l0)` with `f` in minimize
//! sense. Each iteration picks the box whose shortest edge is longest, solves
//! the weighted Tchebycheff problem anchored at its lower corner and, when the
//! image lands strictly inside the box, splits the upper bounds at the image
//! and the lower bounds at the Tchebycheff vertex.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{new_lower_bounds, new_upper_bounds, strictly_below, weakly_below};
use crate::domain::{inconsistent_bounds, ModelSpec, Objective, ObjectiveBound, PortfolioWeights, Violation};
use crate::objectives::ObjectiveVector;
use crate::problem::{MultiObjectiveProblem, PortfolioProblem, ProblemError};
use crate::scalarization::{
    build_single, build_tchebycheff, tchebycheff_vertex, tchebycheff_weights, Normalization,
};
use crate::solver::{Backend, ConfigError, Diagnostics, Multistart, SolverConfig, SolverResult, Status};

/// Margin for `f < u`, normalized units.
pub const INSIDE_MARGIN: f64 = 1e-9;

/// Attempts allowed per requested record.
const ATTEMPTS_PER_RECORD: usize = 10;

const ITERATION_SALT: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    pub fn min_edge(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, other: &BoxRegion) -> bool {
        weakly_below(&self.lower, &other.lower) && weakly_below(&other.upper, &self.upper)
    }
}

/// Index of the box with the longest shortest edge. Earlier boxes win ties.
pub fn select_box(boxes: &[BoxRegion]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, b) in boxes.iter().enumerate() {
        let e = b.min_edge();
        if best.map_or(true, |(_, be)| e > be) {
            best = Some((i, e));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Intermediate portfolios requested.
    pub maxit: usize,
    pub solver: SolverConfig,
    /// Stop once the selected box's shortest normalized edge drops below this.
    pub min_edge_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { maxit: 10, solver: SolverConfig::default(), min_edge_floor: 1e-6 }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.maxit == 0 {
            return Err(RunError::Config("maxit must be at least 1".into()));
        }
        if !(self.min_edge_floor >= 0.0) || !self.min_edge_floor.is_finite() {
            return Err(RunError::Config("min_edge_floor must be a nonnegative number".into()));
        }
        self.solver.validate().map_err(|e: ConfigError| RunError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    InconsistentBounds(String),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("no feasible portfolio when optimizing {objective}")]
    Infeasible { objective: String },
    #[error("payoff solve for {objective} failed ({status:?})")]
    Solver { objective: String, status: Status },
    #[error("objective evaluation failed: {0}")]
    Eval(String),
}

impl RunError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, RunError::Infeasible { .. })
    }
}

impl From<ProblemError> for RunError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::Invalid(v) => RunError::Invalid(v),
            ProblemError::Eval(e) => RunError::Eval(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: Status,
    pub diagnostics: Diagnostics,
}

impl From<&SolverResult> for SolveSummary {
    fn from(r: &SolverResult) -> Self {
        Self { status: r.status, diagnostics: r.diagnostics.clone() }
    }
}

/// Tchebycheff parameters of an intermediate solve, normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TchebycheffRecord {
    pub reference: Vec<f64>,
    pub weights: Vec<f64>,
    pub t: f64,
    pub vertex: Vec<f64>,
}

/// A point computed by the engine, internal (minimize) sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    /// Criterion optimized for a payoff point.
    pub payoff: Option<usize>,
    pub iteration: Option<usize>,
    pub origin: Option<BoxRegion>,
    pub tchebycheff: Option<TchebycheffRecord>,
    pub solve: SolveSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// The solver returned no usable point.
    Solver,
    /// The image is not strictly inside the box.
    OutsideBox,
    /// The image would break mutual nondominance of the archive.
    Dominance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    Accepted { record: usize },
    Discarded { reason: DiscardReason, status: Option<Status> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub box_id: usize,
    pub region: BoxRegion,
    /// Shortest normalized edge of the selected box.
    pub min_edge: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `maxit` records were produced.
    Completed,
    /// The selected box was thinner than `min_edge_floor`.
    MinEdge,
    /// Every box was discarded or none had positive volume.
    NoBoxes,
    AttemptLimit,
    Cancelled,
}

/// Output of [`run_problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Front {
    pub points: Vec<FrontPoint>,
    pub lower0: Vec<f64>,
    pub upper0: Vec<f64>,
    pub normalization: Normalization,
    pub trace: Vec<IterationTrace>,
    pub upper_bounds: Vec<Vec<f64>>,
    pub lower_bounds: Vec<Vec<f64>>,
    pub termination: Termination,
}

/// Progress hooks. All methods default to no-ops.
pub trait RunObserver {
    fn on_payoff(&mut self, _point: &FrontPoint) {}
    fn on_iteration(&mut self, _step: &IterationTrace, _point: Option<&FrontPoint>) {}
    fn cancelled(&self) -> bool {
        false
    }
}

impl RunObserver for () {}

fn unit_starts(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| PortfolioWeights::unit(n, i).into_inner()).collect()
}

fn evaluate_point(problem: &dyn MultiObjectiveProblem, x: &[f64]) -> Result<Vec<f64>, RunError> {
    (0..problem.num_objectives())
        .map(|k| problem.evaluate(k, x, None).map_err(|e| RunError::Eval(e.to_string())))
        .collect()
}

/// Optimizes each criterion alone. Returns `(l0, u0, points)`.
pub fn payoff_table(
    problem: &dyn MultiObjectiveProblem,
    cfg: &RunConfig,
    backend: &dyn Backend,
    observer: &mut dyn RunObserver,
) -> Result<(Vec<f64>, Vec<f64>, Vec<FrontPoint>), RunError> {
    let m = problem.num_objectives();
    let warm = unit_starts(problem.dim());
    let mut points = Vec::with_capacity(m);
    for k in 0..m {
        let sp = build_single(problem, k, cfg.solver.build_options());
        let res = backend.solve(&sp, &cfg.solver.salted(k as u64), &warm);
        let x = match (&res.status, &res.x) {
            (Status::Infeasible, _) => return Err(RunError::Infeasible { objective: problem.label(k) }),
            (_, Some(x)) if res.diagnostics.max_violation <= 1e-6 => x.to_vec(),
            _ => return Err(RunError::Solver { objective: problem.label(k), status: res.status }),
        };
        let f = evaluate_point(problem, &x)?;
        points.push(FrontPoint {
            x,
            f,
            payoff: Some(k),
            iteration: None,
            origin: None,
            tchebycheff: None,
            solve: SolveSummary::from(&res),
        });
        observer.on_payoff(points.last().unwrap());
    }
    let mut l0 = vec![f64::INFINITY; m];
    let mut u0 = vec![f64::NEG_INFINITY; m];
    for p in &points {
        for k in 0..m {
            l0[k] = l0[k].min(p.f[k]);
            u0[k] = u0[k].max(p.f[k]);
        }
    }
    Ok((l0, u0, points))
}

struct BoxSet {
    boxes: Vec<(usize, BoxRegion)>,
    discarded: Vec<BoxRegion>,
    next_id: usize,
}

impl BoxSet {
    /// All `[l, u]` with `l < u` that no discarded box contains. Surviving
    /// boxes keep their ids; new ones are numbered in `L x U` order.
    fn rebuild(&mut self, lower: &[Vec<f64>], upper: &[Vec<f64>]) {
        let mut kept = Vec::new();
        let mut fresh = Vec::new();
        for l in lower {
            for u in upper {
                if !strictly_below(l, u) {
                    continue;
                }
                let b = BoxRegion::new(l.clone(), u.clone());
                if self.discarded.iter().any(|d| d.contains(&b)) {
                    continue;
                }
                match self.boxes.iter().find(|(_, old)| *old == b) {
                    Some((id, _)) => kept.push((*id, b)),
                    None => fresh.push(b),
                }
            }
        }
        kept.sort_by_key(|(id, _)| *id);
        for b in fresh {
            kept.push((self.next_id, b));
            self.next_id += 1;
        }
        self.boxes = kept;
    }
}

fn dominates_strictly(a: &[f64], b: &[f64]) -> bool {
    strictly_below(a, b)
}

/// Runs the algorithm on any problem with the built-in solver.
pub fn run_problem(
    problem: &dyn MultiObjectiveProblem,
    cfg: &RunConfig,
    observer: &mut dyn RunObserver,
) -> Result<Front, RunError> {
    run_problem_with(problem, cfg, &Multistart, observer)
}

pub fn run_problem_with(
    problem: &dyn MultiObjectiveProblem,
    cfg: &RunConfig,
    backend: &dyn Backend,
    observer: &mut dyn RunObserver,
) -> Result<Front, RunError> {
    cfg.validate()?;
    let (l0, u0, mut points) = payoff_table(problem, cfg, backend, observer)?;
    let m = l0.len();
    let normalization = Normalization::from_bounds(&l0, &u0);
    let top = normalization.normalize(&u0);
    let mut lower = vec![vec![0.0; m]];
    let mut upper = vec![top];
    let mut set = BoxSet { boxes: Vec::new(), discarded: Vec::new(), next_id: 0 };
    set.rebuild(&lower, &upper);
    let mut trace = Vec::new();
    let mut accepted = 0;
    let opts = cfg.solver.build_options();

    let termination = loop {
        if accepted >= cfg.maxit {
            break Termination::Completed;
        }
        if observer.cancelled() {
            break Termination::Cancelled;
        }
        if trace.len() >= ATTEMPTS_PER_RECORD * cfg.maxit {
            break Termination::AttemptLimit;
        }
        let regions: Vec<BoxRegion> = set.boxes.iter().map(|(_, b)| b.clone()).collect();
        let Some(idx) = select_box(&regions) else {
            break Termination::NoBoxes;
        };
        let (box_id, region) = set.boxes[idx].clone();
        let min_edge = region.min_edge();
        if min_edge < cfg.min_edge_floor {
            break Termination::MinEdge;
        }
        let iteration = trace.len();
        let params = tchebycheff_weights(&region.lower, &region.upper).expect("stored boxes have positive edges");
        let sp = build_tchebycheff(problem, &params, &normalization, opts);
        let warm: Vec<Vec<f64>> = points
            .iter()
            .filter(|p| weakly_below(&normalization.normalize(&p.f), &region.upper))
            .map(|p| p.x.clone())
            .collect();
        let res = backend.solve(&sp, &cfg.solver.salted(ITERATION_SALT + iteration as u64), &warm);

        let mut outcome = None;
        let mut point = None;
        let usable = matches!(res.status, Status::Optimal | Status::BudgetExceeded)
            && res.diagnostics.max_violation <= 1e-6;
        let f = match (&res.x, usable) {
            (Some(x), true) => evaluate_point(problem, x).ok(),
            _ => None,
        };
        match f {
            None => {
                outcome = Some(Outcome::Discarded { reason: DiscardReason::Solver, status: Some(res.status) });
            }
            Some(f) => {
                let y = normalization.normalize(&f);
                let inside = y.iter().zip(&region.upper).all(|(a, u)| *a < u - INSIDE_MARGIN);
                if !inside {
                    outcome = Some(Outcome::Discarded { reason: DiscardReason::OutsideBox, status: Some(res.status) });
                } else if points.iter().any(|p| dominates_strictly(&f, &p.f) || dominates_strictly(&p.f, &f)) {
                    outcome = Some(Outcome::Discarded { reason: DiscardReason::Dominance, status: Some(res.status) });
                } else {
                    let t = (0..m)
                        .map(|k| params.weights[k] * (y[k] - params.reference[k]))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let s = tchebycheff_vertex(&params.reference, t, &params.weights);
                    upper = new_upper_bounds(&upper, &y);
                    lower = new_lower_bounds(&lower, &s);
                    point = Some(FrontPoint {
                        x: res.x.as_ref().unwrap().to_vec(),
                        f,
                        payoff: None,
                        iteration: Some(iteration),
                        origin: Some(region.clone()),
                        tchebycheff: Some(TchebycheffRecord {
                            reference: params.reference.clone(),
                            weights: params.weights.clone(),
                            t,
                            vertex: s,
                        }),
                        solve: SolveSummary::from(&res),
                    });
                }
            }
        }
        let outcome = match point {
            Some(p) => {
                points.push(p);
                accepted += 1;
                set.rebuild(&lower, &upper);
                Outcome::Accepted { record: points.len() - 1 }
            }
            None => {
                set.boxes.remove(idx);
                set.discarded.push(region.clone());
                outcome.unwrap()
            }
        };
        log::debug!("iteration {iteration}: box {box_id} edge {min_edge:.3e} {outcome:?}");
        let step = IterationTrace { iteration, box_id, region, min_edge, outcome };
        let recorded = match &step.outcome {
            Outcome::Accepted { record } => Some(&points[*record]),
            _ => None,
        };
        observer.on_iteration(&step, recorded);
        trace.push(step);
    };

    Ok(Front {
        points,
        lower0: l0,
        upper0: u0,
        normalization,
        trace,
        upper_bounds: upper,
        lower_bounds: lower,
        termination,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordKind {
    Payoff { objective: Objective },
    Intermediate,
}

/// An archived portfolio with its criteria in natural sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioRecord {
    pub index: usize,
    #[serde(flatten)]
    pub kind: RecordKind,
    pub iteration: Option<usize>,
    pub weights: PortfolioWeights,
    pub objectives: ObjectiveVector,
    pub origin: Option<BoxRegion>,
    pub tchebycheff: Option<TchebycheffRecord>,
    pub solve: SolveSummary,
}

impl PortfolioRecord {
    pub fn internal(&self) -> Vec<f64> {
        self.objectives.internal()
    }
}

/// Natural-sense range of one criterion over the payoff table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRange {
    pub objective: Objective,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationArchive {
    pub objectives: Vec<Objective>,
    pub records: Vec<PortfolioRecord>,
    /// Payoff-table box, minimize sense.
    pub lower0: Vec<f64>,
    pub upper0: Vec<f64>,
    pub trace: Vec<IterationTrace>,
    pub upper_bounds: Vec<Vec<f64>>,
    pub lower_bounds: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl RepresentationArchive {
    pub fn payoff(&self) -> impl Iterator<Item = &PortfolioRecord> {
        self.records.iter().filter(|r| matches!(r.kind, RecordKind::Payoff { .. }))
    }

    pub fn intermediate(&self) -> impl Iterator<Item = &PortfolioRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Intermediate)
    }

    pub fn ranges(&self) -> Vec<ObjectiveRange> {
        self.objectives
            .iter()
            .enumerate()
            .map(|(k, o)| {
                let a = o.to_natural(self.lower0[k]);
                let b = o.to_natural(self.upper0[k]);
                ObjectiveRange { objective: *o, min: a.min(b), max: a.max(b) }
            })
            .collect()
    }

    pub fn range(&self, objective: Objective) -> Option<ObjectiveRange> {
        self.ranges().into_iter().find(|r| r.objective == objective)
    }

    /// Selected-box shortest edges, one per attempt.
    pub fn min_edges(&self) -> Vec<f64> {
        self.trace.iter().map(|s| s.min_edge).collect()
    }

    fn from_front(front: Front, objectives: &[Objective]) -> Self {
        let records = front
            .points
            .into_iter()
            .enumerate()
            .map(|(index, p)| portfolio_record(index, p, objectives))
            .collect();
        Self {
            objectives: objectives.to_vec(),
            records,
            lower0: front.lower0,
            upper0: front.upper0,
            trace: front.trace,
            upper_bounds: front.upper_bounds,
            lower_bounds: front.lower_bounds,
            termination: front.termination,
        }
    }
}

/// Converts an engine point; `objectives` names the criteria of `p.f`.
pub fn portfolio_record(index: usize, p: FrontPoint, objectives: &[Objective]) -> PortfolioRecord {
    let values = objectives.iter().zip(&p.f).map(|(o, v)| o.to_natural(*v)).collect();
    PortfolioRecord {
        index,
        kind: match p.payoff {
            Some(k) => RecordKind::Payoff { objective: objectives[k] },
            None => RecordKind::Intermediate,
        },
        iteration: p.iteration,
        weights: PortfolioWeights::from_solution(p.x),
        objectives: ObjectiveVector { objectives: objectives.to_vec(), values },
        origin: p.origin,
        tchebycheff: p.tchebycheff,
        solve: p.solve,
    }
}

/// Observer that keeps every archived point as a [`PortfolioRecord`] and
/// forwards to an inner observer.
pub struct Recorder<'a> {
    pub objectives: Vec<Objective>,
    pub records: Vec<PortfolioRecord>,
    pub inner: &'a mut dyn RunObserver,
}

impl<'a> Recorder<'a> {
    pub fn new(spec: &ModelSpec, inner: &'a mut dyn RunObserver) -> Self {
        let mut objectives = spec.active_objectives.clone();
        objectives.sort();
        objectives.dedup();
        Self { objectives, records: Vec::new(), inner }
    }
}

impl RunObserver for Recorder<'_> {
    fn on_payoff(&mut self, point: &FrontPoint) {
        self.records.push(portfolio_record(self.records.len(), point.clone(), &self.objectives));
        self.inner.on_payoff(point);
    }

    fn on_iteration(&mut self, step: &IterationTrace, point: Option<&FrontPoint>) {
        if let Some(p) = point {
            self.records.push(portfolio_record(self.records.len(), p.clone(), &self.objectives));
        }
        self.inner.on_iteration(step, point);
    }

    fn cancelled(&self) -> bool {
        self.inner.cancelled()
    }
}

pub fn run(spec: &ModelSpec, cfg: &RunConfig) -> Result<RepresentationArchive, RunError> {
    run_observed(spec, cfg, &mut ())
}

pub fn run_observed(
    spec: &ModelSpec,
    cfg: &RunConfig,
    observer: &mut dyn RunObserver,
) -> Result<RepresentationArchive, RunError> {
    if let Some(msg) = inconsistent_bounds(&spec.objective_bounds) {
        return Err(RunError::InconsistentBounds(msg));
    }
    let problem = PortfolioProblem::new(spec)?;
    let front = run_problem(&problem, cfg, observer)?;
    Ok(RepresentationArchive::from_front(front, problem.objectives()))
}

/// Adds hard bounds (natural sense) to `spec` and runs again from a fresh
/// payoff table.
pub fn restrict_and_rerun(
    spec: &ModelSpec,
    bounds: &[ObjectiveBound],
    cfg: &RunConfig,
) -> Result<RepresentationArchive, RunError> {
    run(&spec.with_bounds(bounds), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(l: &[f64], u: &[f64]) -> BoxRegion {
        BoxRegion::new(l.to_vec(), u.to_vec())
    }

    #[test]
    fn select_box_examples() {
        assert_eq!(select_box(&[b(&[0.0, 0.0], &[1.0, 1.0])]), Some(0));
        assert_eq!(select_box(&[b(&[0.0, 0.0], &[1.0, 0.1]), b(&[0.0, 0.0], &[0.5, 0.5])]), Some(1));
        let three = [b(&[0.0, 0.0], &[0.3, 0.9]), b(&[0.0, 0.0], &[0.9, 0.3]), b(&[0.0, 0.0], &[0.2, 0.2])];
        assert_eq!(select_box(&three), Some(0));
        assert_eq!(select_box(&[]), None);
    }

    #[test]
    fn rebuild_skips_sub_boxes_of_discarded() {
        let mut set = BoxSet { boxes: Vec::new(), discarded: vec![b(&[0.0, 0.0], &[1.0, 1.0])], next_id: 0 };
        set.rebuild(&[vec![0.0, 0.0], vec![0.5, -1.0]], &[vec![1.0, 0.5], vec![2.0, 2.0]]);
        let regions: Vec<BoxRegion> = set.boxes.iter().map(|(_, r)| r.clone()).collect();
        assert_eq!(
            regions,
            vec![b(&[0.0, 0.0], &[2.0, 2.0]), b(&[0.5, -1.0], &[1.0, 0.5]), b(&[0.5, -1.0], &[2.0, 2.0])]
        );
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig { maxit: 0, ..Default::default() }.validate().is_err());
    }
}
