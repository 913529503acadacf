//! Multi-objective problems over the weight simplex.
//!
//! Everything behind [`MultiObjectiveProblem`] is in minimize sense. The
//! portfolio model negates return and solvency on the way in; reports flip
//! them back through [`Objective::to_natural`].

use crate::domain::{GroupConstraint, ModelSpec, Objective, Violation};
use crate::objectives::{self, EvalError};

/// Structure a solver may exploit when a function appears in a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Smooth enough for gradient-based solves.
    Smooth,
    /// `coeffs . x + constant`.
    Linear { coeffs: Vec<f64>, constant: f64 },
    /// `sum_i |x_i - reference_i|`.
    L1 { reference: Vec<f64> },
    /// Square root of a smooth nonnegative function. The square is used
    /// wherever only the level sets matter.
    SquareRoot,
}

/// Simplex plus optional group limits on the weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearRegion {
    pub n: usize,
    pub groups: Vec<GroupConstraint>,
}

impl LinearRegion {
    pub fn simplex(n: usize) -> Self {
        Self { n, groups: Vec::new() }
    }

    /// Largest violation of the simplex, nonnegativity and group rows.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let sum: f64 = x.iter().sum();
        let mut v = (sum - 1.0).abs();
        for xi in x {
            v = v.max(-xi);
        }
        for g in &self.groups {
            let s: f64 = g.indices.iter().map(|&i| x[i]).sum();
            v = v.max(g.lower - s).max(s - g.upper);
        }
        v.max(0.0)
    }
}

/// Hard limit `lower <= f_k <= upper` on function `k`, minimize sense.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionBound {
    pub function: usize,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// A vector-valued objective over a polyhedral feasible set.
///
/// The first [`num_objectives`](Self::num_objectives) functions are the
/// criteria; any further ones only appear in [`bounds`](Self::bounds).
pub trait MultiObjectiveProblem: Sync {
    fn dim(&self) -> usize;
    fn num_objectives(&self) -> usize;

    fn num_functions(&self) -> usize {
        self.num_objectives()
    }

    fn label(&self, k: usize) -> String;

    /// Value of function `k`, minimize sense. Writes the gradient when asked.
    fn evaluate(&self, k: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64, EvalError>;

    fn shape(&self, _k: usize) -> Shape {
        Shape::Smooth
    }

    /// Typical magnitude of function `k` on the feasible set.
    fn scale(&self, _k: usize) -> f64 {
        1.0
    }

    fn region(&self) -> &LinearRegion;

    fn bounds(&self) -> &[FunctionBound] {
        &[]
    }
}

/// The allocation model as a minimize-sense problem.
#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    spec: ModelSpec,
    functions: Vec<Objective>,
    active: usize,
    region: LinearRegion,
    bounds: Vec<FunctionBound>,
    scales: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PortfolioProblem {
    pub fn new(spec: &ModelSpec) -> Result<Self, ProblemError> {
        let violations = crate::domain::validate_model(spec);
        if !violations.is_empty() {
            return Err(ProblemError::Invalid(violations));
        }
        let mut functions = spec.active_objectives.clone();
        functions.sort();
        functions.dedup();
        let active = functions.len();
        for b in &spec.objective_bounds {
            if !functions.contains(&b.objective) {
                functions.push(b.objective);
            }
        }
        let mut bounds: Vec<FunctionBound> = Vec::new();
        for b in &spec.objective_bounds {
            let k = functions.iter().position(|o| *o == b.objective).unwrap();
            let (lo, hi) = b.internal_interval();
            match bounds.iter_mut().find(|fb| fb.function == k) {
                Some(fb) => {
                    if let Some(lo) = lo {
                        fb.lower = Some(fb.lower.map_or(lo, |v| v.max(lo)));
                    }
                    if let Some(hi) = hi {
                        fb.upper = Some(fb.upper.map_or(hi, |v| v.min(hi)));
                    }
                }
                None => bounds.push(FunctionBound { function: k, lower: lo, upper: hi }),
            }
        }
        let n = spec.n_assets();
        let region = LinearRegion { n, groups: spec.groups.clone() };
        let mut scales = Vec::with_capacity(functions.len());
        for o in &functions {
            let mut s: f64 = 0.0;
            for i in 0..n {
                let e = crate::domain::PortfolioWeights::unit(n, i);
                s = s.max(objectives::evaluate_objective(*o, &e, spec)?.abs());
            }
            scales.push(if s > 1e-8 { s } else { 1.0 });
        }
        Ok(Self { spec: spec.clone(), functions, active, region, bounds, scales })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Criteria in function order (canonical order).
    pub fn objectives(&self) -> &[Objective] {
        &self.functions[..self.active]
    }

    pub fn function_objective(&self, k: usize) -> Objective {
        self.functions[k]
    }
}

impl MultiObjectiveProblem for PortfolioProblem {
    fn dim(&self) -> usize {
        self.spec.n_assets()
    }

    fn num_objectives(&self) -> usize {
        self.active
    }

    fn num_functions(&self) -> usize {
        self.functions.len()
    }

    fn label(&self, k: usize) -> String {
        self.functions[k].name().to_string()
    }

    fn evaluate(&self, k: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64, EvalError> {
        let o = self.functions[k];
        let natural = match grad {
            None => objectives::evaluate_objective(o, x, &self.spec)?,
            Some(g) => {
                let v = match o {
                    Objective::Return => {
                        g.copy_from_slice(&self.spec.universe.mu);
                        objectives::portfolio_return(x, &self.spec.universe)
                    }
                    Objective::Volatility => objectives::portfolio_volatility_grad(x, &self.spec.universe, g)?,
                    Objective::Solvency => {
                        let cal = self.spec.solvency.as_ref().ok_or(EvalError::MissingCalibration)?;
                        objectives::solvency_ratio_grad(x, cal, g)?
                    }
                    Objective::Distance => objectives::l1_distance_grad(x, self.spec.reference.as_slice(), g),
                };
                if o.sense() == crate::domain::Sense::Maximize {
                    for gi in g.iter_mut() {
                        *gi = -*gi;
                    }
                }
                v
            }
        };
        if !natural.is_finite() {
            return Err(EvalError::NonFinite("objective"));
        }
        Ok(o.to_internal(natural))
    }

    fn shape(&self, k: usize) -> Shape {
        match self.functions[k] {
            Objective::Return => Shape::Linear {
                coeffs: self.spec.universe.mu.iter().map(|m| -m).collect(),
                constant: 0.0,
            },
            Objective::Volatility => Shape::SquareRoot,
            Objective::Solvency => Shape::Smooth,
            Objective::Distance => Shape::L1 { reference: self.spec.reference.to_vec() },
        }
    }

    fn scale(&self, k: usize) -> f64 {
        self.scales[k]
    }

    fn region(&self) -> &LinearRegion {
        &self.region
    }

    fn bounds(&self) -> &[FunctionBound] {
        &self.bounds
    }
}
