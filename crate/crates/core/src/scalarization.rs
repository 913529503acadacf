//! Single-objective subproblems built from a [`MultiObjectiveProblem`]:
//! weighted sum, epsilon-constraint, weighted Tchebycheff (epigraph form) and
//! the single-criterion solves behind the payoff table.
//!
//! A [`ScalarProblem`] works on an extended variable vector: the weights
//! first, then the Tchebycheff level `t` if present, then the lifted distance
//! slacks `d` if present.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{MultiObjectiveProblem, Shape};

/// Affine map of minimize-sense objective values onto the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub lower: Vec<f64>,
    pub range: Vec<f64>,
}

/// Ranges below this are treated as zero when normalizing.
pub const MIN_RANGE: f64 = 1e-12;

impl Normalization {
    pub fn identity(m: usize) -> Self {
        Self { lower: vec![0.0; m], range: vec![1.0; m] }
    }

    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Self {
        let range = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| if u - l > MIN_RANGE { u - l } else { 1.0 })
            .collect();
        Self { lower: lower.to_vec(), range }
    }

    pub fn normalize(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.lower).zip(&self.range).map(|((v, l), r)| (v - l) / r).collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.lower).zip(&self.range).map(|((v, l), r)| l + v * r).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("degenerate box: edge {index} has length {length}")]
pub struct DegenerateBox {
    pub index: usize,
    pub length: f64,
}

/// Reference point and weights of a weighted Tchebycheff scalarization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TchebycheffParams {
    pub reference: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Weights inversely proportional to the edge lengths of `[l, u]`, summing
/// to one, with `l` as the reference point.
pub fn tchebycheff_weights(l: &[f64], u: &[f64]) -> Result<TchebycheffParams, DegenerateBox> {
    let mut inv = Vec::with_capacity(l.len());
    for (index, (a, b)) in l.iter().zip(u).enumerate() {
        let length = b - a;
        if !(length > 0.0) || !length.is_finite() {
            return Err(DegenerateBox { index, length });
        }
        inv.push(1.0 / length);
    }
    let total: f64 = inv.iter().sum();
    let weights = inv.iter().map(|v| v / total).collect();
    Ok(TchebycheffParams { reference: l.to_vec(), weights })
}

/// `s_i = l_i + t / w_i`.
pub fn tchebycheff_vertex(l: &[f64], t: f64, w: &[f64]) -> Vec<f64> {
    l.iter().zip(w).map(|(li, wi)| li + t / wi).collect()
}

/// `max_i w_i (f_i - z_i)`, the Tchebycheff value of a fixed point.
pub fn tchebycheff_value(f: &[f64], params: &TchebycheffParams) -> f64 {
    f.iter()
        .zip(&params.reference)
        .zip(&params.weights)
        .map(|((fi, zi), wi)| wi * (fi - zi))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Nonlinear piece `coef * f_k(x)` (or `coef * f_k(x)^2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub function: usize,
    pub square: bool,
}

/// `constant + sum linear + sum terms` over the extended variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Expr {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn is_linear(&self) -> bool {
        self.terms.is_empty()
    }
}

/// `coeffs . y <= rhs` or `coeffs . y = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn value(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().zip(y).map(|(a, b)| a * b).sum()
    }
}

/// Which scalarization produced a [`ScalarProblem`].
#[derive(Debug, Clone, PartialEq)]
pub enum Scalarization {
    Single { function: usize },
    WeightedSum { lambda: Vec<f64> },
    EpsilonConstraint { keep: usize, eps: Vec<f64> },
    Tchebycheff { params: TchebycheffParams, normalization: Normalization },
}

/// A nonlinear program over the extended variable vector.
pub struct ScalarProblem<'a> {
    pub problem: &'a dyn MultiObjectiveProblem,
    pub kind: Scalarization,
    pub n_weights: usize,
    pub n_vars: usize,
    pub t_index: Option<usize>,
    /// Offset of the lifted distance slacks and the reference they track.
    pub lifted: Option<(usize, Vec<f64>)>,
    pub objective: Expr,
    /// `expr(y) <= 0`.
    pub nonlinear: Vec<Expr>,
    pub linear_eq: Vec<LinearRow>,
    pub linear_le: Vec<LinearRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl std::fmt::Debug for ScalarProblem<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarProblem")
            .field("kind", &self.kind)
            .field("n_vars", &self.n_vars)
            .field("nonlinear", &self.nonlinear.len())
            .field("linear_eq", &self.linear_eq.len())
            .field("linear_le", &self.linear_le.len())
            .finish()
    }
}

/// Options shared by the builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Replace `|x - ref|` by slack variables wherever it is bounded above.
    pub lift_l1: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { lift_l1: true }
    }
}

struct Builder<'a> {
    sp: ScalarProblem<'a>,
    opts: BuildOptions,
}

impl<'a> Builder<'a> {
    fn new(problem: &'a dyn MultiObjectiveProblem, kind: Scalarization, with_t: bool, opts: BuildOptions) -> Self {
        let n = problem.dim();
        let mut lower = vec![0.0; n];
        let mut upper = vec![1.0; n];
        let t_index = if with_t {
            lower.push(f64::NEG_INFINITY);
            upper.push(f64::INFINITY);
            Some(n)
        } else {
            None
        };
        let n_vars = lower.len();
        let region = problem.region();
        let mut linear_eq = vec![LinearRow { coeffs: pad(vec![1.0; n], n_vars), rhs: 1.0 }];
        let mut linear_le = Vec::new();
        for g in &region.groups {
            let mut row = vec![0.0; n_vars];
            for &i in &g.indices {
                row[i] = 1.0;
            }
            if g.lower > 0.0 {
                linear_le.push(LinearRow { coeffs: row.iter().map(|v| -v).collect(), rhs: -g.lower });
            }
            if g.upper < 1.0 {
                linear_le.push(LinearRow { coeffs: row, rhs: g.upper });
            }
        }
        if linear_eq[0].coeffs.is_empty() {
            linear_eq.clear();
        }
        let sp = ScalarProblem {
            problem,
            kind,
            n_weights: n,
            n_vars,
            t_index,
            lifted: None,
            objective: Expr::default(),
            nonlinear: Vec::new(),
            linear_eq,
            linear_le,
            lower,
            upper,
        };
        Self { sp, opts }
    }

    fn ensure_lifted(&mut self, reference: &[f64]) -> usize {
        if let Some((off, _)) = &self.sp.lifted {
            return *off;
        }
        let n = self.sp.n_weights;
        let off = self.sp.n_vars;
        self.sp.n_vars += n;
        let nv = self.sp.n_vars;
        self.sp.lower.extend(vec![0.0; n]);
        self.sp.upper.extend(vec![1.0; n]);
        for row in self.sp.linear_eq.iter_mut().chain(self.sp.linear_le.iter_mut()) {
            row.coeffs.resize(nv, 0.0);
        }
        // d_i >= x_i - r_i and d_i >= r_i - x_i
        for i in 0..n {
            let mut a = vec![0.0; nv];
            a[i] = 1.0;
            a[off + i] = -1.0;
            self.sp.linear_le.push(LinearRow { coeffs: a, rhs: reference[i] });
            let mut b = vec![0.0; nv];
            b[i] = -1.0;
            b[off + i] = -1.0;
            self.sp.linear_le.push(LinearRow { coeffs: b, rhs: -reference[i] });
        }
        self.sp.lifted = Some((off, reference.to_vec()));
        off
    }

    /// Adds `coef * f_k` to `expr`. `surrogate` squares a square-root shaped
    /// function (caller adjusts the right-hand side).
    fn add_function(&mut self, expr: &mut Expr, k: usize, coef: f64, surrogate: bool) {
        match self.sp.problem.shape(k) {
            Shape::Linear { coeffs, constant } => {
                for (i, c) in coeffs.iter().enumerate() {
                    if *c != 0.0 {
                        expr.linear.push((i, coef * c));
                    }
                }
                expr.constant += coef * constant;
            }
            Shape::L1 { reference } if self.opts.lift_l1 && coef > 0.0 => {
                let off = self.ensure_lifted(&reference);
                for i in 0..self.sp.n_weights {
                    expr.linear.push((off + i, coef));
                }
            }
            Shape::SquareRoot if surrogate => expr.terms.push(Term { coef, function: k, square: true }),
            _ => expr.terms.push(Term { coef, function: k, square: false }),
        }
    }

    /// `f_k <= value` (scaled by `1/scale`).
    fn upper_bound(&mut self, k: usize, value: f64) {
        let scale = self.sp.problem.scale(k);
        let mut e = Expr::default();
        if self.sp.problem.shape(k) == Shape::SquareRoot && value >= 0.0 {
            self.add_function(&mut e, k, 1.0 / (scale * scale), true);
            e.constant -= (value / scale) * (value / scale);
        } else {
            self.add_function(&mut e, k, 1.0 / scale, false);
            e.constant -= value / scale;
        }
        self.push_le(e);
    }

    /// `f_k >= value`.
    fn lower_bound(&mut self, k: usize, value: f64) {
        let scale = self.sp.problem.scale(k);
        let mut e = Expr::default();
        self.add_function(&mut e, k, -1.0 / scale, false);
        e.constant += value / scale;
        self.push_le(e);
    }

    fn push_le(&mut self, e: Expr) {
        if e.is_linear() {
            let mut coeffs = vec![0.0; self.sp.n_vars];
            for (i, c) in &e.linear {
                coeffs[*i] += c;
            }
            self.sp.linear_le.push(LinearRow { coeffs, rhs: -e.constant });
        } else {
            self.sp.nonlinear.push(e);
        }
    }

    fn install_bounds(&mut self) {
        for b in self.sp.problem.bounds().to_vec() {
            if let Some(hi) = b.upper {
                self.upper_bound(b.function, hi);
            }
            if let Some(lo) = b.lower {
                self.lower_bound(b.function, lo);
            }
        }
    }

    fn finish(mut self) -> ScalarProblem<'a> {
        let nv = self.sp.n_vars;
        for row in self.sp.linear_eq.iter_mut().chain(self.sp.linear_le.iter_mut()) {
            row.coeffs.resize(nv, 0.0);
        }
        self.sp
    }
}

fn pad(mut v: Vec<f64>, n: usize) -> Vec<f64> {
    v.resize(n, 0.0);
    v
}

/// `min f_k` alone, in units of the function's scale. Square-root shaped
/// functions are replaced by their square, which has the same minimizers.
pub fn build_single<'a>(problem: &'a dyn MultiObjectiveProblem, k: usize, opts: BuildOptions) -> ScalarProblem<'a> {
    let mut b = Builder::new(problem, Scalarization::Single { function: k }, false, opts);
    b.install_bounds();
    let scale = problem.scale(k);
    let mut obj = Expr::default();
    if problem.shape(k) == Shape::SquareRoot {
        b.add_function(&mut obj, k, 1.0 / (scale * scale), true);
    } else {
        b.add_function(&mut obj, k, 1.0 / scale, false);
    }
    b.sp.objective = obj;
    b.finish()
}

/// `min sum_k lambda_k f_k`. A single positive weight delegates to
/// [`build_single`].
pub fn build_weighted_sum<'a>(
    problem: &'a dyn MultiObjectiveProblem,
    lambda: &[f64],
    opts: BuildOptions,
) -> ScalarProblem<'a> {
    let positive: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] > 0.0).collect();
    if positive.len() == 1 {
        let mut sp = build_single(problem, positive[0], opts);
        sp.kind = Scalarization::WeightedSum { lambda: lambda.to_vec() };
        return sp;
    }
    let mut b = Builder::new(problem, Scalarization::WeightedSum { lambda: lambda.to_vec() }, false, opts);
    b.install_bounds();
    // one positive factor for the whole sum keeps magnitudes near one
    let norm: f64 = lambda.iter().enumerate().map(|(k, l)| l * problem.scale(k)).sum();
    let factor = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let mut obj = Expr::default();
    for (k, l) in lambda.iter().enumerate() {
        if *l > 0.0 {
            b.add_function(&mut obj, k, l * factor, false);
        }
    }
    b.sp.objective = obj;
    b.finish()
}

/// `min f_keep` subject to `f_k <= eps_k` for every other criterion.
/// `eps` has one entry per criterion; the entry at `keep` is ignored and
/// non-finite entries impose nothing.
pub fn build_epsilon_constraint<'a>(
    problem: &'a dyn MultiObjectiveProblem,
    keep: usize,
    eps: &[f64],
    opts: BuildOptions,
) -> ScalarProblem<'a> {
    let mut sp = build_single(problem, keep, opts);
    sp.kind = Scalarization::EpsilonConstraint { keep, eps: eps.to_vec() };
    let mut b = Builder { sp, opts };
    for (k, e) in eps.iter().enumerate() {
        if k != keep && e.is_finite() {
            b.upper_bound(k, *e);
        }
    }
    b.finish()
}

/// `min t` subject to `t >= w_k (f~_k - z_k)` for every criterion, where
/// `f~` is `f` mapped through `normalization`.
pub fn build_tchebycheff<'a>(
    problem: &'a dyn MultiObjectiveProblem,
    params: &TchebycheffParams,
    normalization: &Normalization,
    opts: BuildOptions,
) -> ScalarProblem<'a> {
    let kind = Scalarization::Tchebycheff { params: params.clone(), normalization: normalization.clone() };
    let mut b = Builder::new(problem, kind, true, opts);
    b.install_bounds();
    let t = b.sp.t_index.unwrap();
    for k in 0..problem.num_objectives() {
        let w = params.weights[k];
        let r = normalization.range[k];
        let mut e = Expr::default();
        b.add_function(&mut e, k, w / r, false);
        e.constant -= w * (normalization.lower[k] / r + params.reference[k]);
        e.linear.push((t, -1.0));
        b.push_le(e);
    }
    b.sp.objective = Expr { constant: 0.0, linear: vec![(t, 1.0)], terms: Vec::new() };
    b.finish()
}

impl ScalarProblem<'_> {
    pub fn weights<'y>(&self, y: &'y [f64]) -> &'y [f64] {
        &y[..self.n_weights]
    }

    /// Evaluates `expr` at `y`; `values[k]` holds `f_k(x)`.
    pub fn expr_value(expr: &Expr, y: &[f64], values: &[f64]) -> f64 {
        let mut v = expr.constant;
        for (i, c) in &expr.linear {
            v += c * y[*i];
        }
        for t in &expr.terms {
            let f = values[t.function];
            v += t.coef * if t.square { f * f } else { f };
        }
        v
    }

    /// Extends weights `x` to a full variable vector: slacks at `|x - ref|`
    /// and `t` at the smallest level satisfying every row that contains it.
    pub fn extend(&self, x: &[f64]) -> Result<Vec<f64>, crate::objectives::EvalError> {
        let mut y = x.to_vec();
        y.resize(self.n_vars, 0.0);
        if let Some((off, reference)) = &self.lifted {
            for i in 0..self.n_weights {
                y[off + i] = (x[i] - reference[i]).abs();
            }
        }
        if let Some(t) = self.t_index {
            y[t] = self.t_lower_limit(&y)?;
        }
        Ok(y)
    }

    /// Smallest `t` that satisfies every constraint row containing `t`.
    pub fn t_lower_limit(&self, y: &[f64]) -> Result<f64, crate::objectives::EvalError> {
        let t = self.t_index.expect("problem has no level variable");
        let mut y0 = y.to_vec();
        y0[t] = 0.0;
        let values = self.function_values(self.weights(&y0))?;
        let mut level = f64::NEG_INFINITY;
        for e in &self.nonlinear {
            if let Some((_, c)) = e.linear.iter().find(|(i, _)| *i == t) {
                level = level.max(Self::expr_value(e, &y0, &values) / -c);
            }
        }
        for row in &self.linear_le {
            let c = row.coeffs[t];
            if c < 0.0 {
                level = level.max((row.value(&y0) - row.rhs) / -c);
            }
        }
        Ok(if level.is_finite() { level } else { 0.0 })
    }

    /// Values of every function referenced by a nonlinear term.
    pub fn function_values(&self, x: &[f64]) -> Result<Vec<f64>, crate::objectives::EvalError> {
        let nf = self.problem.num_functions();
        let mut needed = vec![false; nf];
        for e in std::iter::once(&self.objective).chain(&self.nonlinear) {
            for t in &e.terms {
                needed[t.function] = true;
            }
        }
        let mut values = vec![0.0; nf];
        for k in 0..nf {
            if needed[k] {
                values[k] = self.problem.evaluate(k, x, None)?;
            }
        }
        Ok(values)
    }

    /// Largest violation of any constraint at `y`, nonlinear rows included.
    pub fn max_violation(&self, y: &[f64]) -> Result<f64, crate::objectives::EvalError> {
        let values = self.function_values(self.weights(y))?;
        let mut v: f64 = 0.0;
        for row in &self.linear_eq {
            v = v.max((row.value(y) - row.rhs).abs());
        }
        for row in &self.linear_le {
            v = v.max(row.value(y) - row.rhs);
        }
        for e in &self.nonlinear {
            v = v.max(Self::expr_value(e, y, &values));
        }
        for i in 0..self.n_vars {
            v = v.max(self.lower[i] - y[i]).max(y[i] - self.upper[i]);
        }
        Ok(v)
    }

    pub fn objective_value(&self, y: &[f64]) -> Result<f64, crate::objectives::EvalError> {
        let values = self.function_values(self.weights(y))?;
        Ok(Self::expr_value(&self.objective, y, &values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::EvalError;
    use crate::problem::LinearRegion;

    /// f = (x1, 1 - x1) on the 2-simplex.
    struct Toy {
        region: LinearRegion,
        linear: bool,
    }

    impl MultiObjectiveProblem for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn num_objectives(&self) -> usize {
            2
        }
        fn label(&self, k: usize) -> String {
            format!("f{k}")
        }
        fn evaluate(&self, k: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64, EvalError> {
            let (v, g) = if k == 0 { (x[0], [1.0, 0.0]) } else { (1.0 - x[0], [-1.0, 0.0]) };
            if let Some(out) = grad {
                out.copy_from_slice(&g);
            }
            Ok(v)
        }
        fn shape(&self, k: usize) -> Shape {
            if !self.linear {
                return Shape::Smooth;
            }
            if k == 0 {
                Shape::Linear { coeffs: vec![1.0, 0.0], constant: 0.0 }
            } else {
                Shape::Linear { coeffs: vec![-1.0, 0.0], constant: 1.0 }
            }
        }
        fn region(&self) -> &LinearRegion {
            &self.region
        }
    }

    #[test]
    fn weights_examples() {
        let p = tchebycheff_weights(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p.weights, vec![0.5, 0.5]);
        let p = tchebycheff_weights(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!((p.weights[0] - 2.0 / 3.0).abs() < 1e-15 && (p.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = tchebycheff_weights(&[1.0, 1.0, 1.0], &[2.0, 3.0, 5.0]).unwrap();
        let c = 1.75;
        for (w, e) in p.weights.iter().zip([1.0 / c, 0.5 / c, 0.25 / c]) {
            assert!((w - e).abs() < 1e-15);
        }
        assert_eq!(p.reference, vec![1.0, 1.0, 1.0]);
        assert!(tchebycheff_weights(&[0.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(tchebycheff_weights(&[0.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn vertex_examples() {
        assert_eq!(tchebycheff_vertex(&[0.3, 0.4], 0.0, &[0.5, 0.5]), vec![0.3, 0.4]);
        assert_eq!(tchebycheff_vertex(&[0.0, 0.0], 0.25, &[0.5, 0.5]), vec![0.5, 0.5]);
        let s = tchebycheff_vertex(&[1.0, 2.0], 1.0, &[2.0 / 3.0, 1.0 / 3.0]);
        assert!((s[0] - 2.5).abs() < 1e-15 && (s[1] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn tchebycheff_rows_use_epigraph_form() {
        let toy = Toy { region: LinearRegion::simplex(2), linear: false };
        let params = tchebycheff_weights(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let sp = build_tchebycheff(&toy, &params, &Normalization::identity(2), BuildOptions::default());
        assert_eq!(sp.n_vars, 3);
        assert_eq!(sp.nonlinear.len(), 2);
        // for fixed x the smallest feasible t is the max expression
        for x0 in [0.0, 0.2, 0.5, 0.9] {
            let y = sp.extend(&[x0, 1.0 - x0]).unwrap();
            let expect = tchebycheff_value(&[x0, 1.0 - x0], &params);
            assert!((y[2] - expect).abs() < 1e-15);
            assert!(sp.max_violation(&y).unwrap() <= 1e-15);
        }
    }

    #[test]
    fn linear_shapes_become_linear_rows() {
        let toy = Toy { region: LinearRegion::simplex(2), linear: true };
        let params = tchebycheff_weights(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let sp = build_tchebycheff(&toy, &params, &Normalization::identity(2), BuildOptions::default());
        assert!(sp.nonlinear.is_empty());
        assert_eq!(sp.linear_le.len(), 2);
        let y = sp.extend(&[0.5, 0.5]).unwrap();
        assert!((y[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn epsilon_ignores_infinite_levels() {
        let toy = Toy { region: LinearRegion::simplex(2), linear: false };
        let sp = build_epsilon_constraint(&toy, 0, &[0.0, f64::INFINITY], BuildOptions::default());
        assert!(sp.nonlinear.is_empty());
        let sp = build_epsilon_constraint(&toy, 0, &[0.0, 0.4], BuildOptions::default());
        assert_eq!(sp.nonlinear.len(), 1);
    }
}
