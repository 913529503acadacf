//! One local SQP solve from a single start.
//!
//! Each iteration solves a QP model with a damped-BFGS Hessian of the
//! Lagrangian. Linear rows are carried exactly, so iterates stay on the
//! polytope once the start is on it. Nonlinear rows are linearized; if the
//! model is inconsistent an elastic variable relaxes them. Steps are accepted
//! on an l1 exact-penalty merit with Armijo backtracking and one
//! second-order correction.
//!
//! Terms `c |x - r|_1` with `c > 0` are not linearized: the QP carries them
//! exactly through auxiliary variables `d >= |x + p - r|`, so iterates can
//! settle on the kink.

use super::qp::{solve_qp, QpError, Row};
use super::{SolverConfig, Status};
use crate::objectives::EvalError;
use crate::problem::Shape;
use crate::scalarization::{Expr, ScalarProblem, Term};

/// Result of one start.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub status: Status,
    pub y: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    pub stationarity: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

struct Point {
    y: Vec<f64>,
    f: f64,
    /// Gradient of the smooth part of the objective.
    grad: Vec<f64>,
    g: Vec<f64>,
    /// Jacobian of the smooth parts of the rows.
    jac: Vec<Vec<f64>>,
    /// `|x - r|_1` for the kinked terms.
    l1: f64,
}

/// Convex l1 terms modelled exactly in the QP.
#[derive(Debug, Default)]
struct Kinks {
    function: Option<usize>,
    reference: Vec<f64>,
    objective: f64,
    rows: Vec<f64>,
}

impl Kinks {
    fn find(sp: &ScalarProblem) -> Self {
        let mut k = Kinks { rows: vec![0.0; sp.nonlinear.len()], ..Default::default() };
        let fun = (0..sp.problem.num_functions())
            .find_map(|f| match sp.problem.shape(f) {
                Shape::L1 { reference } => Some((f, reference)),
                _ => None,
            });
        let Some((f, reference)) = fun else { return k };
        k.function = Some(f);
        k.reference = reference;
        k.objective = k.coef(&sp.objective);
        for (i, e) in sp.nonlinear.iter().enumerate() {
            k.rows[i] = k.coef(e);
        }
        if k.objective == 0.0 && k.rows.iter().all(|c| *c == 0.0) {
            k.function = None;
        }
        k
    }

    fn is_kinked(&self, t: &Term) -> bool {
        Some(t.function) == self.function && !t.square && t.coef > 0.0
    }

    fn coef(&self, e: &Expr) -> f64 {
        e.terms.iter().filter(|t| self.is_kinked(t)).map(|t| t.coef).sum()
    }

    fn active(&self) -> usize {
        if self.function.is_some() {
            self.reference.len()
        } else {
            0
        }
    }

    fn l1(&self, y: &[f64]) -> f64 {
        if self.function.is_none() {
            return 0.0;
        }
        y.iter().zip(&self.reference).map(|(a, b)| (a - b).abs()).sum()
    }
}

struct Values {
    f: f64,
    g: Vec<f64>,
}

fn needed_functions(sp: &ScalarProblem) -> Vec<usize> {
    let mut k: Vec<usize> = std::iter::once(&sp.objective)
        .chain(&sp.nonlinear)
        .flat_map(|e| e.terms.iter().map(|t| t.function))
        .collect();
    k.sort_unstable();
    k.dedup();
    k
}

struct Evaluator<'p, 'a> {
    sp: &'p ScalarProblem<'a>,
    needed: Vec<usize>,
    kinks: Kinks,
    count: usize,
}

impl Evaluator<'_, '_> {
    fn values(&mut self, y: &[f64]) -> Result<Values, EvalError> {
        self.count += 1;
        let x = &y[..self.sp.n_weights];
        let mut vals = vec![0.0; self.sp.problem.num_functions()];
        for &k in &self.needed {
            vals[k] = self.sp.problem.evaluate(k, x, None)?;
        }
        let f = ScalarProblem::expr_value(&self.sp.objective, y, &vals);
        let g = self.sp.nonlinear.iter().map(|e| ScalarProblem::expr_value(e, y, &vals)).collect();
        Ok(Values { f, g })
    }

    fn full(&mut self, y: &[f64]) -> Result<Point, EvalError> {
        self.count += 1;
        let n = self.sp.n_weights;
        let nv = self.sp.n_vars;
        let x = &y[..n];
        let nf = self.sp.problem.num_functions();
        let mut vals = vec![0.0; nf];
        let mut grads = vec![Vec::new(); nf];
        for &k in &self.needed {
            let mut gk = vec![0.0; n];
            vals[k] = self.sp.problem.evaluate(k, x, Some(&mut gk))?;
            grads[k] = gk;
        }
        let kinks = &self.kinks;
        let grad_of = |e: &Expr| {
            let mut out = vec![0.0; nv];
            for (i, c) in &e.linear {
                out[*i] += c;
            }
            for t in e.terms.iter().filter(|t| !kinks.is_kinked(t)) {
                let factor = if t.square { 2.0 * t.coef * vals[t.function] } else { t.coef };
                for (o, gi) in out.iter_mut().zip(&grads[t.function]) {
                    *o += factor * gi;
                }
            }
            out
        };
        let f = ScalarProblem::expr_value(&self.sp.objective, y, &vals);
        let grad = grad_of(&self.sp.objective);
        let g = self.sp.nonlinear.iter().map(|e| ScalarProblem::expr_value(e, y, &vals)).collect();
        let jac = self.sp.nonlinear.iter().map(grad_of).collect();
        Ok(Point { y: y.to_vec(), f, grad, g, jac, l1: self.kinks.l1(x) })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn identity(n: usize) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    for i in 0..n {
        b[i * n + i] = 1.0;
    }
    b
}

fn linear_violation(sp: &ScalarProblem, y: &[f64]) -> f64 {
    let mut v: f64 = 0.0;
    for row in &sp.linear_eq {
        v = v.max((row.value(y) - row.rhs).abs());
    }
    for row in &sp.linear_le {
        v = v.max(row.value(y) - row.rhs);
    }
    for i in 0..sp.n_vars {
        v = v.max(sp.lower[i] - y[i]).max(y[i] - sp.upper[i]);
    }
    v
}

fn merit(v: &Values, nu: &[f64]) -> f64 {
    v.f + v.g.iter().zip(nu).map(|(g, n)| n * g.max(0.0)).sum::<f64>()
}

/// Linear rows of the QP model at `y`, shared by the normal and elastic forms.
fn linear_model(sp: &ScalarProblem, y: &[f64], extra: usize) -> (Vec<Row>, Vec<Row>) {
    let nv = sp.n_vars;
    let widen = |a: &[f64]| {
        let mut v = a.to_vec();
        v.resize(nv + extra, 0.0);
        v
    };
    let eq = sp
        .linear_eq
        .iter()
        .map(|r| Row { a: widen(&r.coeffs), b: r.rhs - r.value(y) })
        .collect();
    let mut ge = Vec::new();
    for r in &sp.linear_le {
        let a: Vec<f64> = r.coeffs.iter().map(|v| -v).collect();
        ge.push(Row { a: widen(&a), b: r.value(y) - r.rhs });
    }
    for i in 0..nv {
        if sp.lower[i].is_finite() {
            let mut a = vec![0.0; nv + extra];
            a[i] = 1.0;
            ge.push(Row { a, b: sp.lower[i] - y[i] });
        }
        if sp.upper[i].is_finite() {
            let mut a = vec![0.0; nv + extra];
            a[i] = -1.0;
            ge.push(Row { a, b: y[i] - sp.upper[i] });
        }
    }
    (eq, ge)
}

struct Step {
    p: Vec<f64>,
    lambda: Vec<f64>,
    elastic: bool,
    /// Model value of `|x + p - r|_1`.
    l1: f64,
}

/// Curvature given to the auxiliary l1 variables so the QP stays strictly
/// convex.
const AUX_CURVATURE: f64 = 1e-8;

/// Solves the QP model. `shift` replaces the constant of each linearized
/// row, smooth part only (the second-order correction passes its own).
fn qp_step(sp: &ScalarProblem, kinks: &Kinks, pt: &Point, b: &[f64], shift: &[f64]) -> Result<Step, QpError> {
    match qp_model(sp, kinks, pt, b, shift, false) {
        Ok(s) => return Ok(s),
        Err(QpError::Infeasible) | Err(QpError::IterationLimit) if !sp.nonlinear.is_empty() => {}
        Err(e) => return Err(e),
    }
    qp_model(sp, kinks, pt, b, shift, true)
}

fn qp_model(
    sp: &ScalarProblem,
    kinks: &Kinks,
    pt: &Point,
    b: &[f64],
    shift: &[f64],
    elastic: bool,
) -> Result<Step, QpError> {
    let nv = sp.n_vars;
    let k = sp.nonlinear.len();
    let na = kinks.active();
    let total = nv + na + usize::from(elastic);
    let (eq, mut ge) = linear_model(sp, &pt.y, na + usize::from(elastic));
    // d_i >= x_i + p_i - r_i and d_i >= r_i - x_i - p_i
    for i in 0..na {
        let gap = pt.y[i] - kinks.reference[i];
        let mut a = vec![0.0; total];
        a[nv + i] = 1.0;
        a[i] = -1.0;
        ge.push(Row { a: a.clone(), b: gap });
        a[i] = 1.0;
        ge.push(Row { a, b: -gap });
    }
    let nl_start = ge.len();
    for i in 0..k {
        let mut a: Vec<f64> = pt.jac[i].iter().map(|v| -v).collect();
        a.resize(total, 0.0);
        for j in 0..na {
            a[nv + j] = -kinks.rows[i];
        }
        if elastic {
            a[total - 1] = 1.0;
        }
        ge.push(Row { a, b: shift[i] });
    }
    let mut g = vec![0.0; total * total];
    for i in 0..nv {
        for j in 0..nv {
            g[i * total + j] = b[i * nv + j];
        }
    }
    for j in nv..nv + na {
        g[j * total + j] = AUX_CURVATURE;
    }
    let mut c = pt.grad.clone();
    c.resize(total, kinks.objective);
    if elastic {
        let mut e = vec![0.0; total];
        e[total - 1] = 1.0;
        ge.push(Row { a: e, b: 0.0 });
        g[total * total - 1] = 1.0;
        c[total - 1] = 1e3 * (1.0 + pt.grad.iter().fold(kinks.objective, |m, v| m.max(v.abs())));
    }
    let sol = solve_qp(total, &g, &c, &eq, &ge)?;
    let l1 = sol.x[nv..nv + na].iter().sum();
    let mut p = sol.x;
    p.truncate(nv);
    Ok(Step { p, lambda: sol.lambda_ge[nl_start..nl_start + k].to_vec(), elastic, l1 })
}

fn lagrangian_gradient(pt: &Point, lambda: &[f64]) -> Vec<f64> {
    let mut g = pt.grad.clone();
    for (row, l) in pt.jac.iter().zip(lambda) {
        for (gi, ri) in g.iter_mut().zip(row) {
            *gi += l * ri;
        }
    }
    g
}

fn bfgs_update(b: &mut [f64], n: usize, s: &[f64], mut yv: Vec<f64>) {
    let bs: Vec<f64> = (0..n).map(|i| dot(&b[i * n..(i + 1) * n], s)).collect();
    let sbs = dot(s, &bs);
    if !(sbs > 1e-300) {
        return;
    }
    let sy = dot(s, &yv);
    if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        for (y, bsi) in yv.iter_mut().zip(&bs) {
            *y = theta * *y + (1.0 - theta) * bsi;
        }
    }
    let sy = dot(s, &yv);
    if !(sy > 1e-300) {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += yv[i] * yv[j] / sy - bs[i] * bs[j] / sbs;
        }
    }
}

/// Runs SQP from `y0`, which must satisfy the linear rows.
pub fn local_solve(sp: &ScalarProblem, y0: Vec<f64>, cfg: &SolverConfig) -> LocalResult {
    let nv = sp.n_vars;
    let k = sp.nonlinear.len();
    let mut ev = Evaluator { sp, needed: needed_functions(sp), kinks: Kinks::find(sp), count: 0 };
    let step_tol = 1e-3 * cfg.tol_opt;
    let kkt_tol = 1e-4 * cfg.tol_opt;

    let failed = |y: Vec<f64>, count: usize, iterations: usize| LocalResult {
        status: Status::NumericalFailure,
        y,
        objective: f64::NAN,
        violation: f64::INFINITY,
        stationarity: f64::INFINITY,
        evaluations: count,
        iterations,
    };

    let mut pt = match ev.full(&y0) {
        Ok(p) => p,
        Err(_) => return failed(y0, ev.count, 0),
    };
    let mut b = identity(nv);
    let mut nu = vec![0.0; k];
    let mut resets = 0;
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;

    let finish = |pt: &Point, status: Status, stationarity: f64, count: usize, iterations: usize| {
        let violation = linear_violation(sp, &pt.y).max(pt.g.iter().fold(0.0f64, |m, g| m.max(*g)));
        LocalResult {
            status,
            y: pt.y.clone(),
            objective: pt.f,
            violation,
            stationarity,
            evaluations: count,
            iterations,
        }
    };
    let feasible = |pt: &Point| {
        linear_violation(sp, &pt.y).max(pt.g.iter().fold(0.0f64, |m, g| m.max(*g))) <= cfg.tol_feas
    };
    let settle = |pt: &Point, stationarity: f64| {
        if !feasible(pt) {
            Status::Infeasible
        } else if stationarity <= cfg.tol_opt {
            Status::Optimal
        } else {
            Status::NumericalFailure
        }
    };

    loop {
        if ev.count >= cfg.max_evals {
            let st = if feasible(&pt) && stationarity <= cfg.tol_opt { Status::Optimal } else { Status::BudgetExceeded };
            return finish(&pt, st, stationarity, ev.count, iterations);
        }
        iterations += 1;

        let shift: Vec<f64> = (0..k).map(|i| pt.g[i] - ev.kinks.rows[i] * pt.l1).collect();
        let step = match qp_step(sp, &ev.kinks, &pt, &b, &shift) {
            Ok(s) => s,
            Err(_) if resets < 3 => {
                b = identity(nv);
                resets += 1;
                continue;
            }
            Err(_) => return finish(&pt, settle(&pt, stationarity), stationarity, ev.count, iterations),
        };
        let p = &step.p;
        let pnorm = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let lin_pred: Vec<f64> =
            (0..k).map(|i| shift[i] + dot(&pt.jac[i], p) + ev.kinks.rows[i] * step.l1).collect();
        let model_change = dot(&pt.grad, p) + ev.kinks.objective * (step.l1 - pt.l1);
        stationarity = model_change.abs() + step.lambda.iter().zip(&pt.g).map(|(l, g)| (l * g).abs()).sum::<f64>();
        if !step.elastic {
            let lin_viol = lin_pred.iter().fold(0.0f64, |m, v| m.max(*v));
            stationarity += lin_viol.max(0.0);
        }
        if feasible(&pt) && !step.elastic && (pnorm <= step_tol || stationarity <= kkt_tol) {
            return finish(&pt, Status::Optimal, stationarity, ev.count, iterations);
        }

        for (n, l) in nu.iter_mut().zip(&step.lambda) {
            let l = l.abs();
            *n = if iterations == 1 { l } else { l.max(0.5 * (*n + l)) };
            *n = n.max(1e-6);
        }
        let slope = model_change
            + (0..k).map(|i| nu[i] * (lin_pred[i].max(0.0) - pt.g[i].max(0.0))).sum::<f64>();
        let base = Values { f: pt.f, g: pt.g.clone() };
        let phi0 = merit(&base, &nu);

        if !(slope < 0.0) {
            if pnorm <= step_tol {
                return finish(&pt, settle(&pt, stationarity), stationarity, ev.count, iterations);
            }
            if resets < 3 {
                b = identity(nv);
                resets += 1;
                continue;
            }
            return finish(&pt, settle(&pt, stationarity), stationarity, ev.count, iterations);
        }

        // backtracking on the merit, with one second-order correction
        let mut alpha = 1.0;
        let mut accepted: Option<Vec<f64>> = None;
        let mut tried_soc = false;
        while alpha >= 1e-10 {
            let trial: Vec<f64> = pt.y.iter().zip(p).map(|(y, d)| y + alpha * d).collect();
            let vals = ev.values(&trial);
            let phi = vals.as_ref().map(|v| merit(v, &nu)).unwrap_or(f64::INFINITY);
            if phi <= phi0 + 1e-4 * alpha * slope {
                accepted = Some(trial);
                break;
            }
            if alpha == 1.0 && !tried_soc && k > 0 {
                tried_soc = true;
                if let Ok(v) = &vals {
                    let l1_trial = ev.kinks.l1(&trial[..sp.n_weights]);
                    let soc_shift: Vec<f64> =
                        (0..k).map(|i| v.g[i] - ev.kinks.rows[i] * l1_trial - dot(&pt.jac[i], p)).collect();
                    if let Ok(soc) = qp_step(sp, &ev.kinks, &pt, &b, &soc_shift) {
                        let t2: Vec<f64> = pt.y.iter().zip(&soc.p).map(|(y, d)| y + d).collect();
                        if let Ok(v2) = ev.values(&t2) {
                            if merit(&v2, &nu) <= phi0 + 1e-4 * slope {
                                accepted = Some(t2);
                                break;
                            }
                        }
                    }
                }
            }
            let next = if phi.is_finite() {
                // minimizer of the quadratic through phi0, slope and phi
                let denom = 2.0 * (phi - phi0 - alpha * slope);
                if denom > 0.0 { -slope * alpha * alpha / denom } else { 0.5 * alpha }
            } else {
                0.1 * alpha
            };
            alpha = next.clamp(0.1 * alpha, 0.5 * alpha);
            if ev.count >= cfg.max_evals {
                break;
            }
        }

        let Some(ynew) = accepted else {
            if resets < 3 {
                b = identity(nv);
                resets += 1;
                continue;
            }
            return finish(&pt, settle(&pt, stationarity), stationarity, ev.count, iterations);
        };

        let newpt = match ev.full(&ynew) {
            Ok(p) => p,
            Err(_) => return failed(ynew, ev.count, iterations),
        };
        let s: Vec<f64> = newpt.y.iter().zip(&pt.y).map(|(a, b)| a - b).collect();
        let g_new = lagrangian_gradient(&newpt, &step.lambda);
        let g_old = lagrangian_gradient(&pt, &step.lambda);
        let yv: Vec<f64> = g_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
        bfgs_update(&mut b, nv, &s, yv);
        let moved = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        pt = newpt;
        resets = 0;
        if moved <= 1e-15 && feasible(&pt) && stationarity <= cfg.tol_opt {
            return finish(&pt, Status::Optimal, stationarity, ev.count, iterations);
        }
    }
}
