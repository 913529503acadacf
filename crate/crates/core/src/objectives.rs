//! The four allocation criteria and the building blocks of the solvency ratio.
//!
//! Value functions take plain slices so the solver can call them on raw
//! iterates. The `*_grad` variants return the same value computed by the same
//! arithmetic, together with an analytic (sub)gradient. Kink conventions:
//! `max` takes the first branch on ties, `|.|` has derivative 0 at 0, and a
//! square root of 0 has gradient 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AssetUniverse, ModelSpec, Objective, SolvencyCalibration, P_MARKET_HALF, P_MARKET_ZERO,
    RISK_TYPES,
};

/// Radicands above `-SQRT_TOLERANCE` are treated as rounding noise.
pub const SQRT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("negative variance {0:.3e}: covariance matrix is not positive semi-definite")]
    NumericalPsd(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("solvency ratio needs a calibration")]
    MissingCalibration,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

fn check_len(expected: usize, got: usize) -> Result<(), EvalError> {
    if expected == got {
        Ok(())
    } else {
        Err(EvalError::Dimension { expected, got })
    }
}

fn clamped_sqrt(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r.sqrt()
    }
}

/// `sum_i w_i mu_i`.
pub fn portfolio_return(w: &[f64], universe: &AssetUniverse) -> f64 {
    w.iter().zip(&universe.mu).map(|(a, b)| a * b).sum()
}

fn variance_and_product(w: &[f64], universe: &AssetUniverse) -> (f64, Vec<f64>) {
    let n = w.len();
    // (sigma_i sigma_j rho_ij) w_j, accumulated row by row
    let mut sw = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += universe.rho[i][j] * universe.sigma[j] * w[j];
        }
        sw[i] = universe.sigma[i] * acc;
    }
    let var = w.iter().zip(&sw).map(|(a, b)| a * b).sum();
    (var, sw)
}

/// `sqrt(w' Sigma w)`. Radicands within `-1e-12` of zero are clamped.
pub fn portfolio_volatility(w: &[f64], universe: &AssetUniverse) -> Result<f64, EvalError> {
    check_len(universe.len(), w.len())?;
    let (var, _) = variance_and_product(w, universe);
    volatility_from_variance(var)
}

fn volatility_from_variance(var: f64) -> Result<f64, EvalError> {
    if !var.is_finite() {
        return Err(EvalError::NonFinite("variance"));
    }
    if var < -SQRT_TOLERANCE {
        return Err(EvalError::NumericalPsd(var));
    }
    Ok(clamped_sqrt(var))
}

pub fn portfolio_volatility_grad(
    w: &[f64],
    universe: &AssetUniverse,
    grad: &mut [f64],
) -> Result<f64, EvalError> {
    check_len(universe.len(), w.len())?;
    let (var, sw) = variance_and_product(w, universe);
    let vol = volatility_from_variance(var)?;
    for (g, s) in grad.iter_mut().zip(&sw) {
        *g = if vol > 0.0 { s / vol } else { 0.0 };
    }
    Ok(vol)
}

/// `A w + b`, one entry per risk type.
pub fn net_risk(w: &[f64], cal: &SolvencyCalibration) -> Result<[f64; RISK_TYPES], EvalError> {
    check_len(RISK_TYPES, cal.sensitivities.len())?;
    check_len(RISK_TYPES, cal.offsets.len())?;
    let mut x = [0.0; RISK_TYPES];
    for (r, row) in cal.sensitivities.iter().enumerate() {
        check_len(row.len(), w.len())?;
        let dot: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        x[r] = dot + cal.offsets[r];
    }
    Ok(x)
}

fn equity_radicand(x3: f64, x4: f64) -> f64 {
    x3 * x3 + 1.5 * x3 * x4 + x4 * x4
}

/// Interest (max of up/down), equity (correlated root), property, spread,
/// currency (max of up/down).
pub fn aggregate_risks(x: &[f64; RISK_TYPES]) -> [f64; 5] {
    [
        if x[0] >= x[1] { x[0] } else { x[1] },
        clamped_sqrt(equity_radicand(x[2], x[3])),
        x[4],
        x[5],
        if x[6] >= x[7] { x[6] } else { x[7] },
    ]
}

fn quad_form(p: &[[f64; 5]; 5], x: &[f64; 5]) -> f64 {
    let mut acc = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            acc += x[i] * p[i][j] * x[j];
        }
    }
    acc
}

/// `sqrt(max(x'P0x, x'Phalf x) + c1^2)`.
pub fn market_risk(x: &[f64; 5], cal: &SolvencyCalibration) -> f64 {
    let q0 = quad_form(&P_MARKET_ZERO, x);
    let qh = quad_form(&P_MARKET_HALF, x);
    let q = if q0 >= qh { q0 } else { qh };
    clamped_sqrt(q + cal.c1 * cal.c1)
}

/// `c2 sqrt(x^2 + c3 x + c4) + c5`.
pub fn constant_risk_adjust(x: f64, cal: &SolvencyCalibration) -> f64 {
    cal.c2 * clamped_sqrt(x * x + cal.c3 * x + cal.c4) + cal.c5
}

pub fn solvency_ratio(w: &[f64], cal: &SolvencyCalibration) -> Result<f64, EvalError> {
    let x = net_risk(w, cal)?;
    Ok(constant_risk_adjust(market_risk(&aggregate_risks(&x), cal), cal))
}

pub fn solvency_ratio_grad(
    w: &[f64],
    cal: &SolvencyCalibration,
    grad: &mut [f64],
) -> Result<f64, EvalError> {
    let x = net_risk(w, cal)?;
    let agg = aggregate_risks(&x);
    let m = market_risk(&agg, cal);
    let value = constant_risk_adjust(m, cal);

    let inner = clamped_sqrt(m * m + cal.c3 * m + cal.c4);
    let d_m = if inner > 0.0 { cal.c2 * (2.0 * m + cal.c3) / (2.0 * inner) } else { 0.0 };

    let q0 = quad_form(&P_MARKET_ZERO, &agg);
    let qh = quad_form(&P_MARKET_HALF, &agg);
    let p = if q0 >= qh { &P_MARKET_ZERO } else { &P_MARKET_HALF };
    let mut d_agg = [0.0; 5];
    if m > 0.0 {
        for i in 0..5 {
            let pa: f64 = (0..5).map(|j| p[i][j] * agg[j]).sum();
            d_agg[i] = d_m * pa / m;
        }
    }

    let mut d_x = [0.0; RISK_TYPES];
    if x[0] >= x[1] {
        d_x[0] = d_agg[0];
    } else {
        d_x[1] = d_agg[0];
    }
    if agg[1] > 0.0 {
        d_x[2] = d_agg[1] * (2.0 * x[2] + 1.5 * x[3]) / (2.0 * agg[1]);
        d_x[3] = d_agg[1] * (1.5 * x[2] + 2.0 * x[3]) / (2.0 * agg[1]);
    }
    d_x[4] = d_agg[2];
    d_x[5] = d_agg[3];
    if x[6] >= x[7] {
        d_x[6] = d_agg[4];
    } else {
        d_x[7] = d_agg[4];
    }

    for (i, g) in grad.iter_mut().enumerate() {
        *g = (0..RISK_TYPES).map(|r| cal.sensitivities[r][i] * d_x[r]).sum();
    }
    Ok(value)
}

/// `sum_i |w_i - ref_i|`.
pub fn l1_distance(w: &[f64], reference: &[f64]) -> f64 {
    w.iter().zip(reference).map(|(a, b)| (a - b).abs()).sum()
}

pub fn l1_distance_grad(w: &[f64], reference: &[f64], grad: &mut [f64]) -> f64 {
    for ((g, a), b) in grad.iter_mut().zip(w).zip(reference) {
        let d = a - b;
        *g = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    l1_distance(w, reference)
}

/// Objective values in natural sense, in the order of `objectives`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub objectives: Vec<Objective>,
    pub values: Vec<f64>,
}

impl ObjectiveVector {
    pub fn get(&self, objective: Objective) -> Option<f64> {
        self.objectives.iter().position(|o| *o == objective).map(|i| self.values[i])
    }

    /// Minimize-sense copy of the values.
    pub fn internal(&self) -> Vec<f64> {
        self.objectives.iter().zip(&self.values).map(|(o, v)| o.to_internal(*v)).collect()
    }
}

/// One criterion in natural sense.
pub fn evaluate_objective(objective: Objective, w: &[f64], spec: &ModelSpec) -> Result<f64, EvalError> {
    check_len(spec.n_assets(), w.len())?;
    match objective {
        Objective::Return => Ok(portfolio_return(w, &spec.universe)),
        Objective::Volatility => portfolio_volatility(w, &spec.universe),
        Objective::Solvency => {
            let cal = spec.solvency.as_ref().ok_or(EvalError::MissingCalibration)?;
            solvency_ratio(w, cal)
        }
        Objective::Distance => Ok(l1_distance(w, spec.reference.as_slice())),
    }
}

/// Active objectives of `spec`, canonical order, natural sense.
pub fn evaluate_all(w: &[f64], spec: &ModelSpec) -> Result<ObjectiveVector, EvalError> {
    let mut objectives = spec.active_objectives.clone();
    objectives.sort();
    evaluate_list(w, spec, &objectives)
}

pub fn evaluate_list(w: &[f64], spec: &ModelSpec, objectives: &[Objective]) -> Result<ObjectiveVector, EvalError> {
    let values = objectives
        .iter()
        .map(|o| evaluate_objective(*o, w, spec))
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("objective vector"));
    }
    Ok(ObjectiveVector { objectives: objectives.to_vec(), values })
}
