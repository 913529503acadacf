//! Model inputs: asset universe, portfolio weights, group limits, solvency
//! calibration and the objective catalogue.
//!
//! Every value type here is immutable once validated. Percentages never appear
//! in this module; all quantities are fractions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of net-risk types in the market-risk module.
pub const RISK_TYPES: usize = 8;

/// Tolerance on the simplex sum of a weight vector.
pub const SIMPLEX_TOLERANCE: f64 = 1e-8;

/// Smallest eigenvalue accepted for a correlation matrix.
pub const PSD_TOLERANCE: f64 = -1e-9;

/// Weight vectors whose sum is off by at most this much are rescaled on load.
pub const RENORMALIZE_TOLERANCE: f64 = 0.005;

/// Optimization direction of an objective in its natural (user-facing) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// The four criteria of the allocation problem, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Return,
    Volatility,
    Solvency,
    Distance,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::Return,
        Objective::Volatility,
        Objective::Solvency,
        Objective::Distance,
    ];

    pub fn sense(self) -> Sense {
        match self {
            Objective::Return | Objective::Solvency => Sense::Maximize,
            Objective::Volatility | Objective::Distance => Sense::Minimize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Return => "return",
            Objective::Volatility => "volatility",
            Objective::Solvency => "solvency",
            Objective::Distance => "distance",
        }
    }

    /// Converts a natural-sense value to the engine's minimize convention.
    pub fn to_internal(self, value: f64) -> f64 {
        match self.sense() {
            Sense::Minimize => value,
            Sense::Maximize => -value,
        }
    }

    /// Inverse of [`Objective::to_internal`].
    pub fn to_natural(self, value: f64) -> f64 {
        self.to_internal(value)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown objective `{0}` (expected return, volatility, solvency or distance)")]
pub struct UnknownObjective(pub String);

impl FromStr for Objective {
    type Err = UnknownObjective;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "return" | "mu" => Ok(Objective::Return),
            "volatility" | "vol" | "sigma" => Ok(Objective::Volatility),
            "solvency" => Ok(Objective::Solvency),
            "distance" | "l1" => Ok(Objective::Distance),
            _ => Err(UnknownObjective(s.to_string())),
        }
    }
}

/// Comparison operator of a scalar objective bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundOp {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl BoundOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BoundOp::AtMost => "<=",
            BoundOp::AtLeast => ">=",
        }
    }
}

impl FromStr for BoundOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "<=" | "le" => Ok(BoundOp::AtMost),
            ">=" | "ge" => Ok(BoundOp::AtLeast),
            other => Err(format!("unknown bound operator `{other}` (expected <= or >=)")),
        }
    }
}

/// A hard constraint `objective op value`, natural sense, fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBound {
    pub objective: Objective,
    pub op: BoundOp,
    pub value: f64,
}

impl ObjectiveBound {
    pub fn new(objective: Objective, op: BoundOp, value: f64) -> Self {
        Self { objective, op, value }
    }

    /// Bound expressed as `lower <= f <= upper` on the internal (minimize) value.
    pub fn internal_interval(&self) -> (Option<f64>, Option<f64>) {
        let v = self.objective.to_internal(self.value);
        let natural_upper = matches!(self.op, BoundOp::AtMost);
        let flipped = self.objective.sense() == Sense::Maximize;
        if natural_upper != flipped {
            (None, Some(v))
        } else {
            (Some(v), None)
        }
    }
}

impl fmt::Display for ObjectiveBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.objective, self.op.symbol(), self.value)
    }
}

impl FromStr for ObjectiveBound {
    type Err = String;

    /// Parses `OBJ:OP:VALUE`, e.g. `distance:<=:0.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.splitn(3, ':').collect();
        if parts.len() != 3 {
            return Err(format!("bound `{s}` is not of the form OBJ:OP:VALUE"));
        }
        let objective = parts[0].parse::<Objective>().map_err(|e| e.to_string())?;
        let op = parts[1].parse::<BoundOp>()?;
        let value = parts[2]
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bound value `{}`: {e}", parts[2]))?;
        if !value.is_finite() {
            return Err(format!("bound value `{}` is not finite", parts[2]));
        }
        Ok(Self { objective, op, value })
    }
}

/// Asset classes with their expected returns, volatilities and correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetUniverse {
    pub names: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
}

impl AssetUniverse {
    /// Universe with an identity correlation matrix.
    pub fn uncorrelated(names: Vec<String>, mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        let n = names.len();
        let rho = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { names, mu, sigma, rho }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Dense covariance matrix `sigma_i sigma_j rho_ij`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.len();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j] = self.sigma[i] * self.sigma[j] * self.rho[i][j];
            }
        }
        cov
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weights contain a non-finite entry")]
    NonFinite,
    #[error("weight {index} is negative ({value})")]
    Negative { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    Sum(f64),
}

/// A point on the unit simplex: nonnegative fractions summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    pub fn new(w: Vec<f64>) -> Result<Self, WeightsError> {
        check_simplex(&w)?;
        Ok(Self(w))
    }

    /// Rescales weights whose sum lies within 0.5% of one. Returns the weights
    /// and the original sum.
    pub fn renormalized(w: Vec<f64>) -> Result<(Self, f64), WeightsError> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::NonFinite);
        }
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(WeightsError::Negative { index, value });
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(WeightsError::Sum(sum));
        }
        let scaled = if (sum - 1.0).abs() <= SIMPLEX_TOLERANCE {
            w
        } else {
            w.into_iter().map(|v| v / sum).collect()
        };
        Ok((Self(scaled), sum))
    }

    /// Wraps a solver output, zeroing round-off negatives.
    pub(crate) fn from_solution(mut w: Vec<f64>) -> Self {
        for v in &mut w {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Self(w)
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for PortfolioWeights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_simplex(w: &[f64]) -> Result<(), WeightsError> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(WeightsError::NonFinite);
    }
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(WeightsError::Negative { index, value });
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(WeightsError::Sum(sum));
    }
    Ok(())
}

/// Lower and upper limit on the total weight of an asset group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConstraint {
    pub label: String,
    /// Zero-based asset indices.
    pub indices: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

/// Market correlation matrix `P_market(rho)` for the five aggregated risks.
pub const fn market_correlation(rho: f64) -> [[f64; 5]; 5] {
    [
        [1.0, rho, rho, rho, 0.25],
        [rho, 1.0, 0.75, 0.75, 0.25],
        [rho, 0.75, 1.0, 0.5, 0.25],
        [rho, 0.75, 0.5, 1.0, 0.25],
        [0.25, 0.25, 0.25, 0.25, 1.0],
    ]
}

pub const P_MARKET_ZERO: [[f64; 5]; 5] = market_correlation(0.0);
pub const P_MARKET_HALF: [[f64; 5]; 5] = market_correlation(0.5);

/// Net-risk sensitivities and the constants of the solvency-ratio chain.
///
/// Row order of `sensitivities`/`offsets`: interest up, interest down,
/// equity type 1, equity type 2, property, spread, currency up, currency down.
/// The two market correlation matrices are fixed and never read from input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvencyCalibration {
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub provenance: String,
    /// `A`, one row per risk type, one column per asset.
    pub sensitivities: Vec<Vec<f64>>,
    /// `b`.
    pub offsets: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl SolvencyCalibration {
    pub fn p_zero(&self) -> &'static [[f64; 5]; 5] {
        &P_MARKET_ZERO
    }

    pub fn p_half(&self) -> &'static [[f64; 5]; 5] {
        &P_MARKET_HALF
    }

    /// Calibration with `A = 0`, `b = 0` and the given constants.
    pub fn constant(n: usize, c1: f64, c2: f64, c3: f64, c4: f64, c5: f64) -> Self {
        Self {
            label: "constant".into(),
            provenance: String::new(),
            sensitivities: vec![vec![0.0; n]; RISK_TYPES],
            offsets: vec![0.0; RISK_TYPES],
            c1,
            c2,
            c3,
            c4,
            c5,
        }
    }
}

/// Everything needed to evaluate and optimize the allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub universe: AssetUniverse,
    pub reference: PortfolioWeights,
    #[serde(default)]
    pub groups: Vec<GroupConstraint>,
    pub solvency: Option<SolvencyCalibration>,
    #[serde(default)]
    pub objective_bounds: Vec<ObjectiveBound>,
    pub active_objectives: Vec<Objective>,
}

impl ModelSpec {
    /// Model over `universe` with the reference as given, no groups and every
    /// objective that the inputs allow.
    pub fn new(
        universe: AssetUniverse,
        reference: PortfolioWeights,
        solvency: Option<SolvencyCalibration>,
    ) -> Self {
        let active_objectives = Objective::ALL
            .into_iter()
            .filter(|o| *o != Objective::Solvency || solvency.is_some())
            .collect();
        Self {
            universe,
            reference,
            groups: Vec::new(),
            solvency,
            objective_bounds: Vec::new(),
            active_objectives,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.universe.len()
    }

    /// Same model with additional hard objective bounds.
    pub fn with_bounds(&self, bounds: &[ObjectiveBound]) -> Self {
        let mut spec = self.clone();
        spec.objective_bounds.extend_from_slice(bounds);
        spec
    }

    pub fn with_objectives(&self, objectives: &[Objective]) -> Self {
        let mut spec = self.clone();
        let mut active: Vec<Objective> = objectives.to_vec();
        active.sort();
        active.dedup();
        spec.active_objectives = active;
        spec
    }

    /// Objectives that can be evaluated with the available inputs.
    pub fn available_objectives(&self) -> Vec<Objective> {
        Objective::ALL
            .into_iter()
            .filter(|o| *o != Objective::Solvency || self.solvency.is_some())
            .collect()
    }
}

/// Machine-readable class of a model violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationCode {
    TooFewAssets,
    DimensionMismatch,
    NonFinite,
    NegativeVolatility,
    CorrelationNotSymmetric,
    CorrelationDiagonal,
    CorrelationOutOfRange,
    CorrelationNotPsd,
    NegativeWeight,
    SimplexSum,
    GroupEmpty,
    GroupIndex,
    GroupBounds,
    CalibrationDimension,
    CalibrationConstant,
    ObjectiveCount,
    ObjectiveUnavailable,
    BoundInconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", serde_json::to_value(self.code).unwrap().as_str().unwrap_or("?"), self.message)
    }
}

/// Checks every invariant of the model inputs. An empty list means valid.
pub fn validate_model(spec: &ModelSpec) -> Vec<Violation> {
    use ViolationCode as C;
    let mut out = Vec::new();
    let u = &spec.universe;
    let n = u.names.len();

    if n < 2 {
        out.push(Violation::new(C::TooFewAssets, format!("universe has {n} assets, need at least 2")));
    }
    if u.mu.len() != n || u.sigma.len() != n {
        out.push(Violation::new(
            C::DimensionMismatch,
            format!("{n} asset names but {} returns and {} volatilities", u.mu.len(), u.sigma.len()),
        ));
    }
    if u.mu.iter().chain(&u.sigma).any(|v| !v.is_finite()) {
        out.push(Violation::new(C::NonFinite, "returns and volatilities must be finite"));
    }
    for (i, s) in u.sigma.iter().enumerate() {
        if *s < 0.0 {
            out.push(Violation::new(C::NegativeVolatility, format!("volatility of asset {i} is negative ({s})")));
        }
    }
    validate_correlation(&u.rho, n, &mut out);

    validate_weights("reference portfolio", spec.reference.as_slice(), n, &mut out);

    for g in &spec.groups {
        if g.indices.is_empty() {
            out.push(Violation::new(C::GroupEmpty, format!("group `{}` has no assets", g.label)));
        }
        let mut seen = std::collections::HashSet::new();
        for &i in &g.indices {
            if i >= n || !seen.insert(i) {
                out.push(Violation::new(
                    C::GroupIndex,
                    format!("group `{}` has an out-of-range or repeated index {i}", g.label),
                ));
            }
        }
        if !(0.0..1.0).contains(&g.lower) || !(g.upper > 0.0 && g.upper <= 1.0) || g.lower > g.upper {
            out.push(Violation::new(
                C::GroupBounds,
                format!("group `{}` bounds [{}, {}] are invalid", g.label, g.lower, g.upper),
            ));
        }
    }

    if let Some(cal) = &spec.solvency {
        if cal.sensitivities.len() != RISK_TYPES
            || cal.sensitivities.iter().any(|row| row.len() != n)
            || cal.offsets.len() != RISK_TYPES
        {
            out.push(Violation::new(
                C::CalibrationDimension,
                format!("calibration must hold an {RISK_TYPES}x{n} sensitivity matrix and {RISK_TYPES} offsets"),
            ));
        }
        let all = [cal.c1, cal.c2, cal.c3, cal.c4, cal.c5];
        if all.iter().any(|v| !v.is_finite())
            || cal.sensitivities.iter().flatten().chain(&cal.offsets).any(|v| !v.is_finite())
        {
            out.push(Violation::new(C::NonFinite, "calibration entries must be finite"));
        }
        if cal.c1 < 0.0 {
            out.push(Violation::new(C::CalibrationConstant, "concentration risk c1 must be nonnegative"));
        }
        for (name, v) in [("c2", cal.c2), ("c3", cal.c3), ("c4", cal.c4)] {
            if v <= 0.0 {
                out.push(Violation::new(C::CalibrationConstant, format!("{name} must be strictly positive, got {v}")));
            }
        }
    }

    let active = &spec.active_objectives;
    if active.len() < 2 || active.len() > 4 {
        out.push(Violation::new(
            C::ObjectiveCount,
            format!("{} active objectives, need between 2 and 4", active.len()),
        ));
    }
    for o in active.iter().chain(spec.objective_bounds.iter().map(|b| &b.objective)) {
        if *o == Objective::Solvency && spec.solvency.is_none() {
            out.push(Violation::new(C::ObjectiveUnavailable, "solvency needs a calibration"));
            break;
        }
    }
    for b in &spec.objective_bounds {
        if !b.value.is_finite() {
            out.push(Violation::new(C::NonFinite, format!("bound {b} is not finite")));
        }
    }
    if let Some(msg) = inconsistent_bounds(&spec.objective_bounds) {
        out.push(Violation::new(C::BoundInconsistent, msg));
    }
    out
}

/// Reports a pair of bounds on one objective whose lower limit exceeds the upper.
pub fn inconsistent_bounds(bounds: &[ObjectiveBound]) -> Option<String> {
    for o in Objective::ALL {
        let lower = bounds
            .iter()
            .filter(|b| b.objective == o && b.op == BoundOp::AtLeast)
            .map(|b| b.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let upper = bounds
            .iter()
            .filter(|b| b.objective == o && b.op == BoundOp::AtMost)
            .map(|b| b.value)
            .fold(f64::INFINITY, f64::min);
        if lower > upper {
            return Some(format!("{o} bounds are inconsistent: >= {lower} and <= {upper}"));
        }
    }
    None
}

fn validate_weights(what: &str, w: &[f64], n: usize, out: &mut Vec<Violation>) {
    use ViolationCode as C;
    if w.len() != n {
        out.push(Violation::new(C::DimensionMismatch, format!("{what} has {} weights for {n} assets", w.len())));
        return;
    }
    if w.iter().any(|v| !v.is_finite()) {
        out.push(Violation::new(C::NonFinite, format!("{what} has a non-finite weight")));
        return;
    }
    if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| **v < 0.0) {
        out.push(Violation::new(C::NegativeWeight, format!("{what}: weight {i} is negative ({v})")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        out.push(Violation::new(C::SimplexSum, format!("{what}: simplex sum != 1 (sum = {sum})")));
    }
}

fn validate_correlation(rho: &[Vec<f64>], n: usize, out: &mut Vec<Violation>) {
    use ViolationCode as C;
    if rho.len() != n || rho.iter().any(|r| r.len() != n) {
        out.push(Violation::new(C::DimensionMismatch, format!("correlation matrix is not {n}x{n}")));
        return;
    }
    if rho.iter().flatten().any(|v| !v.is_finite()) {
        out.push(Violation::new(C::NonFinite, "correlation matrix has a non-finite entry"));
        return;
    }
    let mut symmetric = true;
    for i in 0..n {
        if rho[i][i] != 1.0 {
            out.push(Violation::new(C::CorrelationDiagonal, format!("correlation diagonal entry {i} is {}", rho[i][i])));
        }
        for j in 0..n {
            if rho[i][j].abs() > 1.0 {
                out.push(Violation::new(
                    C::CorrelationOutOfRange,
                    format!("correlation out of range at ({i}, {j}): {}", rho[i][j]),
                ));
            }
            if j > i && rho[i][j] != rho[j][i] {
                symmetric = false;
            }
        }
    }
    if !symmetric {
        out.push(Violation::new(C::CorrelationNotSymmetric, "correlation matrix is not symmetric"));
        return;
    }
    if let Some(min) = min_eigenvalue(rho) {
        if min < PSD_TOLERANCE {
            out.push(Violation::new(
                C::CorrelationNotPsd,
                format!("correlation matrix is not positive semi-definite (min eigenvalue {min:.3e})"),
            ));
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> Option<f64> {
    let n = m.len();
    if n == 0 {
        return None;
    }
    let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let eig = SymmetricEigen::new(mat);
    eig.eigenvalues.iter().copied().reduce(f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_assets(w: Vec<f64>) -> ModelSpec {
        let u = AssetUniverse::uncorrelated(vec!["a".into(), "b".into()], vec![0.01, 0.02], vec![0.1, 0.2]);
        let mut spec = ModelSpec::new(u, PortfolioWeights::unit(2, 0), None);
        spec.reference = PortfolioWeights(w);
        spec
    }

    #[test]
    fn simplex_sum_violation() {
        let v = validate_model(&two_assets(vec![0.5, 0.6]));
        assert!(v.iter().any(|v| v.code == ViolationCode::SimplexSum), "{v:?}");
    }

    #[test]
    fn correlation_out_of_range() {
        let mut spec = two_assets(vec![0.5, 0.5]);
        spec.universe.rho = vec![vec![1.0, 1.2], vec![1.2, 1.0]];
        let v = validate_model(&spec);
        assert!(v.iter().any(|v| v.code == ViolationCode::CorrelationOutOfRange), "{v:?}");
    }

    #[test]
    fn indefinite_correlation_detected() {
        let mut spec = ModelSpec::new(
            AssetUniverse::uncorrelated(vec!["a".into(), "b".into(), "c".into()], vec![0.0; 3], vec![0.1; 3]),
            PortfolioWeights::unit(3, 0),
            None,
        );
        spec.universe.rho = vec![vec![1.0, 0.9, -0.9], vec![0.9, 1.0, 0.9], vec![-0.9, 0.9, 1.0]];
        let v = validate_model(&spec);
        assert!(v.iter().any(|v| v.code == ViolationCode::CorrelationNotPsd), "{v:?}");
    }

    #[test]
    fn renormalize_within_half_percent() {
        let (w, sum) = PortfolioWeights::renormalized(vec![0.4999, 0.5]).unwrap();
        assert!((sum - 0.9999).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(PortfolioWeights::renormalized(vec![0.49, 0.5]), Err(WeightsError::Sum(_))));
    }

    #[test]
    fn bound_flag_grammar() {
        let b: ObjectiveBound = "distance:<=:0.50".parse().unwrap();
        assert_eq!(b, ObjectiveBound::new(Objective::Distance, BoundOp::AtMost, 0.5));
        assert!("return:>>:1".parse::<ObjectiveBound>().is_err());
        assert!("return:>=".parse::<ObjectiveBound>().is_err());
    }

    #[test]
    fn internal_interval_flips_maximized() {
        let ret = ObjectiveBound::new(Objective::Return, BoundOp::AtLeast, 0.02);
        assert_eq!(ret.internal_interval(), (None, Some(-0.02)));
        let vol = ObjectiveBound::new(Objective::Volatility, BoundOp::AtMost, 0.04);
        assert_eq!(vol.internal_interval(), (None, Some(0.04)));
        let vol_low = ObjectiveBound::new(Objective::Volatility, BoundOp::AtLeast, 0.01);
        assert_eq!(vol_low.internal_interval(), (Some(0.01), None));
    }

    #[test]
    fn market_matrices_match_published_pattern() {
        assert_eq!(P_MARKET_ZERO[0][1], 0.0);
        assert_eq!(P_MARKET_HALF[0][3], 0.5);
        assert_eq!(P_MARKET_HALF[1][2], 0.75);
        assert_eq!(P_MARKET_HALF[2][3], 0.5);
        assert_eq!(P_MARKET_HALF[4][0], 0.25);
        for p in [P_MARKET_ZERO, P_MARKET_HALF] {
            let rows: Vec<Vec<f64>> = p.iter().map(|r| r.to_vec()).collect();
            assert!(min_eigenvalue(&rows).unwrap() >= 0.0);
            for i in 0..5 {
                for j in 0..5 {
                    assert_eq!(p[i][j], p[j][i]);
                }
            }
        }
    }

    #[test]
    fn inconsistent_bounds_reported() {
        let b = [
            ObjectiveBound::new(Objective::Return, BoundOp::AtLeast, 0.05),
            ObjectiveBound::new(Objective::Return, BoundOp::AtMost, 0.03),
        ];
        assert!(inconsistent_bounds(&b).is_some());
        assert!(inconsistent_bounds(&b[..1]).is_none());
    }
}
