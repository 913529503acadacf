//! Key-tree inputs: solvency calibration and constraint files.

use serde::Deserialize;

use super::IngestError;
use crate::domain::{BoundOp, GroupConstraint, Objective, ObjectiveBound, SolvencyCalibration};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    label: String,
    #[serde(default)]
    provenance: String,
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    c5: f64,
    offsets: Vec<f64>,
    sensitivities: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupEntry {
    label: String,
    assets: Vec<String>,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundEntry {
    objective: Objective,
    op: BoundOp,
    value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintsFile {
    #[serde(default)]
    group: Vec<GroupEntry>,
    #[serde(default)]
    bound: Vec<BoundEntry>,
    objectives: Option<Vec<Objective>>,
}

/// Groups, bounds and an optional objective selection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    pub groups: Vec<GroupConstraint>,
    pub bounds: Vec<ObjectiveBound>,
    pub objectives: Option<Vec<Objective>>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

fn toml_error(source: &str, text: &str, e: toml::de::Error) -> IngestError {
    let (line, column) = e.span().map_or((0, None), |s| {
        let (l, c) = line_col(text, s.start);
        (l, Some(c))
    });
    IngestError::parse(source, line, column, e.message().to_string())
}

pub fn parse_calibration(source: &str, text: &str) -> Result<SolvencyCalibration, IngestError> {
    let f: CalibrationFile = toml::from_str(text).map_err(|e| toml_error(source, text, e))?;
    Ok(SolvencyCalibration {
        label: f.label,
        provenance: f.provenance,
        sensitivities: f.sensitivities,
        offsets: f.offsets,
        c1: f.c1,
        c2: f.c2,
        c3: f.c3,
        c4: f.c4,
        c5: f.c5,
    })
}

/// Group asset names are resolved against `names`.
pub fn parse_constraints(source: &str, text: &str, names: &[String]) -> Result<Constraints, IngestError> {
    let f: ConstraintsFile = toml::from_str(text).map_err(|e| toml_error(source, text, e))?;
    let mut groups = Vec::with_capacity(f.group.len());
    for g in f.group {
        let mut indices = Vec::with_capacity(g.assets.len());
        for a in &g.assets {
            let i = names.iter().position(|n| n == a).ok_or_else(|| {
                IngestError::parse(source, 0, None, format!("group `{}` names unknown asset `{a}`", g.label))
            })?;
            indices.push(i);
        }
        groups.push(GroupConstraint { label: g.label, indices, lower: g.lower, upper: g.upper });
    }
    let bounds = f.bound.into_iter().map(|b| ObjectiveBound::new(b.objective, b.op, b.value)).collect();
    Ok(Constraints { groups, bounds, objectives: f.objectives })
}
