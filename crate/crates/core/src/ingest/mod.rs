//! File formats. Every percent-to-fraction conversion happens here.

mod artifact;
mod config;
mod tables;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{validate_model, AssetUniverse, ModelSpec, PortfolioWeights, Violation, SIMPLEX_TOLERANCE};

pub use artifact::{
    export_archive, import_delimited, percent, render_delimited, render_report, ArtifactError, ArtifactRange,
    ArtifactRecord, DelimitedArchive, ExportFormat, RunArtifact, FORMAT_VERSION,
};
pub use config::{parse_calibration, parse_constraints, Constraints};
pub use tables::{parse_assets, parse_correlation, parse_weights, AssetTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("{source_name}:{line}{}: {message}", .column.map(|c| format!(":{c}")).unwrap_or_default())]
    Parse { source_name: String, line: usize, column: Option<usize>, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{what}: {message}")]
    Weights { what: String, message: String },
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

impl IngestError {
    pub(crate) fn parse(source: &str, line: usize, column: Option<usize>, message: impl Into<String>) -> Self {
        IngestError::Parse { source_name: source.to_string(), line, column, message: message.into() }
    }

    /// Violations for validation failures, empty otherwise.
    pub fn violations(&self) -> &[Violation] {
        match self {
            IngestError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// One named input text.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub name: String,
    pub text: String,
}

impl Source {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self { name: name.into(), text: text.into() }
    }

    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Ok(Self { name: path.display().to_string(), text })
    }
}

/// Model inputs held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSources {
    pub assets: Source,
    pub correlation: Option<Source>,
    pub calibration: Option<Source>,
    /// Weights file for the reference portfolio. The asset table's weight
    /// column is used when absent.
    pub reference: Option<Source>,
    pub constraints: Option<Source>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelPaths {
    pub assets: PathBuf,
    pub correlation: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
}

/// A validated model plus the adjustments made while loading it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub spec: ModelSpec,
    pub notes: Vec<String>,
}

fn renormalize(what: &str, w: Vec<f64>, notes: &mut Vec<String>) -> Result<PortfolioWeights, IngestError> {
    let (w, sum) = PortfolioWeights::renormalized(w)
        .map_err(|e| IngestError::Weights { what: what.to_string(), message: e.to_string() })?;
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        let note = format!("{what}: weights summed to {:.4}%, rescaled to 100%", sum * 100.0);
        log::warn!("{note}");
        notes.push(note);
    }
    Ok(w)
}

pub fn load_model(src: &ModelSources) -> Result<LoadedModel, IngestError> {
    let mut notes = Vec::new();
    let table = parse_assets(&src.assets.name, &src.assets.text)?;
    let n = table.names.len();
    let rho = match &src.correlation {
        Some(s) => parse_correlation(&s.name, &s.text, &table.names)?,
        None => {
            let note = "no correlation file: assets treated as uncorrelated".to_string();
            log::warn!("{note}");
            notes.push(note);
            (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        }
    };
    let universe = AssetUniverse { names: table.names.clone(), mu: table.mu, sigma: table.sigma, rho };
    let solvency = match &src.calibration {
        Some(s) => Some(parse_calibration(&s.name, &s.text)?),
        None => {
            let note = "no calibration file: solvency objective disabled".to_string();
            log::warn!("{note}");
            notes.push(note);
            None
        }
    };
    let reference = match &src.reference {
        Some(s) => {
            let w = parse_weights(&s.name, &s.text, &table.names)?;
            renormalize(&s.name, w, &mut notes)?
        }
        None => renormalize(&src.assets.name, table.weights, &mut notes)?,
    };
    let mut spec = ModelSpec::new(universe, reference, solvency);
    if let Some(s) = &src.constraints {
        let c = parse_constraints(&s.name, &s.text, &table.names)?;
        spec.groups = c.groups;
        spec.objective_bounds = c.bounds;
        if let Some(o) = c.objectives {
            spec = spec.with_objectives(&o);
        }
    }
    let violations = validate_model(&spec);
    if !violations.is_empty() {
        return Err(IngestError::Invalid(violations));
    }
    Ok(LoadedModel { spec, notes })
}

impl ModelPaths {
    pub fn read(&self) -> Result<ModelSources, IngestError> {
        let opt = |p: &Option<PathBuf>| p.as_deref().map(Source::read).transpose();
        Ok(ModelSources {
            assets: Source::read(&self.assets)?,
            correlation: opt(&self.correlation)?,
            calibration: opt(&self.calibration)?,
            reference: opt(&self.reference)?,
            constraints: opt(&self.constraints)?,
        })
    }
}

pub fn load_model_files(paths: &ModelPaths) -> Result<LoadedModel, IngestError> {
    load_model(&paths.read()?)
}

/// Portfolio weights from a weights file, matched by asset name and
/// re-normalized when the sum is within half a percent of one.
pub fn load_weights(src: &Source, names: &[String]) -> Result<PortfolioWeights, IngestError> {
    let w = parse_weights(&src.name, &src.text, names)?;
    renormalize(&src.name, w, &mut Vec::new())
}

/// SHA-256 of the model's canonical JSON encoding, hex.
pub fn model_hash(spec: &ModelSpec) -> String {
    let json = serde_json::to_vec(spec).expect("model serializes");
    hex::encode(Sha256::digest(&json))
}
