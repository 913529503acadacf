//! Run artifacts and archive exports.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{model_hash, IngestError};
use crate::boxalgo::{
    BoxRegion, IterationTrace, PortfolioRecord, RecordKind, RepresentationArchive, RunConfig, RunError,
    SolveSummary, TchebycheffRecord, Termination,
};
use crate::domain::{ModelSpec, Objective, PortfolioWeights};
use crate::objectives::ObjectiveVector;
use crate::solver::{Diagnostics, Status};

pub const FORMAT_VERSION: u32 = 1;

/// Natural-sense payoff range of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRange {
    pub objective: Objective,
    pub min: f64,
    pub max: f64,
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    #[serde(flatten)]
    pub record: PortfolioRecord,
    /// Criteria as percentages with two decimals.
    pub display: Vec<String>,
    pub weights_display: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactError {
    pub kind: String,
    pub message: String,
}

impl From<&RunError> for ArtifactError {
    fn from(e: &RunError) -> Self {
        let kind = match e {
            RunError::Invalid(_) => "invalid",
            RunError::InconsistentBounds(_) => "inconsistent_bounds",
            RunError::Config(_) => "config",
            RunError::Infeasible { .. } => "infeasible",
            RunError::Solver { .. } => "solver",
            RunError::Eval(_) => "evaluation",
        };
        Self { kind: kind.to_string(), message: e.to_string() }
    }
}

/// Self-contained description of one run. Holds no timestamps or ids, so
/// equal inputs give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub format_version: u32,
    pub model_hash: String,
    pub config: RunConfig,
    pub objectives: Vec<Objective>,
    pub assets: Vec<String>,
    pub ranges: Vec<ArtifactRange>,
    pub records: Vec<ArtifactRecord>,
    pub termination: Option<Termination>,
    pub trace: Vec<IterationTrace>,
    pub error: Option<ArtifactError>,
}

/// `0.0427` as `4.27%`. Values that round to zero print unsigned.
pub fn percent(v: f64) -> String {
    let s = format!("{:.2}", v * 100.0);
    if s == "-0.00" {
        "0.00%".to_string()
    } else {
        format!("{s}%")
    }
}

fn artifact_record(r: PortfolioRecord) -> ArtifactRecord {
    let display = r.objectives.values.iter().map(|v| percent(*v)).collect();
    let weights_display = r.weights.iter().map(|v| percent(*v)).collect();
    ArtifactRecord { record: r, display, weights_display }
}

fn sorted_objectives(spec: &ModelSpec) -> Vec<Objective> {
    let mut o = spec.active_objectives.clone();
    o.sort();
    o.dedup();
    o
}

impl RunArtifact {
    fn base(spec: &ModelSpec, cfg: &RunConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_hash: model_hash(spec),
            config: cfg.clone(),
            objectives: sorted_objectives(spec),
            assets: spec.universe.names.clone(),
            ranges: Vec::new(),
            records: Vec::new(),
            termination: None,
            trace: Vec::new(),
            error: None,
        }
    }

    pub fn completed(spec: &ModelSpec, cfg: &RunConfig, archive: &RepresentationArchive) -> Self {
        let mut a = Self::base(spec, cfg);
        a.ranges = archive
            .ranges()
            .into_iter()
            .map(|r| ArtifactRange {
                objective: r.objective,
                min: r.min,
                max: r.max,
                display: format!("[{}, {}]", percent(r.min), percent(r.max)),
            })
            .collect();
        a.records = archive.records.iter().cloned().map(artifact_record).collect();
        a.termination = Some(archive.termination);
        a.trace = archive.trace.clone();
        a
    }

    /// Records computed so far by an unfinished run.
    pub fn partial(spec: &ModelSpec, cfg: &RunConfig, records: &[PortfolioRecord]) -> Self {
        let mut a = Self::base(spec, cfg);
        a.records = records.iter().cloned().map(artifact_record).collect();
        a
    }

    pub fn failed(spec: &ModelSpec, cfg: &RunConfig, records: &[PortfolioRecord], error: &RunError) -> Self {
        let mut a = Self::partial(spec, cfg, records);
        a.error = Some(error.into());
        a
    }

    pub fn from_result(
        spec: &ModelSpec,
        cfg: &RunConfig,
        result: &Result<RepresentationArchive, RunError>,
        partial: &[PortfolioRecord],
    ) -> Self {
        match result {
            Ok(archive) => Self::completed(spec, cfg, archive),
            Err(e) => Self::failed(spec, cfg, partial, e),
        }
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        serde_json::from_str(text).map_err(|e| IngestError::parse("artifact", e.line(), Some(e.column()), e.to_string()))
    }

    pub fn portfolio_records(&self) -> Vec<PortfolioRecord> {
        self.records.iter().map(|r| r.record.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Structured,
    Delimited,
    Report,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "structured" | "json" => Ok(Self::Structured),
            "delimited" | "csv" => Ok(Self::Delimited),
            "report" | "table" => Ok(Self::Report),
            other => Err(format!("unknown format `{other}` (expected report, delimited or structured)")),
        }
    }
}

impl ExportFormat {
    pub fn render(self, artifact: &RunArtifact) -> String {
        match self {
            Self::Structured => artifact.to_json(),
            Self::Delimited => render_delimited(artifact),
            Self::Report => render_report(artifact),
        }
    }
}

pub fn export_archive(artifact: &RunArtifact, path: &Path, format: ExportFormat) -> Result<(), IngestError> {
    std::fs::write(path, format.render(artifact))
        .map_err(|e| IngestError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Fixed-width table: one column per criterion, a range row under the
/// header, payoff rows, a rule, then intermediate rows.
pub fn render_report(a: &RunArtifact) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut head = vec!["PF".to_string()];
    head.extend(a.objectives.iter().map(|o| o.name().to_string()));
    rows.push(head);
    if !a.ranges.is_empty() {
        let mut r = vec![String::new()];
        r.extend(a.ranges.iter().map(|x| x.display.clone()));
        rows.push(r);
    }
    let header_rows = rows.len();
    let mut payoff_rows = 0;
    for rec in &a.records {
        let mut r = vec![(rec.record.index + 1).to_string()];
        r.extend(rec.display.iter().cloned());
        if matches!(rec.record.kind, RecordKind::Payoff { .. }) {
            payoff_rows += 1;
        }
        rows.push(r);
    }
    let cols = a.objectives.len() + 1;
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().map(|r| r.get(c).map_or(0, |s| s.chars().count())).max().unwrap_or(0)).collect();
    let rule: String = widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+");
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        if i == header_rows || (i == header_rows + payoff_rows && payoff_rows < a.records.len()) {
            out.push_str(rule.trim_end());
            out.push('\n');
        }
        let cells: Vec<String> = (0..cols)
            .map(|c| {
                let s = r.get(c).map_or("", |s| s.as_str());
                if c == 0 {
                    format!(" {s:<w$} ", w = widths[c])
                } else {
                    format!(" {s:>w$} ", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("|").trim_end());
        out.push('\n');
    }
    if let Some(e) = &a.error {
        out.push_str(&format!("error ({}): {}\n", e.kind, e.message));
    }
    out
}

const FIXED_HEAD: [&str; 4] = ["index", "kind", "payoff_objective", "iteration"];
const TAIL_HEAD: [&str; 13] = [
    "status",
    "evaluations",
    "iterations",
    "max_violation",
    "stationarity",
    "starts",
    "optimal_starts",
    "origin_lower",
    "origin_upper",
    "tchebycheff_reference",
    "tchebycheff_weights",
    "tchebycheff_t",
    "tchebycheff_vertex",
];

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Infeasible => "infeasible",
        Status::BudgetExceeded => "budget_exceeded",
        Status::NumericalFailure => "numerical_failure",
    }
}

/// One row per record with every field; floats in shortest round-trip form.
pub fn render_delimited(a: &RunArtifact) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut head: Vec<String> = FIXED_HEAD.iter().map(|s| s.to_string()).collect();
    head.extend(a.objectives.iter().map(|o| o.name().to_string()));
    head.extend(a.assets.iter().map(|n| format!("w:{n}")));
    head.extend(TAIL_HEAD.iter().map(|s| s.to_string()));
    w.write_record(&head).expect("in-memory write");
    for ar in &a.records {
        let r = &ar.record;
        let mut row = vec![r.index.to_string()];
        match r.kind {
            RecordKind::Payoff { objective } => {
                row.push("payoff".into());
                row.push(objective.name().into());
            }
            RecordKind::Intermediate => {
                row.push("intermediate".into());
                row.push(String::new());
            }
        }
        row.push(r.iteration.map(|i| i.to_string()).unwrap_or_default());
        row.extend(r.objectives.values.iter().map(|v| v.to_string()));
        row.extend(r.weights.iter().map(|v| v.to_string()));
        let d = &r.solve.diagnostics;
        row.push(status_name(r.solve.status).into());
        row.push(d.evaluations.to_string());
        row.push(d.iterations.to_string());
        row.push(d.max_violation.to_string());
        row.push(d.stationarity.to_string());
        row.push(d.starts.to_string());
        row.push(d.optimal_starts.to_string());
        match &r.origin {
            Some(b) => {
                row.push(list(&b.lower));
                row.push(list(&b.upper));
            }
            None => row.extend([String::new(), String::new()]),
        }
        match &r.tchebycheff {
            Some(t) => {
                row.push(list(&t.reference));
                row.push(list(&t.weights));
                row.push(t.t.to_string());
                row.push(list(&t.vertex));
            }
            None => row.extend(std::iter::repeat_with(String::new).take(4)),
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

/// Parsed delimited export.
#[derive(Debug, Clone, PartialEq)]
pub struct DelimitedArchive {
    pub objectives: Vec<Objective>,
    pub assets: Vec<String>,
    pub records: Vec<PortfolioRecord>,
}

/// Inverse of [`render_delimited`].
pub fn import_delimited(source: &str, text: &str) -> Result<DelimitedArchive, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let head = rdr.headers().map_err(|e| IngestError::parse(source, 1, None, e.to_string()))?.clone();
    let bad_head = || IngestError::parse(source, 1, None, "not a delimited archive header");
    if head.len() < FIXED_HEAD.len() + TAIL_HEAD.len() || FIXED_HEAD.iter().zip(head.iter()).any(|(a, b)| *a != b) {
        return Err(bad_head());
    }
    let mut objectives = Vec::new();
    let mut assets = Vec::new();
    let mut c = FIXED_HEAD.len();
    while let Some(Ok(o)) = head.get(c).map(str::parse::<Objective>) {
        objectives.push(o);
        c += 1;
    }
    while let Some(n) = head.get(c).and_then(|h| h.strip_prefix("w:")) {
        assets.push(n.to_string());
        c += 1;
    }
    if head.iter().skip(c).ne(TAIL_HEAD.iter().copied()) {
        return Err(bad_head());
    }
    let m = objectives.len();
    let n = assets.len();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IngestError::parse(source, 0, None, e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let err = |col: usize, msg: String| IngestError::parse(source, line, Some(col + 1), msg);
        let num = |col: usize| -> Result<f64, IngestError> {
            rec[col].parse::<f64>().map_err(|_| err(col, format!("`{}` is not a number", &rec[col])))
        };
        let int = |col: usize| -> Result<usize, IngestError> {
            rec[col].parse::<usize>().map_err(|_| err(col, format!("`{}` is not a count", &rec[col])))
        };
        let nums = |col: usize| -> Result<Vec<f64>, IngestError> {
            rec[col]
                .split(' ')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| err(col, format!("`{s}` is not a number"))))
                .collect()
        };
        let kind = match &rec[1] {
            "payoff" => RecordKind::Payoff {
                objective: rec[2].parse().map_err(|_| err(2, format!("unknown objective `{}`", &rec[2])))?,
            },
            "intermediate" => RecordKind::Intermediate,
            other => return Err(err(1, format!("unknown record kind `{other}`"))),
        };
        let iteration = if rec[3].is_empty() { None } else { Some(int(3)?) };
        let values = (0..m).map(|k| num(4 + k)).collect::<Result<Vec<_>, _>>()?;
        let weights = (0..n).map(|i| num(4 + m + i)).collect::<Result<Vec<_>, _>>()?;
        let t0 = 4 + m + n;
        let status = match &rec[t0] {
            "optimal" => Status::Optimal,
            "infeasible" => Status::Infeasible,
            "budget_exceeded" => Status::BudgetExceeded,
            "numerical_failure" => Status::NumericalFailure,
            other => return Err(err(t0, format!("unknown status `{other}`"))),
        };
        let diagnostics = Diagnostics {
            evaluations: int(t0 + 1)?,
            iterations: int(t0 + 2)?,
            max_violation: num(t0 + 3)?,
            stationarity: num(t0 + 4)?,
            starts: int(t0 + 5)?,
            optimal_starts: int(t0 + 6)?,
        };
        let origin = if rec[t0 + 7].is_empty() {
            None
        } else {
            Some(BoxRegion::new(nums(t0 + 7)?, nums(t0 + 8)?))
        };
        let tchebycheff = if rec[t0 + 9].is_empty() {
            None
        } else {
            Some(TchebycheffRecord {
                reference: nums(t0 + 9)?,
                weights: nums(t0 + 10)?,
                t: num(t0 + 11)?,
                vertex: nums(t0 + 12)?,
            })
        };
        records.push(PortfolioRecord {
            index: int(0)?,
            kind,
            iteration,
            weights: PortfolioWeights::from_solution(weights),
            objectives: ObjectiveVector { objectives: objectives.clone(), values },
            origin,
            tchebycheff,
            solve: SolveSummary { status, diagnostics },
        });
    }
    Ok(DelimitedArchive { objectives, assets, records })
}
