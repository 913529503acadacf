use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use boxfront_core::boxalgo::{self, FrontPoint, IterationTrace, PortfolioRecord, RunConfig, RunObserver};
use boxfront_core::domain::{ModelSpec, Objective};
use boxfront_core::ingest::RunArtifact;
use serde::{Deserialize, Serialize};

use crate::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// Intermediate portfolios archived so far.
    pub completed: usize,
    pub maxit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHandle {
    pub id: String,
    pub model_id: String,
    pub state: RunState,
    pub progress: Progress,
    pub records: usize,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub error: Option<String>,
}

struct Inner {
    state: RunState,
    completed: usize,
    records: Vec<PortfolioRecord>,
    artifact: Option<RunArtifact>,
    error: Option<String>,
}

pub(crate) struct RunEntry {
    pub id: String,
    model_id: String,
    spec: ModelSpec,
    cfg: RunConfig,
    created_at: u64,
    inner: Mutex<Inner>,
}

impl RunEntry {
    pub fn new(id: String, model_id: String, spec: ModelSpec, cfg: RunConfig) -> Self {
        let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self {
            id,
            model_id,
            spec,
            cfg,
            created_at,
            inner: Mutex::new(Inner {
                state: RunState::Pending,
                completed: 0,
                records: Vec::new(),
                artifact: None,
                error: None,
            }),
        }
    }

    pub fn handle(&self) -> RunHandle {
        let g = self.inner.lock().unwrap();
        RunHandle {
            id: self.id.clone(),
            model_id: self.model_id.clone(),
            state: g.state,
            progress: Progress { completed: g.completed, maxit: self.cfg.maxit },
            records: g.records.len(),
            created_at: self.created_at,
            error: g.error.clone(),
        }
    }

    /// Final artifact once finished, otherwise the records so far.
    pub fn artifact(&self) -> RunArtifact {
        let g = self.inner.lock().unwrap();
        match &g.artifact {
            Some(a) => a.clone(),
            None => RunArtifact::partial(&self.spec, &self.cfg, &g.records),
        }
    }

    fn set_state(&self, s: RunState) {
        self.inner.lock().unwrap().state = s;
    }
}

struct Observer {
    entry: Arc<RunEntry>,
    objectives: Vec<Objective>,
}

impl Observer {
    fn push(&self, p: &FrontPoint) {
        let mut g = self.entry.inner.lock().unwrap();
        let index = g.records.len();
        g.records.push(boxalgo::portfolio_record(index, p.clone(), &self.objectives));
    }
}

impl RunObserver for Observer {
    fn on_payoff(&mut self, point: &FrontPoint) {
        self.push(point);
    }

    fn on_iteration(&mut self, _step: &IterationTrace, point: Option<&FrontPoint>) {
        if let Some(p) = point {
            self.push(p);
            self.entry.inner.lock().unwrap().completed += 1;
        }
    }
}

fn execute(entry: &Arc<RunEntry>) -> RunArtifact {
    let mut objectives = entry.spec.active_objectives.clone();
    objectives.sort();
    objectives.dedup();
    let mut obs = Observer { entry: entry.clone(), objectives };
    let result = boxalgo::run_observed(&entry.spec, &entry.cfg, &mut obs);
    let partial = entry.inner.lock().unwrap().records.clone();
    RunArtifact::from_result(&entry.spec, &entry.cfg, &result, &partial)
}

pub(crate) fn launch(state: Arc<AppState>, entry: Arc<RunEntry>) {
    tokio::spawn(async move {
        let permit = state.slots.clone().acquire_owned().await.expect("worker pool closed");
        entry.set_state(RunState::Running);
        let worker = entry.clone();
        let artifact = match tokio::task::spawn_blocking(move || execute(&worker)).await {
            Ok(a) => a,
            Err(e) => {
                log::error!("run {} panicked: {e}", entry.id);
                let mut g = entry.inner.lock().unwrap();
                g.state = RunState::Failed;
                g.error = Some("internal error".into());
                return;
            }
        };
        drop(permit);
        if let Some(dir) = &state.persist {
            let path = dir.join(format!("{}.json", entry.id));
            if let Err(e) = tokio::fs::write(&path, artifact.to_json()).await {
                log::error!("cannot persist {}: {e}", path.display());
            }
        }
        let mut g = entry.inner.lock().unwrap();
        g.error = artifact.error.as_ref().map(|e| e.message.clone());
        g.state = if artifact.error.is_some() { RunState::Failed } else { RunState::Done };
        log::info!("run {} finished: {:?}", entry.id, g.state);
        g.artifact = Some(artifact);
    });
}
