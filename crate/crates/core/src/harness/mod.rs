//! Evaluation runs: a bounded worker pool over samples, one trace record
//! per line in `traces.jsonl`, and reports computed from the trace file.
//!
//! Output directory layout:
//!
//! ```text
//! run.json       run manifest; a resumed run must match it
//! traces.jsonl   one PipelineTrace per line, in completion order
//! report.json    RunReport
//! report.csv     scope,key,count,valid,validity
//! ```

mod config;
mod report;

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{load_dataset, Dataset, Sample, ValidationErrors};
use crate::engine::SearchBudget;
use crate::gateway::{connect, BackendConfig, ConfigError, GenerationParams, ModelBackend};
use crate::pipeline::{run_method, Method, PipelineError, PipelineOptions, PipelineTrace, PromptOptions, PROMPT_VERSION};
use crate::world::GoalMode;

pub use config::{load_config, ConfigFile, RunSection};
pub use report::{compare_runs, report_from_traces, Cell, Comparison, ComparisonRow, RunMeta, RunReport, SampleEntry};

pub const TRACES_FILE: &str = "traces.jsonl";
pub const MANIFEST_FILE: &str = "run.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Dataset(ValidationErrors),
    #[error(transparent)]
    Backend(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Usage(String),
    #[error("corrupt trace log: {0}")]
    CorruptTraces(String),
    #[error("{0}")]
    Config(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub method: Method,
    pub backend: BackendConfig,
    pub budget: SearchBudget,
    pub parallelism: usize,
    pub output_dir: PathBuf,
    pub run_seed: u64,
    pub text_only: bool,
    pub three_call: bool,
    pub goal_mode: GoalMode,
    /// Stop after this many new samples; the run can be resumed later.
    pub max_samples: Option<usize>,
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, method: Method, backend: BackendConfig, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            dataset: dataset.into(),
            method,
            backend,
            budget: SearchBudget::default(),
            parallelism: 1,
            output_dir: output_dir.into(),
            run_seed: 0,
            text_only: false,
            three_call: false,
            goal_mode: GoalMode::default(),
            max_samples: None,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.parallelism == 0 {
            return Err(HarnessError::Usage("parallelism must be at least 1".into()));
        }
        self.backend.validate()?;
        Ok(())
    }

    fn manifest(&self, dataset: &Dataset) -> Manifest {
        Manifest {
            method: self.method,
            backend: self.backend.clone(),
            dataset_digest: dataset.digest.clone(),
            run_seed: self.run_seed,
            budget: self.budget,
            text_only: self.text_only,
            three_call: self.three_call,
            goal_mode: self.goal_mode,
            prompt_version: PROMPT_VERSION.to_string(),
        }
    }
}

/// Settings that must agree between an interrupted run and its resumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub method: Method,
    pub backend: BackendConfig,
    pub dataset_digest: String,
    pub run_seed: u64,
    pub budget: SearchBudget,
    pub text_only: bool,
    pub three_call: bool,
    pub goal_mode: GoalMode,
    pub prompt_version: String,
}

impl Manifest {
    fn meta(&self) -> RunMeta {
        RunMeta {
            method: self.method,
            backend: self.backend.label(),
            dataset_digest: self.dataset_digest.clone(),
            run_seed: self.run_seed,
        }
    }
}

/// The demonstration for `sample`: the first other sample of its category.
pub fn demo_for<'a>(samples: &'a [Arc<Sample>], sample: &Sample) -> Option<&'a Arc<Sample>> {
    samples
        .iter()
        .find(|d| d.category == sample.category && d.id != sample.id)
}

/// Loads the dataset, connects the backend and runs.
pub fn run_eval(config: &RunConfig) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let dataset = load_dataset(&config.dataset).map_err(HarnessError::Dataset)?;
    let backend = connect(&config.backend)?;
    run_eval_with(config, &dataset, backend)
}

/// Runs against an already loaded dataset and connected backend. Samples
/// already traced in the output directory are skipped.
pub fn run_eval_with(
    config: &RunConfig,
    dataset: &Dataset,
    backend: Arc<dyn ModelBackend>,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = config.manifest(dataset);
    check_manifest(dir, &manifest)?;

    let done = read_traces(dir)?;
    let done_ids: HashSet<&str> = done.iter().map(|t| t.sample_id.as_str()).collect();
    if let Some(t) = done.iter().find(|t| dataset.get(&t.sample_id).is_none()) {
        return Err(HarnessError::CorruptTraces(format!(
            "trace for {} is not in the dataset",
            t.sample_id
        )));
    }
    let pending: Vec<&Arc<Sample>> = dataset
        .samples
        .iter()
        .filter(|s| !done_ids.contains(s.id.as_str()))
        .take(config.max_samples.unwrap_or(usize::MAX))
        .collect();

    let options = PipelineOptions {
        budget: config.budget,
        prompt: PromptOptions {
            image_root: dataset.root.clone(),
            text_only: config.text_only,
            generation: GenerationParams {
                seed: Some(config.run_seed),
                ..GenerationParams::default()
            },
        },
        three_call: config.three_call,
        goal_mode: config.goal_mode,
    };
    let trace_path = dir.join(TRACES_FILE);
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&trace_path)
        .map_err(io_err(&trace_path))?;

    let next = AtomicUsize::new(0);
    let workers = config.parallelism.min(pending.len()).max(1);
    let written: Result<(), HarnessError> = thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Result<PipelineTrace, PipelineError>>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, options, backend) = (&next, &pending, &options, &backend);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sample) = pending.get(i) else { break };
                let demo = demo_for(&dataset.samples, sample).map(|d| &**d);
                let out = run_method(sample, config.method, demo, backend.as_ref(), options);
                if tx.send(out).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for out in rx {
            let trace = match out {
                Ok(t) => t,
                Err(e) => {
                    next.store(pending.len(), Ordering::Relaxed);
                    return Err(e.into());
                }
            };
            let mut line = serde_json::to_string(&trace).expect("traces always serialize");
            line.push('\n');
            log.write_all(line.as_bytes())
                .and_then(|_| log.flush())
                .map_err(io_err(&trace_path))?;
        }
        Ok(())
    });
    written?;

    let report = report_from_dir(dir)?;
    write_report(dir, &report)?;
    Ok(report)
}

fn check_manifest(dir: &Path, manifest: &Manifest) -> Result<(), HarnessError> {
    let path = dir.join(MANIFEST_FILE);
    match fs::read_to_string(&path) {
        Ok(text) => {
            let existing: Manifest = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            if &existing != manifest {
                return Err(HarnessError::Usage(format!(
                    "{} belongs to a different run configuration; use a fresh output directory",
                    dir.display()
                )));
            }
            Ok(())
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
            fs::write(&path, text + "\n").map_err(io_err(&path))
        }
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// Reads the trace log. A torn last line from an interrupted run is dropped
/// and the file rewritten without it; damage anywhere else is an error.
pub fn read_traces(dir: &Path) -> Result<Vec<PipelineTrace>, HarnessError> {
    let path = dir.join(TRACES_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let lines: Vec<&str> = text.split_terminator('\n').collect();
    let mut traces = Vec::with_capacity(lines.len());
    let mut torn = false;
    for (i, line) in lines.iter().enumerate() {
        let last = i + 1 == lines.len();
        match serde_json::from_str::<PipelineTrace>(line) {
            Ok(t) if !(last && !text.ends_with('\n')) => traces.push(t),
            Ok(_) => torn = true,
            Err(_) if last => torn = true,
            Err(e) => {
                return Err(HarnessError::CorruptTraces(format!("{} line {}: {e}", path.display(), i + 1)))
            }
        }
    }
    if torn {
        let mut out = File::create(&path).map_err(io_err(&path))?;
        for t in &traces {
            let line = serde_json::to_string(t).expect("traces always serialize");
            writeln!(out, "{line}").map_err(io_err(&path))?;
        }
    }
    Ok(traces)
}

/// Recomputes the report from the manifest and trace log alone.
pub fn report_from_dir(dir: &Path) -> Result<RunReport, HarnessError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    report_from_traces(manifest.meta(), &read_traces(dir)?)
}

fn write_report(dir: &Path, report: &RunReport) -> Result<(), HarnessError> {
    let json = dir.join(REPORT_JSON);
    let text = serde_json::to_string_pretty(report).expect("reports serialize");
    fs::write(&json, text + "\n").map_err(io_err(&json))?;
    let csv = dir.join(REPORT_CSV);
    fs::write(&csv, report.to_csv()).map_err(io_err(&csv))
}

pub fn load_report(path: &Path) -> Result<RunReport, HarnessError> {
    let file = if path.is_dir() { path.join(REPORT_JSON) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(io_err(&file))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", file.display())))
}

pub const BOTTLENECK_METHODS: [Method; 3] = [Method::Direct, Method::GuidedInit, Method::GuidedInitGoal];

/// Runs the three guidance levels with the same backend, seed and demos,
/// each in `<output_dir>/<method>`.
pub fn bottleneck_study(base: &RunConfig) -> Result<(Vec<RunReport>, Comparison), HarnessError> {
    base.validate()?;
    let dataset = load_dataset(&base.dataset).map_err(HarnessError::Dataset)?;
    let backend = connect(&base.backend)?;
    let mut reports = Vec::new();
    for method in BOTTLENECK_METHODS {
        let config = RunConfig {
            method,
            output_dir: base.output_dir.join(method.as_str()),
            ..base.clone()
        };
        reports.push(run_eval_with(&config, &dataset, backend.clone())?);
    }
    let comparison = compare_runs(&reports)?;
    Ok((reports, comparison))
}
