//! Python bindings: datasets, samples, the engine and judge, the state-text
//! grammar and evaluation runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use neuroground::dataset::{
    generate_scenarios, load_dataset_with, save_dataset, stats, to_canonical_string, GeneratorConfig, LoadOptions,
    Sample, DATASET_FILE, PLACEHOLDER_IMAGE, PLACEHOLDER_PNG,
};
use neuroground::engine::{solve, EngineResult, SearchBudget};
use neuroground::gateway::BackendConfig;
use neuroground::harness::{compare_runs, load_report, run_eval, RunConfig};
use neuroground::pipeline::Method;
use neuroground::text::{extract_sections, parse_plan, serialize_goal, serialize_plan, serialize_state, Section};
use neuroground::world::{judge_plan_with, GoalMode};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn budget(max_nodes: Option<usize>, timeout_secs: Option<f64>) -> PyResult<SearchBudget> {
    let base = SearchBudget::default();
    let timeout = match timeout_secs {
        Some(t) => Duration::try_from_secs_f64(t).map_err(value_err)?,
        None => base.wall_timeout,
    };
    SearchBudget::new(max_nodes.unwrap_or(base.max_expanded_nodes), timeout).map_err(value_err)
}

/// One validated planning task.
#[pyclass(name = "Sample", module = "neuroground", frozen)]
struct PySample {
    inner: Arc<Sample>,
}

#[pymethods]
impl PySample {
    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn category(&self) -> &'static str {
        self.inner.category.as_str()
    }

    #[getter]
    fn image_source(&self) -> &'static str {
        self.inner.image_source.as_str()
    }

    #[getter]
    fn instruction(&self) -> &str {
        &self.inner.instruction
    }

    #[getter]
    fn locations(&self) -> Vec<String> {
        self.inner.schema.locations().to_vec()
    }

    #[getter]
    fn objects(&self) -> Vec<String> {
        self.inner.schema.objects().to_vec()
    }

    #[getter]
    fn carry_capacity(&self) -> usize {
        self.inner.schema.carry_capacity()
    }

    #[getter]
    fn init_state(&self) -> String {
        serialize_state(&self.inner.init_state, &self.inner.schema)
    }

    #[getter]
    fn goal(&self) -> String {
        serialize_goal(&self.inner.goal, &self.inner.schema)
    }

    #[getter]
    fn gold_plan(&self) -> Option<String> {
        self.inner.gold_plan.as_ref().map(|p| serialize_plan(p, &self.inner.schema))
    }

    /// Shortest plan text, or None when no plan exists. Raises RuntimeError
    /// when the search budget runs out.
    #[pyo3(signature = (max_nodes=None, timeout_secs=None))]
    fn solve(&self, max_nodes: Option<usize>, timeout_secs: Option<f64>) -> PyResult<Option<String>> {
        let s = &self.inner;
        match solve(&s.init_state, &s.goal, &s.schema, budget(max_nodes, timeout_secs)?).map_err(value_err)? {
            EngineResult::Solved { plan, .. } => Ok(Some(serialize_plan(&plan, &s.schema))),
            EngineResult::Unsolvable => Ok(None),
            EngineResult::BudgetExceeded => Err(PyRuntimeError::new_err("search budget exceeded")),
        }
    }

    /// Canonical form of a plan text; raises ValueError on a malformed plan.
    fn parse_plan(&self, text: &str) -> PyResult<String> {
        let plan = parse_plan(text, &self.inner.schema).map_err(value_err)?;
        Ok(serialize_plan(&plan, &self.inner.schema))
    }

    /// Executes a plan text and returns a dict with `valid`, `outcome` and
    /// `error` (step index, kind and message of the first failing step).
    #[pyo3(signature = (plan, strict=false))]
    fn judge<'py>(&self, py: Python<'py>, plan: &str, strict: bool) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner;
        let plan = parse_plan(plan, &s.schema).map_err(value_err)?;
        let mode = if strict { GoalMode::Strict } else { GoalMode::Subset };
        let verdict = judge_plan_with(mode, &s.init_state, &plan, &s.goal, &s.schema);
        let out = PyDict::new(py);
        out.set_item("valid", verdict.valid)?;
        out.set_item("outcome", verdict.outcome.map(|o| serialize_state(&o, &s.schema)))?;
        match verdict.error {
            Some(e) => {
                let err = PyDict::new(py);
                err.set_item("step_index", e.step_index)?;
                err.set_item("kind", e.kind.as_str())?;
                err.set_item("message", e.message)?;
                out.set_item("error", err)?;
            }
            None => out.set_item("error", py.None())?,
        }
        Ok(out)
    }

    /// The sample as one dataset record.
    fn to_json(&self) -> String {
        to_canonical_string(std::slice::from_ref(&self.inner)).trim_end().to_string()
    }

    fn __repr__(&self) -> String {
        format!("Sample({:?}, {})", self.inner.id, self.inner.category.as_str())
    }
}

/// A validated set of samples.
#[pyclass(name = "Dataset", module = "neuroground", frozen)]
struct PyDataset {
    inner: neuroground::dataset::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads and validates a dataset file or directory. Raises ValueError
    /// listing every problem found.
    #[staticmethod]
    #[pyo3(signature = (path, check_images=false, default_agent_location=false))]
    fn load(path: PathBuf, check_images: bool, default_agent_location: bool) -> PyResult<Self> {
        let options = LoadOptions {
            check_images,
            default_agent_location,
        };
        load_dataset_with(&path, options)
            .map(|inner| PyDataset { inner })
            .map_err(value_err)
    }

    /// Generates `count` solvable scenarios with engine-optimal gold plans.
    #[staticmethod]
    #[pyo3(signature = (count, seed=0, locations=(2, 5), objects=(1, 4), length=(1, 16)))]
    fn generate(
        count: usize,
        seed: u64,
        locations: (usize, usize),
        objects: (usize, usize),
        length: (usize, usize),
    ) -> PyResult<Self> {
        let config = GeneratorConfig {
            count,
            seed,
            locations: locations.0..=locations.1,
            objects: objects.0..=objects.1,
            target_length: length.0..=length.1,
            ..GeneratorConfig::default()
        };
        let samples = generate_scenarios(&config).map_err(value_err)?;
        Ok(PyDataset {
            inner: neuroground::dataset::Dataset::new(samples, PathBuf::from(".")),
        })
    }

    /// Writes the dataset file and the placeholder image into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        fs::create_dir_all(&dir).map_err(runtime_err)?;
        save_dataset(&self.inner.samples, &dir.join(DATASET_FILE)).map_err(runtime_err)?;
        let image = dir.join(PLACEHOLDER_IMAGE);
        if let Some(parent) = image.parent() {
            fs::create_dir_all(parent).map_err(runtime_err)?;
        }
        fs::write(&image, PLACEHOLDER_PNG).map_err(runtime_err)
    }

    #[getter]
    fn digest(&self) -> &str {
        &self.inner.digest
    }

    fn ids(&self) -> Vec<String> {
        self.inner.samples.iter().map(|s| s.id.clone()).collect()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&stats(&self.inner.samples)).map_err(runtime_err)?;
        json_to_py(py, &text)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Looks a sample up by id or position.
    fn __getitem__(&self, key: &Bound<'_, PyAny>) -> PyResult<PySample> {
        let found = if let Ok(i) = key.extract::<usize>() {
            self.inner.samples.get(i)
        } else {
            self.inner.get(&key.extract::<String>()?)
        };
        found
            .map(|s| PySample { inner: s.clone() })
            .ok_or_else(|| PyKeyError::new_err(key.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} samples)", self.inner.len())
    }
}

/// Splits a model response into its sections, keyed by marker name.
#[pyfunction(name = "extract_sections")]
fn py_extract_sections(text: &str) -> BTreeMap<&'static str, String> {
    let sections = extract_sections(text);
    Section::ALL
        .into_iter()
        .filter_map(|s| {
            let body = sections.get(s).ok()?;
            Some((s.marker().trim_end_matches(':'), body.to_string()))
        })
        .collect()
}

#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.as_str()).collect()
}

/// Runs (or resumes) an evaluation into `out` and returns the report.
/// `backend` is `oracle`, `oracle-states`, `noisy:<p>[:<seed>]` or `echo`.
#[pyfunction(name = "run_eval")]
#[pyo3(signature = (dataset, method, backend, out, seed=0, parallelism=1, limit=None, text_only=false, three_call=false, strict=false))]
#[allow(clippy::too_many_arguments)]
fn py_run_eval<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    method: &str,
    backend: &str,
    out: PathBuf,
    seed: u64,
    parallelism: usize,
    limit: Option<usize>,
    text_only: bool,
    three_call: bool,
    strict: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let method: Method = method.parse().map_err(value_err)?;
    let backend = BackendConfig::from_spec(backend).map_err(value_err)?;
    let mut config = RunConfig::new(dataset, method, backend, out);
    config.run_seed = seed;
    config.parallelism = parallelism;
    config.max_samples = limit;
    config.text_only = text_only;
    config.three_call = three_call;
    if strict {
        config.goal_mode = GoalMode::Strict;
    }
    let report = py.detach(|| run_eval(&config)).map_err(runtime_err)?;
    json_to_py(py, &serde_json::to_string(&report).map_err(runtime_err)?)
}

/// Compares saved reports over the same dataset; returns CSV text.
#[pyfunction]
fn compare(reports: Vec<PathBuf>) -> PyResult<String> {
    let loaded = reports
        .iter()
        .map(|p| load_report(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime_err)?;
    Ok(compare_runs(&loaded).map_err(value_err)?.to_csv())
}

#[pymodule(name = "neuroground")]
fn neuroground_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(py_extract_sections, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_eval, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
