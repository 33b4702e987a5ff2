use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::{Category, ImageSource, LengthBucket};
use crate::pipeline::{Method, PipelineTrace, Provenance};
use crate::text::Section;

/// Valid count over total count in one slice of the dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    pub valid: usize,
    /// Percentage in [0, 100]; 0 for an empty cell.
    pub validity: f64,
}

impl Cell {
    fn add(&mut self, valid: bool) {
        self.count += 1;
        self.valid += valid as usize;
        self.validity = percent(self.valid, self.count);
    }
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub category: Category,
    pub valid: bool,
    pub provenance: Provenance,
    pub failure: Option<String>,
}

/// Identifies what a run evaluated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: Method,
    pub backend: String,
    pub dataset_digest: String,
    pub run_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub meta: RunMeta,
    pub overall: Cell,
    pub per_category: BTreeMap<Category, Cell>,
    pub per_image_source: BTreeMap<ImageSource, Cell>,
    pub per_length_bucket: BTreeMap<LengthBucket, Cell>,
    /// engine / model / none
    pub provenance: BTreeMap<String, usize>,
    /// Failure label of each invalid sample, counted.
    pub error_taxonomy: BTreeMap<String, usize>,
    /// `<section>:<ParseFailureKind>` for every section that failed to parse.
    pub section_failures: BTreeMap<String, usize>,
    /// Sorted by id.
    pub samples: Vec<SampleEntry>,
}

/// Aggregates traces. Pure: the same traces give the same report in any order.
pub fn report_from_traces(meta: RunMeta, traces: &[PipelineTrace]) -> Result<RunReport, HarnessError> {
    let mut seen = HashSet::new();
    let mut report = RunReport {
        meta,
        overall: Cell::default(),
        per_category: Category::ALL.into_iter().map(|c| (c, Cell::default())).collect(),
        per_image_source: BTreeMap::new(),
        per_length_bucket: BTreeMap::new(),
        provenance: [Provenance::Engine, Provenance::Model, Provenance::None]
            .into_iter()
            .map(|p| (p.as_str().to_string(), 0))
            .collect(),
        error_taxonomy: BTreeMap::new(),
        section_failures: BTreeMap::new(),
        samples: Vec::with_capacity(traces.len()),
    };
    for t in traces {
        if !seen.insert(t.sample_id.as_str()) {
            return Err(HarnessError::CorruptTraces(format!("sample {} traced twice", t.sample_id)));
        }
        let valid = t.verdict.valid;
        report.overall.add(valid);
        report.per_category.entry(t.category).or_default().add(valid);
        report.per_image_source.entry(t.image_source).or_default().add(valid);
        if let Some(len) = t.gold_plan_len {
            report.per_length_bucket.entry(LengthBucket::of(len)).or_default().add(valid);
        }
        *report.provenance.entry(t.provenance.as_str().to_string()).or_default() += 1;
        if !valid {
            let label = t.failure.clone().unwrap_or_else(|| "Unknown".into());
            *report.error_taxonomy.entry(label).or_default() += 1;
        }
        let sections = [
            (Section::InitialState, &t.parsed_init),
            (Section::GoalState, &t.parsed_goal),
            (Section::Plan, &t.model_plan),
        ];
        for (section, parsed) in sections {
            if let Some(Err(f)) = parsed {
                let key = format!("{}:{}", section, f.kind.as_str());
                *report.section_failures.entry(key).or_default() += 1;
            }
        }
        report.samples.push(SampleEntry {
            id: t.sample_id.clone(),
            category: t.category,
            valid,
            provenance: t.provenance,
            failure: t.failure.clone(),
        });
    }
    report.samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}

impl RunReport {
    pub fn label(&self) -> String {
        format!("{} [{}]", self.meta.method, self.meta.backend)
    }

    /// Machine-readable rows: `scope,key,count,valid,validity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,key,count,valid,validity\n");
        let mut row = |scope: &str, key: &str, c: &Cell| {
            let _ = writeln!(out, "{scope},{key},{},{},{:.4}", c.count, c.valid, c.validity);
        };
        row("overall", "all", &self.overall);
        for (k, c) in &self.per_category {
            row("category", k.as_str(), c);
        }
        for (k, c) in &self.per_image_source {
            row("image_source", k.as_str(), c);
        }
        for (k, c) in &self.per_length_bucket {
            row("length_bucket", k.label(), c);
        }
        for (k, n) in &self.provenance {
            let _ = writeln!(out, "provenance,{k},{n},,");
        }
        for (k, n) in &self.error_taxonomy {
            let _ = writeln!(out, "error,{k},{n},,");
        }
        for (k, n) in &self.section_failures {
            let _ = writeln!(out, "section_failure,{k},{n},,");
        }
        out
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}  seed {}  dataset {}", self.label(), self.meta.run_seed, short(&self.meta.dataset_digest))?;
        let line = |f: &mut fmt::Formatter<'_>, key: &str, c: &Cell| {
            writeln!(f, "  {key:<14} {:>6.1}%  ({}/{})", c.validity, c.valid, c.count)
        };
        line(f, "overall", &self.overall)?;
        for (k, c) in &self.per_category {
            line(f, k.as_str(), c)?;
        }
        for (k, c) in &self.per_image_source {
            line(f, &format!("{k} images"), c)?;
        }
        for (k, c) in &self.per_length_bucket {
            line(f, &format!("len {k}"), c)?;
        }
        let prov: Vec<String> = self.provenance.iter().map(|(k, n)| format!("{k}={n}")).collect();
        writeln!(f, "  provenance     {}", prov.join(" "))?;
        if !self.error_taxonomy.is_empty() {
            let errs: Vec<String> = self.error_taxonomy.iter().map(|(k, n)| format!("{k}={n}")).collect();
            writeln!(f, "  failures       {}", errs.join(" "))?;
        }
        Ok(())
    }
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: String,
    /// A category name or `overall`.
    pub scope: String,
    pub validity: f64,
    /// Against the first run; absent for the first run itself.
    pub delta: Option<f64>,
}

/// Method x category validity matrix over runs on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub runs: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

const SCOPES: [&str; 4] = ["commonsense", "physical", "safety", "overall"];

fn scope_cell<'a>(report: &'a RunReport, scope: &str) -> &'a Cell {
    match scope.parse::<Category>() {
        Ok(c) => &report.per_category[&c],
        Err(_) => &report.overall,
    }
}

pub fn compare_runs(reports: &[RunReport]) -> Result<Comparison, HarnessError> {
    let first = reports
        .first()
        .ok_or_else(|| HarnessError::Usage("nothing to compare".into()))?;
    if let Some(other) = reports.iter().find(|r| r.meta.dataset_digest != first.meta.dataset_digest) {
        return Err(HarnessError::Usage(format!(
            "{} and {} were run on different datasets",
            first.label(),
            other.label()
        )));
    }
    let runs: Vec<String> = reports.iter().map(RunReport::label).collect();
    let mut rows = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        for scope in SCOPES {
            let v = scope_cell(r, scope).validity;
            rows.push(ComparisonRow {
                run: runs[i].clone(),
                scope: scope.to_string(),
                validity: v,
                delta: (i > 0).then(|| v - scope_cell(first, scope).validity),
            });
        }
    }
    Ok(Comparison { runs, rows })
}

impl Comparison {
    fn row(&self, run: &str, scope: &str) -> &ComparisonRow {
        self.rows
            .iter()
            .find(|r| r.run == run && r.scope == scope)
            .expect("every run has every scope")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,scope,validity,delta\n");
        for r in &self.rows {
            let delta = r.delta.map(|d| format!("{d:.4}")).unwrap_or_default();
            let _ = writeln!(out, "\"{}\",{},{:.4},{delta}", r.run.replace('"', "\"\""), r.scope, r.validity);
        }
        out
    }

    /// One line per run, one column per category.
    pub fn render(&self) -> String {
        let width = self.runs.iter().map(String::len).max().unwrap_or(0).max(3);
        let mut out = format!("{:<width$}", "run");
        for s in SCOPES {
            let _ = write!(out, " {s:>12}");
        }
        out.push('\n');
        for run in &self.runs {
            let _ = write!(out, "{run:<width$}");
            for s in SCOPES {
                let r = self.row(run, s);
                let cell = match r.delta {
                    Some(d) => format!("{:.1} ({d:+.1})", r.validity),
                    None => format!("{:.1}", r.validity),
                };
                let _ = write!(out, " {cell:>12}");
            }
            out.push('\n');
        }
        out
    }

    /// Runs grouped within each category.
    pub fn render_grouped(&self) -> String {
        let width = self.runs.iter().map(String::len).max().unwrap_or(0);
        let mut out = String::new();
        for s in SCOPES {
            let _ = writeln!(out, "{s}");
            for run in &self.runs {
                let r = self.row(run, s);
                let delta = r.delta.map(|d| format!("  ({d:+.1})")).unwrap_or_default();
                let _ = writeln!(out, "  {run:<width$}  {:>5.1}%{delta}", r.validity);
            }
        }
        out
    }
}
