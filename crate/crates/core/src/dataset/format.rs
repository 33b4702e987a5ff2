//! On-disk dataset format: UTF-8 JSON Lines, one self-contained record per
//! line. States, goals and plans are stored as arrays of grammar lines.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Category, ImageSource, Sample};
use crate::text::{parse_goal, parse_plan, parse_state, serialize_goal, serialize_state, ParseFailureKind};
use crate::world::{judge_plan, WorldSchema, START_LOCATION};

pub const FORMAT_VERSION: u32 = 1;

/// File name used when a dataset path names a directory.
pub const DATASET_FILE: &str = "dataset.jsonl";

#[derive(Serialize, Deserialize)]
struct SchemaFields {
    locations: Vec<String>,
    objects: Vec<String>,
    action_types: Vec<String>,
    #[serde(default = "one")]
    carry_capacity: usize,
}

fn one() -> usize {
    1
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    format_version: u32,
    id: String,
    category: String,
    image_source: String,
    image_refs: Vec<String>,
    instruction: String,
    schema: SchemaFields,
    init_state: Vec<String>,
    goal: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_plan: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ValidationKind {
    Json,
    FormatVersion,
    Schema,
    Parse(ParseFailureKind),
    InvalidGoldPlan,
    BadCategory,
    BadImageSource,
    DuplicateId,
    EmptyField,
    MissingImage,
}

impl fmt::Display for ValidationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationKind::Parse(k) => f.write_str(k.as_str()),
            other => write!(f, "{other:?}"),
        }
    }
}

/// One problem in one record, located by line, sample id and field path.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize)]
#[error("line {line}: sample {}: field {field}: {kind}: {message}", sample_id.as_deref().unwrap_or("<unknown>"))]
pub struct ValidationError {
    pub line: usize,
    pub sample_id: Option<String>,
    pub field: String,
    pub kind: ValidationKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} validation error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Require every image reference to exist relative to the dataset directory.
    pub check_images: bool,
    /// Place the agent at [`START_LOCATION`] when a record has no `agent_at`
    /// line, appending the location to the schema if needed.
    pub default_agent_location: bool,
}

/// A validated dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Arc<Sample>>,
    /// Directory image references are relative to.
    pub root: PathBuf,
    /// SHA-256 of the canonical serialization.
    pub digest: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, root: PathBuf) -> Self {
        let samples: Vec<Arc<Sample>> = samples.into_iter().map(Arc::new).collect();
        let digest = digest_of(&samples);
        Dataset {
            samples,
            root,
            digest,
        }
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Sample>> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn digest_of(samples: &[Arc<Sample>]) -> String {
    let text = to_canonical_string(samples);
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn to_record(sample: &Sample) -> Record {
    let schema = &sample.schema;
    let lines = |text: String| -> Vec<String> {
        text.lines().map(str::to_string).filter(|l| !l.is_empty()).collect()
    };
    Record {
        format_version: FORMAT_VERSION,
        id: sample.id.clone(),
        category: sample.category.as_str().to_string(),
        image_source: sample.image_source.as_str().to_string(),
        image_refs: sample.image_refs.clone(),
        instruction: sample.instruction.clone(),
        schema: SchemaFields {
            locations: schema.locations().to_vec(),
            objects: schema.objects().to_vec(),
            action_types: schema.action_types().to_vec(),
            carry_capacity: schema.carry_capacity(),
        },
        init_state: lines(serialize_state(&sample.init_state, schema)),
        goal: lines(serialize_goal(&sample.goal, schema)),
        gold_plan: sample
            .gold_plan
            .as_ref()
            .map(|p| p.steps.iter().map(|s| s.render(schema)).collect()),
    }
}

/// Canonical file contents: one compact JSON record per line, `\n` terminated.
pub fn to_canonical_string(samples: &[Arc<Sample>]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&to_record(s)).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn save_dataset(samples: &[Arc<Sample>], path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, to_canonical_string(samples))
}

fn resolve_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(DATASET_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, ValidationErrors> {
    load_dataset_with(path, LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, options: LoadOptions) -> Result<Dataset, ValidationErrors> {
    let file = resolve_path(path);
    let text = fs::read_to_string(&file).map_err(|e| {
        ValidationErrors(vec![ValidationError {
            line: 0,
            sample_id: None,
            field: "file".into(),
            kind: ValidationKind::Json,
            message: format!("{}: {e}", file.display()),
        }])
    })?;
    let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_dataset(&text, root, options)
}

struct RecordCtx<'a> {
    line: usize,
    id: Option<&'a str>,
    errors: &'a mut Vec<ValidationError>,
}

impl RecordCtx<'_> {
    fn push(&mut self, field: impl Into<String>, kind: ValidationKind, message: impl Into<String>) {
        self.errors.push(ValidationError {
            line: self.line,
            sample_id: self.id.map(str::to_string),
            field: field.into(),
            kind,
            message: message.into(),
        });
    }
}

/// `name[i]` for a 1-based line number, `name` for the section as a whole.
fn field_path(name: &str, line_number: usize) -> String {
    match line_number {
        0 => name.to_string(),
        n => format!("{name}[{}]", n - 1),
    }
}

/// Parses and validates dataset text; `root` anchors relative image paths.
pub fn parse_dataset(text: &str, root: PathBuf, options: LoadOptions) -> Result<Dataset, ValidationErrors> {
    let mut errors = Vec::new();
    let mut samples = Vec::new();
    let mut ids = HashSet::new();

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(ValidationError {
                    line: line_no,
                    sample_id: None,
                    field: "record".into(),
                    kind: ValidationKind::Json,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let id = value.get("id").and_then(|v| v.as_str()).map(str::to_string);
        let mut ctx = RecordCtx {
            line: line_no,
            id: id.as_deref(),
            errors: &mut errors,
        };
        let record: Record = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                ctx.push("record", ValidationKind::Json, e.to_string());
                continue;
            }
        };
        if !ids.insert(record.id.clone()) {
            ctx.push("id", ValidationKind::DuplicateId, format!("id {:?} is not unique", record.id));
        }
        if let Some(sample) = validate_record(record, &root, options, &mut ctx) {
            samples.push(sample);
        }
    }
    if errors.is_empty() {
        Ok(Dataset::new(samples, root))
    } else {
        Err(ValidationErrors(errors))
    }
}

fn validate_record(
    record: Record,
    root: &Path,
    options: LoadOptions,
    ctx: &mut RecordCtx<'_>,
) -> Option<Sample> {
    let before = ctx.errors.len();
    if record.format_version != FORMAT_VERSION {
        ctx.push(
            "format_version",
            ValidationKind::FormatVersion,
            format!("unsupported version {}", record.format_version),
        );
    }
    if record.id.trim().is_empty() {
        ctx.push("id", ValidationKind::EmptyField, "id is empty");
    }
    if record.instruction.trim().is_empty() {
        ctx.push("instruction", ValidationKind::EmptyField, "instruction is empty");
    }
    let category = record
        .category
        .parse::<Category>()
        .map_err(|e| ctx.push("category", ValidationKind::BadCategory, e))
        .ok();
    let image_source = record
        .image_source
        .parse::<ImageSource>()
        .map_err(|e| ctx.push("image_source", ValidationKind::BadImageSource, e))
        .ok();
    if options.check_images {
        for (i, r) in record.image_refs.iter().enumerate() {
            if !root.join(r).is_file() {
                ctx.push(
                    format!("image_refs[{i}]"),
                    ValidationKind::MissingImage,
                    format!("{r} does not exist"),
                );
            }
        }
    }
    let f = record.schema;
    let schema = match WorldSchema::new(f.locations, f.objects, f.action_types, f.carry_capacity) {
        Ok(s) => s,
        Err(e) => {
            ctx.push("schema", ValidationKind::Schema, e.to_string());
            return None;
        }
    };

    let mut init_lines = record.init_state;
    let has_agent = init_lines
        .iter()
        .any(|l| l.trim().to_lowercase().starts_with("agent_at"));
    let schema = if options.default_agent_location && !has_agent {
        init_lines.push(format!("agent_at({START_LOCATION})"));
        match schema.with_location(START_LOCATION) {
            Ok(s) => s,
            Err(e) => {
                ctx.push("schema", ValidationKind::Schema, e.to_string());
                return None;
            }
        }
    } else {
        schema
    };

    let init_state = parse_state(&init_lines.join("\n"), &schema)
        .map_err(|e| {
            ctx.push(
                field_path("init_state", e.line_number),
                ValidationKind::Parse(e.kind),
                e.detail,
            )
        })
        .ok();
    let goal = parse_goal(&record.goal.join("\n"), &schema)
        .map_err(|e| {
            ctx.push(
                field_path("goal", e.line_number),
                ValidationKind::Parse(e.kind),
                e.detail,
            )
        })
        .ok();
    let gold_plan = match record.gold_plan {
        None => None,
        Some(lines) => match parse_plan(&lines.join("\n"), &schema) {
            Ok(p) => Some(p),
            Err(e) => {
                ctx.push(
                    field_path("gold_plan", e.line_number),
                    ValidationKind::Parse(e.kind),
                    e.detail,
                );
                None
            }
        },
    };
    if let (Some(init), Some(goal), Some(plan)) = (&init_state, &goal, &gold_plan) {
        let verdict = judge_plan(init, plan, goal, &schema);
        if !verdict.valid {
            let why = match verdict.error {
                Some(e) => e.to_string(),
                None => "outcome does not satisfy the goal".to_string(),
            };
            ctx.push("gold_plan", ValidationKind::InvalidGoldPlan, why);
        }
    }
    if ctx.errors.len() > before {
        return None;
    }
    Some(Sample {
        id: record.id,
        category: category?,
        image_refs: record.image_refs,
        image_source: image_source?,
        instruction: record.instruction,
        schema,
        init_state: init_state?,
        goal: goal?,
        gold_plan,
    })
}

/// Source of samples in some other annotation format.
pub trait Importer {
    fn import(&self, source: &Path) -> Result<Vec<Sample>, ValidationErrors>;
}

/// Runs an importer and validates its output exactly as if it had been read
/// from a dataset file.
pub fn import_dataset(importer: &dyn Importer, source: &Path, options: LoadOptions) -> Result<Dataset, ValidationErrors> {
    let samples: Vec<Arc<Sample>> = importer.import(source)?.into_iter().map(Arc::new).collect();
    let root = source.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_dataset(&to_canonical_string(&samples), root, options)
}
