//! Benchmark records, the JSON Lines dataset format, statistics and a
//! synthetic scenario generator.

mod format;
mod generate;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::world::{GoalSpec, Plan, State, WorldSchema};

pub use format::{
    import_dataset, load_dataset, load_dataset_with, parse_dataset, save_dataset, to_canonical_string, Dataset,
    Importer, LoadOptions, ValidationError, ValidationErrors, ValidationKind, DATASET_FILE, FORMAT_VERSION,
};
pub use generate::{generate_scenarios, GenerateError, GeneratorConfig, PLACEHOLDER_IMAGE, PLACEHOLDER_PNG};
pub use stats::{stats, DatasetStats, LengthBucket};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Commonsense,
    Physical,
    Safety,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Commonsense, Category::Physical, Category::Safety];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Commonsense => "commonsense",
            Category::Physical => "physical",
            Category::Safety => "safety",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    Real,
    Synthetic,
}

impl ImageSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImageSource::Real => "real",
            ImageSource::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for ImageSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImageSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(ImageSource::Real),
            "synthetic" => Ok(ImageSource::Synthetic),
            _ => Err(format!("unknown image source {s:?}")),
        }
    }
}

/// One benchmark record with its ground truth.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub category: Category,
    pub image_refs: Vec<String>,
    pub image_source: ImageSource,
    pub instruction: String,
    pub schema: WorldSchema,
    pub init_state: State,
    pub goal: GoalSpec,
    pub gold_plan: Option<Plan>,
}
