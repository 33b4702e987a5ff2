//! One-shot prompt construction from the versioned templates in `templates/`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{Method, PipelineError};
use crate::dataset::Sample;
use crate::engine::{solve, SearchBudget};
use crate::gateway::{
    GenerationParams, Guidance, ImageData, ImagePart, MediaType, ModelRequest, Part, RequestContext,
};
use crate::text::{render_sections, serialize_goal, serialize_plan, serialize_state, Section};

pub const PROMPT_VERSION: &str = "v1";

/// Header of the ground-truth initial-state block in guided prompts.
pub const KNOWN_INIT_HEADER: &str = "Known initial state:";
/// Header of the ground-truth goal-state block in guided prompts.
pub const KNOWN_GOAL_HEADER: &str = "Known goal state:";

const TASK: &str = include_str!("../../templates/v1/task.txt");
const EXAMPLE: &str = include_str!("../../templates/v1/example.txt");
const TASK_HEADER: &str = include_str!("../../templates/v1/task_header.txt");
const FORMAT_PLAN: &str = include_str!("../../templates/v1/format_plan.txt");
pub(super) const FORMAT_STAGE_PLAN: &str = FORMAT_PLAN;
const FORMAT_GROUNDED: &str = include_str!("../../templates/v1/format_grounded.txt");
pub(super) const FORMAT_STAGE_INIT: &str = include_str!("../../templates/v1/format_stage_init.txt");
pub(super) const FORMAT_STAGE_GOAL: &str = include_str!("../../templates/v1/format_stage_goal.txt");

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PromptOptions {
    /// Directory image references are resolved against.
    pub image_root: PathBuf,
    /// Drop all image parts.
    pub text_only: bool,
    pub generation: GenerationParams,
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn images(sample: &Sample, root: &Path) -> Vec<Part> {
    sample
        .image_refs
        .iter()
        .map(|r| {
            let path = root.join(r);
            Part::Image(ImagePart {
                media_type: MediaType::from_path(&path).unwrap_or(MediaType::Png),
                data: ImageData::Path(path),
            })
        })
        .collect()
}

fn names(sample: &Sample) -> (String, String) {
    (
        sample.schema.locations().join(", "),
        sample.schema.objects().join(", "),
    )
}

fn guidance_block(sample: &Sample, guidance: Guidance) -> Option<String> {
    let mut blocks = Vec::new();
    if guidance.init {
        blocks.push(format!(
            "{KNOWN_INIT_HEADER}\n{}",
            serialize_state(&sample.init_state, &sample.schema)
        ));
    }
    if guidance.goal {
        blocks.push(format!(
            "{KNOWN_GOAL_HEADER}\n{}",
            serialize_goal(&sample.goal, &sample.schema)
        ));
    }
    (!blocks.is_empty()).then(|| blocks.join("\n\n"))
}

/// The worked answer shown for a demonstration sample.
fn demo_answer(demo: &Sample, method: Method) -> String {
    let schema = &demo.schema;
    let plan = demo
        .gold_plan
        .clone()
        .or_else(|| {
            solve(&demo.init_state, &demo.goal, schema, SearchBudget::default())
                .ok()
                .and_then(|r| r.plan().cloned())
        })
        .unwrap_or_default();
    let plan = serialize_plan(&plan, schema);
    if method.grounded() {
        let init = serialize_state(&demo.init_state, schema);
        let goal = serialize_goal(&demo.goal, schema);
        render_sections(&[
            (Section::InitialState, init.as_str()),
            (Section::GoalState, goal.as_str()),
            (Section::Plan, plan.as_str()),
        ])
    } else {
        render_sections(&[(Section::Plan, plan.as_str())])
    }
}

/// Builds the one-shot request for `sample`. Without a demonstration the
/// prompt is zero-shot.
pub fn build_prompt(
    sample: &Arc<Sample>,
    method: Method,
    demo: Option<&Sample>,
    options: &PromptOptions,
) -> Result<ModelRequest, PipelineError> {
    if let Some(d) = demo {
        if d.category != sample.category {
            return Err(PipelineError::DemoCategory {
                sample: sample.id.clone(),
                demo: d.id.clone(),
            });
        }
        if d.id == sample.id {
            return Err(PipelineError::DemoIsSample(sample.id.clone()));
        }
    }
    let guidance = method.guidance();
    let actions = sample.schema.action_types().join(", ");
    let capacity = sample.schema.carry_capacity().to_string();
    let mut parts = vec![Part::Text(fill(
        TASK,
        &[("actions", &actions), ("capacity", &capacity)],
    ))];

    if let Some(d) = demo {
        let (locations, objects) = names(d);
        parts.push(Part::Text(fill(
            EXAMPLE,
            &[
                ("locations", &locations),
                ("objects", &objects),
                ("instruction", &d.instruction),
            ],
        )));
        parts.extend(images(d, &options.image_root));
        if let Some(block) = guidance_block(d, guidance) {
            parts.push(Part::Text(block));
        }
        parts.push(Part::Text(format!("Answer:\n{}", demo_answer(d, method))));
    }

    let (locations, objects) = names(sample);
    parts.push(Part::Text(fill(
        TASK_HEADER,
        &[("locations", &locations), ("objects", &objects)],
    )));
    parts.extend(images(sample, &options.image_root));
    if let Some(block) = guidance_block(sample, guidance) {
        parts.push(Part::Text(block));
    }
    parts.push(Part::Text(format!("Instruction: {}", sample.instruction)));
    let format = if method.grounded() {
        FORMAT_GROUNDED
    } else {
        FORMAT_PLAN
    };
    parts.push(Part::Text(format.trim_end().to_string()));

    let request = ModelRequest {
        parts,
        generation: options.generation,
        context: Some(RequestContext {
            sample: sample.clone(),
            guidance,
        }),
    };
    Ok(if options.text_only {
        request.without_images()
    } else {
        request
    })
}
