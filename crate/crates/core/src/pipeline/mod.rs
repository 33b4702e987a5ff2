//! Planning methods: the direct baseline, the guided-state variants and the
//! state-grounded method with symbolic plan replacement.

mod prompt;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, ImageSource, Sample};
use crate::engine::{solve, EngineResult, SearchBudget};
use crate::gateway::{
    complete, GatewayError, Guidance, ModelBackend, ModelRequest, Part,
};
use crate::text::{
    extract_sections, parse_goal, parse_plan, parse_state, render_sections, serialize_goal,
    serialize_plan, serialize_state, ParseFailure, Section,
};
use crate::world::{judge_plan_with, ExecutionError, GoalMode, GoalSpec, Plan, State};

pub use prompt::{build_prompt, PromptOptions, KNOWN_GOAL_HEADER, KNOWN_INIT_HEADER, PROMPT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    GuidedInit,
    GuidedInitGoal,
    #[serde(rename = "neuroground")]
    NeuroGround,
    #[serde(rename = "neuroground_no_engine")]
    NeuroGroundNoEngine,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Direct,
        Method::GuidedInit,
        Method::GuidedInitGoal,
        Method::NeuroGround,
        Method::NeuroGroundNoEngine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::GuidedInit => "guided_init",
            Method::GuidedInitGoal => "guided_init_goal",
            Method::NeuroGround => "neuroground",
            Method::NeuroGroundNoEngine => "neuroground_no_engine",
        }
    }

    /// Ground-truth states embedded in the prompt.
    pub fn guidance(&self) -> Guidance {
        match self {
            Method::GuidedInit => Guidance {
                init: true,
                goal: false,
            },
            Method::GuidedInitGoal => Guidance {
                init: true,
                goal: true,
            },
            _ => Guidance::default(),
        }
    }

    /// Whether the model is asked for both states before the plan.
    pub fn grounded(&self) -> bool {
        matches!(self, Method::NeuroGround | Method::NeuroGroundNoEngine)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("demonstration {demo} is not in the category of sample {sample}")]
    DemoCategory { sample: String, demo: String },
    #[error("sample {0} cannot be its own demonstration")]
    DemoIsSample(String),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOptions {
    pub budget: SearchBudget,
    pub prompt: PromptOptions,
    /// Ask for each section in its own call instead of one response.
    pub three_call: bool,
    pub goal_mode: GoalMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Engine,
    Model,
    None,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Engine => "engine",
            Provenance::Model => "model",
            Provenance::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineStatus {
    Solved,
    Unsolvable,
    BudgetExceeded,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSummary {
    pub status: EngineStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    pub expanded: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub valid: bool,
    pub error: Option<ExecutionError>,
}

/// Everything one sample's run produced. Section parses hold the canonical
/// re-serialization on success.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub sample_id: String,
    pub method: Method,
    pub category: Category,
    pub image_source: ImageSource,
    pub gold_plan_len: Option<usize>,
    pub demo_id: Option<String>,
    pub prompt_version: String,
    pub prompt: String,
    pub raw_response: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub gateway_error: Option<GatewayError>,
    pub parsed_init: Option<Result<String, ParseFailure>>,
    pub parsed_goal: Option<Result<String, ParseFailure>>,
    pub model_plan: Option<Result<String, ParseFailure>>,
    pub engine: Option<EngineSummary>,
    pub chosen_plan: Option<String>,
    pub provenance: Provenance,
    pub verdict: VerdictRecord,
    /// Taxonomy label for invalid verdicts.
    pub failure: Option<String>,
}

pub const GOAL_NOT_REACHED: &str = "GoalNotReached";

/// Section texts as obtained from the model, per section.
struct Responses {
    raw: String,
    attempts: u32,
    latency: Duration,
    sections: [Result<String, ParseFailure>; 3],
}

fn section_of(text: &str, section: Section) -> Result<String, ParseFailure> {
    extract_sections(text).get(section).map(str::to_string)
}

fn single_call(request: &ModelRequest, backend: &dyn ModelBackend) -> Result<Responses, GatewayError> {
    let c = complete(request, backend)?;
    let sections = Section::ALL.map(|s| section_of(&c.text, s));
    Ok(Responses {
        raw: c.text,
        attempts: c.attempts,
        latency: c.latency,
        sections,
    })
}

/// One call per section, each seeing the sections produced so far.
fn staged_calls(request: &ModelRequest, backend: &dyn ModelBackend) -> Result<Responses, GatewayError> {
    let mut base = request.clone();
    base.parts.pop();
    let stages = [
        (Section::InitialState, prompt::FORMAT_STAGE_INIT),
        (Section::GoalState, prompt::FORMAT_STAGE_GOAL),
        (Section::Plan, prompt::FORMAT_STAGE_PLAN),
    ];
    let mut raw = Vec::new();
    let mut attempts = 0;
    let mut latency = Duration::ZERO;
    let mut sections = Vec::new();
    let mut so_far: Vec<(Section, String)> = Vec::new();
    for (section, format) in stages {
        let mut req = base.clone();
        if !so_far.is_empty() {
            let parts: Vec<(Section, &str)> = so_far.iter().map(|(s, t)| (*s, t.as_str())).collect();
            req.parts.push(Part::Text(render_sections(&parts)));
        }
        req.parts.push(Part::Text(format.trim_end().to_string()));
        let c = complete(&req, backend).map_err(|mut e| {
            e.attempts += attempts;
            e
        })?;
        attempts += c.attempts;
        latency += c.latency;
        let got = section_of(&c.text, section);
        if let Ok(t) = &got {
            so_far.push((section, t.clone()));
        }
        sections.push(got);
        raw.push(c.text);
    }
    let sections: [Result<String, ParseFailure>; 3] =
        sections.try_into().expect("three stages");
    Ok(Responses {
        raw: raw.join("\n\n"),
        attempts,
        latency,
        sections,
    })
}

fn parsed<T>(
    section: &Result<String, ParseFailure>,
    parse: impl FnOnce(&str) -> Result<T, ParseFailure>,
) -> Result<T, ParseFailure> {
    section.clone().and_then(|t| parse(&t))
}

/// Runs the state-grounded method on one sample.
pub fn run_neuroground(
    sample: &Arc<Sample>,
    demo: Option<&Sample>,
    backend: &dyn ModelBackend,
    options: &PipelineOptions,
) -> Result<PipelineTrace, PipelineError> {
    run_method(sample, Method::NeuroGround, demo, backend, options)
}

/// Runs `method` on one sample. Every model or parse failure ends up in the
/// trace; only an unusable demonstration is an error.
pub fn run_method(
    sample: &Arc<Sample>,
    method: Method,
    demo: Option<&Sample>,
    backend: &dyn ModelBackend,
    options: &PipelineOptions,
) -> Result<PipelineTrace, PipelineError> {
    let request = build_prompt(sample, method, demo, &options.prompt)?;
    let mut trace = PipelineTrace {
        sample_id: sample.id.clone(),
        method,
        category: sample.category,
        image_source: sample.image_source,
        gold_plan_len: sample.gold_plan.as_ref().map(Plan::len),
        demo_id: demo.map(|d| d.id.clone()),
        prompt_version: PROMPT_VERSION.to_string(),
        prompt: request.rendered_text(),
        raw_response: String::new(),
        attempts: 0,
        latency_ms: 0,
        gateway_error: None,
        parsed_init: None,
        parsed_goal: None,
        model_plan: None,
        engine: None,
        chosen_plan: None,
        provenance: Provenance::None,
        verdict: VerdictRecord {
            valid: false,
            error: None,
        },
        failure: None,
    };

    let outcome = if options.three_call && method.grounded() {
        staged_calls(&request, backend)
    } else {
        single_call(&request, backend)
    };
    let responses = match outcome {
        Ok(r) => r,
        Err(e) => {
            trace.attempts = e.attempts;
            trace.failure = Some(format!("Gateway:{:?}", e.kind));
            trace.gateway_error = Some(e);
            return Ok(trace);
        }
    };
    trace.raw_response = responses.raw;
    trace.attempts = responses.attempts;
    trace.latency_ms = responses.latency.as_millis() as u64;

    let schema = &sample.schema;
    let [init_text, goal_text, plan_text] = &responses.sections;
    let model_plan = parsed(plan_text, |t| parse_plan(t, schema));
    trace.model_plan = Some(model_plan.as_ref().map(|p| serialize_plan(p, schema)).map_err(Clone::clone));

    let mut chosen: Option<(Plan, Provenance)> = None;
    if method.grounded() {
        let init = parsed(init_text, |t| parse_state(t, schema));
        let goal = parsed(goal_text, |t| parse_goal(t, schema));
        trace.parsed_init = Some(init.as_ref().map(|s| serialize_state(s, schema)).map_err(Clone::clone));
        trace.parsed_goal = Some(goal.as_ref().map(|g| serialize_goal(g, schema)).map_err(Clone::clone));
        if method == Method::NeuroGround {
            if let (Ok(init), Ok(goal)) = (&init, &goal) {
                let summary = engine_summary(init, goal, sample, options.budget);
                if let Some((plan, summary)) = summary {
                    trace.engine = Some(summary);
                    chosen = plan.map(|p| (p, Provenance::Engine));
                }
            }
        }
    }
    if chosen.is_none() {
        chosen = model_plan.ok().map(|p| (p, Provenance::Model));
    }

    match chosen {
        Some((plan, provenance)) => {
            let verdict = judge_plan_with(options.goal_mode, &sample.init_state, &plan, &sample.goal, schema);
            trace.failure = match (&verdict.error, verdict.valid) {
                (Some(e), _) => Some(e.kind.as_str().to_string()),
                (None, false) => Some(GOAL_NOT_REACHED.to_string()),
                (None, true) => None,
            };
            trace.chosen_plan = Some(serialize_plan(&plan, schema));
            trace.provenance = provenance;
            trace.verdict = VerdictRecord {
                valid: verdict.valid,
                error: verdict.error,
            };
        }
        None => {
            let failure = match &trace.model_plan {
                Some(Err(f)) => f.kind.as_str().to_string(),
                _ => "NoPlan".to_string(),
            };
            trace.failure = Some(failure);
        }
    }
    Ok(trace)
}

/// Engine run on the model's states. `None` when the states do not fit the
/// schema, which cannot happen for parsed states.
fn engine_summary(
    init: &State,
    goal: &GoalSpec,
    sample: &Sample,
    budget: SearchBudget,
) -> Option<(Option<Plan>, EngineSummary)> {
    let result = solve(init, goal, &sample.schema, budget).ok()?;
    Some(match result {
        EngineResult::Solved { plan, expanded } => {
            let summary = EngineSummary {
                status: EngineStatus::Solved,
                plan: Some(serialize_plan(&plan, &sample.schema)),
                expanded: Some(expanded),
            };
            (Some(plan), summary)
        }
        EngineResult::Unsolvable => (
            None,
            EngineSummary {
                status: EngineStatus::Unsolvable,
                plan: None,
                expanded: None,
            },
        ),
        EngineResult::BudgetExceeded => (
            None,
            EngineSummary {
                status: EngineStatus::BudgetExceeded,
                plan: None,
                expanded: None,
            },
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_scenarios, GeneratorConfig};
    use crate::gateway::local::{OracleBackend, ScriptedBackend};
    use crate::gateway::{oracle_respond, OracleConfig, OracleMode};
    use crate::world::ExecutionErrorKind;

    fn samples(n: usize) -> Vec<Arc<Sample>> {
        let config = GeneratorConfig {
            count: n,
            seed: 11,
            ..GeneratorConfig::default()
        };
        generate_scenarios(&config).unwrap().into_iter().map(Arc::new).collect()
    }

    fn demo_for<'a>(all: &'a [Arc<Sample>], s: &Sample) -> Option<&'a Sample> {
        all.iter().map(|d| &**d).find(|d| d.category == s.category && d.id != s.id)
    }

    #[test]
    fn prompts_by_method() {
        let all = samples(6);
        let s = &all[0];
        let demo = demo_for(&all, s);
        let opts = PromptOptions::default();
        let direct = build_prompt(s, Method::Direct, demo, &opts).unwrap().rendered_text();
        let tail = direct.rsplit("Instruction:").next().unwrap();
        assert!(tail.contains("\"Plan:\""));
        assert!(!tail.contains("\"Initial State:\""));
        let ng = build_prompt(s, Method::NeuroGround, demo, &opts).unwrap().rendered_text();
        let tail = ng.rsplit("Instruction:").next().unwrap();
        let i = tail.find("\"Initial State:\"").unwrap();
        let g = tail.find("\"Goal State:\"").unwrap();
        let p = tail.find("\"Plan:\"").unwrap();
        assert!(i < g && g < p);
        assert!(direct.contains("goto, pick, put"));
        assert!(direct.contains(&s.instruction));

        let guided = build_prompt(s, Method::GuidedInitGoal, demo, &opts).unwrap().rendered_text();
        assert!(guided.contains(&format!("{KNOWN_INIT_HEADER}\n{}", serialize_state(&s.init_state, &s.schema))));
        assert!(guided.contains(&format!("{KNOWN_GOAL_HEADER}\n{}", serialize_goal(&s.goal, &s.schema))));
        let guided = build_prompt(s, Method::GuidedInit, demo, &opts).unwrap().rendered_text();
        assert!(!guided.contains(KNOWN_GOAL_HEADER));

        let again = build_prompt(s, Method::Direct, demo, &opts).unwrap().rendered_text();
        assert_eq!(direct, again);
    }

    #[test]
    fn demo_must_match_category() {
        let all = samples(6);
        let wrong = all.iter().find(|d| d.category != all[0].category).unwrap();
        let opts = PromptOptions::default();
        assert!(matches!(
            build_prompt(&all[0], Method::Direct, Some(wrong), &opts),
            Err(PipelineError::DemoCategory { .. })
        ));
        assert!(matches!(
            build_prompt(&all[0], Method::Direct, Some(&all[0]), &opts),
            Err(PipelineError::DemoIsSample(_))
        ));
    }

    #[test]
    fn oracle_is_engine_solved() {
        let all = samples(9);
        let backend = OracleBackend::new(OracleConfig::default());
        for s in &all {
            let t = run_neuroground(s, demo_for(&all, s), &backend, &PipelineOptions::default()).unwrap();
            assert_eq!(t.provenance, Provenance::Engine);
            assert!(t.verdict.valid);
            assert_eq!(t.chosen_plan, t.engine.as_ref().unwrap().plan);
            assert_eq!(t.failure, None);
        }
    }

    #[test]
    fn malformed_state_falls_back_to_model_plan() {
        let all = samples(3);
        let s = &all[0];
        let good = oracle_respond(s, OracleMode::Full);
        let broken = good.replacen("agent_at(", "agent_at ", 1);
        let t = run_neuroground(s, None, &ScriptedBackend::reply(broken), &PipelineOptions::default()).unwrap();
        assert_eq!(t.provenance, Provenance::Model);
        assert!(t.verdict.valid);
        assert!(matches!(t.parsed_init, Some(Err(_))));
    }

    #[test]
    fn engine_repairs_nonsense_plan() {
        let all = samples(3);
        let s = &all[1];
        let states = oracle_respond(s, OracleMode::StatesOnly);
        let reply = format!("{states}\nPlan:\n1. put({})", s.schema.objects()[0]);
        let backend = ScriptedBackend::reply(reply);
        let t = run_neuroground(s, None, &backend, &PipelineOptions::default()).unwrap();
        assert_eq!(t.provenance, Provenance::Engine);
        assert!(t.verdict.valid);
        let t = run_method(s, Method::NeuroGroundNoEngine, None, &backend, &PipelineOptions::default()).unwrap();
        assert_eq!(t.provenance, Provenance::Model);
        assert!(!t.verdict.valid);
        assert_eq!(t.failure.as_deref(), Some(ExecutionErrorKind::PutNotHeld.as_str()));
    }

    #[test]
    fn empty_reply_is_missing_section() {
        let all = samples(2);
        let t = run_method(&all[0], Method::Direct, None, &ScriptedBackend::reply(""), &PipelineOptions::default()).unwrap();
        assert_eq!(t.provenance, Provenance::None);
        assert!(!t.verdict.valid);
        assert_eq!(t.failure.as_deref(), Some("MissingSection"));
    }

    #[test]
    fn three_call_mode_matches_single_call_on_oracle() {
        let all = samples(6);
        let backend = OracleBackend::new(OracleConfig::default());
        let opts = PipelineOptions {
            three_call: true,
            ..PipelineOptions::default()
        };
        for s in &all {
            let t = run_neuroground(s, demo_for(&all, s), &backend, &opts).unwrap();
            assert!(t.verdict.valid);
            assert_eq!(t.attempts, 3);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert_eq!("NeuroGround".parse::<Method>().unwrap(), Method::NeuroGround);
    }
}
