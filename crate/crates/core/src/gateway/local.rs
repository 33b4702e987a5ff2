//! Deterministic offline backends. They answer from the dataset record in
//! the request context and never look at image bytes.

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    Completion, GatewayError, GatewayErrorKind, Guidance, ModelBackend, ModelRequest, NoisyConfig,
    OracleConfig, OracleMode, RequestContext, ScriptedConfig,
};
use crate::dataset::Sample;
use crate::engine::{solve, SearchBudget};
use crate::pipeline::{KNOWN_GOAL_HEADER, KNOWN_INIT_HEADER};
use crate::text::{
    parse_goal, parse_state, render_sections, serialize_goal, serialize_plan, serialize_state, Section,
};
use crate::world::{
    execute_plan, Entity, GoalSpec, LocationId, Placement, Plan, PlanStep, State, WorldSchema,
};

fn context(request: &ModelRequest) -> Result<&RequestContext, GatewayError> {
    request.context.as_ref().ok_or_else(|| {
        GatewayError::new(
            GatewayErrorKind::InvalidRequest,
            0,
            "local backends need the dataset record in the request context",
        )
    })
}

fn engine_plan(init: &State, goal: &GoalSpec, schema: &WorldSchema) -> Option<Plan> {
    solve(init, goal, schema, SearchBudget::default())
        .ok()
        .and_then(|r| r.plan().cloned())
}

/// The limiting case of a perfect model: ground-truth states and, in full
/// mode, an engine-solved plan (empty when no plan is found).
pub fn oracle_respond(sample: &Sample, mode: OracleMode) -> String {
    let schema = &sample.schema;
    let init = serialize_state(&sample.init_state, schema);
    let goal = serialize_goal(&sample.goal, schema);
    match mode {
        OracleMode::StatesOnly => render_sections(&[
            (Section::InitialState, init.as_str()),
            (Section::GoalState, goal.as_str()),
        ]),
        OracleMode::Full => {
            let plan = engine_plan(&sample.init_state, &sample.goal, schema)
                .map(|p| serialize_plan(&p, schema))
                .unwrap_or_default();
            render_sections(&[
                (Section::InitialState, init.as_str()),
                (Section::GoalState, goal.as_str()),
                (Section::Plan, plan.as_str()),
            ])
        }
    }
}

pub struct OracleBackend {
    config: OracleConfig,
}

impl OracleBackend {
    pub fn new(config: OracleConfig) -> Self {
        OracleBackend { config }
    }
}

impl ModelBackend for OracleBackend {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, GatewayError> {
        let started = Instant::now();
        let ctx = context(request)?;
        Ok(Completion {
            text: oracle_respond(&ctx.sample, self.config.mode),
            attempts: 1,
            latency: started.elapsed(),
        })
    }

    fn label(&self) -> String {
        "oracle".into()
    }
}

/// Noisy output plus which sections were touched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoisyResponse {
    pub text: String,
    /// Sections whose content differs from the oracle's.
    pub corrupted: Vec<Section>,
    /// Subset of `corrupted` emitted as a malformed line.
    pub malformed: Vec<Section>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn sample_seed(seed: u64, salt: Option<u64>, id: &str) -> u64 {
    let mut h = fnv1a(id.as_bytes()) ^ seed.rotate_left(17);
    if let Some(s) = salt {
        h ^= s.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
    h
}

fn other_locations(schema: &WorldSchema, current: Placement) -> Vec<LocationId> {
    schema
        .location_ids()
        .filter(|l| Placement::At(*l) != current)
        .collect()
}

/// Moves one task-relevant object (one the goal mentions, or any object when
/// the goal is empty) to a location it does not occupy.
fn relocate(state: &State, goal: &GoalSpec, schema: &WorldSchema, rng: &mut ChaCha8Rng) -> Option<State> {
    let mut candidates: Vec<_> = goal.assertions().map(|(o, _)| o).collect();
    if candidates.is_empty() {
        candidates = schema.object_ids().collect();
    }
    let o = *candidates.choose(rng)?;
    let l = *other_locations(schema, state.placement(o)).choose(rng)?;
    Some(state.with_placement(o, Placement::At(l)))
}

fn shift_goal(goal: &GoalSpec, schema: &WorldSchema, rng: &mut ChaCha8Rng) -> Option<GoalSpec> {
    let asserted: Vec<_> = goal.assertions().collect();
    let (o, current) = match asserted.choose(rng) {
        Some((o, l)) => (*o, Some(*l)),
        None => (*schema.object_ids().collect::<Vec<_>>().choose(rng)?, None),
    };
    let choices: Vec<_> = schema.location_ids().filter(|l| Some(*l) != current).collect();
    let l = *choices.choose(rng)?;
    let moved = asserted
        .into_iter()
        .map(|(ao, al)| if ao == o { (ao, l) } else { (ao, al) })
        .chain(current.is_none().then_some((o, l)));
    GoalSpec::new(schema, moved).ok()
}

/// Steps that fail immediately in `state`.
fn violating_steps(state: &State) -> Vec<PlanStep> {
    let mut out = Vec::new();
    for (o, p) in state.placements() {
        match p {
            Placement::Held => out.push(PlanStep::pick(o)),
            Placement::At(l) => {
                out.push(PlanStep::put(o));
                if l != state.agent_at() {
                    out.push(PlanStep::pick(o));
                }
            }
        }
    }
    if out.is_empty() {
        out.push(PlanStep {
            action: crate::world::Action::Pick,
            operand: Entity::Location(state.agent_at()),
        });
    }
    out
}

/// Inserts one step that fails in the state reached at a random position.
fn break_plan(plan: &Plan, init: &State, schema: &WorldSchema, rng: &mut ChaCha8Rng) -> Plan {
    let at = rng.random_range(0..=plan.len());
    let prefix = Plan::new(plan.steps[..at].to_vec());
    let state = execute_plan(init, &prefix, schema).unwrap_or_else(|_| init.clone());
    let bad = violating_steps(&state)
        .choose(rng)
        .cloned()
        .expect("violating_steps is never empty");
    let mut steps = plan.steps.clone();
    steps.insert(at, bad);
    Plan::new(steps)
}

fn malform(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    if lines.is_empty() {
        return "???".into();
    }
    let i = rng.random_range(0..lines.len());
    let line = lines[i].trim_end().trim_end_matches(')').to_string();
    lines[i] = line;
    lines.join("\n")
}

/// Seeded per-section corruption of the oracle answer.
///
/// Each eligible section is corrupted independently with probability
/// `corruption_prob`. State corruption relocates one object; the plan is then
/// derived from the (possibly wrong) perceived states, and plan corruption
/// inserts a failing step. A share `malformed_prob` of corruptions instead
/// damage one line's syntax while leaving the perceived content intact.
/// Sections covered by `guidance` are never corrupted.
pub fn noisy_respond_detailed(
    sample: &Sample,
    config: &NoisyConfig,
    guidance: Guidance,
    salt: Option<u64>,
) -> NoisyResponse {
    let schema = &sample.schema;
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(config.seed, salt, &sample.id));
    let mut corrupted = Vec::new();
    let mut malformed = Vec::new();

    // (corrupt?, malformed?) for each section, drawn up front so sections are independent.
    let mut rolls = [(false, false); 3];
    for (i, section) in Section::ALL.iter().enumerate() {
        let eligible = config.sections.contains(section)
            && !(*section == Section::InitialState && guidance.init)
            && !(*section == Section::GoalState && guidance.goal);
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let corrupt = eligible && u < config.corruption_prob;
        rolls[i] = (corrupt, corrupt && v < config.malformed_prob);
    }

    let mut init_text = serialize_state(&sample.init_state, schema);
    let mut perceived_init = sample.init_state.clone();
    match rolls[0] {
        (true, true) => {
            init_text = malform(&init_text, &mut rng);
            corrupted.push(Section::InitialState);
            malformed.push(Section::InitialState);
        }
        (true, false) => {
            if let Some(s) = relocate(&sample.init_state, &sample.goal, schema, &mut rng) {
                init_text = serialize_state(&s, schema);
                perceived_init = s;
                corrupted.push(Section::InitialState);
            }
        }
        _ => {}
    }

    let mut goal_text = serialize_goal(&sample.goal, schema);
    let mut perceived_goal = sample.goal.clone();
    match rolls[1] {
        (true, true) => {
            goal_text = malform(&goal_text, &mut rng);
            corrupted.push(Section::GoalState);
            malformed.push(Section::GoalState);
        }
        (true, false) => {
            if let Some(g) = shift_goal(&sample.goal, schema, &mut rng) {
                goal_text = serialize_goal(&g, schema);
                perceived_goal = g;
                corrupted.push(Section::GoalState);
            }
        }
        _ => {}
    }

    let plan = engine_plan(&perceived_init, &perceived_goal, schema).unwrap_or_default();
    let mut plan_text = serialize_plan(&plan, schema);
    match rolls[2] {
        (true, true) => {
            plan_text = malform(&plan_text, &mut rng);
            corrupted.push(Section::Plan);
            malformed.push(Section::Plan);
        }
        (true, false) => {
            let broken = break_plan(&plan, &perceived_init, schema, &mut rng);
            plan_text = serialize_plan(&broken, schema);
            corrupted.push(Section::Plan);
        }
        _ => {}
    }

    NoisyResponse {
        text: render_sections(&[
            (Section::InitialState, init_text.as_str()),
            (Section::GoalState, goal_text.as_str()),
            (Section::Plan, plan_text.as_str()),
        ]),
        corrupted,
        malformed,
    }
}

pub fn noisy_respond(sample: &Sample, p: f64, seed: u64) -> String {
    noisy_respond_detailed(sample, &NoisyConfig::new(p, seed), Guidance::default(), None).text
}

pub struct NoisyBackend {
    config: NoisyConfig,
}

impl NoisyBackend {
    pub fn new(config: NoisyConfig) -> Self {
        NoisyBackend { config }
    }
}

impl ModelBackend for NoisyBackend {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, GatewayError> {
        let started = Instant::now();
        let ctx = context(request)?;
        let out = noisy_respond_detailed(&ctx.sample, &self.config, ctx.guidance, request.generation.seed);
        Ok(Completion {
            text: out.text,
            attempts: 1,
            latency: started.elapsed(),
        })
    }

    fn label(&self) -> String {
        format!("noisy(p={})", self.config.corruption_prob)
    }
}

/// Lines following the last `header` line up to the first blank line. The
/// last block belongs to the task; earlier ones belong to the demonstration.
pub(crate) fn block_after(prompt: &str, header: &str) -> Option<String> {
    let lines: Vec<&str> = prompt.lines().collect();
    let start = lines.iter().rposition(|l| l.trim() == header)?;
    Some(
        lines[start + 1..]
            .iter()
            .take_while(|l| !l.trim().is_empty())
            .copied()
            .collect::<Vec<_>>()
            .join("\n"),
    )
}

/// Plans with the engine from the ground-truth state blocks a guided prompt
/// embeds. Without both blocks the plan is empty.
fn echo_plan(request: &ModelRequest, sample: &Sample) -> String {
    let prompt = request.rendered_text();
    let schema = &sample.schema;
    let states = block_after(&prompt, KNOWN_INIT_HEADER)
        .and_then(|t| parse_state(&t, schema).ok())
        .zip(block_after(&prompt, KNOWN_GOAL_HEADER).and_then(|t| parse_goal(&t, schema).ok()));
    let plan = states
        .and_then(|(init, goal)| engine_plan(&init, &goal, schema))
        .map(|p| serialize_plan(&p, schema))
        .unwrap_or_default();
    render_sections(&[(Section::Plan, plan.as_str())])
}

pub struct ScriptedBackend {
    config: ScriptedConfig,
}

impl ScriptedBackend {
    pub fn new(config: ScriptedConfig) -> Self {
        ScriptedBackend { config }
    }

    pub fn reply(text: impl Into<String>) -> Self {
        ScriptedBackend::new(ScriptedConfig {
            reply: Some(text.into()),
            ..ScriptedConfig::default()
        })
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, request: &ModelRequest) -> Result<Completion, GatewayError> {
        let started = Instant::now();
        let text = if self.config.echo {
            echo_plan(request, &context(request)?.sample)
        } else {
            let by_id = request
                .context
                .as_ref()
                .and_then(|c| self.config.replies.get(&c.sample.id));
            by_id
                .or(self.config.reply.as_ref())
                .cloned()
                .unwrap_or_default()
        };
        Ok(Completion {
            text,
            attempts: 1,
            latency: started.elapsed(),
        })
    }

    fn label(&self) -> String {
        if self.config.echo {
            "scripted-echo".into()
        } else {
            "scripted".into()
        }
    }
}
