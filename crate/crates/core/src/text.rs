//! Line grammar for states, goals and plans, and section extraction from
//! free-form model output.
//!
//! ```text
//! Initial State:
//! at(apple, table)
//! holding(cup)
//! agent_at(start)
//! Goal State:
//! at(apple, box)
//! Plan:
//! 1. goto(table)
//! 2. pick(apple)
//! ```
//!
//! Keywords and action names match case-insensitively. Object and location
//! names match exactly after whitespace trimming.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    Entity, GoalSpec, LocationId, ObjectId, Placement, Plan, PlanStep, State, WorldSchema,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    InitialState,
    GoalState,
    Plan,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::InitialState, Section::GoalState, Section::Plan];

    pub fn marker(&self) -> &'static str {
        match self {
            Section::InitialState => "Initial State:",
            Section::GoalState => "Goal State:",
            Section::Plan => "Plan:",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.marker().trim_end_matches(':'))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParseFailureKind {
    UnknownName,
    MalformedLine,
    MissingSection,
    DuplicatePlacement,
    /// A state leaves an object unplaced or omits the agent line.
    IncompleteState,
    /// A state holds more objects than the carry capacity allows.
    CapacityExceeded,
}

impl ParseFailureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParseFailureKind::UnknownName => "UnknownName",
            ParseFailureKind::MalformedLine => "MalformedLine",
            ParseFailureKind::MissingSection => "MissingSection",
            ParseFailureKind::DuplicatePlacement => "DuplicatePlacement",
            ParseFailureKind::IncompleteState => "IncompleteState",
            ParseFailureKind::CapacityExceeded => "CapacityExceeded",
        }
    }
}

/// First problem found while parsing a section. `line_number` is 1-based
/// within the section text; 0 means the section as a whole.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{section} line {line_number}: {}: {detail} ({raw_line:?})", kind.as_str())]
pub struct ParseFailure {
    pub section: Section,
    pub line_number: usize,
    pub kind: ParseFailureKind,
    pub raw_line: String,
    pub detail: String,
}

impl ParseFailure {
    pub fn missing(section: Section) -> Self {
        ParseFailure {
            section,
            line_number: 0,
            kind: ParseFailureKind::MissingSection,
            raw_line: String::new(),
            detail: format!("no {:?} marker", section.marker()),
        }
    }
}

pub fn serialize_state(state: &State, schema: &WorldSchema) -> String {
    let mut lines: Vec<String> = state
        .placements()
        .map(|(o, p)| match p {
            Placement::At(l) => format!(
                "at({}, {})",
                schema.object_name(o),
                schema.location_name(l)
            ),
            Placement::Held => format!("holding({})", schema.object_name(o)),
        })
        .collect();
    lines.push(format!("agent_at({})", schema.location_name(state.agent_at())));
    lines.join("\n")
}

pub fn serialize_goal(goal: &GoalSpec, schema: &WorldSchema) -> String {
    goal.assertions()
        .map(|(o, l)| format!("at({}, {})", schema.object_name(o), schema.location_name(l)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn serialize_plan(plan: &Plan, schema: &WorldSchema) -> String {
    plan.steps
        .iter()
        .enumerate()
        .map(|(i, step)| format!("{}. {}", i + 1, step.render(schema)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `keyword(arg, arg...)` split into its trimmed parts.
fn split_call(line: &str) -> Option<(&str, Vec<&str>)> {
    let open = line.find('(')?;
    let inner = line[open + 1..].strip_suffix(')')?;
    if inner.contains(['(', ')']) {
        return None;
    }
    let keyword = line[..open].trim();
    if keyword.is_empty() {
        return None;
    }
    Some((keyword, inner.split(',').map(str::trim).collect()))
}

struct LineCtx<'a> {
    section: Section,
    line_number: usize,
    raw: &'a str,
}

impl LineCtx<'_> {
    fn fail(&self, kind: ParseFailureKind, detail: impl Into<String>) -> ParseFailure {
        ParseFailure {
            section: self.section,
            line_number: self.line_number,
            kind,
            raw_line: self.raw.to_string(),
            detail: detail.into(),
        }
    }
}

enum StateLine {
    At(ObjectId, LocationId),
    Holding(ObjectId),
    AgentAt(LocationId),
}

fn parse_state_line(ctx: &LineCtx<'_>, schema: &WorldSchema) -> Result<StateLine, ParseFailure> {
    use ParseFailureKind::*;

    let line = ctx.raw.trim();
    let (keyword, args) =
        split_call(line).ok_or_else(|| ctx.fail(MalformedLine, "expected keyword(arguments)"))?;
    if args.iter().any(|a| a.is_empty()) {
        return Err(ctx.fail(MalformedLine, "empty argument"));
    }
    let object = |name: &str| {
        schema
            .object(name)
            .ok_or_else(|| ctx.fail(UnknownName, format!("{name:?} is not an object")))
    };
    let location = |name: &str| {
        schema
            .location(name)
            .ok_or_else(|| ctx.fail(UnknownName, format!("{name:?} is not a location")))
    };
    match (keyword.to_lowercase().as_str(), args.as_slice()) {
        ("at", [o, l]) => Ok(StateLine::At(object(o)?, location(l)?)),
        ("holding", [o]) => Ok(StateLine::Holding(object(o)?)),
        ("agent_at", [l]) => Ok(StateLine::AgentAt(location(l)?)),
        ("at" | "holding" | "agent_at", _) => Err(ctx.fail(MalformedLine, "wrong number of arguments")),
        _ => Err(ctx.fail(MalformedLine, format!("unknown keyword {keyword:?}"))),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses a complete state: every object placed exactly once and one agent line.
pub fn parse_state(text: &str, schema: &WorldSchema) -> Result<State, ParseFailure> {
    use ParseFailureKind::*;

    let section = Section::InitialState;
    let mut slots: Vec<Option<Placement>> = vec![None; schema.objects().len()];
    let mut agent: Option<LocationId> = None;
    let mut held = 0usize;
    for (line_number, raw) in content_lines(text) {
        let ctx = LineCtx {
            section,
            line_number,
            raw,
        };
        let (object, placement) = match parse_state_line(&ctx, schema)? {
            StateLine::AgentAt(l) => {
                if agent.replace(l).is_some() {
                    return Err(ctx.fail(DuplicatePlacement, "agent location given twice"));
                }
                continue;
            }
            StateLine::At(o, l) => (o, Placement::At(l)),
            StateLine::Holding(o) => {
                held += 1;
                if held > schema.carry_capacity() {
                    return Err(ctx.fail(
                        CapacityExceeded,
                        format!("carry capacity is {}", schema.carry_capacity()),
                    ));
                }
                (o, Placement::Held)
            }
        };
        let slot = &mut slots[object.0 as usize];
        if slot.is_some() {
            return Err(ctx.fail(
                DuplicatePlacement,
                format!("{} placed twice", schema.object_name(object)),
            ));
        }
        *slot = Some(placement);
    }
    let whole = |detail: String| ParseFailure {
        section,
        line_number: 0,
        kind: IncompleteState,
        raw_line: String::new(),
        detail,
    };
    let placements = slots
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| whole(format!("{} is not placed", schema.objects()[i]))))
        .collect::<Result<Vec<_>, _>>()?;
    let agent = agent.ok_or_else(|| whole("no agent_at line".into()))?;
    State::new(schema, placements, agent).map_err(|e| whole(e.to_string()))
}

/// Parses a partial goal: `at(...)` assertions only, each object at most once.
pub fn parse_goal(text: &str, schema: &WorldSchema) -> Result<GoalSpec, ParseFailure> {
    use ParseFailureKind::*;

    let section = Section::GoalState;
    let mut assertions = BTreeMap::new();
    for (line_number, raw) in content_lines(text) {
        let ctx = LineCtx {
            section,
            line_number,
            raw,
        };
        match parse_state_line(&ctx, schema)? {
            StateLine::At(o, l) => {
                if assertions.insert(o, l).is_some() {
                    return Err(ctx.fail(
                        DuplicatePlacement,
                        format!("{} asserted twice", schema.object_name(o)),
                    ));
                }
            }
            StateLine::Holding(_) | StateLine::AgentAt(_) => {
                return Err(ctx.fail(MalformedLine, "goals may only contain at(...) lines"))
            }
        }
    }
    Ok(GoalSpec::new(schema, assertions).expect("parsed names come from the schema"))
}

/// Strips a leading `<k>.` step number, returning it when present.
fn split_step_number(line: &str) -> Result<(Option<&str>, &str), ()> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Ok((None, line));
    }
    match line[digits..].strip_prefix('.') {
        Some(rest) => Ok((Some(&line[..digits]), rest.trim_start())),
        None => Err(()),
    }
}

/// Parses a plan of numbered (`1. goto(table)`) or unnumbered lines.
///
/// Names are checked against the schema; operand kinds are left to the
/// executor so that `goto(apple)` is judged rather than rejected here.
pub fn parse_plan(text: &str, schema: &WorldSchema) -> Result<Plan, ParseFailure> {
    use ParseFailureKind::*;

    let mut steps = Vec::new();
    for (line_number, raw) in content_lines(text) {
        let ctx = LineCtx {
            section: Section::Plan,
            line_number,
            raw,
        };
        let line = raw.trim();
        let (number, body) =
            split_step_number(line).map_err(|_| ctx.fail(MalformedLine, "bad step number"))?;
        if let Some(k) = number {
            if k.parse::<usize>().ok() != Some(steps.len() + 1) {
                return Err(ctx.fail(
                    MalformedLine,
                    format!("non-consecutive step number {k}, expected {}", steps.len() + 1),
                ));
            }
        }
        let (name, args) =
            split_call(body).ok_or_else(|| ctx.fail(MalformedLine, "expected action(operand)"))?;
        let [operand] = args.as_slice() else {
            return Err(ctx.fail(MalformedLine, "actions take exactly one operand"));
        };
        if operand.is_empty() {
            return Err(ctx.fail(MalformedLine, "empty operand"));
        }
        let action = schema
            .action(name)
            .ok_or_else(|| ctx.fail(UnknownName, format!("{name:?} is not an action type")))?;
        let operand: Entity = schema
            .resolve(operand)
            .ok_or_else(|| ctx.fail(UnknownName, format!("{operand:?} is not in the schema")))?;
        steps.push(PlanStep { action, operand });
    }
    Ok(Plan::new(steps))
}

/// Section payloads found in a model response.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sections {
    found: BTreeMap<Section, String>,
}

impl Sections {
    pub fn get(&self, section: Section) -> Result<&str, ParseFailure> {
        self.found
            .get(&section)
            .map(String::as_str)
            .ok_or_else(|| ParseFailure::missing(section))
    }

    pub fn contains(&self, section: Section) -> bool {
        self.found.contains_key(&section)
    }

    pub fn len(&self) -> usize {
        self.found.len()
    }

    pub fn is_empty(&self) -> bool {
        self.found.is_empty()
    }
}

/// Byte offsets of every marker occurrence that starts a line (ignoring
/// leading whitespace), as (marker start, payload start, section).
fn marker_positions(text: &str) -> Vec<(usize, usize, Section)> {
    let mut found = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let indent = line.len() - line.trim_start().len();
        let rest = &line[indent..];
        for section in Section::ALL {
            let marker = section.marker();
            if rest.len() >= marker.len()
                && rest.is_char_boundary(marker.len())
                && rest[..marker.len()].eq_ignore_ascii_case(marker)
            {
                let start = offset + indent;
                found.push((start, start + marker.len(), section));
            }
        }
        offset += line.len();
    }
    found
}

/// Splits a response into sections. The last occurrence of each marker wins;
/// its payload runs to the next marker occurrence of any kind, or the end.
pub fn extract_sections(model_output: &str) -> Sections {
    let markers = marker_positions(model_output);
    let mut found = BTreeMap::new();
    for section in Section::ALL {
        let Some(&(_, payload_start, _)) = markers.iter().rev().find(|m| m.2 == section) else {
            continue;
        };
        let end = markers
            .iter()
            .map(|m| m.0)
            .find(|&start| start >= payload_start)
            .unwrap_or(model_output.len());
        found.insert(section, model_output[payload_start..end].trim().to_string());
    }
    Sections { found }
}

/// Renders sections in canonical order, skipping absent ones.
pub fn render_sections(parts: &[(Section, &str)]) -> String {
    let mut parts = parts.to_vec();
    parts.sort_by_key(|(s, _)| *s);
    parts
        .iter()
        .map(|(s, body)| {
            if body.is_empty() {
                s.marker().to_string()
            } else {
                format!("{}\n{}", s.marker(), body)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Action;

    fn schema() -> WorldSchema {
        WorldSchema::canonical(["start", "kitchen", "table", "box"], ["apple"]).unwrap()
    }

    #[test]
    fn serialize_examples() {
        let s = schema();
        let st = State::from_names(&s, &[("apple", Some("table"))], "kitchen").unwrap();
        assert_eq!(serialize_state(&st, &s), "at(apple, table)\nagent_at(kitchen)");
        let held = State::from_names(&s, &[("apple", None)], "kitchen").unwrap();
        assert_eq!(serialize_state(&held, &s), "holding(apple)\nagent_at(kitchen)");
        let goal = GoalSpec::from_names(&s, &[("apple", "box")]).unwrap();
        assert_eq!(serialize_goal(&goal, &s), "at(apple, box)");
    }

    #[test]
    fn state_round_trip_and_failures() {
        let s = schema();
        let st = State::from_names(&s, &[("apple", Some("table"))], "kitchen").unwrap();
        assert_eq!(parse_state(&serialize_state(&st, &s), &s).unwrap(), st);

        let f = parse_goal("at(apple, moon)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::UnknownName);
        assert_eq!(f.raw_line, "at(apple, moon)");

        let f = parse_state("at(apple, table)\nat(apple, box)\nagent_at(start)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::DuplicatePlacement);
        assert_eq!(f.line_number, 2);

        let f = parse_state("at(apple, table)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::IncompleteState);

        let f = parse_goal("holding(apple)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::MalformedLine);
    }

    #[test]
    fn keywords_ignore_case_names_do_not() {
        let s = schema();
        let st = parse_state("  AT( apple ,table )\nAgent_At(kitchen)", &s).unwrap();
        assert_eq!(st, State::from_names(&s, &[("apple", Some("table"))], "kitchen").unwrap());
        let f = parse_state("at(Apple, table)\nagent_at(kitchen)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::UnknownName);
    }

    #[test]
    fn capacity_is_enforced_while_parsing() {
        let s = WorldSchema::canonical(["start"], ["a", "b"]).unwrap();
        let f = parse_state("holding(a)\nholding(b)\nagent_at(start)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::CapacityExceeded);
        assert_eq!(f.line_number, 2);
    }

    #[test]
    fn plan_examples() {
        let s = schema();
        let p = parse_plan("1. goto(table)\n2. pick(apple)", &s).unwrap();
        assert_eq!(p.steps[0].action, Action::Goto);
        assert_eq!(p.steps[1].action, Action::Pick);
        assert_eq!(parse_plan("goto(table)", &s).unwrap().len(), 1);
        let f = parse_plan("1. goto(table)\n3. pick(apple)", &s).unwrap_err();
        assert_eq!(f.kind, ParseFailureKind::MalformedLine);
        assert_eq!(f.line_number, 2);
        // operand kind is checked by the executor, not the parser
        assert!(parse_plan("goto(apple)", &s).is_ok());
        assert_eq!(parse_plan("fly(table)", &s).unwrap_err().kind, ParseFailureKind::UnknownName);
        assert_eq!(parse_plan("GOTO(table)\n", &s).unwrap().steps[0].action, Action::Goto);
        assert!(parse_plan("", &s).unwrap().is_empty());
    }

    #[test]
    fn sections_examples() {
        let out = "Initial State:\nat(a, t)\nGoal State:\nat(a, b)\nPlan:\n1. goto(t)";
        let sec = extract_sections(out);
        assert_eq!(sec.len(), 3);
        assert_eq!(sec.get(Section::InitialState).unwrap(), "at(a, t)");
        assert_eq!(sec.get(Section::GoalState).unwrap(), "at(a, b)");
        assert_eq!(sec.get(Section::Plan).unwrap(), "1. goto(t)");

        let only = extract_sections("blah\nPlan:\ngoto(t)");
        assert_eq!(only.len(), 1);
        assert_eq!(
            only.get(Section::InitialState).unwrap_err().kind,
            ParseFailureKind::MissingSection
        );

        let twice = extract_sections("Plan:\ngoto(x)\nok now for real\nplan:\ngoto(y)");
        assert_eq!(twice.get(Section::Plan).unwrap(), "goto(y)");
    }

    #[test]
    fn section_order_does_not_matter() {
        let a = extract_sections("Plan:\n1. goto(t)\nGoal State:\nat(a, b)\nInitial State:\nat(a, t)");
        let b = extract_sections("Initial State:\nat(a, t)\nGoal State:\nat(a, b)\nPlan:\n1. goto(t)");
        assert_eq!(a, b);
    }

    #[test]
    fn markers_must_start_a_line() {
        let s = extract_sections("Here is my Plan: nothing\n");
        assert!(!s.contains(Section::Plan));
    }
}
