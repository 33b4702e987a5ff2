//! World model: scenario vocabulary, states, goals, plans and the plan judge.
//!
//! Everything here is an immutable value. Execution is a pure left fold of
//! [`apply_step`] over a plan, so the judge can be called from any number of
//! workers at once.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GOTO: &str = "goto";
pub const PICK: &str = "pick";
pub const PUT: &str = "put";

/// Reserved location the agent starts at when a record does not say otherwise.
pub const START_LOCATION: &str = "start";

const DELIMITERS: &[char] = &['(', ')', ',', '\n', '\r'];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u16);

/// A resolved name: either a location or an object of the schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Entity {
    Location(LocationId),
    Object(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("name {0:?} is empty or has surrounding whitespace")]
    BlankName(String),
    #[error("name {0:?} contains a structural delimiter")]
    Delimiter(String),
    #[error("duplicate name {0:?}")]
    Duplicate(String),
    #[error("action types must include {0:?}")]
    MissingAction(&'static str),
    #[error("carry capacity must be positive")]
    ZeroCapacity,
    #[error("at least one location is required")]
    NoLocations,
    #[error("too many names (limit {limit})")]
    TooLarge { limit: usize },
}

/// The fixed vocabulary of a scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SchemaRecord", into = "SchemaRecord")]
pub struct WorldSchema {
    locations: Vec<String>,
    objects: Vec<String>,
    action_types: Vec<String>,
    carry_capacity: usize,
    index: HashMap<String, Entity>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SchemaRecord {
    locations: Vec<String>,
    objects: Vec<String>,
    action_types: Vec<String>,
    #[serde(default = "default_capacity")]
    carry_capacity: usize,
}

fn default_capacity() -> usize {
    1
}

impl TryFrom<SchemaRecord> for WorldSchema {
    type Error = SchemaError;

    fn try_from(r: SchemaRecord) -> Result<Self, Self::Error> {
        WorldSchema::new(r.locations, r.objects, r.action_types, r.carry_capacity)
    }
}

impl From<WorldSchema> for SchemaRecord {
    fn from(s: WorldSchema) -> Self {
        SchemaRecord {
            locations: s.locations,
            objects: s.objects,
            action_types: s.action_types,
            carry_capacity: s.carry_capacity,
        }
    }
}

impl PartialEq for WorldSchema {
    fn eq(&self, other: &Self) -> bool {
        self.locations == other.locations
            && self.objects == other.objects
            && self.action_types == other.action_types
            && self.carry_capacity == other.carry_capacity
    }
}

impl Eq for WorldSchema {}

fn check_name(name: &str) -> Result<(), SchemaError> {
    if name.is_empty() || name.trim() != name {
        return Err(SchemaError::BlankName(name.to_string()));
    }
    if name.contains(DELIMITERS) {
        return Err(SchemaError::Delimiter(name.to_string()));
    }
    Ok(())
}

impl WorldSchema {
    pub fn new(
        locations: Vec<String>,
        objects: Vec<String>,
        action_types: Vec<String>,
        carry_capacity: usize,
    ) -> Result<Self, SchemaError> {
        let limit = u16::MAX as usize;
        if locations.len() > limit || objects.len() > limit {
            return Err(SchemaError::TooLarge { limit });
        }
        if locations.is_empty() {
            return Err(SchemaError::NoLocations);
        }
        if carry_capacity == 0 {
            return Err(SchemaError::ZeroCapacity);
        }
        let mut index = HashMap::with_capacity(locations.len() + objects.len());
        for (i, name) in locations.iter().enumerate() {
            check_name(name)?;
            if index.insert(name.clone(), Entity::Location(LocationId(i as u16))).is_some() {
                return Err(SchemaError::Duplicate(name.clone()));
            }
        }
        for (i, name) in objects.iter().enumerate() {
            check_name(name)?;
            if index.insert(name.clone(), Entity::Object(ObjectId(i as u16))).is_some() {
                return Err(SchemaError::Duplicate(name.clone()));
            }
        }
        let mut seen = Vec::with_capacity(action_types.len());
        for name in &action_types {
            check_name(name)?;
            let lower = name.to_lowercase();
            if seen.contains(&lower) {
                return Err(SchemaError::Duplicate(name.clone()));
            }
            seen.push(lower);
        }
        for required in [GOTO, PICK, PUT] {
            if !seen.iter().any(|a| a == required) {
                return Err(SchemaError::MissingAction(required));
            }
        }
        Ok(WorldSchema {
            locations,
            objects,
            action_types,
            carry_capacity,
            index,
        })
    }

    /// Schema with the canonical `goto`/`pick`/`put` actions and capacity 1.
    pub fn canonical<L, O>(locations: L, objects: O) -> Result<Self, SchemaError>
    where
        L: IntoIterator,
        L::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
    {
        WorldSchema::new(
            locations.into_iter().map(Into::into).collect(),
            objects.into_iter().map(Into::into).collect(),
            vec![GOTO.into(), PICK.into(), PUT.into()],
            1,
        )
    }

    pub fn with_capacity(mut self, carry_capacity: usize) -> Result<Self, SchemaError> {
        if carry_capacity == 0 {
            return Err(SchemaError::ZeroCapacity);
        }
        self.carry_capacity = carry_capacity;
        Ok(self)
    }

    /// Returns a copy with `name` appended as a location unless it is already one.
    pub fn with_location(&self, name: &str) -> Result<Self, SchemaError> {
        if self.location(name).is_some() {
            return Ok(self.clone());
        }
        let mut locations = self.locations.clone();
        locations.push(name.to_string());
        WorldSchema::new(
            locations,
            self.objects.clone(),
            self.action_types.clone(),
            self.carry_capacity,
        )
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn action_types(&self) -> &[String] {
        &self.action_types
    }

    pub fn carry_capacity(&self) -> usize {
        self.carry_capacity
    }

    pub fn location_ids(&self) -> impl Iterator<Item = LocationId> + '_ {
        (0..self.locations.len()).map(|i| LocationId(i as u16))
    }

    pub fn object_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        (0..self.objects.len()).map(|i| ObjectId(i as u16))
    }

    pub fn resolve(&self, name: &str) -> Option<Entity> {
        self.index.get(name).copied()
    }

    pub fn location(&self, name: &str) -> Option<LocationId> {
        match self.resolve(name) {
            Some(Entity::Location(id)) => Some(id),
            _ => None,
        }
    }

    pub fn object(&self, name: &str) -> Option<ObjectId> {
        match self.resolve(name) {
            Some(Entity::Object(id)) => Some(id),
            _ => None,
        }
    }

    /// Looks up a declared action type case-insensitively.
    pub fn action(&self, name: &str) -> Option<Action> {
        let wanted = name.to_lowercase();
        let declared = self.action_types.iter().find(|a| a.to_lowercase() == wanted)?;
        Some(Action::from_name(declared))
    }

    pub fn location_name(&self, id: LocationId) -> &str {
        &self.locations[id.0 as usize]
    }

    pub fn object_name(&self, id: ObjectId) -> &str {
        &self.objects[id.0 as usize]
    }

    pub fn entity_name(&self, entity: Entity) -> &str {
        match entity {
            Entity::Location(l) => self.location_name(l),
            Entity::Object(o) => self.object_name(o),
        }
    }

    pub fn has_location(&self, id: LocationId) -> bool {
        (id.0 as usize) < self.locations.len()
    }

    pub fn has_object(&self, id: ObjectId) -> bool {
        (id.0 as usize) < self.objects.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Placement {
    At(LocationId),
    Held,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("state places {found} objects but the schema declares {expected}")]
    ObjectCount { expected: usize, found: usize },
    #[error("unknown location id {0}")]
    UnknownLocation(u16),
    #[error("unknown object id {0}")]
    UnknownObject(u16),
    #[error("{held} objects held but capacity is {capacity}")]
    CapacityExceeded { held: usize, capacity: usize },
    #[error("object {0} appears in more than one goal assertion")]
    DuplicateAssertion(u16),
}

/// A complete configuration: one placement per schema object plus the agent location.
///
/// Placements are indexed by object id, so two states with equal placements
/// and agent location are equal and hash equally however they were built.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    placements: Vec<Placement>,
    agent_at: LocationId,
}

impl State {
    pub fn new(
        schema: &WorldSchema,
        placements: Vec<Placement>,
        agent_at: LocationId,
    ) -> Result<Self, StateError> {
        let state = State {
            placements,
            agent_at,
        };
        state.check(schema)?;
        Ok(state)
    }

    /// Builds a state from names; `None` means the object is held.
    pub fn from_names(
        schema: &WorldSchema,
        placements: &[(&str, Option<&str>)],
        agent_at: &str,
    ) -> Result<Self, NameError> {
        let mut slots = vec![None; schema.objects().len()];
        for (object, location) in placements {
            let o = schema
                .object(object)
                .ok_or_else(|| NameError(object.to_string()))?;
            let p = match location {
                Some(l) => Placement::At(schema.location(l).ok_or_else(|| NameError(l.to_string()))?),
                None => Placement::Held,
            };
            slots[o.0 as usize] = Some(p);
        }
        let agent = schema
            .location(agent_at)
            .ok_or_else(|| NameError(agent_at.to_string()))?;
        let placements = slots
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| NameError(schema.objects()[i].clone())))
            .collect::<Result<Vec<_>, _>>()?;
        State::new(schema, placements, agent).map_err(|e| NameError(e.to_string()))
    }

    pub fn check(&self, schema: &WorldSchema) -> Result<(), StateError> {
        if self.placements.len() != schema.objects().len() {
            return Err(StateError::ObjectCount {
                expected: schema.objects().len(),
                found: self.placements.len(),
            });
        }
        if !schema.has_location(self.agent_at) {
            return Err(StateError::UnknownLocation(self.agent_at.0));
        }
        for p in &self.placements {
            if let Placement::At(l) = p {
                if !schema.has_location(*l) {
                    return Err(StateError::UnknownLocation(l.0));
                }
            }
        }
        let held = self.held_count();
        if held > schema.carry_capacity() {
            return Err(StateError::CapacityExceeded {
                held,
                capacity: schema.carry_capacity(),
            });
        }
        Ok(())
    }

    pub fn placement(&self, object: ObjectId) -> Placement {
        self.placements[object.0 as usize]
    }

    pub fn placements(&self) -> impl Iterator<Item = (ObjectId, Placement)> + '_ {
        self.placements
            .iter()
            .enumerate()
            .map(|(i, p)| (ObjectId(i as u16), *p))
    }

    pub fn agent_at(&self) -> LocationId {
        self.agent_at
    }

    pub fn held_count(&self) -> usize {
        self.placements
            .iter()
            .filter(|p| matches!(p, Placement::Held))
            .count()
    }

    pub fn is_held(&self, object: ObjectId) -> bool {
        matches!(self.placement(object), Placement::Held)
    }

    /// Copy with one object moved. Does not re-check invariants.
    pub fn with_placement(&self, object: ObjectId, placement: Placement) -> State {
        let mut next = self.clone();
        next.placements[object.0 as usize] = placement;
        next
    }

    pub fn with_agent_at(&self, location: LocationId) -> State {
        State {
            placements: self.placements.clone(),
            agent_at: location,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown or missing name {0:?}")]
pub struct NameError(pub String);

/// A partial goal: a set of `At(object, location)` assertions, at most one per object.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct GoalSpec {
    assertions: BTreeMap<ObjectId, LocationId>,
}

impl GoalSpec {
    pub fn new(
        schema: &WorldSchema,
        assertions: impl IntoIterator<Item = (ObjectId, LocationId)>,
    ) -> Result<Self, StateError> {
        let mut map = BTreeMap::new();
        for (o, l) in assertions {
            if map.insert(o, l).is_some() {
                return Err(StateError::DuplicateAssertion(o.0));
            }
        }
        let goal = GoalSpec { assertions: map };
        goal.check(schema)?;
        Ok(goal)
    }

    pub fn from_names(schema: &WorldSchema, assertions: &[(&str, &str)]) -> Result<Self, NameError> {
        let mut resolved = Vec::with_capacity(assertions.len());
        for (o, l) in assertions {
            let obj = schema.object(o).ok_or_else(|| NameError(o.to_string()))?;
            let loc = schema.location(l).ok_or_else(|| NameError(l.to_string()))?;
            resolved.push((obj, loc));
        }
        GoalSpec::new(schema, resolved).map_err(|e| NameError(e.to_string()))
    }

    pub fn check(&self, schema: &WorldSchema) -> Result<(), StateError> {
        for (o, l) in &self.assertions {
            if !schema.has_object(*o) {
                return Err(StateError::UnknownObject(o.0));
            }
            if !schema.has_location(*l) {
                return Err(StateError::UnknownLocation(l.0));
            }
        }
        Ok(())
    }

    /// Assertions in object-id order.
    pub fn assertions(&self) -> impl Iterator<Item = (ObjectId, LocationId)> + '_ {
        self.assertions.iter().map(|(o, l)| (*o, *l))
    }

    pub fn target(&self, object: ObjectId) -> Option<LocationId> {
        self.assertions.get(&object).copied()
    }

    pub fn len(&self) -> usize {
        self.assertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assertions.is_empty()
    }

    pub fn is_subset_of(&self, other: &GoalSpec) -> bool {
        self.assertions
            .iter()
            .all(|(o, l)| other.assertions.get(o) == Some(l))
    }

    /// Every object placed somewhere is asserted at that place.
    pub fn from_state(state: &State) -> GoalSpec {
        GoalSpec {
            assertions: state
                .placements()
                .filter_map(|(o, p)| match p {
                    Placement::At(l) => Some((o, l)),
                    Placement::Held => None,
                })
                .collect(),
        }
    }
}

/// Action type of a plan step.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Goto,
    Pick,
    Put,
    /// Declared by the schema but without executable semantics.
    Other(String),
}

impl Action {
    pub fn from_name(name: &str) -> Action {
        match name.to_lowercase().as_str() {
            GOTO => Action::Goto,
            PICK => Action::Pick,
            PUT => Action::Put,
            _ => Action::Other(name.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Action::Goto => GOTO,
            Action::Pick => PICK,
            Action::Put => PUT,
            Action::Other(n) => n,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlanStep {
    pub action: Action,
    pub operand: Entity,
}

impl PlanStep {
    pub fn goto(l: LocationId) -> Self {
        PlanStep {
            action: Action::Goto,
            operand: Entity::Location(l),
        }
    }

    pub fn pick(o: ObjectId) -> Self {
        PlanStep {
            action: Action::Pick,
            operand: Entity::Object(o),
        }
    }

    pub fn put(o: ObjectId) -> Self {
        PlanStep {
            action: Action::Put,
            operand: Entity::Object(o),
        }
    }

    pub fn render(&self, schema: &WorldSchema) -> String {
        let operand = match self.operand {
            Entity::Location(l) if schema.has_location(l) => schema.location_name(l).to_string(),
            Entity::Object(o) if schema.has_object(o) => schema.object_name(o).to_string(),
            Entity::Location(l) => format!("<location {}>", l.0),
            Entity::Object(o) => format!("<object {}>", o.0),
        };
        format!("{}({})", self.action, operand)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        Plan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl FromIterator<PlanStep> for Plan {
    fn from_iter<I: IntoIterator<Item = PlanStep>>(iter: I) -> Self {
        Plan {
            steps: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExecutionErrorKind {
    PickNotAtObjectLocation,
    PickWhileAlreadyHeld,
    PickCapacityExceeded,
    PutNotHeld,
    UnknownName,
    WrongOperandKind,
}

impl ExecutionErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExecutionErrorKind::PickNotAtObjectLocation => "PickNotAtObjectLocation",
            ExecutionErrorKind::PickWhileAlreadyHeld => "PickWhileAlreadyHeld",
            ExecutionErrorKind::PickCapacityExceeded => "PickCapacityExceeded",
            ExecutionErrorKind::PutNotHeld => "PutNotHeld",
            ExecutionErrorKind::UnknownName => "UnknownName",
            ExecutionErrorKind::WrongOperandKind => "WrongOperandKind",
        }
    }
}

/// Why a single step could not be applied.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}: {message}", kind.as_str())]
pub struct StepFault {
    pub kind: ExecutionErrorKind,
    pub message: String,
}

/// First violated precondition of a plan, with its 0-based step index.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("step {step_index}: {}: {message}", kind.as_str())]
pub struct ExecutionError {
    pub step_index: usize,
    pub kind: ExecutionErrorKind,
    pub message: String,
}

fn fault(kind: ExecutionErrorKind, message: String) -> StepFault {
    StepFault { kind, message }
}

/// Applies one step. `goto` to the current location is a no-op.
pub fn apply_step(state: &State, step: &PlanStep, schema: &WorldSchema) -> Result<State, StepFault> {
    use ExecutionErrorKind::*;

    let next = match (&step.action, step.operand) {
        (Action::Other(name), _) => {
            return Err(fault(
                UnknownName,
                format!("action {name:?} has no executable semantics"),
            ))
        }
        (_, Entity::Location(l)) if !schema.has_location(l) => {
            return Err(fault(UnknownName, format!("location id {} not in schema", l.0)))
        }
        (_, Entity::Object(o)) if !schema.has_object(o) => {
            return Err(fault(UnknownName, format!("object id {} not in schema", o.0)))
        }
        (Action::Goto, Entity::Location(l)) => state.with_agent_at(l),
        (Action::Pick, Entity::Object(o)) => {
            let name = schema.object_name(o);
            match state.placement(o) {
                Placement::Held => {
                    return Err(fault(PickWhileAlreadyHeld, format!("{name} is already held")))
                }
                Placement::At(l) if l != state.agent_at() => {
                    return Err(fault(
                        PickNotAtObjectLocation,
                        format!(
                            "{name} is at {} but the agent is at {}",
                            schema.location_name(l),
                            schema.location_name(state.agent_at())
                        ),
                    ))
                }
                Placement::At(_) => {}
            }
            if state.held_count() >= schema.carry_capacity() {
                return Err(fault(
                    PickCapacityExceeded,
                    format!(
                        "cannot pick {name}: already holding {} of {}",
                        state.held_count(),
                        schema.carry_capacity()
                    ),
                ));
            }
            state.with_placement(o, Placement::Held)
        }
        (Action::Put, Entity::Object(o)) => {
            if !state.is_held(o) {
                return Err(fault(
                    PutNotHeld,
                    format!("{} is not held", schema.object_name(o)),
                ));
            }
            state.with_placement(o, Placement::At(state.agent_at()))
        }
        (action, operand) => {
            return Err(fault(
                WrongOperandKind,
                format!(
                    "{action} cannot take {} as operand",
                    schema.entity_name(operand)
                ),
            ))
        }
    };
    debug_assert!(next.check(schema).is_ok(), "transition broke state invariants");
    Ok(next)
}

/// Left fold of [`apply_step`]; stops at the first error.
pub fn execute_plan(init: &State, plan: &Plan, schema: &WorldSchema) -> Result<State, ExecutionError> {
    let mut state = init.clone();
    for (step_index, step) in plan.steps.iter().enumerate() {
        state = apply_step(&state, step, schema).map_err(|f| ExecutionError {
            step_index,
            kind: f.kind,
            message: f.message,
        })?;
    }
    Ok(state)
}

/// How a goal is matched against an outcome state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Only the asserted objects are constrained.
    #[default]
    Subset,
    /// Asserted objects must match, unasserted objects must keep their
    /// initial placement, and nothing may be left held.
    Strict,
}

pub fn goal_satisfied(outcome: &State, goal: &GoalSpec) -> bool {
    goal.assertions()
        .all(|(o, l)| outcome.placement(o) == Placement::At(l))
}

pub fn goal_satisfied_with(mode: GoalMode, init: &State, outcome: &State, goal: &GoalSpec) -> bool {
    match mode {
        GoalMode::Subset => goal_satisfied(outcome, goal),
        GoalMode::Strict => {
            goal_satisfied(outcome, goal)
                && outcome.placements().all(|(o, p)| {
                    p != Placement::Held
                        && (goal.target(o).is_some() || p == init.placement(o))
                })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub valid: bool,
    pub outcome: Option<State>,
    pub error: Option<ExecutionError>,
}

pub fn judge_plan(init: &State, plan: &Plan, goal: &GoalSpec, schema: &WorldSchema) -> Verdict {
    judge_plan_with(GoalMode::Subset, init, plan, goal, schema)
}

pub fn judge_plan_with(
    mode: GoalMode,
    init: &State,
    plan: &Plan,
    goal: &GoalSpec,
    schema: &WorldSchema,
) -> Verdict {
    match execute_plan(init, plan, schema) {
        Ok(outcome) => Verdict {
            valid: goal_satisfied_with(mode, init, &outcome, goal),
            outcome: Some(outcome),
            error: None,
        },
        Err(error) => Verdict {
            valid: false,
            outcome: None,
            error: Some(error),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> WorldSchema {
        WorldSchema::canonical(["start", "kitchen", "table", "box"], ["apple", "cup"]).unwrap()
    }

    fn state(s: &WorldSchema, apple: Option<&str>, agent: &str) -> State {
        State::from_names(s, &[("apple", apple), ("cup", Some("box"))], agent).unwrap()
    }

    fn step(s: &WorldSchema, action: Action, name: &str) -> PlanStep {
        PlanStep {
            action,
            operand: s.resolve(name).unwrap(),
        }
    }

    #[test]
    fn pick_away_from_object_fails() {
        let s = schema();
        let init = state(&s, Some("table"), "kitchen");
        let err = apply_step(&init, &step(&s, Action::Pick, "apple"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::PickNotAtObjectLocation);
    }

    #[test]
    fn put_held_object_lands_at_agent() {
        let s = schema();
        let init = state(&s, None, "kitchen");
        let next = apply_step(&init, &step(&s, Action::Put, "apple"), &s).unwrap();
        assert_eq!(next, state(&s, Some("kitchen"), "kitchen"));
    }

    #[test]
    fn put_unheld_object_fails() {
        let s = schema();
        let init = state(&s, Some("table"), "kitchen");
        let err = apply_step(&init, &step(&s, Action::Put, "apple"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::PutNotHeld);
    }

    #[test]
    fn pick_errors_distinguish_held_and_capacity() {
        let s = schema();
        let init = state(&s, None, "box");
        let err = apply_step(&init, &step(&s, Action::Pick, "apple"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::PickWhileAlreadyHeld);
        let err = apply_step(&init, &step(&s, Action::Pick, "cup"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::PickCapacityExceeded);

        let roomy = schema().with_capacity(2).unwrap();
        let init = state(&roomy, None, "box");
        let next = apply_step(&init, &step(&roomy, Action::Pick, "cup"), &roomy).unwrap();
        assert_eq!(next.held_count(), 2);
    }

    #[test]
    fn wrong_operand_kinds_and_unknown_actions() {
        let s = WorldSchema::new(
            vec!["start".into(), "table".into()],
            vec!["apple".into()],
            vec!["goto".into(), "pick".into(), "put".into(), "open".into()],
            1,
        )
        .unwrap();
        let init = State::from_names(&s, &[("apple", Some("table"))], "start").unwrap();
        let err = apply_step(&init, &step(&s, Action::Goto, "apple"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::WrongOperandKind);
        let err = apply_step(&init, &step(&s, Action::Pick, "table"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::WrongOperandKind);
        let open = s.action("OPEN").unwrap();
        assert_eq!(open, Action::Other("open".into()));
        let err = apply_step(&init, &step(&s, open, "table"), &s).unwrap_err();
        assert_eq!(err.kind, ExecutionErrorKind::UnknownName);
    }

    #[test]
    fn goto_current_location_is_noop() {
        let s = schema();
        let init = state(&s, Some("table"), "kitchen");
        let next = apply_step(&init, &step(&s, Action::Goto, "kitchen"), &s).unwrap();
        assert_eq!(next, init);
    }

    #[test]
    fn execute_examples() {
        let s = schema();
        let init = state(&s, Some("table"), "start");
        assert_eq!(execute_plan(&init, &Plan::default(), &s).unwrap(), init);

        let plan = Plan::new(vec![
            step(&s, Action::Goto, "table"),
            step(&s, Action::Pick, "apple"),
            step(&s, Action::Goto, "box"),
            step(&s, Action::Put, "apple"),
        ]);
        let out = execute_plan(&init, &plan, &s).unwrap();
        assert_eq!(out, state(&s, Some("box"), "box"));

        let err = execute_plan(&init, &Plan::new(vec![step(&s, Action::Pick, "apple")]), &s)
            .unwrap_err();
        assert_eq!(err.step_index, 0);
        assert_eq!(err.kind, ExecutionErrorKind::PickNotAtObjectLocation);
    }

    #[test]
    fn goal_matching() {
        let s = schema();
        let any = state(&s, None, "start");
        assert!(goal_satisfied(&any, &GoalSpec::default()));
        let goal = GoalSpec::from_names(&s, &[("apple", "box")]).unwrap();
        assert!(goal_satisfied(&state(&s, Some("box"), "start"), &goal));
        assert!(!goal_satisfied(&state(&s, None, "box"), &goal));
    }

    #[test]
    fn strict_mode_constrains_unasserted_objects() {
        let s = schema();
        let init = state(&s, Some("table"), "start");
        let goal = GoalSpec::from_names(&s, &[("apple", "box")]).unwrap();
        let moved_cup = State::from_names(&s, &[("apple", Some("box")), ("cup", Some("table"))], "box")
            .unwrap();
        assert!(goal_satisfied_with(GoalMode::Subset, &init, &moved_cup, &goal));
        assert!(!goal_satisfied_with(GoalMode::Strict, &init, &moved_cup, &goal));
        let ok = state(&s, Some("box"), "box");
        assert!(goal_satisfied_with(GoalMode::Strict, &init, &ok, &goal));
    }

    #[test]
    fn judge_reports_errors_and_missed_goals() {
        let s = schema();
        let init = state(&s, Some("table"), "start");
        let goal = GoalSpec::from_names(&s, &[("apple", "box")]).unwrap();
        let bad = Plan::new(vec![step(&s, Action::Goto, "table"), step(&s, Action::Put, "apple")]);
        let v = judge_plan(&init, &bad, &goal, &s);
        assert!(!v.valid);
        assert_eq!(v.error.as_ref().map(|e| (e.step_index, e.kind)), Some((1, ExecutionErrorKind::PutNotHeld)));

        let short = Plan::new(vec![step(&s, Action::Goto, "table"), step(&s, Action::Pick, "apple")]);
        let v = judge_plan(&init, &short, &goal, &s);
        assert!(!v.valid);
        assert!(v.error.is_none());
        assert!(v.outcome.is_some());
    }

    #[test]
    fn schema_rejects_bad_vocabularies() {
        let acts = || vec!["goto".to_string(), "pick".into(), "put".into()];
        assert!(matches!(
            WorldSchema::new(vec!["a".into()], vec!["a".into()], acts(), 1),
            Err(SchemaError::Duplicate(_))
        ));
        assert!(matches!(
            WorldSchema::new(vec!["a(b".into()], vec![], acts(), 1),
            Err(SchemaError::Delimiter(_))
        ));
        assert!(matches!(
            WorldSchema::new(vec![" a".into()], vec![], acts(), 1),
            Err(SchemaError::BlankName(_))
        ));
        assert!(matches!(
            WorldSchema::new(vec!["a".into()], vec![], vec!["goto".into(), "pick".into()], 1),
            Err(SchemaError::MissingAction("put"))
        ));
        assert!(matches!(
            WorldSchema::new(vec!["a".into()], vec![], acts(), 0),
            Err(SchemaError::ZeroCapacity)
        ));
    }

    #[test]
    fn state_rejects_overfull_hands() {
        let s = schema();
        let err = State::new(&s, vec![Placement::Held, Placement::Held], LocationId(0)).unwrap_err();
        assert!(matches!(err, StateError::CapacityExceeded { held: 2, capacity: 1 }));
    }
}
