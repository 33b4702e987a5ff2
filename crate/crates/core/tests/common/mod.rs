#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;

use neuroground::world::{
    Action, Entity, ExecutionErrorKind, GoalSpec, LocationId, ObjectId, Placement, Plan, PlanStep, State,
    WorldSchema,
};

#[derive(Clone, Debug)]
pub struct Scenario {
    pub schema: WorldSchema,
    pub init: State,
    pub goal: GoalSpec,
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random schema with `locations` x `objects`, a state with up to
/// `capacity` held objects, and a goal over a random subset of objects.
pub fn scenario(locations: std::ops::RangeInclusive<usize>, objects: std::ops::RangeInclusive<usize>, capacity: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Scenario> {
    (locations, objects, capacity)
        .prop_flat_map(|(nl, no, cap)| {
            (
                Just((nl, no, cap)),
                prop::collection::vec((0..nl, any::<bool>()), no),
                0..nl,
                prop::collection::vec(prop::option::of(0..nl), no),
            )
        })
        .prop_map(|((nl, no, cap), places, agent, targets)| {
            let schema = WorldSchema::canonical(names("loc", nl), names("obj", no))
                .unwrap()
                .with_capacity(cap)
                .unwrap();
            let mut held = 0;
            let placements = places
                .iter()
                .map(|&(l, hold)| {
                    if hold && held < cap {
                        held += 1;
                        Placement::Held
                    } else {
                        Placement::At(LocationId(l as u16))
                    }
                })
                .collect();
            let init = State::new(&schema, placements, LocationId(agent as u16)).unwrap();
            let goal = GoalSpec::new(
                &schema,
                targets
                    .iter()
                    .enumerate()
                    .filter_map(|(o, t)| t.map(|l| (ObjectId(o as u16), LocationId(l as u16)))),
            )
            .unwrap();
            Scenario { schema, init, goal }
        })
}

/// Steps over the schema's names and a few out-of-schema ids and actions.
pub fn step(nl: usize, no: usize) -> impl Strategy<Value = PlanStep> {
    let action = prop_oneof![
        4 => Just(Action::Goto),
        4 => Just(Action::Pick),
        4 => Just(Action::Put),
        1 => Just(Action::Other("wave".into())),
    ];
    let operand = prop_oneof![
        (0..nl + 1).prop_map(|l| Entity::Location(LocationId(l as u16))),
        (0..no + 1).prop_map(|o| Entity::Object(ObjectId(o as u16))),
    ];
    (action, operand).prop_map(|(action, operand)| PlanStep { action, operand })
}

pub fn scenario_and_plan(max_len: usize) -> impl Strategy<Value = (Scenario, Plan)> {
    scenario(1..=4, 0..=4, 1..=2).prop_flat_map(move |s| {
        let (nl, no) = (s.schema.locations().len(), s.schema.objects().len());
        (Just(s), prop::collection::vec(step(nl, no), 0..max_len).prop_map(Plan::new))
    })
}

/// Name-level world used as a reference for the executor: objects map to a
/// location name or `None` when held.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefWorld {
    pub objects: BTreeMap<String, Option<String>>,
    pub agent: String,
}

impl RefWorld {
    pub fn of(state: &State, schema: &WorldSchema) -> Self {
        RefWorld {
            objects: state
                .placements()
                .map(|(o, p)| {
                    let name = schema.object_name(o).to_string();
                    let at = match p {
                        Placement::At(l) => Some(schema.location_name(l).to_string()),
                        Placement::Held => None,
                    };
                    (name, at)
                })
                .collect(),
            agent: schema.location_name(state.agent_at()).to_string(),
        }
    }
}

/// Reference executor following the action semantics directly, on names.
/// Returns the final world or the 0-based failing step and its kind.
pub fn ref_execute(
    world: &RefWorld,
    plan: &Plan,
    schema: &WorldSchema,
) -> Result<RefWorld, (usize, ExecutionErrorKind)> {
    use ExecutionErrorKind::*;
    let mut w = world.clone();
    let capacity = schema.carry_capacity();
    for (i, s) in plan.steps.iter().enumerate() {
        let name = match s.operand {
            Entity::Location(l) => schema.locations().get(l.0 as usize),
            Entity::Object(o) => schema.objects().get(o.0 as usize),
        };
        let Some(name) = name.cloned() else {
            return Err((i, UnknownName));
        };
        let is_loc = matches!(s.operand, Entity::Location(_));
        match (&s.action, is_loc) {
            (Action::Other(_), _) => return Err((i, UnknownName)),
            (Action::Goto, true) => w.agent = name,
            (Action::Pick, false) => {
                let held = w.objects.values().filter(|p| p.is_none()).count();
                match &w.objects[&name] {
                    None => return Err((i, PickWhileAlreadyHeld)),
                    Some(l) if *l != w.agent => return Err((i, PickNotAtObjectLocation)),
                    Some(_) if held >= capacity => return Err((i, PickCapacityExceeded)),
                    Some(_) => {
                        w.objects.insert(name, None);
                    }
                }
            }
            (Action::Put, false) => {
                if w.objects[&name].is_some() {
                    return Err((i, PutNotHeld));
                }
                w.objects.insert(name, Some(w.agent.clone()));
            }
            _ => return Err((i, WrongOperandKind)),
        }
    }
    Ok(w)
}

pub fn ref_goal_met(w: &RefWorld, goal: &GoalSpec, schema: &WorldSchema) -> bool {
    goal.assertions().all(|(o, l)| {
        w.objects[schema.object_name(o)].as_deref() == Some(schema.location_name(l))
    })
}
