//! Symbolic planning engine: A* over the location/object state graph with
//! unit action costs, plus a breadth-first reference search.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{
    apply_step, goal_satisfied, GoalSpec, Placement, Plan, PlanStep, State, StateError, WorldSchema,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    pub max_expanded_nodes: usize,
    #[serde(with = "duration_secs")]
    pub wall_timeout: Duration,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_expanded_nodes: 200_000,
            wall_timeout: Duration::from_secs(10),
        }
    }
}

impl SearchBudget {
    pub fn new(max_expanded_nodes: usize, wall_timeout: Duration) -> Result<Self, EngineError> {
        if max_expanded_nodes == 0 || wall_timeout.is_zero() {
            return Err(EngineError::InvalidBudget);
        }
        Ok(SearchBudget {
            max_expanded_nodes,
            wall_timeout,
        })
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EngineResult {
    Solved { plan: Plan, expanded: usize },
    /// The reachable state space was exhausted without meeting the goal.
    Unsolvable,
    BudgetExceeded,
}

impl EngineResult {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            EngineResult::Solved { plan, .. } => Some(plan),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("initial state does not match the schema: {0}")]
    InitMismatch(StateError),
    #[error("goal does not match the schema: {0}")]
    GoalMismatch(StateError),
    #[error("search budget must be strictly positive")]
    InvalidBudget,
}

fn check_query(init: &State, goal: &GoalSpec, schema: &WorldSchema) -> Result<(), EngineError> {
    init.check(schema).map_err(EngineError::InitMismatch)?;
    goal.check(schema).map_err(EngineError::GoalMismatch)?;
    Ok(())
}

/// Goal-count heuristic: each unsatisfied assertion costs 1 if its object is
/// held (one `put` remains) and 2 otherwise (`pick` then `put`).
pub fn heuristic(state: &State, goal: &GoalSpec) -> u32 {
    goal.assertions()
        .map(|(o, l)| match state.placement(o) {
            Placement::At(at) if at == l => 0,
            Placement::Held => 1,
            Placement::At(_) => 2,
        })
        .sum()
}

/// Legal successors in a fixed order: `goto` over locations, then `pick`,
/// then `put`, each in schema order. `goto` to the current location is skipped.
fn successors(state: &State, schema: &WorldSchema, out: &mut Vec<(PlanStep, State)>) {
    out.clear();
    for l in schema.location_ids() {
        if l != state.agent_at() {
            out.push((PlanStep::goto(l), state.with_agent_at(l)));
        }
    }
    let has_room = state.held_count() < schema.carry_capacity();
    if has_room {
        for (o, p) in state.placements() {
            if p == Placement::At(state.agent_at()) {
                out.push((PlanStep::pick(o), state.with_placement(o, Placement::Held)));
            }
        }
    }
    for (o, p) in state.placements() {
        if p == Placement::Held {
            out.push((
                PlanStep::put(o),
                state.with_placement(o, Placement::At(state.agent_at())),
            ));
        }
    }
}

struct Node {
    state: State,
    parent: Option<usize>,
    step: Option<PlanStep>,
    g: u32,
}

#[derive(PartialEq, Eq)]
struct OpenEntry {
    f: u32,
    h: u32,
    seq: u64,
    node: usize,
}

impl Ord for OpenEntry {
    // Min-heap on (f, h, insertion order).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.f, other.h, other.seq).cmp(&(self.f, self.h, self.seq))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn reconstruct(nodes: &[Node], mut idx: usize) -> Plan {
    let mut steps = Vec::new();
    while let Some(parent) = nodes[idx].parent {
        steps.push(nodes[idx].step.clone().expect("non-root node carries its step"));
        idx = parent;
    }
    steps.reverse();
    Plan::new(steps)
}

/// Searches for a step-minimal plan from `init` to any state satisfying `goal`.
pub fn solve(
    init: &State,
    goal: &GoalSpec,
    schema: &WorldSchema,
    budget: SearchBudget,
) -> Result<EngineResult, EngineError> {
    solve_traced(init, goal, schema, budget, |_, _| {})
}

/// [`solve`] with a callback invoked on every expanded node as `(state, g)`.
pub fn solve_traced<F>(
    init: &State,
    goal: &GoalSpec,
    schema: &WorldSchema,
    budget: SearchBudget,
    mut on_expand: F,
) -> Result<EngineResult, EngineError>
where
    F: FnMut(&State, u32),
{
    check_query(init, goal, schema)?;
    let started = Instant::now();

    let mut nodes = vec![Node {
        state: init.clone(),
        parent: None,
        step: None,
        g: 0,
    }];
    // Best known g per state, and whether it has been expanded.
    let mut seen: HashMap<State, (u32, bool)> = HashMap::new();
    seen.insert(init.clone(), (0, false));
    let mut open = BinaryHeap::new();
    let h0 = heuristic(init, goal);
    open.push(OpenEntry {
        f: h0,
        h: h0,
        seq: 0,
        node: 0,
    });
    let mut seq = 1u64;
    let mut expanded = 0usize;
    let mut buf = Vec::new();

    while let Some(entry) = open.pop() {
        let (g, state) = {
            let n = &nodes[entry.node];
            (n.g, n.state.clone())
        };
        match seen.get_mut(&state) {
            Some((best, closed)) => {
                if *closed || *best < g {
                    continue;
                }
                *closed = true;
            }
            None => unreachable!("queued states are always recorded"),
        }
        if goal_satisfied(&state, goal) {
            return Ok(EngineResult::Solved {
                plan: reconstruct(&nodes, entry.node),
                expanded,
            });
        }
        if expanded >= budget.max_expanded_nodes
            || (expanded % 1024 == 0 && started.elapsed() > budget.wall_timeout)
        {
            return Ok(EngineResult::BudgetExceeded);
        }
        expanded += 1;
        on_expand(&state, g);

        successors(&state, schema, &mut buf);
        for (step, next) in buf.drain(..) {
            let ng = g + 1;
            match seen.entry(next.clone()) {
                Entry::Occupied(mut e) => {
                    let (best, closed) = e.get_mut();
                    if *closed || *best <= ng {
                        continue;
                    }
                    *best = ng;
                }
                Entry::Vacant(e) => {
                    e.insert((ng, false));
                }
            }
            let h = heuristic(&next, goal);
            nodes.push(Node {
                state: next,
                parent: Some(entry.node),
                step: Some(step),
                g: ng,
            });
            open.push(OpenEntry {
                f: ng + h,
                h,
                seq,
                node: nodes.len() - 1,
            });
            seq += 1;
        }
    }
    Ok(EngineResult::Unsolvable)
}

/// Every step the schema can express, in schema order.
fn candidate_steps(schema: &WorldSchema) -> Vec<PlanStep> {
    let mut steps: Vec<PlanStep> = schema.location_ids().map(PlanStep::goto).collect();
    steps.extend(schema.object_ids().map(PlanStep::pick));
    steps.extend(schema.object_ids().map(PlanStep::put));
    steps
}

/// Uniform-cost breadth-first search through the executor itself.
///
/// Slow but independent of the A* successor generator and heuristic; used as
/// the reference for optimality checks on small instances.
pub fn bfs_oracle(
    init: &State,
    goal: &GoalSpec,
    schema: &WorldSchema,
    budget: SearchBudget,
) -> Result<EngineResult, EngineError> {
    check_query(init, goal, schema)?;
    let started = Instant::now();
    let candidates = candidate_steps(schema);
    let mut parents: HashMap<State, Option<(State, PlanStep)>> = HashMap::new();
    parents.insert(init.clone(), None);
    let mut queue = VecDeque::from([init.clone()]);
    let mut expanded = 0usize;

    while let Some(state) = queue.pop_front() {
        if goal_satisfied(&state, goal) {
            let mut steps = Vec::new();
            let mut cur = state;
            while let Some(Some((prev, step))) = parents.get(&cur) {
                steps.push(step.clone());
                cur = prev.clone();
            }
            steps.reverse();
            return Ok(EngineResult::Solved {
                plan: Plan::new(steps),
                expanded,
            });
        }
        if expanded >= budget.max_expanded_nodes || started.elapsed() > budget.wall_timeout {
            return Ok(EngineResult::BudgetExceeded);
        }
        expanded += 1;
        for step in &candidates {
            if let Ok(next) = apply_step(&state, step, schema) {
                if !parents.contains_key(&next) {
                    parents.insert(next.clone(), Some((state.clone(), step.clone())));
                    queue.push_back(next);
                }
            }
        }
    }
    Ok(EngineResult::Unsolvable)
}

/// Exact distance-to-goal for every state reachable from `init`. Enumerates
/// the whole reachable graph, so only for tiny instances.
pub fn exact_distances(init: &State, goal: &GoalSpec, schema: &WorldSchema) -> HashMap<State, u32> {
    let candidates = candidate_steps(schema);
    let mut order = vec![init.clone()];
    let mut index: HashMap<State, usize> = HashMap::from([(init.clone(), 0)]);
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut out = Vec::new();
        for step in &candidates {
            if let Ok(next) = apply_step(&order[i], step, schema) {
                if next == order[i] {
                    continue;
                }
                let j = *index.entry(next.clone()).or_insert_with(|| {
                    order.push(next);
                    order.len() - 1
                });
                out.push(j);
            }
        }
        edges.push(out);
        i += 1;
    }
    // Reverse BFS from all goal states.
    let mut reverse = vec![Vec::new(); order.len()];
    for (from, outs) in edges.iter().enumerate() {
        for &to in outs {
            reverse[to].push(from);
        }
    }
    let mut dist = vec![u32::MAX; order.len()];
    let mut queue = VecDeque::new();
    for (k, s) in order.iter().enumerate() {
        if goal_satisfied(s, goal) {
            dist[k] = 0;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        for &p in &reverse[k] {
            if dist[p] == u32::MAX {
                dist[p] = dist[k] + 1;
                queue.push_back(p);
            }
        }
    }
    order
        .into_iter()
        .zip(dist)
        .filter(|(_, d)| *d != u32::MAX)
        .collect()
}
