//! Seeded synthetic scenarios with engine-solved gold plans.

use std::ops::RangeInclusive;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Category, ImageSource, Sample};
use crate::engine::{solve, EngineResult, SearchBudget};
use crate::world::{
    judge_plan, GoalSpec, LocationId, ObjectId, Placement, State, WorldSchema, GOTO, PICK, PUT,
    START_LOCATION,
};

/// Relative path of the single placeholder image generated samples refer to.
pub const PLACEHOLDER_IMAGE: &str = "images/placeholder.png";

/// A 1x1 grey PNG.
pub const PLACEHOLDER_PNG: &[u8] = &[
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
    0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a, 0x7e, 0x9b,
    0x55, 0x00, 0x00, 0x00, 0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x00, 0x00, 0x00,
    0x82, 0x00, 0x81, 0x77, 0xcd, 0x72, 0xb6, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae,
    0x42, 0x60, 0x82,
];

const COMMONSENSE_LOCATIONS: &[&str] = &[
    "kitchen_counter", "fridge", "dining_table", "sink", "cupboard", "shelf", "trash_bin", "sofa",
];
const COMMONSENSE_OBJECTS: &[&str] = &[
    "apple", "milk", "cup", "plate", "bread", "banana", "spoon", "towel",
];
const PHYSICAL_LOCATIONS: &[&str] = &[
    "square_slot", "round_hole", "triangle_slot", "tray", "blue_box", "red_box", "top_shelf", "basket",
];
const PHYSICAL_OBJECTS: &[&str] = &[
    "red_cube", "blue_sphere", "green_cylinder", "yellow_prism", "small_block", "large_block",
    "marble", "wooden_ring",
];
const SAFETY_LOCATIONS: &[&str] = &[
    "floor", "stove", "crib", "drawer", "high_shelf", "cabinet", "desk", "bathroom_sink",
];
const SAFETY_OBJECTS: &[&str] = &[
    "knife", "scissors", "medicine", "lighter", "glass_vase", "bleach", "battery", "hot_pan",
];

/// Largest location or object pool per category.
pub const MAX_POOL: usize = 8;

fn pools(category: Category) -> (&'static [&'static str], &'static [&'static str]) {
    match category {
        Category::Commonsense => (COMMONSENSE_LOCATIONS, COMMONSENSE_OBJECTS),
        Category::Physical => (PHYSICAL_LOCATIONS, PHYSICAL_OBJECTS),
        Category::Safety => (SAFETY_LOCATIONS, SAFETY_OBJECTS),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub count: usize,
    /// Number of locations objects may occupy; the agent's `start` is extra.
    pub locations: RangeInclusive<usize>,
    pub objects: RangeInclusive<usize>,
    /// Accepted optimal plan lengths.
    pub target_length: RangeInclusive<usize>,
    pub seed: u64,
    pub max_attempts_per_sample: usize,
    pub budget: SearchBudget,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            count: 24,
            locations: 2..=5,
            objects: 1..=4,
            target_length: 1..=16,
            seed: 0,
            max_attempts_per_sample: 2000,
            budget: SearchBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("empty or out-of-range parameter: {0}")]
    BadRange(&'static str),
    #[error(
        "no scenario with {locations:?} locations and {objects:?} objects reached an optimal length in {target_length:?} after {attempts} attempts"
    )]
    Infeasible {
        locations: RangeInclusive<usize>,
        objects: RangeInclusive<usize>,
        target_length: RangeInclusive<usize>,
        attempts: usize,
    },
}

fn instruction(category: Category, schema: &WorldSchema, goal: &GoalSpec) -> String {
    let moves: Vec<String> = goal
        .assertions()
        .map(|(o, l)| format!("the {} to the {}", schema.object_name(o), schema.location_name(l)))
        .collect();
    let list = match moves.len() {
        0 => String::from("nothing"),
        1 => moves[0].clone(),
        n => format!("{} and {}", moves[..n - 1].join(", "), moves[n - 1]),
    };
    match category {
        Category::Commonsense => format!("Move {list}."),
        Category::Physical => format!("Fit each piece where its shape belongs: move {list}."),
        Category::Safety => format!("Remove the hazards: move {list}."),
    }
}

fn draw(rng: &mut ChaCha8Rng, range: &RangeInclusive<usize>) -> usize {
    rng.random_range(range.clone())
}

fn attempt(category: Category, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Option<(WorldSchema, State, GoalSpec, crate::world::Plan)> {
    let (loc_pool, obj_pool) = pools(category);
    let n_loc = draw(rng, &config.locations);
    let n_obj = draw(rng, &config.objects);
    let mut locations: Vec<String> = vec![START_LOCATION.to_string()];
    locations.extend(loc_pool.choose_multiple(rng, n_loc).map(|s| s.to_string()));
    let objects: Vec<String> = obj_pool.choose_multiple(rng, n_obj).map(|s| s.to_string()).collect();
    let schema = WorldSchema::new(
        locations,
        objects,
        vec![GOTO.into(), PICK.into(), PUT.into()],
        1,
    )
    .ok()?;

    // Objects never start at `start`, which is location 0.
    let placements: Vec<Placement> = (0..n_obj)
        .map(|_| Placement::At(LocationId(rng.random_range(1..=n_loc) as u16)))
        .collect();
    let init = State::new(&schema, placements, LocationId(0)).ok()?;

    let mut order: Vec<usize> = (0..n_obj).collect();
    order.shuffle(rng);
    let moved = rng.random_range(1..=n_obj);
    let mut assertions = Vec::with_capacity(moved);
    for &i in &order[..moved] {
        let o = ObjectId(i as u16);
        let Placement::At(current) = init.placement(o) else {
            unreachable!()
        };
        let others: Vec<u16> = (1..=n_loc as u16).filter(|&l| l != current.0).collect();
        let target = *others.choose(rng)?;
        assertions.push((o, LocationId(target)));
    }
    let goal = GoalSpec::new(&schema, assertions).ok()?;
    let EngineResult::Solved { plan, .. } = solve(&init, &goal, &schema, config.budget).ok()? else {
        return None;
    };
    if !config.target_length.contains(&plan.len()) {
        return None;
    }
    assert!(judge_plan(&init, &plan, &goal, &schema).valid, "engine produced an invalid gold plan");
    Some((schema, init, goal, plan))
}

/// Generates `count` samples, cycling categories, deterministically from `seed`.
pub fn generate_scenarios(config: &GeneratorConfig) -> Result<Vec<Sample>, GenerateError> {
    if config.locations.is_empty() || *config.locations.start() < 2 || *config.locations.end() > MAX_POOL {
        return Err(GenerateError::BadRange("locations must lie within 2..=8"));
    }
    if config.objects.is_empty() || *config.objects.start() < 1 || *config.objects.end() > MAX_POOL {
        return Err(GenerateError::BadRange("objects must lie within 1..=8"));
    }
    if config.target_length.is_empty() {
        return Err(GenerateError::BadRange("target_length"));
    }
    if config.max_attempts_per_sample == 0 {
        return Err(GenerateError::BadRange("max_attempts_per_sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let category = Category::ALL[i % Category::ALL.len()];
        let found = (0..config.max_attempts_per_sample).find_map(|_| attempt(category, config, &mut rng));
        let Some((schema, init, goal, plan)) = found else {
            return Err(GenerateError::Infeasible {
                locations: config.locations.clone(),
                objects: config.objects.clone(),
                target_length: config.target_length.clone(),
                attempts: config.max_attempts_per_sample,
            });
        };
        samples.push(Sample {
            id: format!("{}-{:04}", category.as_str(), i),
            category,
            image_refs: vec![PLACEHOLDER_IMAGE.to_string()],
            image_source: ImageSource::Synthetic,
            instruction: instruction(category, &schema, &goal),
            schema,
            init_state: init,
            goal,
            gold_plan: Some(plan),
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_respect_target() {
        let config = GeneratorConfig {
            count: 30,
            locations: 2..=5,
            objects: 1..=4,
            target_length: 5..=13,
            seed: 3,
            ..GeneratorConfig::default()
        };
        let samples = generate_scenarios(&config).unwrap();
        assert_eq!(samples.len(), 30);
        for s in &samples {
            let n = s.gold_plan.as_ref().unwrap().len();
            assert!((5..=13).contains(&n), "{} has length {n}", s.id);
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let config = GeneratorConfig {
            count: 9,
            seed: 11,
            ..GeneratorConfig::default()
        };
        assert_eq!(generate_scenarios(&config).unwrap(), generate_scenarios(&config).unwrap());
    }

    #[test]
    fn bad_ranges_are_rejected() {
        let config = GeneratorConfig {
            objects: 0..=2,
            ..GeneratorConfig::default()
        };
        assert!(matches!(generate_scenarios(&config), Err(GenerateError::BadRange(_))));
    }

    #[test]
    fn placeholder_is_a_png() {
        assert_eq!(&PLACEHOLDER_PNG[1..4], b"PNG");
    }
}
