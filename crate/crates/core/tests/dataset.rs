use std::path::Path;
use std::sync::Arc;

use neuroground::dataset::{
    generate_scenarios, load_dataset, save_dataset, stats, to_canonical_string, Category, GenerateError,
    GeneratorConfig, ImageSource, LengthBucket, Sample,
};
use neuroground::engine::{bfs_oracle, SearchBudget};
use neuroground::world::{judge_plan, Plan, PlanStep};

fn example_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/example"))
}

#[test]
fn shipped_example_loads() {
    let d = load_dataset(example_dir()).unwrap();
    let s = stats(&d.samples);
    assert_eq!(s.count, 24);
    for c in Category::ALL {
        assert_eq!(s.per_category[&c], 8);
    }
    for sample in &d.samples {
        let plan = sample.gold_plan.as_ref().unwrap();
        assert!(judge_plan(&sample.init_state, plan, &sample.goal, &sample.schema).valid);
    }
    assert_eq!(s.length_histogram.values().sum::<usize>(), 24);
}

#[test]
fn paper_scale_statistics() {
    // 400 samples, 74 of them real-image, with plan lengths spread over the
    // buckets as 31 / 190 / 29 / 102 / 48.
    let base = generate_scenarios(&GeneratorConfig {
        count: 1,
        ..GeneratorConfig::default()
    })
    .unwrap()
    .remove(0);
    let counts = [(2, 31), (6, 190), (9, 29), (12, 102), (15, 48)];
    let mut samples = Vec::new();
    for (len, n) in counts {
        for _ in 0..n {
            let mut s: Sample = base.clone();
            s.id = format!("s{}", samples.len());
            s.category = Category::ALL[samples.len() % 3];
            s.image_source = if samples.len() < 74 { ImageSource::Real } else { ImageSource::Synthetic };
            s.gold_plan = Some(Plan::new(vec![PlanStep::goto(s.init_state.agent_at()); len]));
            samples.push(Arc::new(s));
        }
    }
    let st = stats(&samples);
    assert_eq!(st.count, 400);
    assert!((st.real_image_fraction - 0.185).abs() < 1e-12);
    let expected = [
        (LengthBucket::UpTo4, 7.8),
        (LengthBucket::From5To7, 47.5),
        (LengthBucket::From8To10, 7.2),
        (LengthBucket::From11To13, 25.5),
        (LengthBucket::From14, 12.0),
    ];
    for (bucket, share) in expected {
        let got = st.bucket_share(bucket);
        assert!((got - share).abs() <= 0.051, "{bucket}: {got} vs {share}");
    }
}

#[test]
fn empty_dataset_stats() {
    let st = stats::<Arc<Sample>>(&[]);
    assert_eq!(st.count, 0);
    assert!(st.length_histogram.is_empty());
}

#[test]
fn generator_respects_target_length() {
    let samples = generate_scenarios(&GeneratorConfig {
        count: 100,
        seed: 5,
        locations: 2..=5,
        objects: 1..=4,
        target_length: 5..=13,
        ..GeneratorConfig::default()
    })
    .unwrap();
    for s in &samples {
        let len = s.gold_plan.as_ref().unwrap().len();
        assert!((5..=13).contains(&len), "{}: {len}", s.id);
    }
}

#[test]
fn infeasible_lengths_are_reported() {
    let err = generate_scenarios(&GeneratorConfig {
        count: 1,
        locations: 2..=2,
        objects: 1..=1,
        target_length: 14..=20,
        max_attempts_per_sample: 200,
        ..GeneratorConfig::default()
    })
    .unwrap_err();
    assert!(matches!(err, GenerateError::Infeasible { .. }), "{err}");
}

#[test]
fn gold_plans_are_optimal_on_small_scenarios() {
    let samples = generate_scenarios(&GeneratorConfig {
        count: 60,
        seed: 9,
        locations: 2..=3,
        objects: 1..=3,
        ..GeneratorConfig::default()
    })
    .unwrap();
    for s in &samples {
        let bfs = bfs_oracle(&s.init_state, &s.goal, &s.schema, SearchBudget::default()).unwrap();
        assert_eq!(bfs.plan().unwrap().len(), s.gold_plan.as_ref().unwrap().len(), "{}", s.id);
    }
}

#[test]
fn save_load_is_byte_identical() {
    let text = std::fs::read_to_string(example_dir().join("dataset.jsonl")).unwrap();
    let d = load_dataset(example_dir()).unwrap();
    assert_eq!(to_canonical_string(&d.samples), text);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("copy.jsonl");
    save_dataset(&d.samples, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}
