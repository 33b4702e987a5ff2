use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neuroground"))
        .args(args)
        .env_remove("NEUROGROUND_CONFIG")
        .env_remove("NEUROGROUND_DATASET")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path, count: &str, seed: &str) {
    let o = cli(&["gen", "--count", count, "--seed", seed, "--out", dir.to_str().unwrap(), "-q"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn gen_then_validate_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "100", "7");
    assert!(d.join("images/placeholder.png").is_file());
    let o = cli(&["validate", d.to_str().unwrap(), "--check-images"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: 100 samples"));

    let o = cli(&["stats", d.to_str().unwrap(), "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["count"], 100);
}

#[test]
fn validate_reports_bad_records() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "3", "1");
    let file = d.join("dataset.jsonl");
    let text = fs::read_to_string(&file).unwrap().replacen("\"commonsense\"", "\"culinary\"", 1);
    fs::write(&file, text).unwrap();
    let o = cli(&["validate", d.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("commonsense-0000"), "{}", stderr(&o));
    assert!(stderr(&o).contains("category"));
}

#[test]
fn solve_output_executes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "6", "2");
    let ds = d.to_str().unwrap();
    let o = cli(&["solve", "--dataset", ds, "--sample", "physical-0001"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let plan = tmp.path().join("plan.txt");
    fs::write(&plan, stdout(&o)).unwrap();
    let o = cli(&["execute", "--dataset", ds, "--sample", "physical-0001", "--plan", plan.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("agent_at("));

    let o = cli(&["solve", "--dataset", ds, "--sample", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn execute_names_failing_step() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "3", "2");
    let ds = d.to_str().unwrap();
    let record: serde_json::Value =
        serde_json::from_str(fs::read_to_string(d.join("dataset.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    let object = record["schema"]["objects"][0].as_str().unwrap();
    let location = record["schema"]["locations"][1].as_str().unwrap();
    let plan = tmp.path().join("bad.txt");
    fs::write(&plan, format!("Plan:\n1. goto({location})\n2. put({object})\n")).unwrap();
    let id = record["id"].as_str().unwrap();
    let o = cli(&["execute", "--dataset", ds, "--sample", id, "--plan", plan.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("step 2") && err.contains("PutNotHeld"), "{err}");
}

#[test]
fn eval_resume_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "12", "3");
    let ds = d.to_str().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let out = tmp.path().join(out);
        let mut args = vec!["eval", "--dataset", ds, "--out", out.to_str().unwrap(), "-q", "--seed", "5"];
        args.extend_from_slice(extra);
        let o = cli(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(out.join("report.json")).unwrap()
    };
    let ng = ["--method", "neuroground", "--backend", "noisy:0.3:4"];
    let whole = run("a", &ng);
    let mut limited = ng.to_vec();
    limited.extend(["--limit", "5"]);
    run("b", &limited);
    assert_eq!(run("b", &ng), whole);

    run("c", &["--method", "direct", "--backend", "noisy:0.3:4", "--parallelism", "3"]);
    let a = tmp.path().join("a");
    let c = tmp.path().join("c");
    let o = cli(&["compare", c.to_str().unwrap(), a.to_str().unwrap(), "--csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("run,scope,validity,delta"));
}

#[test]
fn eval_uses_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "6", "3");
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "[run]\nmethod = \"neuroground\"\ndataset = {:?}\nparallelism = 2\n\n[backend]\nkind = \"oracle\"\n",
            d.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = cli(&["eval", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("100.0%"));
}

#[test]
fn paid_backend_needs_consent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "3", "3");
    let config = tmp.path().join("run.toml");
    fs::write(&config, "[backend]\nkind = \"http_api\"\npreset = \"gpt-4-vision-preview\"\n").unwrap();
    let out = tmp.path().join("out");
    let o = cli(&[
        "eval", "--config", config.to_str().unwrap(), "--dataset", d.to_str().unwrap(),
        "--out", out.to_str().unwrap(), "--method", "direct",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--yes-spend"));
    assert!(!out.exists());
}

#[test]
fn bottleneck_prints_grouped_table() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, "9", "4");
    let out = tmp.path().join("bn");
    let o = cli(&["bottleneck", "--dataset", d.to_str().unwrap(), "--out", out.to_str().unwrap(), "--backend", "oracle"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("commonsense\n"));
    assert_eq!(text.matches("100.0%").count(), 12);
    assert!(out.join("guided_init_goal/report.csv").is_file());
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cli(&["gen", "--count", "3"]).status.code(), Some(2));
    assert_eq!(cli(&["gen", "--count", "3", "--out", "x", "--locations", "5-2"]).status.code(), Some(2));
    let o = cli(&["eval", "--dataset", "x", "--out", "y", "--method", "direct", "--backend", "telepathy"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "30", "7");
    gen(&b, "30", "7");
    assert_eq!(fs::read(a.join("dataset.jsonl")).unwrap(), fs::read(b.join("dataset.jsonl")).unwrap());
}
