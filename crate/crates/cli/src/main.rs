use std::fs;
use std::io::{self, Read as _};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use neuroground::dataset::{
    generate_scenarios, load_dataset, load_dataset_with, save_dataset, stats, Dataset, GeneratorConfig,
    LoadOptions, DATASET_FILE, PLACEHOLDER_IMAGE, PLACEHOLDER_PNG,
};
use neuroground::engine::{solve, EngineResult, SearchBudget};
use neuroground::gateway::BackendConfig;
use neuroground::harness::{
    bottleneck_study, compare_runs, load_config, load_report, run_eval, ConfigFile, HarnessError, RunConfig,
};
use neuroground::pipeline::Method;
use neuroground::text::{extract_sections, parse_plan, serialize_plan, serialize_state, Section};
use neuroground::world::{judge_plan_with, GoalMode};

/// Embodied planning toolkit: datasets, symbolic planning and evaluation.
#[derive(Parser)]
#[command(name = "neuroground", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "NEUROGROUND_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for generation and evaluation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress messages on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file or directory.
    Validate {
        dataset: PathBuf,
        /// Also require every referenced image to exist.
        #[arg(long)]
        check_images: bool,
        /// Place the agent at `start` in records without an agent_at line.
        #[arg(long)]
        default_agent: bool,
    },
    /// Print dataset statistics.
    Stats {
        dataset: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        count: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of locations besides `start`, e.g. `2-5`.
        #[arg(long, default_value = "2-5", value_parser = parse_range)]
        locations: RangeInclusive<usize>,
        #[arg(long, default_value = "1-4", value_parser = parse_range)]
        objects: RangeInclusive<usize>,
        /// Accepted optimal plan lengths.
        #[arg(long, default_value = "1-16", value_parser = parse_range)]
        length: RangeInclusive<usize>,
    },
    /// Print an optimal plan for a sample.
    Solve {
        #[command(flatten)]
        target: SampleArg,
        #[command(flatten)]
        budget: BudgetArgs,
    },
    /// Judge a plan against a sample's ground truth.
    Execute {
        #[command(flatten)]
        target: SampleArg,
        /// Plan file, or `-` for standard input.
        #[arg(long)]
        plan: PathBuf,
        /// Require untouched objects to stay put and nothing to be held.
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate a method over a dataset.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        method: Option<Method>,
        /// Stop after this many new samples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Run direct, guided-init and guided-init-goal prompting side by side.
    Bottleneck {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare run reports on the same dataset.
    Compare {
        /// report.json files or run directories.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Emit comma-separated rows instead of a table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args)]
struct SampleArg {
    #[arg(long, env = "NEUROGROUND_DATASET")]
    dataset: PathBuf,
    #[arg(long)]
    sample: String,
}

#[derive(Args, Default)]
struct BudgetArgs {
    /// Maximum number of expanded search nodes.
    #[arg(long)]
    max_nodes: Option<usize>,
    /// Search wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "NEUROGROUND_DATASET")]
    dataset: Option<PathBuf>,
    /// Output directory for traces and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// oracle | oracle-states | noisy:<p>[:<seed>] | echo. Overrides the config file.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Drop images from prompts.
    #[arg(long)]
    text_only: bool,
    /// One model call per section.
    #[arg(long)]
    three_call: bool,
    #[arg(long)]
    strict: bool,
    /// Allow runs against paid remote APIs.
    #[arg(long)]
    yes_spend: bool,
    #[command(flatten)]
    budget: BudgetArgs,
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Usage(m) => Failure::Usage(m),
            other => Failure::Domain(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let bad = || format!("expected N or A-B, got {s:?}");
    let (a, b) = match s.split_once(['-', ':']).or_else(|| s.split_once("..")) {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

fn parse_backend(spec: &str) -> Result<BackendConfig, Failure> {
    BackendConfig::from_spec(spec).map_err(|e| Failure::Usage(e.to_string()))
}

fn budget(args: &BudgetArgs, file: Option<SearchBudget>) -> Result<SearchBudget, Failure> {
    let base = file.unwrap_or_default();
    let timeout = match args.timeout {
        Some(t) => Duration::try_from_secs_f64(t).map_err(|e| Failure::Usage(format!("--timeout: {e}")))?,
        None => base.wall_timeout,
    };
    SearchBudget::new(args.max_nodes.unwrap_or(base.max_expanded_nodes), timeout)
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn open_dataset(path: &Path) -> Result<Dataset, Failure> {
    load_dataset(path).map_err(|e| Failure::Domain(e.to_string()))
}

struct Ctx {
    config: ConfigFile,
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn run_config(&self, args: &RunArgs, method: Method) -> Result<RunConfig, Failure> {
        let run = &self.config.run;
        let dataset = args
            .dataset
            .clone()
            .or_else(|| run.dataset.clone())
            .ok_or_else(|| Failure::Usage("no dataset given (--dataset or NEUROGROUND_DATASET)".into()))?;
        let output_dir = args
            .out
            .clone()
            .or_else(|| run.output_dir.clone())
            .ok_or_else(|| Failure::Usage("no output directory given (--out)".into()))?;
        let backend = match &args.backend {
            Some(spec) => parse_backend(spec)?,
            None => self
                .config
                .backend
                .clone()
                .ok_or_else(|| Failure::Usage("no backend configured (--backend or [backend] in --config)".into()))?,
        };
        if backend.is_remote() && !args.yes_spend {
            return Err(Failure::Usage(format!(
                "backend {} calls a paid API; pass --yes-spend to proceed",
                backend.label()
            )));
        }
        let parallelism = args.parallelism.or(run.parallelism).unwrap_or(1);
        if parallelism == 0 {
            return Err(Failure::Usage("--parallelism must be at least 1".into()));
        }
        let goal_mode = if args.strict {
            GoalMode::Strict
        } else {
            run.goal_mode.unwrap_or_default()
        };
        Ok(RunConfig {
            dataset,
            method,
            backend,
            budget: budget(&args.budget, self.config.budget)?,
            parallelism,
            output_dir,
            run_seed: self.seed.or(run.run_seed).unwrap_or(0),
            text_only: args.text_only || run.text_only.unwrap_or(false),
            three_call: args.three_call || run.three_call.unwrap_or(false),
            goal_mode,
            max_samples: None,
        })
    }
}

fn read_plan_text(path: &Path) -> Result<String, Failure> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::Domain(format!("stdin: {e}")))?;
        return Ok(text);
    }
    fs::read_to_string(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> CliResult {
    let config = match &cli.config {
        Some(path) => load_config(path).map_err(|e| match e {
            HarnessError::Config(m) => Failure::Usage(m),
            other => Failure::Usage(other.to_string()),
        })?,
        None => ConfigFile::default(),
    };
    let ctx = Ctx {
        config,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Validate {
            dataset,
            check_images,
            default_agent,
        } => {
            let options = LoadOptions {
                check_images,
                default_agent_location: default_agent,
            };
            let d = load_dataset_with(&dataset, options).map_err(|e| Failure::Domain(e.to_string()))?;
            println!("ok: {} samples, digest {}", d.len(), d.digest);
            Ok(())
        }
        Command::Stats { dataset, json } => {
            let d = open_dataset(&dataset)?;
            let s = stats(&d.samples);
            if json {
                println!("{}", serde_json::to_string_pretty(&s).expect("stats serialize"));
            } else {
                print!("{s}");
            }
            Ok(())
        }
        Command::Gen {
            count,
            out,
            locations,
            objects,
            length,
        } => {
            let config = GeneratorConfig {
                count,
                locations,
                objects,
                target_length: length,
                seed: ctx.seed.unwrap_or(0),
                ..GeneratorConfig::default()
            };
            let samples = generate_scenarios(&config).map_err(|e| Failure::Domain(e.to_string()))?;
            let samples: Vec<Arc<_>> = samples.into_iter().map(Arc::new).collect();
            let file = out.join(DATASET_FILE);
            save_dataset(&samples, &file).map_err(|e| Failure::Domain(format!("{}: {e}", file.display())))?;
            let image = out.join(PLACEHOLDER_IMAGE);
            if let Some(dir) = image.parent() {
                fs::create_dir_all(dir).map_err(|e| Failure::Domain(format!("{}: {e}", dir.display())))?;
            }
            fs::write(&image, PLACEHOLDER_PNG).map_err(|e| Failure::Domain(format!("{}: {e}", image.display())))?;
            ctx.note(format!("wrote {} samples to {}", samples.len(), file.display()));
            Ok(())
        }
        Command::Solve { target, budget: b } => {
            let d = open_dataset(&target.dataset)?;
            let s = d
                .get(&target.sample)
                .ok_or_else(|| Failure::Domain(format!("no sample {:?}", target.sample)))?;
            let b = budget(&b, ctx.config.budget)?;
            match solve(&s.init_state, &s.goal, &s.schema, b).map_err(|e| Failure::Domain(e.to_string()))? {
                EngineResult::Solved { plan, expanded } => {
                    ctx.note(format!("{} steps, {expanded} nodes expanded", plan.len()));
                    let text = serialize_plan(&plan, &s.schema);
                    if !text.is_empty() {
                        println!("{text}");
                    }
                    Ok(())
                }
                EngineResult::Unsolvable => Err(Failure::Domain("goal is unreachable".into())),
                EngineResult::BudgetExceeded => Err(Failure::Domain("search budget exceeded".into())),
            }
        }
        Command::Execute { target, plan, strict } => {
            let d = open_dataset(&target.dataset)?;
            let s = d
                .get(&target.sample)
                .ok_or_else(|| Failure::Domain(format!("no sample {:?}", target.sample)))?;
            let text = read_plan_text(&plan)?;
            let sections = extract_sections(&text);
            let body = if sections.contains(Section::Plan) {
                sections.get(Section::Plan).expect("present").to_string()
            } else {
                text
            };
            let p = parse_plan(&body, &s.schema).map_err(|e| Failure::Domain(format!("plan does not parse: {e}")))?;
            let mode = if strict { GoalMode::Strict } else { GoalMode::Subset };
            let verdict = judge_plan_with(mode, &s.init_state, &p, &s.goal, &s.schema);
            if let Some(outcome) = &verdict.outcome {
                println!("{}", serialize_state(outcome, &s.schema));
            }
            match (verdict.valid, verdict.error) {
                (true, _) => {
                    ctx.note("valid");
                    Ok(())
                }
                (false, Some(e)) => Err(Failure::Domain(format!(
                    "invalid: step {} ({}) fails with {}: {}",
                    e.step_index + 1,
                    p.steps[e.step_index].render(&s.schema),
                    e.kind.as_str(),
                    e.message
                ))),
                (false, None) => Err(Failure::Domain("invalid: the plan does not reach the goal".into())),
            }
        }
        Command::Eval { run, method, limit } => {
            let method = method
                .or(ctx.config.run.method)
                .ok_or_else(|| Failure::Usage("no method given (--method)".into()))?;
            let mut config = ctx.run_config(&run, method)?;
            config.max_samples = limit;
            ctx.note(format!(
                "evaluating {} with {} on {}",
                method,
                config.backend.label(),
                config.dataset.display()
            ));
            let report = run_eval(&config)?;
            print!("{report}");
            ctx.note(format!("report written to {}", config.output_dir.display()));
            Ok(())
        }
        Command::Bottleneck { run } => {
            let config = ctx.run_config(&run, Method::Direct)?;
            let (_, comparison) = bottleneck_study(&config)?;
            print!("{}", comparison.render_grouped());
            Ok(())
        }
        Command::Compare { reports, csv } => {
            let loaded = reports
                .iter()
                .map(|p| load_report(p))
                .collect::<Result<Vec<_>, _>>()?;
            let comparison = compare_runs(&loaded)?;
            if csv {
                print!("{}", comparison.to_csv());
            } else {
                print!("{}", comparison.render());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("error: {}", m.trim_end());
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {}", m.trim_end());
            ExitCode::from(2)
        }
    }
}
