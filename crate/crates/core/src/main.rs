//! Operator command line: generation, linting, evaluation, batch runs, and
//! run reports.
//!
//! Exit codes: 0 success, 1 lint/eval findings, 2 pipeline halted, 3 run
//! completed with skipped extended quests, 4 configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use questline::evalkit::{self, PoolingMode};
use questline::pipeline::{self, PipelineError, RunConfig, RunManifest, RunStatus};
use questline::provider::{
    api_key_from_env, ChatProvider, HttpProvider, RetryPolicy, ScriptedProvider, DEFAULT_ENDPOINT,
    DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_MODEL, DEFAULT_TEMPERATURE,
};
use questline::store::RunStore;

const EXIT_FINDINGS: u8 = 1;
const EXIT_HALTED: u8 = 2;
const EXIT_SKIPS: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(
    name = "questline",
    version,
    about = "Staged RPG content generation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one full pipeline run.
    Generate(GenerateArgs),
    /// Lint a persisted run for cross-artifact consistency.
    Lint(LintArgs),
    /// Aggregate Likert scores into the category table.
    Eval(EvalArgs),
    /// Execute several independent runs and summarize.
    Batch(BatchArgs),
    /// Pretty-print a persisted run's manifest.
    Report(LintArgs),
}

/// Provider and run configuration flags shared by generate and batch.
/// Precedence: flags > config file > environment > defaults.
#[derive(Args, Clone)]
struct ProviderArgs {
    /// Scripted provider fixture (JSON array of responses); omits the need
    /// for a live credential.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long = "max-tokens")]
    max_tokens: Option<u32>,
    /// NPCs to request from the roster stage.
    #[arg(long)]
    npcs: Option<usize>,
    /// Quests to request from the quest-set stage.
    #[arg(long)]
    quests: Option<usize>,
    /// Content retries per stage (attempts = retries + 1).
    #[arg(long)]
    retries: Option<u32>,
    /// Artifact store root.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Free-text steering intent injected into the world prompt.
    #[arg(long)]
    intent: Option<String>,
    /// Treat roster/quest-set count mismatches as errors.
    #[arg(long = "strict-counts")]
    strict_counts: bool,
    /// Key-value config file (key = value per line).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    provider: ProviderArgs,
    /// Run identifier; generated when omitted.
    #[arg(long = "run-id")]
    run_id: Option<String>,
}

#[derive(Args)]
struct LintArgs {
    run_id: String,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Scores file (.csv with header, or .jsonl).
    #[arg(long)]
    scores: PathBuf,
    /// Optional path for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Average per evaluator before averaging across evaluators.
    #[arg(long = "per-evaluator")]
    per_evaluator: bool,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    provider: ProviderArgs,
    /// Number of independent runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Run up to k pipeline runs concurrently.
    #[arg(long = "parallel-runs")]
    parallel_runs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Lint(args) => cmd_lint(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// Layered settings resolved from config file and environment, below flags.
#[derive(Default)]
struct Layered {
    values: BTreeMap<String, String>,
}

impl Layered {
    fn resolve(config_file: Option<&Path>) -> Result<Layered, String> {
        let mut values = BTreeMap::new();
        // Environment first; file entries override it.
        for key in [
            "model",
            "temperature",
            "max_tokens",
            "npcs",
            "quests",
            "retries",
            "out_dir",
            "intent",
            "strict_counts",
            "runs",
        ] {
            let var = format!("QUESTLINE_{}", key.to_uppercase());
            if let Ok(v) = std::env::var(&var) {
                values.insert(key.to_string(), v);
            }
        }
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(format!(
                        "config file {} line {}: expected 'key = value'",
                        path.display(),
                        i + 1
                    ));
                };
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Layered { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| format!("config key '{key}': cannot parse '{raw}'")),
        }
    }
}

struct Resolved {
    config: RunConfig,
    out_dir: PathBuf,
    fixture: Option<PathBuf>,
    runs: usize,
}

fn resolve(args: &ProviderArgs, run_id: Option<String>) -> Result<Resolved, String> {
    let layered = Layered::resolve(args.config.as_deref())?;
    let mut config = RunConfig::new(run_id.unwrap_or_else(pipeline::generate_run_id));
    config.model_name = args
        .model
        .clone()
        .or(layered.get("model")?)
        .unwrap_or_else(|| DEFAULT_MODEL.to_string());
    config.temperature = args
        .temperature
        .or(layered.get("temperature")?)
        .unwrap_or(DEFAULT_TEMPERATURE);
    config.max_output_tokens = args
        .max_tokens
        .or(layered.get("max_tokens")?)
        .unwrap_or(DEFAULT_MAX_OUTPUT_TOKENS);
    if let Some(npcs) = args.npcs.or(layered.get("npcs")?) {
        config.counts.npcs = npcs;
    }
    if let Some(quests) = args.quests.or(layered.get("quests")?) {
        config.counts.quests = quests;
    }
    if let Some(retries) = args.retries.or(layered.get("retries")?) {
        config.retries_per_stage = retries;
    }
    config.user_intent = args.intent.clone().or(layered.get("intent")?);
    config.strict_counts = args.strict_counts || layered.get("strict_counts")?.unwrap_or(false);
    let out_dir = args
        .out_dir
        .clone()
        .or(layered.get::<PathBuf>("out_dir")?)
        .unwrap_or_else(|| PathBuf::from("out"));
    let runs = layered.get("runs")?.unwrap_or(20);
    Ok(Resolved {
        config,
        out_dir,
        fixture: args.fixture.clone(),
        runs,
    })
}

fn make_provider(fixture: Option<&Path>) -> Result<Box<dyn ChatProvider>, String> {
    match fixture {
        Some(path) => {
            let provider = ScriptedProvider::from_path(path)
                .map_err(|e| format!("cannot load fixture {}: {e}", path.display()))?;
            Ok(Box::new(provider))
        }
        None => {
            let key = api_key_from_env()
                .ok_or("no --fixture given and no API credential in the environment")?;
            Ok(Box::new(HttpProvider::new(
                DEFAULT_ENDPOINT,
                &key,
                RetryPolicy::default(),
            )))
        }
    }
}

fn config_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_CONFIG)
}

fn print_summary(manifest: &RunManifest) {
    let accepted = manifest
        .outcomes
        .iter()
        .filter(|o| o.disposition == pipeline::Disposition::Accepted)
        .count();
    let skipped = manifest
        .outcomes
        .iter()
        .filter(|o| o.disposition == pipeline::Disposition::SkippedPreservedRaw)
        .count();
    println!("run {}", manifest.run_id);
    println!(
        "  status: {:?}  invocations: {}  accepted: {}  skipped: {}",
        manifest.status, manifest.total_invocations, accepted, skipped
    );
    for outcome in &manifest.outcomes {
        if outcome.disposition != pipeline::Disposition::Accepted {
            println!(
                "  {:?} {} -> {:?} [{}]",
                outcome.stage,
                outcome.quest_id.as_deref().unwrap_or("-"),
                outcome.disposition,
                outcome.error_codes.join(", ")
            );
        }
    }
}

fn run_once(resolved: &Resolved) -> Result<(RunManifest, u8), String> {
    let provider = make_provider(resolved.fixture.as_deref())?;
    let store = RunStore::new(&resolved.out_dir);
    match pipeline::execute_run(&resolved.config, provider.as_ref(), &store) {
        Ok(manifest) => {
            let code = manifest.status.exit_code() as u8;
            Ok((manifest, code))
        }
        Err(PipelineError::Halted { manifest, .. }) => Ok((*manifest, EXIT_HALTED)),
        Err(PipelineError::Config(message)) => Err(message),
        Err(other) => Err(other.to_string()),
    }
}

fn cmd_generate(args: GenerateArgs) -> ExitCode {
    let resolved = match resolve(&args.provider, args.run_id) {
        Ok(r) => r,
        Err(message) => return config_error(&message),
    };
    if let Err(e) = resolved.config.validate() {
        return config_error(&e.to_string());
    }
    match run_once(&resolved) {
        Ok((manifest, code)) => {
            print_summary(&manifest);
            ExitCode::from(code)
        }
        Err(message) => config_error(&message),
    }
}

fn cmd_batch(args: BatchArgs) -> ExitCode {
    let resolved = match resolve(&args.provider, None) {
        Ok(r) => r,
        Err(message) => return config_error(&message),
    };
    let runs = args.runs.unwrap_or(resolved.runs);
    if runs == 0 {
        return config_error("--runs must be >= 1");
    }
    let parallel = args.parallel_runs.unwrap_or(1).max(1);

    let mut jobs: Vec<Resolved> = (0..runs)
        .map(|i| Resolved {
            config: {
                let mut c = resolved.config.clone();
                c.run_id = format!("{}-{i:03}", pipeline::generate_run_id());
                c
            },
            out_dir: resolved.out_dir.clone(),
            fixture: resolved.fixture.clone(),
            runs,
        })
        .collect();

    type RunResult = Result<(RunManifest, u8), String>;
    let results: Vec<RunResult> = if parallel <= 1 {
        jobs.iter().map(run_once).collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<RunResult>>> =
            jobs.iter().map(|_| std::sync::Mutex::new(None)).collect();
        let jobs_ref = &jobs;
        std::thread::scope(|scope| {
            for _ in 0..parallel.min(runs) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    let Some(job) = jobs_ref.get(i) else { break };
                    *slots[i].lock().unwrap() = Some(run_once(job));
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every job ran"))
            .collect()
    };
    jobs.clear();

    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    let mut halted = 0usize;
    let mut skips = 0usize;
    let mut failures = 0usize;
    for result in &results {
        match result {
            Ok((manifest, _)) => {
                match manifest.status {
                    RunStatus::Halted(_) => halted += 1,
                    RunStatus::CompleteWithSkips => skips += 1,
                    RunStatus::Complete => {}
                }
                for key in manifest.artifact_paths.keys() {
                    let bucket = if key.starts_with("extended_quest") {
                        "extended quests"
                    } else if key.starts_with("npc_roster") {
                        "npc rosters"
                    } else if key.starts_with("quest_set") {
                        "quest sets"
                    } else if key.starts_with("player") {
                        "players"
                    } else {
                        "worlds"
                    };
                    *totals.entry(bucket).or_default() += 1;
                }
            }
            Err(message) => {
                eprintln!("run failed: {message}");
                failures += 1;
            }
        }
    }

    println!("batch: {runs} runs ({halted} halted, {skips} with skips, {failures} failed)");
    for (bucket, count) in &totals {
        println!("  {bucket}: {count}");
    }
    if failures > 0 {
        ExitCode::from(EXIT_CONFIG)
    } else if halted > 0 {
        ExitCode::from(EXIT_HALTED)
    } else if skips > 0 {
        ExitCode::from(EXIT_SKIPS)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_lint(args: LintArgs) -> ExitCode {
    let store = RunStore::new(&args.out_dir);
    let (state, manifest) = match store.load_run(&args.run_id) {
        Ok(loaded) => loaded,
        Err(e) => return config_error(&e.to_string()),
    };
    let findings = questline::consistency::lint_run(&state, Some(manifest.config.counts));
    for finding in &findings {
        println!(
            "{:?} {} {} {}: {}",
            finding.severity, finding.code, finding.artifact, finding.path, finding.message
        );
    }
    let errors = findings
        .iter()
        .filter(|f| f.severity == questline::schema::Severity::Error)
        .count();
    println!(
        "{} findings ({} errors) in run {}",
        findings.len(),
        errors,
        args.run_id
    );
    if errors > 0 {
        ExitCode::from(EXIT_FINDINGS)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_eval(args: EvalArgs) -> ExitCode {
    let records = match evalkit::ingest_scores(&args.scores) {
        Ok(records) => records,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FINDINGS);
        }
    };
    let mode = if args.per_evaluator {
        PoolingMode::PerEvaluator
    } else {
        PoolingMode::Pooled
    };
    let table = match evalkit::aggregate(&records, mode, &[]) {
        Ok(table) => table,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FINDINGS);
        }
    };
    print!("{}", evalkit::render_table(&table));
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&evalkit::table_json(&table)).expect("serializes");
        if let Err(e) = std::fs::write(out, json + "\n") {
            eprintln!("error: cannot write {}: {e}", out.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    ExitCode::SUCCESS
}

fn cmd_report(args: LintArgs) -> ExitCode {
    let store = RunStore::new(&args.out_dir);
    let manifest_path = store.manifest_path(&args.run_id);
    let text = match std::fs::read_to_string(&manifest_path) {
        Ok(text) => text,
        Err(e) => return config_error(&format!("cannot read {}: {e}", manifest_path.display())),
    };
    let manifest: RunManifest = match serde_json::from_str(&text) {
        Ok(m) => m,
        Err(e) => return config_error(&format!("corrupt manifest: {e}")),
    };
    print_summary(&manifest);
    println!("  artifacts:");
    for (key, path) in &manifest.artifact_paths {
        println!("    {key}: {path}");
    }
    ExitCode::SUCCESS
}
