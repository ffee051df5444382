//! The `stepwise` command line.
//!
//! Exit codes: 0 success, 1 data or validation errors, 2 configuration and
//! usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::annotate::{
    build_campaign, pairwise_items, quality_items, server, Campaign, CampaignKind,
    ConsensusRule, IncompletePolicy, LabelStore, Pool, Report,
};
use crate::assembler::{batch_assemble, shuffle_steps, AssemblyConfig, Position};
use crate::config::RunConfig;
use crate::corpus::{self, CorpusManifest, Split, TaskRecord};
use crate::evalkit::{self, EvalOutcome, MacroMode};
use crate::exgen;
use crate::jsonl;
use crate::llm_client::{BackendConfig, LlmClient, Mode};
use crate::rng::derive_seed;
use crate::stepgen::{self, Protocol, StepInstruction, ValidationConfig};

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Step-by-step instruction corpus tooling")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics (task counts, word and step averages).
    Stats(StatsArgs),
    /// Run the generation prompt only, one session per task.
    Generate(ProtocolArgs),
    /// Run generation plus the four refinement prompts.
    Refine(ProtocolArgs),
    /// Check instructions for dataset iteration, embedded examples and parse failures.
    Validate(ValidateArgs),
    /// Render model inputs with the step block prepended, appended or omitted.
    Assemble(AssembleArgs),
    /// Shuffle the steps of every instruction with a seeded permutation.
    Shuffle(ShuffleArgs),
    /// Score predictions with ROUGE-L.
    Eval(EvalArgs),
    /// Compare two eval reports (B minus A).
    Compare(CompareArgs),
    /// Generate harder positive examples and keep the self-ranked best two.
    Exgen(ExgenArgs),
    /// Build a human-evaluation campaign file.
    AnnotateBuild(AnnotateBuildArgs),
    /// Serve the annotation HTTP API.
    AnnotateServe(AnnotateServeArgs),
    /// Report on a campaign from its label store.
    AnnotateReport(AnnotateReportArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Directory of task JSON files.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Split manifest, one task id per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Directory of transcript fixtures (record and replay modes).
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Instruction corpus (JSON Lines).
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Output instruction corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write one transcript per task.
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    /// Write one JSON line per instruction with its violations.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    #[arg(long)]
    pub position: Option<Position>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub instances_per_task: Option<usize>,
    #[arg(long)]
    pub max_input_tokens: Option<usize>,
    #[arg(long)]
    pub max_positive_examples: Option<usize>,
    /// Shuffle steps (per task, derived from this seed) before rendering.
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ShuffleArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub instances_per_task: Option<usize>,
    /// Macro average over `tasks` or `categories`.
    #[arg(long = "macro")]
    pub macro_mode: Option<MacroMode>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Baseline eval report (JSON).
    #[arg(long)]
    pub a: PathBuf,
    /// Treatment eval report (JSON).
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub tie_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExgenArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    /// Examples to request per task.
    #[arg(short = 'n', long, default_value_t = 5)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateBuildArgs {
    #[arg(long)]
    pub kind: CampaignKind,
    #[arg(long)]
    pub id: String,
    /// Task directories supplying the annotator context.
    #[arg(long = "tasks", required = true)]
    pub tasks: Vec<PathBuf>,
    /// Comma-separated annotator ids.
    #[arg(long, value_delimiter = ',')]
    pub annotators: Vec<String>,
    /// Quality pool as NAME=INSTRUCTIONS.jsonl:SHARED (repeatable).
    #[arg(long = "pool")]
    pub pools: Vec<String>,
    /// Pairwise system as NAME=PREDICTIONS.jsonl; give exactly two, the first is counted as "win".
    #[arg(long = "system")]
    pub systems: Vec<String>,
    /// Pairwise: instances sampled per task.
    #[arg(long)]
    pub per_task: Option<usize>,
    /// Pairwise: number of shared items.
    #[arg(long, default_value_t = 0)]
    pub shared: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnnotateServeArgs {
    /// Campaign file; the label store defaults to `<campaign>.labels.jsonl` beside it.
    #[arg(long = "campaign", required = true)]
    pub campaigns: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Static directory for the browser frontend.
    #[arg(long)]
    pub ui: Option<PathBuf>,
    #[arg(long)]
    pub consensus: Option<ConsensusRule>,
}

#[derive(Debug, Args)]
pub struct AnnotateReportArgs {
    #[arg(long)]
    pub campaign: PathBuf,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub consensus: Option<ConsensusRule>,
    /// `warn` (report partial tallies) or `fail`.
    #[arg(long)]
    pub incomplete: Option<IncompletePolicy>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command, classified for the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "error: {m}"),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

trait Classify<T> {
    fn data(self) -> Outcome<T>;
    fn config(self) -> Outcome<T>;
}

impl<T, E: std::fmt::Display> Classify<T> for Result<T, E> {
    fn data(self) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.to_string()))
    }

    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.to_string()))
    }
}

fn existing(path: &Path, what: &str) -> Outcome<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Failure::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn pick(flag: Option<&PathBuf>, file: Option<&PathBuf>, what: &str, flag_name: &str) -> Outcome<PathBuf> {
    let p = flag.or(file).ok_or_else(|| {
        Failure::Config(format!("no {what}: pass {flag_name} or set it in the config file"))
    })?;
    existing(p, what)
}

fn load_corpus(args: &CorpusArgs, cfg: &RunConfig) -> Outcome<Vec<TaskRecord>> {
    let dir = pick(args.tasks.as_ref(), cfg.corpus.tasks_dir.as_ref(), "task directory", "--tasks")?;
    let manifest = match args.manifest.as_ref().or(cfg.corpus.manifest.as_ref()) {
        Some(p) => {
            let p = existing(p, "manifest")?;
            Some(corpus::load_manifest(&p, Split::infer(&p).unwrap_or(Split::Test)).data()?)
        }
        None => None,
    };
    load_tasks(&dir, manifest.as_ref())
}

fn load_tasks(dir: &Path, manifest: Option<&CorpusManifest>) -> Outcome<Vec<TaskRecord>> {
    let tasks = corpus::load_tasks_dir(dir, manifest).data()?;
    log::info!("loaded {} tasks from {}", tasks.len(), dir.display());
    Ok(tasks)
}

fn instructions_path(flag: Option<&PathBuf>, cfg: &RunConfig) -> Outcome<PathBuf> {
    pick(flag, cfg.corpus.instructions.as_ref(), "instruction file", "--instructions")
}

fn instruction_map(list: Vec<StepInstruction>) -> Outcome<BTreeMap<String, StepInstruction>> {
    let mut map = BTreeMap::new();
    for si in list {
        let id = si.task_id.clone();
        if map.insert(id.clone(), si).is_some() {
            return Err(Failure::Data(format!("duplicate instruction for task {id}")));
        }
    }
    Ok(map)
}

fn backend(args: &BackendArgs, cfg: &RunConfig) -> Outcome<BackendConfig> {
    let mut b = match (&cfg.backend, args.mode) {
        (Some(b), Some(mode)) => BackendConfig { mode, ..b.clone() },
        (Some(b), None) => b.clone(),
        (None, Some(mode)) => BackendConfig::with_mode(mode),
        (None, None) => {
            return Err(Failure::Config("no backend: pass --mode or add a [backend] section".into()))
        }
    };
    if let Some(f) = &args.fixtures {
        b.fixtures_dir = Some(f.clone());
    }
    if let Some(e) = &args.endpoint {
        b.endpoint_url = Some(e.clone());
    }
    if let Some(m) = &args.model {
        b.model_name = Some(m.clone());
    }
    if let Some(p) = args.parallel {
        b.max_parallel_sessions = p;
    }
    b.validate().config()?;
    if b.mode == Mode::Replay {
        existing(b.fixtures_dir.as_ref().unwrap(), "fixtures directory")?;
    }
    Ok(b)
}

/// Write to stdout; a closed pipe (`| head`) ends output quietly.
fn emit(text: &str) -> Outcome<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Data(e.to_string())),
        _ => Ok(()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).data()?;
    text.push('\n');
    jsonl::write_atomic(path, text.as_bytes()).data()
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Outcome<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).config()?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Stats(a) => stats(a, &cfg),
        Command::Generate(a) => protocol(a, &cfg, Protocol::Generate),
        Command::Refine(a) => protocol(a, &cfg, Protocol::Refine),
        Command::Validate(a) => validate(a, &cfg),
        Command::Assemble(a) => assemble(a, &cfg),
        Command::Shuffle(a) => shuffle(a, &cfg),
        Command::Eval(a) => eval(a, &cfg),
        Command::Compare(a) => compare(a, &cfg),
        Command::Exgen(a) => exgen_cmd(a, &cfg),
        Command::AnnotateBuild(a) => annotate_build(a, &cfg),
        Command::AnnotateServe(a) => annotate_serve(a, &cfg),
        Command::AnnotateReport(a) => annotate_report(a, &cfg),
    }
}

fn stats(a: StatsArgs, cfg: &RunConfig) -> Outcome<()> {
    let tasks = load_corpus(&a.corpus, cfg)?;
    let instructions = match a.instructions.as_ref().or(cfg.corpus.instructions.as_ref()) {
        Some(p) => instruction_map(stepgen::read_instructions(&existing(p, "instruction file")?).data()?)?,
        None => BTreeMap::new(),
    };
    let report = corpus::corpus_stats(&tasks, &instructions).data()?;
    if a.json {
        emit(&format!("{}\n", serde_json::to_string_pretty(&report).data()?))?;
    } else {
        emit(&report.to_table())?;
    }
    Ok(())
}

fn protocol(a: ProtocolArgs, cfg: &RunConfig, protocol: Protocol) -> Outcome<()> {
    let tasks = load_corpus(&a.corpus, cfg)?;
    let client = LlmClient::new(backend(&a.backend, cfg)?).config()?;
    let transcripts = a.transcripts.as_ref().or(cfg.corpus.transcripts_dir.as_ref());
    let outcome = stepgen::run_batch(&client, &tasks, protocol, transcripts.map(PathBuf::as_path));
    stepgen::write_instructions(&a.out, &outcome.instructions).data()?;
    eprintln!(
        "{} instructions written to {} ({} without numbered steps, {} failed)",
        outcome.instructions.len(),
        a.out.display(),
        outcome.unparseable.len(),
        outcome.failures.len()
    );
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        let lines: Vec<String> = outcome.failures.iter().map(|(t, e)| format!("{t}: {e}")).collect();
        Err(Failure::Data(lines.join("\n")))
    }
}

fn validate(a: ValidateArgs, cfg: &RunConfig) -> Outcome<()> {
    let tasks = load_corpus(&a.corpus, cfg)?;
    let path = instructions_path(a.instructions.as_ref(), cfg)?;
    let list = stepgen::read_instructions(&path).data()?;
    let categories: BTreeMap<&str, &[String]> =
        tasks.iter().map(|t| (t.task_id.as_str(), t.categories.as_slice())).collect();
    let vcfg = ValidationConfig::default();
    let mut rows = Vec::new();
    let mut failed = 0;
    for si in &list {
        let cats = categories
            .get(si.task_id.as_str())
            .ok_or_else(|| Failure::Data(format!("instruction for unknown task {}", si.task_id)))?;
        let report = stepgen::validate_instruction(si, cats, &vcfg);
        if !report.passed() {
            failed += 1;
            for v in &report.violations {
                emit(&format!("{}\t{}\t{}\n", si.task_id, v.code, v.message))?;
            }
        }
        rows.push(serde_json::json!({"task_id": si.task_id, "violations": report.violations}));
    }
    if let Some(out) = &a.out {
        jsonl::write(out, &rows).data()?;
    }
    eprintln!("{} of {} instructions passed", list.len() - failed, list.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Data(format!("{failed} instruction(s) failed validation")))
    }
}

fn assemble(a: AssembleArgs, cfg: &RunConfig) -> Outcome<()> {
    let tasks = load_corpus(&a.corpus, cfg)?;
    let defaults = AssemblyConfig::default();
    let acfg = AssemblyConfig {
        max_input_tokens: a
            .max_input_tokens
            .or(cfg.assembly.max_input_tokens)
            .unwrap_or(defaults.max_input_tokens),
        max_positive_examples: a
            .max_positive_examples
            .or(cfg.assembly.max_positive_examples)
            .unwrap_or(defaults.max_positive_examples),
        position: a.position.or(cfg.assembly.position).unwrap_or(defaults.position),
        shuffle_seed: a.shuffle_seed.or(cfg.assembly.shuffle_seed),
    };
    let instructions = if acfg.position == Position::None {
        BTreeMap::new()
    } else {
        let path = instructions_path(a.instructions.as_ref(), cfg)?;
        instruction_map(stepgen::read_instructions(&path).data()?)?
    };
    let per_task = a.instances_per_task.or(cfg.eval.instances_per_task);
    let n = batch_assemble(&tasks, &instructions, &acfg, per_task, &a.out).data()?;
    eprintln!("{n} prompts written to {}", a.out.display());
    Ok(())
}

fn shuffle(a: ShuffleArgs, cfg: &RunConfig) -> Outcome<()> {
    let input = existing(&a.input, "instruction file")?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let list = stepgen::read_instructions(&input).data()?;
    let out: Vec<StepInstruction> =
        list.iter().map(|si| shuffle_steps(si, derive_seed(seed, &si.task_id))).collect();
    stepgen::write_instructions(&a.out, &out).data()?;
    eprintln!("{} instructions shuffled with seed {seed}", out.len());
    Ok(())
}

fn eval(a: EvalArgs, cfg: &RunConfig) -> Outcome<()> {
    let tasks = load_corpus(&a.corpus, cfg)?;
    let preds_path = existing(&a.predictions, "prediction file")?;
    let raw = evalkit::read_predictions(&preds_path).data()?;
    let preds = evalkit::resolve_predictions(raw, &tasks).data()?;
    let k = a.instances_per_task.or(cfg.eval.instances_per_task).unwrap_or(100);
    let mode = a.macro_mode.or(cfg.eval.macro_mode).unwrap_or_default();
    let outcome = evalkit::evaluate(&preds, &tasks, k, mode).data()?;
    emit(&evalkit::render_outcome(&outcome, &tasks))?;
    if let Some(p) = &a.report {
        write_json(p, &outcome)?;
    }
    Ok(())
}

fn read_outcome(path: &Path) -> Outcome<EvalOutcome> {
    let text = std::fs::read_to_string(existing(path, "eval report")?).data()?;
    serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn compare(a: CompareArgs, cfg: &RunConfig) -> Outcome<()> {
    let ra = read_outcome(&a.a)?;
    let rb = read_outcome(&a.b)?;
    let threshold = a.tie_threshold.or(cfg.eval.tie_threshold).unwrap_or(0.0);
    let delta = evalkit::compare_runs(&ra, &rb, threshold).data()?;
    emit(&evalkit::render_delta(&delta))?;
    if let Some(p) = &a.out {
        write_json(p, &delta)?;
    }
    Ok(())
}

fn exgen_cmd(a: ExgenArgs, cfg: &RunConfig) -> Outcome<()> {
    if a.count < 2 {
        return Err(Failure::Config(exgen::ExgenError::BadCount(a.count).to_string()));
    }
    let tasks = load_corpus(&a.corpus, cfg)?;
    let path = instructions_path(a.instructions.as_ref(), cfg)?;
    let instructions = stepgen::read_instructions(&path).data()?;
    let client = LlmClient::new(backend(&a.backend, cfg)?).config()?;
    let transcripts = a.transcripts.as_ref().or(cfg.corpus.transcripts_dir.as_ref());
    let (records, failures) =
        exgen::run_batch(&client, &tasks, &instructions, a.count, transcripts.map(PathBuf::as_path)).data()?;
    jsonl::write(&a.out, &records).data()?;
    let warned = records.iter().filter(|r| !r.warnings.is_empty()).count();
    eprintln!("{} tasks written, {warned} with warnings, {} failed", records.len(), failures.len());
    if failures.is_empty() {
        Ok(())
    } else {
        let lines: Vec<String> = failures.iter().map(|(t, e)| format!("{t}: {e}")).collect();
        Err(Failure::Data(lines.join("\n")))
    }
}

fn split_named(spec: &str, flag: &str) -> Outcome<(String, String)> {
    match spec.split_once('=') {
        Some((name, rest)) if !name.is_empty() && !rest.is_empty() => Ok((name.to_string(), rest.to_string())),
        _ => Err(Failure::Config(format!("{flag} expects NAME=PATH, got {spec:?}"))),
    }
}

fn annotate_build(a: AnnotateBuildArgs, cfg: &RunConfig) -> Outcome<()> {
    let mut tasks = Vec::new();
    for dir in &a.tasks {
        tasks.extend(load_tasks(&existing(dir, "task directory")?, None)?);
    }
    let annotators = if a.annotators.is_empty() {
        cfg.campaign.annotators.clone()
    } else {
        a.annotators.clone()
    };
    let seed = a.seed.unwrap_or(cfg.seed);
    let pools = match a.kind {
        CampaignKind::Quality => {
            if a.pools.is_empty() {
                return Err(Failure::Config("quality campaigns need at least one --pool".into()));
            }
            let mut pools = Vec::new();
            for spec in &a.pools {
                let (name, rest) = split_named(spec, "--pool")?;
                let (path, shared) = match rest.rsplit_once(':') {
                    Some((p, n)) => (
                        p.to_string(),
                        n.parse::<usize>()
                            .map_err(|_| Failure::Config(format!("bad shared count in {spec:?}")))?,
                    ),
                    None => (rest, 0),
                };
                let list = stepgen::read_instructions(&existing(Path::new(&path), "instruction file")?).data()?;
                let items = quality_items(&name, &list, &tasks).data()?;
                pools.push(Pool { name, items, shared });
            }
            pools
        }
        CampaignKind::Pairwise => {
            if a.systems.len() != 2 {
                return Err(Failure::Config("pairwise campaigns need exactly two --system".into()));
            }
            let mut systems = Vec::new();
            for spec in &a.systems {
                let (name, path) = split_named(spec, "--system")?;
                let raw = evalkit::read_predictions(&existing(Path::new(&path), "prediction file")?).data()?;
                systems.push((name, evalkit::resolve_predictions(raw, &tasks).data()?));
            }
            let items = pairwise_items(
                &systems[0].0,
                &systems[0].1,
                &systems[1].0,
                &systems[1].1,
                &tasks,
                a.per_task,
                seed,
            )
            .data()?;
            vec![Pool { name: "test".into(), items, shared: a.shared }]
        }
    };
    let campaign = build_campaign(&a.id, a.kind, pools, &annotators, seed).data()?;
    campaign.save(&a.out).data()?;
    eprintln!(
        "campaign {}: {} items, {} shared, {} annotators",
        campaign.campaign_id,
        campaign.items.len(),
        campaign.shared_item_ids.len(),
        campaign.annotators.len()
    );
    Ok(())
}

/// `<dir>/<stem>.labels.jsonl` for a campaign file.
pub fn default_store_path(campaign: &Path) -> PathBuf {
    let stem = campaign.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    campaign.with_file_name(format!("{stem}.labels.jsonl"))
}

fn annotate_serve(a: AnnotateServeArgs, cfg: &RunConfig) -> Outcome<()> {
    let mut entries = Vec::new();
    for path in &a.campaigns {
        let campaign = Campaign::load(&existing(path, "campaign file")?).data()?;
        let store = LabelStore::open(&default_store_path(path)).data()?;
        entries.push(server::CampaignEntry { campaign, store });
    }
    let rule = a.consensus.or(cfg.campaign.consensus).unwrap_or_default();
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure::Config(format!("bad listen address: {e}")))?;
    if let Some(ui) = &a.ui {
        existing(ui, "ui directory")?;
    }
    let state = server::AppState::new(entries, rule);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().data()?;
    runtime.block_on(server::serve(state, addr, a.ui.clone())).data()
}

fn annotate_report(a: AnnotateReportArgs, cfg: &RunConfig) -> Outcome<()> {
    let campaign = Campaign::load(&existing(&a.campaign, "campaign file")?).data()?;
    let store_path = match &a.store {
        Some(p) => existing(p, "label store")?,
        None => default_store_path(&a.campaign),
    };
    let store = LabelStore::open(&store_path).data()?;
    let rule = a.consensus.or(cfg.campaign.consensus).unwrap_or_default();
    let policy = a.incomplete.or(cfg.campaign.incomplete).unwrap_or_default();
    let report = Report::build(&campaign, &store.records(), rule, policy).data()?;
    let json = serde_json::to_string_pretty(&report).data()?;
    if a.json {
        emit(&format!("{json}\n"))?;
    } else {
        emit(&report.render())?;
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}
