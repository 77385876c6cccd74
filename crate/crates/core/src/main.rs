use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use mailtod::annotation;
use mailtod::config::AppConfig;
use mailtod::corpus::{self, CleanEmail, IngestFormat, IngestOptions, RawEmail, Split, SplitAssignment};
use mailtod::dialogue::{self, DatasetBundle, Dialogue};
use mailtod::llm::{ChatBackend, HttpChatBackend, LlmClient, MockLlm};
use mailtod::metrics::{self, EvalOptions, Predictions, SmMode};
use mailtod::ontology::Ontology;
use mailtod::pipeline::{self, Clock, Orchestrator, RunMode, RunOptions};
use mailtod::prompt::TemplateSet;
use mailtod::retry::RetryPolicy;
use mailtod::review::{self, ReviewStore};

const DEFAULT_SEED: u64 = 42;

/// Turn monologue request e-mails into annotated task-oriented dialogues.
#[derive(Parser)]
#[command(name = "mailtod", version)]
struct Cli {
    /// Random seed for split sampling and random variant selection [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration file (TOML, or JSON with a .json extension)
    #[arg(long, global = true, env = "MAILTOD_CONFIG")]
    config: Option<PathBuf>,
    /// Use the offline mock model scripted by DIR/mock.json instead of an HTTP endpoint
    #[arg(long, global = true, value_name = "DIR")]
    mock_llm: Option<PathBuf>,
    /// Print errors as a JSON object on stderr
    #[arg(long, global = true)]
    json_errors: bool,
    /// E-mails processed in parallel by the pipeline commands
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Ontology JSON overlaid on the built-in travel ontology
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    /// Prompt template directory (with manifest.json) replacing the built-in templates
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw e-mails (JSONL, CSV or a directory of .txt files) into corpus JSONL
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: IngestFormat,
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed record instead of skipping it
        #[arg(long)]
        strict: bool,
    },
    /// Drop noise e-mails (empty, too short, out-of-office, tests, scams)
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rule file (TOML or JSON)
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Also write one verdict per e-mail as JSONL
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Replace personal data with category placeholders
    Anonymize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Redaction rule file (TOML or JSON)
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Machine-translate e-mails into the target language
    Translate(TranslateArgs),
    /// Sample disjoint train/val/test e-mail sets
    Split {
        #[arg(long = "in")]
        input: PathBuf,
        /// Sizes as TRAIN,VAL,TEST
        #[arg(long, default_value = "1500,150,200")]
        sizes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase one: generate unannotated dialogues
    Generate(RunArgs),
    /// Phase two: annotate every turn of an existing bundle
    Annotate {
        /// Bundle directory with train/val/test.json
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Both phases in one run
    Pipeline(RunArgs),
    /// Check every annotation against the ontology; exits 1 on violations
    Validate {
        /// Bundle directory or dialogue JSON file
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Score predicted annotations against gold annotations
    Evaluate {
        /// Bundle directory or dialogue JSON file
        #[arg(long)]
        gold: PathBuf,
        /// Bundle directory, dialogue JSON file or reduced JSONL
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "prose")]
        sm_mode: SmMode,
        /// Act types must match too
        #[arg(long)]
        strict: bool,
        /// Write the JSON report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a table instead of JSON on stdout
        #[arg(long)]
        table: bool,
    },
    /// Export flattened <ctx>/<annot> state-tracking examples as JSONL
    ExportDst {
        /// Bundle directory or dialogue JSON file
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only this split of a bundle directory
        #[arg(long)]
        split: Option<Split>,
    },
    /// Length statistics of a corpus
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = corpus::DEFAULT_SHORT_THRESHOLD)]
        short_threshold: usize,
    },
    /// Run the review HTTP service
    Serve(ServeArgs),
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    target_lang: Option<String>,
    /// Copy e-mails unchanged
    #[arg(long)]
    passthrough: bool,
    /// Translation endpoint URL
    #[arg(long)]
    mt_url: Option<String>,
    /// JSON object of canned translations used instead of an endpoint
    #[arg(long)]
    mt_mock: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Corpus JSONL
    #[arg(long = "in")]
    input: PathBuf,
    /// Output bundle directory
    #[arg(long)]
    out: PathBuf,
    /// Split assignment from `split`; without it every e-mail goes to train
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Maximum fraction of failed e-mails before exiting nonzero
    #[arg(long)]
    max_failure_rate: Option<f64>,
}

#[derive(Args)]
struct ServeArgs {
    /// Bundle directory with the dialogues to review
    #[arg(long, env = "MAILTOD_DATASET")]
    dataset: Option<PathBuf>,
    /// Corpus JSONL with the source e-mails
    #[arg(long, env = "MAILTOD_CORPUS")]
    corpus: Option<PathBuf>,
    /// Directory for the rating and gold event logs
    #[arg(long, env = "MAILTOD_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, env = "MAILTOD_HOST")]
    host: Option<String>,
    #[arg(long, env = "MAILTOD_PORT")]
    port: Option<u16>,
    /// Directory with the built review UI
    #[arg(long, env = "MAILTOD_STATIC_DIR")]
    static_dir: Option<PathBuf>,
}

/// Settings after merging flags over the config file.
struct Ctx {
    cfg: AppConfig,
    seed: u64,
    mock_llm: Option<PathBuf>,
    concurrency: usize,
}

impl Ctx {
    fn ontology(&self) -> Result<Ontology> {
        Ok(Ontology::load(self.cfg.ontology.as_deref())?)
    }

    fn orchestrator(&self) -> Result<Orchestrator> {
        let p = &self.cfg.pipeline;
        p.generation.check().map_err(anyhow::Error::msg).context("generation config")?;
        p.annotation.check().map_err(anyhow::Error::msg).context("annotation config")?;
        let (gen_backend, ann_backend, clock): (Arc<dyn ChatBackend>, Arc<dyn ChatBackend>, Clock) =
            match &self.mock_llm {
                Some(dir) => {
                    let mock = Arc::new(MockLlm::load_dir(dir).map_err(anyhow::Error::msg)?);
                    (mock.clone(), mock, Clock::Fixed(Clock::EPOCH.into()))
                }
                None => (
                    Arc::new(HttpChatBackend::new(&p.generation)),
                    Arc::new(HttpChatBackend::new(&p.annotation)),
                    Clock::System,
                ),
            };
        let mut orch = Orchestrator::new(
            LlmClient::new(gen_backend, p.generation.clone()),
            LlmClient::new(ann_backend, p.annotation.clone()),
            TemplateSet::load(self.cfg.templates.as_deref())?,
            self.ontology()?,
        );
        if let Some(acts) = &p.act_types {
            orch.act_types = acts.iter().cloned().collect();
        }
        orch.variant_policy = p.variant_policy;
        orch.clock = clock;
        Ok(orch)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let json_errors = cli.json_errors;
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(err) => {
            let config_json = json_errors;
            if config_json {
                let body = json!({
                    "error": error_code(&err),
                    "message": format!("{err:#}"),
                });
                eprintln!("{body}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::FAILURE
        }
    }
}

fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<metrics::MetricsError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<review::ReviewError>() {
            return e.code();
        }
        if let Some(e) = cause.downcast_ref::<corpus::CorpusError>() {
            return match e {
                corpus::CorpusError::UnreadableFile { .. } => "UNREADABLE_FILE",
                corpus::CorpusError::MalformedRecord { .. } => "MALFORMED_RECORD",
                corpus::CorpusError::InsufficientCorpus { .. } => "INSUFFICIENT_CORPUS",
                corpus::CorpusError::InvalidRules(_) => "INVALID_RULES",
                corpus::CorpusError::Io(_) => "IO",
            };
        }
        if let Some(e) = cause.downcast_ref::<mailtod::ontology::OntologyError>() {
            return match e {
                mailtod::ontology::OntologyError::DuplicateSlot { .. } => "DUPLICATE_SLOT",
                mailtod::ontology::OntologyError::SchemaParse(_) => "SCHEMA_PARSE",
                mailtod::ontology::OntologyError::Io { .. } => "IO",
            };
        }
        if let Some(e) = cause.downcast_ref::<mailtod::prompt::PromptError>() {
            return match e {
                mailtod::prompt::PromptError::MissingPlaceholder { .. } => "MISSING_PLACEHOLDER",
                mailtod::prompt::PromptError::TemplateNotFound(_) => "TEMPLATE_NOT_FOUND",
                mailtod::prompt::PromptError::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
                mailtod::prompt::PromptError::Manifest(_) => "TEMPLATE_MANIFEST",
                mailtod::prompt::PromptError::TooLong { .. } => "PROMPT_TOO_LONG",
            };
        }
        if let Some(e) = cause.downcast_ref::<corpus::MtError>() {
            return match e {
                corpus::MtError::MtUnavailable(_) => "MT_UNAVAILABLE",
                corpus::MtError::MtRejected(_) => "MT_REJECTED",
            };
        }
        if cause.downcast_ref::<dialogue::DialogueError>().is_some() {
            return "DIALOGUE_FORMAT";
        }
        if cause.downcast_ref::<FailureThreshold>().is_some() {
            return "FAILURE_THRESHOLD";
        }
        if cause.downcast_ref::<ValidationFailed>().is_some() {
            return "VALIDATION_FAILED";
        }
    }
    "ERROR"
}

#[derive(Debug, thiserror::Error)]
#[error("{failed} of {assigned} e-mails failed ({rate:.1}%), above the allowed {max:.1}%")]
struct FailureThreshold {
    failed: usize,
    assigned: usize,
    rate: f64,
    max: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("{0} annotation violations")]
struct ValidationFailed(usize);

async fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(path) => AppConfig::load(path).map_err(anyhow::Error::msg)?,
        None => {
            let mut c = AppConfig::default();
            c.pipeline.resolve();
            c
        }
    };
    if cli.ontology.is_some() {
        cfg.ontology = cli.ontology.clone();
    }
    if cli.templates.is_some() {
        cfg.templates = cli.templates.clone();
    }
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        mock_llm: cli.mock_llm.clone().or_else(|| cfg.mock_llm.clone()),
        concurrency: cli.concurrency.or(cfg.concurrency).unwrap_or(cfg.pipeline.concurrency).max(1),
        cfg,
    };
    match cli.command {
        Command::Ingest {
            input,
            format,
            out,
            strict,
        } => {
            let report = corpus::ingest(&input, format, &IngestOptions { strict })?;
            for w in &report.warnings {
                tracing::warn!(line = w.line, "{}", w.message);
            }
            corpus::write_jsonl(&out, &report.emails)?;
            print_json(&json!({"emails": report.emails.len(), "warnings": report.warnings.len()}));
        }
        Command::Filter {
            input,
            out,
            rules,
            verdicts,
        } => {
            let rules = match rules.or_else(|| ctx.cfg.filter_rules.clone()) {
                Some(p) => corpus::FilterRuleSet::load(&p)?,
                None => corpus::FilterRuleSet::default(),
            };
            let emails = corpus::read_corpus(&input)?;
            let raw: Vec<RawEmail> = emails.iter().cloned().map(RawEmail::from).collect();
            let v = corpus::filter(&raw, &rules);
            let kept: Vec<CleanEmail> = emails
                .into_iter()
                .zip(&v)
                .filter(|(_, v)| v.kept)
                .map(|(e, _)| e)
                .collect();
            corpus::write_corpus(&out, &kept)?;
            if let Some(path) = verdicts {
                corpus::write_jsonl(&path, &v)?;
            }
            let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
            for verdict in v.iter().filter(|v| !v.kept) {
                *by_reason.entry(json!(verdict.reason).as_str().unwrap_or("").to_string()).or_default() += 1;
            }
            print_json(&json!({"total": v.len(), "kept": kept.len(), "dropped": by_reason}));
        }
        Command::Anonymize { input, out, rules } => {
            let rules = match rules.or_else(|| ctx.cfg.redaction_rules.clone()) {
                Some(p) => corpus::RedactionRuleSet::load(&p)?,
                None => corpus::RedactionRuleSet::default(),
            };
            let redactor = rules.compile()?;
            let emails = corpus::read_corpus(&input)?;
            let clean: Vec<CleanEmail> = emails
                .into_iter()
                .map(|e| {
                    let mut c = corpus::anonymize(&RawEmail::from(e.clone()), &redactor);
                    c.translated = e.translated;
                    c.redactions.splice(0..0, e.redactions);
                    c
                })
                .collect();
            corpus::write_corpus(&out, &clean)?;
            let spans: usize = clean.iter().map(|c| c.redactions.len()).sum();
            print_json(&json!({"emails": clean.len(), "redactions": spans}));
        }
        Command::Translate(args) => translate(&ctx, args).await?,
        Command::Split { input, sizes, out } => {
            let sizes = parse_sizes(&sizes)?;
            let emails = corpus::read_corpus(&input)?;
            let a = corpus::sample_splits(&emails, sizes, ctx.seed)?;
            write_json(&out, &a)?;
            print_json(&json!({
                "seed": ctx.seed,
                "train": a.count(Split::Train),
                "val": a.count(Split::Validation),
                "test": a.count(Split::Test),
            }));
        }
        Command::Generate(args) => return run_pipeline(&ctx, args, RunMode::Generate).await,
        Command::Pipeline(args) => return run_pipeline(&ctx, args, RunMode::Full).await,
        Command::Annotate { bundle, out } => {
            let orch = ctx.orchestrator()?;
            let input = DatasetBundle::load_dir(&bundle)?;
            let (annotated, ledger) = pipeline::annotate_bundle(&orch, &input, ctx.concurrency).await;
            annotated.write_dir(&out)?;
            pipeline::write_ledger(&out.join("failures.jsonl"), &ledger)?;
            let turns: usize = annotated.iter().map(|(_, d)| d.turns.len()).sum();
            print_json(&json!({
                "dialogues": annotated.iter().count(),
                "turns": turns,
                "ledger_entries": ledger.len(),
            }));
        }
        Command::Validate { input } => {
            let ont = ctx.ontology()?;
            let dialogues = load_dialogues(&input, None)?;
            let mut violations = Vec::new();
            let mut items = 0;
            for d in &dialogues {
                for (t, turn) in d.turns.iter().enumerate() {
                    items += turn.items.len();
                    for v in annotation::validate(&turn.items, &ont) {
                        violations.push(json!({"dialogue_id": d.id, "turn": t, "violation": v}));
                    }
                }
            }
            print_json(&json!({
                "dialogues": dialogues.len(),
                "items": items,
                "violations": violations,
            }));
            if !violations.is_empty() {
                return Err(ValidationFailed(violations.len()).into());
            }
        }
        Command::Evaluate {
            gold,
            pred,
            sm_mode,
            strict,
            out,
            table,
        } => {
            let gold = load_dialogues(&gold, None)?;
            let pred = if pred.is_dir() {
                Predictions::from_dialogues(&load_dialogues(&pred, None)?)?
            } else {
                metrics::read_predictions(&pred)?
            };
            let report = metrics::evaluate(&gold, &pred, &ctx.ontology()?, EvalOptions { sm_mode, strict })?;
            if let Some(path) = &out {
                write_json(path, &report)?;
            }
            if table {
                print!("{}", metrics::render_table(&report));
            } else if out.is_none() {
                print_json(&report);
            } else {
                eprint!("{}", metrics::render_table(&report));
            }
        }
        Command::ExportDst { input, out, split } => {
            let dialogues = load_dialogues(&input, split)?;
            let records = metrics::dst_records(&dialogues, &ctx.ontology()?);
            metrics::write_dst_jsonl(&out, &records).with_context(|| out.display().to_string())?;
            print_json(&json!({"records": records.len()}));
        }
        Command::Stats {
            input,
            short_threshold,
        } => {
            let emails = corpus::read_corpus(&input)?;
            print_json(&corpus::corpus_stats(&emails, short_threshold));
        }
        Command::Serve(args) => serve(&ctx, args).await?,
    }
    Ok(ExitCode::SUCCESS)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| path.display().to_string())
}

fn parse_sizes(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("invalid --sizes `{s}`"))?;
    match parts.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => bail!("--sizes needs three comma-separated numbers, got `{s}`"),
    }
}

/// Dialogues from a bundle directory (optionally one split) or a JSON file.
fn load_dialogues(path: &Path, split: Option<Split>) -> Result<Vec<Dialogue>> {
    if path.is_dir() {
        let bundle = DatasetBundle::load_dir(path)?;
        Ok(bundle
            .iter()
            .filter(|(s, _)| split.is_none_or(|want| want == *s))
            .map(|(_, d)| d.clone())
            .collect())
    } else {
        Ok(dialogue::read_dialogues(path)?)
    }
}

async fn translate(ctx: &Ctx, args: TranslateArgs) -> Result<()> {
    let tc = &ctx.cfg.translate;
    let opts = corpus::TranslateOptions {
        target_lang: args.target_lang.unwrap_or_else(|| tc.target_lang.clone()),
        passthrough: args.passthrough || tc.passthrough,
        retry: RetryPolicy {
            max_retries: tc.max_retries,
            ..RetryPolicy::default()
        },
        concurrency: ctx.concurrency,
    };
    let mt: Arc<dyn corpus::MtClient> = match (args.mt_mock.or_else(|| tc.mock.clone()), args.mt_url.or_else(|| tc.url.clone())) {
        (Some(mock), _) => {
            let text = std::fs::read_to_string(&mock).with_context(|| mock.display().to_string())?;
            Arc::new(corpus::MockMtClient::from_json(&text).with_context(|| mock.display().to_string())?)
        }
        (None, Some(url)) => Arc::new(corpus::HttpMtClient::new(
            url,
            std::env::var(&tc.token_env).ok(),
            Duration::from_secs(tc.timeout_secs),
        )),
        (None, None) if opts.passthrough => Arc::new(corpus::MockMtClient::default()),
        (None, None) => bail!("translate needs --mt-url, --mt-mock or --passthrough"),
    };
    let emails = corpus::read_corpus(&args.input)?;
    let results = corpus::translate_all(&emails, mt, &opts).await;
    let mut out = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (email, r) in emails.iter().zip(results) {
        match r {
            Ok(e) => out.push(e),
            Err(e) => {
                failed += 1;
                tracing::warn!(email = %email.id, error = %e, "translation failed; e-mail dropped");
            }
        }
    }
    corpus::write_corpus(&args.out, &out)?;
    print_json(&json!({"translated": out.iter().filter(|e| e.translated).count(), "total": emails.len(), "failed": failed}));
    Ok(())
}

async fn run_pipeline(ctx: &Ctx, args: RunArgs, mode: RunMode) -> Result<ExitCode> {
    let emails = corpus::read_corpus(&args.input)?;
    let splits: SplitAssignment = match &args.splits {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            serde_json::from_str(&text).with_context(|| p.display().to_string())?
        }
        None => SplitAssignment::all_in(Split::Train, emails.iter().map(|e| e.id.clone())),
    };
    let orch = ctx.orchestrator()?;
    let mut effective = ctx.cfg.pipeline.clone();
    effective.concurrency = ctx.concurrency;
    if let Some(rate) = args.max_failure_rate {
        effective.max_failure_rate = rate;
    }
    let mut inputs = BTreeMap::from([("corpus".to_string(), args.input.display().to_string())]);
    if let Some(p) = &args.splits {
        inputs.insert("splits".into(), p.display().to_string());
    }
    if let Some(p) = &ctx.mock_llm {
        inputs.insert("mock_llm".into(), p.display().to_string());
    }
    let opts = RunOptions {
        out_dir: &args.out,
        mode,
        concurrency: ctx.concurrency,
        seed: ctx.seed,
        config_hash: effective.hash(),
        inputs,
    };
    let out = pipeline::run_pipeline(&orch, &emails, &splits, &opts).await?;
    print_json(&out.manifest.counts);
    let rate = out.manifest.failure_rate();
    if rate > effective.max_failure_rate {
        return Err(FailureThreshold {
            failed: out.manifest.counts.failed,
            assigned: out.manifest.counts.assigned,
            rate: rate * 100.0,
            max: effective.max_failure_rate * 100.0,
        }
        .into());
    }
    Ok(ExitCode::SUCCESS)
}

async fn serve(ctx: &Ctx, args: ServeArgs) -> Result<()> {
    let sc = &ctx.cfg.serve;
    let dataset = args.dataset.or_else(|| sc.dataset.clone());
    let bundle = match &dataset {
        Some(dir) => DatasetBundle::load_dir(dir)?,
        None => DatasetBundle::default(),
    };
    let emails = match args.corpus.or_else(|| sc.corpus.clone()) {
        Some(p) => corpus::read_corpus(&p)?,
        None => Vec::new(),
    };
    let data_dir = args.data_dir.unwrap_or_else(|| sc.data_dir.clone());
    let store = ReviewStore::open(bundle, emails, ctx.ontology()?, &data_dir, Clock::System)?;
    let host = args.host.unwrap_or_else(|| sc.host.clone());
    let addr: SocketAddr = format!("{host}:{}", args.port.unwrap_or(sc.port))
        .parse()
        .context("invalid host/port")?;
    review::serve(Arc::new(store), addr, args.static_dir.or_else(|| sc.static_dir.clone())).await?;
    Ok(())
}
