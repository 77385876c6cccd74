//! Two-phase orchestration: one generation request per e-mail, then one
//! annotation request per turn, assembled into a dataset bundle.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   train.json val.json test.json   dialogues per split
//!   failures.jsonl                  ledger of warnings and errors
//!   manifest.json                   run manifest, written last
//!   cache/<email>.json              per-e-mail results, used to resume
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use futures::future::join_all;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{self, AnnotationItem, ParseError, MARKER};
use crate::corpus::{CleanEmail, Split, SplitAssignment};
use crate::dialogue::{
    self, DatasetBundle, Dialogue, DialogueError, GenerationMeta, WarningKind,
};
use crate::llm::{LlmClient, LlmClientConfig};
use crate::ontology::Ontology;
use crate::prompt::{build_annotation_prompt, build_generation_prompt, TemplateSet, VariantPolicy};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Prompt,
    Generation,
    Postprocess,
    Parse,
    Annotation,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One line of `failures.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub email_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<usize>,
    pub severity: Severity,
    pub kind: String,
    pub message: String,
}

impl LedgerEntry {
    fn email(email_id: &str, stage: Stage, severity: Severity, kind: &str, message: String) -> Self {
        Self {
            email_id: email_id.to_string(),
            dialogue_id: None,
            stage,
            turn: None,
            severity,
            kind: kind.to_string(),
            message,
        }
    }

    fn turn(d: &Dialogue, turn: usize, stage: Stage, severity: Severity, kind: &str, message: String) -> Self {
        Self {
            email_id: d.email_id.clone(),
            dialogue_id: Some(d.id.clone()),
            stage,
            turn: Some(turn),
            severity,
            kind: kind.to_string(),
            message,
        }
    }
}

/// Source of timestamps; `Fixed` makes runs byte-reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clock {
    System,
    Fixed(String),
}

impl Clock {
    pub const EPOCH: &'static str = "1970-01-01T00:00:00Z";

    pub fn now(&self) -> String {
        match self {
            Clock::System => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            Clock::Fixed(t) => t.clone(),
        }
    }
}

/// Settings shared by the pipeline commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub generation: LlmClientConfig,
    pub annotation: LlmClientConfig,
    pub variant_policy: VariantPolicy,
    /// E-mails processed at once.
    pub concurrency: usize,
    /// Fraction of e-mails allowed to fail before the run counts as failed.
    pub max_failure_rate: f64,
    /// Act types accepted in annotations; `None` uses the built-in list.
    pub act_types: Option<Vec<String>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            generation: LlmClientConfig::generation(),
            annotation: LlmClientConfig::annotation(),
            variant_policy: VariantPolicy::default(),
            concurrency: 4,
            max_failure_rate: 0.1,
            act_types: None,
        }
    }
}

impl PipelineConfig {
    /// Fills unset per-phase temperatures with the phase defaults.
    pub fn resolve(&mut self) {
        self.generation
            .temperature
            .get_or_insert(LlmClientConfig::GENERATION_TEMPERATURE);
        self.annotation
            .temperature
            .get_or_insert(LlmClientConfig::ANNOTATION_TEMPERATURE);
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

pub struct Orchestrator {
    pub generation: LlmClient,
    pub annotation: LlmClient,
    pub templates: TemplateSet,
    pub ontology: Ontology,
    pub act_types: BTreeSet<String>,
    pub variant_policy: VariantPolicy,
    pub clock: Clock,
}

impl Orchestrator {
    pub fn new(generation: LlmClient, annotation: LlmClient, templates: TemplateSet, ontology: Ontology) -> Self {
        Self {
            generation,
            annotation,
            templates,
            ontology,
            act_types: annotation::DEFAULT_ACT_TYPES.iter().map(|s| s.to_string()).collect(),
            variant_policy: VariantPolicy::default(),
            clock: Clock::System,
        }
    }

    /// Phase one for the e-mail at corpus position `index`.
    ///
    /// On failure returns the ledger explaining why no dialogue exists.
    pub async fn generate_dialogue(
        &self,
        email: &CleanEmail,
        index: usize,
    ) -> Result<(Dialogue, Vec<LedgerEntry>), Vec<LedgerEntry>> {
        let id = email.id.as_str();
        let tpl = &self.templates.generation;
        let variant = self.variant_policy.select(index, tpl.variants.len());
        let fail = |stage, kind: &str, message: String| {
            vec![LedgerEntry::email(id, stage, Severity::Error, kind, message)]
        };
        let prompt = build_generation_prompt(email, variant, tpl)
            .and_then(|p| {
                p.check_budget(self.generation.config().max_prompt_tokens)?;
                Ok(p)
            })
            .map_err(|e| fail(Stage::Prompt, "PROMPT", e.to_string()))?;
        let raw = self.generation.complete(&prompt).await.map_err(|e| {
            fail(
                Stage::Generation,
                e.value.code(),
                format!("{} (after {} attempts)", e.value, e.attempts),
            )
        })?;
        let clean = dialogue::postprocess_dialogue(&raw.value)
            .map_err(|e| fail(Stage::Postprocess, "NO_DIALOGUE_FOUND", e.to_string()))?;
        let parsed = dialogue::parse_dialogue_text(&clean)
            .map_err(|e| fail(Stage::Parse, "NO_DIALOGUE_FOUND", e.to_string()))?;

        let dialogue_id = Dialogue::id_for_email(id);
        let mut ledger: Vec<LedgerEntry> = parsed
            .warnings
            .iter()
            .filter(|w| w.kind != WarningKind::AnnotationParse)
            .map(|w| LedgerEntry {
                email_id: id.to_string(),
                dialogue_id: Some(dialogue_id.clone()),
                stage: Stage::Parse,
                turn: Some(w.turn),
                severity: Severity::Warning,
                kind: serde_json::to_value(w.kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                message: w.message.clone(),
            })
            .collect();
        let mut turns = parsed.turns;
        let annotated = turns.iter().filter(|t| t.raw_suffix.is_some()).count();
        if annotated > 0 {
            ledger.push(LedgerEntry::email(
                id,
                Stage::Parse,
                Severity::Warning,
                "GENERATION_ANNOTATIONS_DROPPED",
                format!("{annotated} generated turns carried annotations; discarded"),
            ));
        }
        for t in &mut turns {
            t.items.clear();
            t.raw_suffix = None;
        }
        if turns.len() < 2 {
            ledger.push(LedgerEntry::email(
                id,
                Stage::Parse,
                Severity::Error,
                "TOO_FEW_TURNS",
                format!("dialogue has {} turn(s), at least 2 required", turns.len()),
            ));
            return Err(ledger);
        }
        let dialogue = Dialogue {
            id: dialogue_id,
            email_id: id.to_string(),
            variant_id: variant,
            generation_meta: GenerationMeta {
                model: self.generation.config().model.clone(),
                temperature: self.generation.config().temperature(),
                timestamp: self.clock.now(),
            },
            turns,
        };
        Ok((dialogue, ledger))
    }

    /// Phase two: one independent request per turn, each seeing only the
    /// turns up to and including its target.
    pub async fn annotate_dialogue(&self, mut d: Dialogue) -> (Dialogue, Vec<LedgerEntry>) {
        let tpl = &self.templates.annotation;
        let requests = (0..d.turns.len()).map(|t| {
            let prompt = build_annotation_prompt(&d, t, &self.ontology, tpl);
            async move {
                let prompt = prompt.map_err(|e| ("PROMPT".to_string(), e.to_string()))?;
                prompt
                    .check_budget(self.annotation.config().max_prompt_tokens)
                    .map_err(|e| ("PROMPT".to_string(), e.to_string()))?;
                self.annotation.complete(&prompt).await.map_err(|e| {
                    (
                        e.value.code().to_string(),
                        format!("{} (after {} attempts)", e.value, e.attempts),
                    )
                })
            }
        });
        let completions = join_all(requests).await;

        let mut ledger = Vec::new();
        let mut results = Vec::with_capacity(completions.len());
        for (t, completion) in completions.into_iter().enumerate() {
            let text = match completion {
                Ok(a) => a.value,
                Err((kind, message)) => {
                    ledger.push(LedgerEntry::turn(&d, t, Stage::Annotation, Severity::Error, &kind, message));
                    results.push((Vec::new(), None));
                    continue;
                }
            };
            let interpreted = interpret_annotation(&text);
            if interpreted.extra_lines > 0 {
                ledger.push(LedgerEntry::turn(
                    &d,
                    t,
                    Stage::Annotation,
                    Severity::Warning,
                    "EXTRA_ANNOTATIONS",
                    format!("{} additional annotated lines ignored", interpreted.extra_lines),
                ));
            }
            match interpreted.items {
                Ok(items) => {
                    for v in annotation::validate_with(&items, &self.ontology, Some(&self.act_types)) {
                        let kind = serde_json::to_value(v.kind)
                            .ok()
                            .and_then(|k| k.as_str().map(str::to_string))
                            .unwrap_or_default();
                        ledger.push(LedgerEntry::turn(
                            &d,
                            t,
                            Stage::Validation,
                            Severity::Warning,
                            &kind,
                            format!("{}: {}", v.item, v.message),
                        ));
                    }
                    results.push((items, Some(interpreted.suffix)));
                }
                Err(e) => {
                    ledger.push(LedgerEntry::turn(
                        &d,
                        t,
                        Stage::Annotation,
                        Severity::Error,
                        "PARSE_ERROR",
                        format!("{e}; completion: {}", text.trim()),
                    ));
                    results.push((Vec::new(), Some(interpreted.suffix)));
                }
            }
        }
        for (turn, (items, suffix)) in d.turns.iter_mut().zip(results) {
            turn.items = items;
            turn.raw_suffix = suffix;
        }
        (d, ledger)
    }
}

/// How an annotation completion was read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterpretedAnnotation {
    pub suffix: String,
    pub items: Result<Vec<AnnotationItem>, ParseError>,
    /// Annotated lines other than the one used.
    pub extra_lines: usize,
}

/// Reads a completion for one turn.
///
/// Code fences are dropped. If lines contain the `//` marker, the last such
/// line is the target turn's annotation and the rest are counted as extras.
/// Otherwise the whole trimmed completion is parsed as an item list.
pub fn interpret_annotation(completion: &str) -> InterpretedAnnotation {
    let lines: Vec<&str> = completion
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();
    let marked: Vec<&str> = lines.iter().copied().filter(|l| l.contains(MARKER)).collect();
    let (suffix, extra_lines) = match marked.last() {
        Some(last) => (
            annotation::extract_annotations(last).1.unwrap_or_default(),
            marked.len() - 1,
        ),
        None => (lines.join("\n").trim().to_string(), 0),
    };
    InterpretedAnnotation {
        items: annotation::parse_items(&suffix),
        suffix,
        extra_lines,
    }
}

/// What the pipeline runs for each e-mail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Phase one only; turns carry no annotations.
    Generate,
    /// Both phases.
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    annotated: bool,
    dialogue: Dialogue,
    ledger: Vec<LedgerEntry>,
}

fn cache_path(out_dir: &Path, email_id: &str) -> PathBuf {
    let safe = !email_id.is_empty()
        && email_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !email_id.starts_with('.');
    let name = if safe {
        email_id.to_string()
    } else {
        format!("h-{}", hex::encode(Sha256::digest(email_id.as_bytes())))
    };
    out_dir.join("cache").join(format!("{name}.json"))
}

fn read_cache(path: &Path) -> Option<CacheEntry> {
    let text = fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(entry) => Some(entry),
        Err(e) => {
            tracing::warn!(path = %path.display(), error = %e, "ignoring unreadable cache entry");
            None
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub emails: usize,
    /// E-mails with a split assignment.
    pub assigned: usize,
    /// E-mails sent to the model in this run.
    pub processed: usize,
    /// E-mails taken from the cache.
    pub resumed: usize,
    pub dialogues: usize,
    /// E-mails without a dialogue.
    pub failed: usize,
    pub turns: usize,
    pub warnings: usize,
    pub errors: usize,
    pub per_split: BTreeMap<Split, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub mode: RunMode,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub output_dir: String,
    pub models: BTreeMap<String, String>,
    pub counts: RunCounts,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn failure_rate(&self) -> f64 {
        if self.counts.assigned == 0 {
            0.0
        } else {
            self.counts.failed as f64 / self.counts.assigned as f64
        }
    }
}

pub struct RunOptions<'a> {
    pub out_dir: &'a Path,
    pub mode: RunMode,
    pub concurrency: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Recorded in the manifest, e.g. `corpus` and `splits` paths.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub bundle: DatasetBundle,
    pub ledger: Vec<LedgerEntry>,
    pub manifest: RunManifest,
}

enum EmailResult {
    Cached(CacheEntry),
    Fresh(Result<CacheEntry, Vec<LedgerEntry>>),
}

async fn process_email(
    orch: &Orchestrator,
    email: &CleanEmail,
    index: usize,
    opts: &RunOptions<'_>,
) -> Result<EmailResult, PipelineError> {
    let path = cache_path(opts.out_dir, &email.id);
    let needs_annotation = opts.mode == RunMode::Full;
    let cached = read_cache(&path);
    if let Some(entry) = &cached {
        if entry.annotated || !needs_annotation {
            return Ok(EmailResult::Cached(entry.clone()));
        }
    }
    let (dialogue, mut ledger) = match cached {
        Some(entry) => (entry.dialogue, entry.ledger),
        None => match orch.generate_dialogue(email, index).await {
            Ok(ok) => ok,
            Err(ledger) => return Ok(EmailResult::Fresh(Err(ledger))),
        },
    };
    let dialogue = if needs_annotation {
        let (d, more) = orch.annotate_dialogue(dialogue).await;
        ledger.extend(more);
        d
    } else {
        dialogue
    };
    let entry = CacheEntry {
        annotated: needs_annotation,
        dialogue,
        ledger,
    };
    let bytes = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
    write_atomic(&path, &bytes)?;
    Ok(EmailResult::Fresh(Ok(entry)))
}

/// Runs the pipeline over every e-mail that has a split assignment.
///
/// Results are merged in corpus order regardless of completion order.
/// E-mails with a cache entry from an earlier run are not sent again.
pub async fn run_pipeline(
    orch: &Orchestrator,
    emails: &[CleanEmail],
    splits: &SplitAssignment,
    opts: &RunOptions<'_>,
) -> Result<RunOutput, PipelineError> {
    let started_at = orch.clock.now();
    fs::create_dir_all(opts.out_dir.join("cache")).map_err(io_err(opts.out_dir))?;

    let work: Vec<(usize, &CleanEmail, Split)> = emails
        .iter()
        .enumerate()
        .filter_map(|(i, e)| splits.get(&e.id).map(|s| (i, e, s)))
        .collect();
    let results: Vec<Result<EmailResult, PipelineError>> = stream::iter(work.iter())
        .map(|(i, e, _)| process_email(orch, e, *i, opts))
        .buffered(opts.concurrency.max(1))
        .collect()
        .await;

    let mut counts = RunCounts {
        emails: emails.len(),
        assigned: work.len(),
        ..Default::default()
    };
    let mut bundle = DatasetBundle::default();
    for split in Split::ALL {
        bundle.splits.insert(split, Vec::new());
    }
    let mut ledger = Vec::new();
    for ((_, _, split), result) in work.iter().zip(results) {
        let outcome = match result? {
            EmailResult::Cached(entry) => {
                counts.resumed += 1;
                Ok(entry)
            }
            EmailResult::Fresh(r) => {
                counts.processed += 1;
                r
            }
        };
        match outcome {
            Ok(entry) => {
                ledger.extend(entry.ledger);
                counts.turns += entry.dialogue.turns.len();
                bundle.splits.entry(*split).or_default().push(entry.dialogue);
            }
            Err(entries) => {
                counts.failed += 1;
                ledger.extend(entries);
            }
        }
    }
    counts.dialogues = work.len() - counts.failed;
    counts.warnings = ledger.iter().filter(|l| l.severity == Severity::Warning).count();
    counts.errors = ledger.len() - counts.warnings;
    counts.per_split = bundle.splits.iter().map(|(s, d)| (*s, d.len())).collect();

    bundle.write_dir(opts.out_dir)?;
    write_ledger(&opts.out_dir.join("failures.jsonl"), &ledger)?;

    let models = match opts.mode {
        RunMode::Generate => BTreeMap::from([("generation".into(), orch.generation.config().model.clone())]),
        RunMode::Full => BTreeMap::from([
            ("generation".into(), orch.generation.config().model.clone()),
            ("annotation".into(), orch.annotation.config().model.clone()),
        ]),
    };
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: opts.mode,
        config_hash: opts.config_hash.clone(),
        seed: opts.seed,
        inputs: opts.inputs.clone(),
        output_dir: opts.out_dir.display().to_string(),
        models,
        counts,
        started_at,
        finished_at: orch.clock.now(),
    };
    write_manifest(opts.out_dir, &manifest)?;
    Ok(RunOutput {
        bundle,
        ledger,
        manifest,
    })
}

/// Annotates every dialogue of an existing bundle (phase two only).
pub async fn annotate_bundle(
    orch: &Orchestrator,
    bundle: &DatasetBundle,
    concurrency: usize,
) -> (DatasetBundle, Vec<LedgerEntry>) {
    let items: Vec<(Split, &Dialogue)> = bundle.iter().collect();
    let annotated: Vec<(Dialogue, Vec<LedgerEntry>)> = stream::iter(items.iter())
        .map(|(_, d)| orch.annotate_dialogue((*d).clone()))
        .buffered(concurrency.max(1))
        .collect()
        .await;
    let mut out = DatasetBundle::default();
    let mut ledger = Vec::new();
    for ((split, _), (d, l)) in items.iter().zip(annotated) {
        out.splits.entry(*split).or_default().push(d);
        ledger.extend(l);
    }
    (out, ledger)
}

pub fn write_ledger(path: &Path, ledger: &[LedgerEntry]) -> Result<(), PipelineError> {
    let mut text = String::new();
    for entry in ledger {
        text.push_str(&serde_json::to_string(entry).expect("ledger serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Writes `manifest.json` via a temporary file and rename.
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&dir.join("manifest.json"), &bytes)
}
