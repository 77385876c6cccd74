//! Event-log persistence for reviews.
//!
//! Every accepted write is appended to a JSONL file in the data directory
//! (`ratings.jsonl`, `gold.jsonl`, `skips.jsonl`) before the in-memory
//! snapshot is replaced. Reads work on the current snapshot without locking.
//! On startup the logs are replayed to rebuild the index.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use arc_swap::ArcSwap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

use super::{aggregate, summarize, AggregatedRating, CorpusSummary, Rating, RatingInput, TARGET_RATINGS};
use crate::annotation::{self, AnnotationItem, Violation};
use crate::corpus::{CleanEmail, Split};
use crate::dialogue::{DatasetBundle, Dialogue};
use crate::ontology::Ontology;
use crate::pipeline::Clock;

pub const DEFAULT_PAGE_SIZE: usize = 20;
const MAX_PAGE_SIZE: usize = 500;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("unknown dialogue `{0}`")]
    UnknownDialogue(String),
    #[error("validation failed: {message}")]
    ValidationFailed {
        message: String,
        violations: Vec<Violation>,
    },
    #[error("dialogue `{0}` is not in the test split")]
    NotTestSplit(String),
    #[error("no ratings for dialogue `{0}`")]
    NoRatings(String),
    #[error("{path}: {message}")]
    Storage { path: String, message: String },
}

impl ReviewError {
    pub fn code(&self) -> &'static str {
        match self {
            ReviewError::UnknownSplit(_) => "UNKNOWN_SPLIT",
            ReviewError::UnknownDialogue(_) => "UNKNOWN_DIALOGUE",
            ReviewError::ValidationFailed { .. } => "VALIDATION_FAILED",
            ReviewError::NotTestSplit(_) => "NOT_TEST_SPLIT",
            ReviewError::NoRatings(_) => "NO_RATINGS",
            ReviewError::Storage { .. } => "STORAGE",
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ReviewError::ValidationFailed {
            message: message.into(),
            violations: Vec::new(),
        }
    }
}

/// One saved gold edit: the items of one turn at one version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub dialogue_id: String,
    pub turn: usize,
    /// Strictly increasing per dialogue, starting at 1.
    pub version: u64,
    pub items: Vec<AnnotationItem>,
    pub annotation: String,
    pub editor_id: String,
    pub saved_at: String,
}

/// Body of a gold edit: either DSL text or structured items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldInput {
    pub editor_id: String,
    #[serde(default)]
    pub annotation: Option<String>,
    #[serde(default)]
    pub items: Option<Vec<AnnotationItem>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEvent {
    pub dialogue_id: String,
    pub rater_id: String,
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSummary {
    pub id: String,
    pub email_id: String,
    pub turns: usize,
    pub ratings: usize,
    pub target_ratings: usize,
    pub gold_turns: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub split: Split,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
    pub items: Vec<DialogueSummary>,
}

/// A dialogue with its source e-mail and current gold edits. Other raters'
/// judgments are not included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueView {
    pub split: Split,
    pub dialogue: Dialogue,
    pub email: Option<CleanEmail>,
    pub gold: BTreeMap<usize, GoldRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRef {
    pub dialogue_id: String,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub total_turns: usize,
    pub edited_turns: usize,
    pub percent: f64,
    pub unedited: Vec<TurnRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldExport {
    pub dialogues: Vec<Dialogue>,
    pub coverage: Coverage,
}

struct Dataset {
    order: BTreeMap<Split, Vec<String>>,
    dialogues: HashMap<String, (Split, Dialogue)>,
    emails: HashMap<String, CleanEmail>,
    ontology: Ontology,
}

#[derive(Clone)]
struct Snapshot {
    data: Arc<Dataset>,
    /// Current rating per dialogue and rater.
    ratings: BTreeMap<String, BTreeMap<String, Rating>>,
    /// Latest gold record per dialogue and turn.
    gold: BTreeMap<String, BTreeMap<usize, GoldRecord>>,
    gold_version: BTreeMap<String, u64>,
    skips: Vec<SkipEvent>,
}

impl Snapshot {
    fn apply_rating(&mut self, r: Rating) {
        self.ratings
            .entry(r.dialogue_id.clone())
            .or_default()
            .insert(r.input.rater_id.clone(), r);
    }

    fn apply_gold(&mut self, g: GoldRecord) {
        let v = self.gold_version.entry(g.dialogue_id.clone()).or_default();
        *v = (*v).max(g.version);
        self.gold.entry(g.dialogue_id.clone()).or_default().insert(g.turn, g);
    }

    fn ratings_of(&self, id: &str) -> Vec<Rating> {
        self.ratings
            .get(id)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default()
    }
}

pub struct ReviewStore {
    dir: PathBuf,
    clock: Clock,
    snapshot: ArcSwap<Snapshot>,
    writer: Mutex<()>,
}

const RATINGS_LOG: &str = "ratings.jsonl";
const GOLD_LOG: &str = "gold.jsonl";
const SKIPS_LOG: &str = "skips.jsonl";

fn storage_err(path: &Path, e: impl std::fmt::Display) -> ReviewError {
    ReviewError::Storage {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn replay<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ReviewError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| storage_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| storage_err(path, format!("line {}: {e}", n + 1))))
        .collect()
}

fn append<T: Serialize>(path: &Path, event: &T) -> Result<(), ReviewError> {
    let mut line = serde_json::to_string(event).expect("event serializes");
    line.push('\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| storage_err(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| storage_err(path, e))?;
    f.sync_data().map_err(|e| storage_err(path, e))
}

impl ReviewStore {
    /// Opens the store, replaying any event logs found in `dir`.
    pub fn open(
        bundle: DatasetBundle,
        emails: Vec<CleanEmail>,
        ontology: Ontology,
        dir: &Path,
        clock: Clock,
    ) -> Result<Self, ReviewError> {
        fs::create_dir_all(dir).map_err(|e| storage_err(dir, e))?;
        let mut order: BTreeMap<Split, Vec<String>> = BTreeMap::new();
        let mut dialogues = HashMap::new();
        for (split, d) in bundle.iter() {
            order.entry(split).or_default().push(d.id.clone());
            dialogues.insert(d.id.clone(), (split, d.clone()));
        }
        let data = Dataset {
            order,
            dialogues,
            emails: emails.into_iter().map(|e| (e.id.clone(), e)).collect(),
            ontology,
        };
        let mut snap = Snapshot {
            data: Arc::new(data),
            ratings: BTreeMap::new(),
            gold: BTreeMap::new(),
            gold_version: BTreeMap::new(),
            skips: Vec::new(),
        };
        for r in replay::<Rating>(&dir.join(RATINGS_LOG))? {
            snap.apply_rating(r);
        }
        for g in replay::<GoldRecord>(&dir.join(GOLD_LOG))? {
            snap.apply_gold(g);
        }
        snap.skips = replay(&dir.join(SKIPS_LOG))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            clock,
            snapshot: ArcSwap::from_pointee(snap),
            writer: Mutex::new(()),
        })
    }

    pub fn ontology(&self) -> Ontology {
        self.snapshot.load().data.ontology.clone()
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    /// One page (1-based) of a split, in bundle order.
    pub fn list_dialogues(&self, split: &str, page: usize, page_size: usize) -> Result<Page, ReviewError> {
        let split: Split = split.parse().map_err(|_| ReviewError::UnknownSplit(split.to_string()))?;
        let snap = self.snapshot.load();
        let page_size = page_size.clamp(1, MAX_PAGE_SIZE);
        let page = page.max(1);
        let ids = snap.data.order.get(&split).map(Vec::as_slice).unwrap_or(&[]);
        let items = ids
            .iter()
            .skip((page - 1) * page_size)
            .take(page_size)
            .map(|id| {
                let (_, d) = &snap.data.dialogues[id];
                DialogueSummary {
                    id: id.clone(),
                    email_id: d.email_id.clone(),
                    turns: d.turns.len(),
                    ratings: snap.ratings.get(id).map_or(0, BTreeMap::len),
                    target_ratings: TARGET_RATINGS,
                    gold_turns: snap.gold.get(id).map_or(0, BTreeMap::len),
                }
            })
            .collect();
        Ok(Page {
            split,
            page,
            page_size,
            total: ids.len(),
            pages: ids.len().div_ceil(page_size),
            items,
        })
    }

    pub fn get_dialogue(&self, id: &str) -> Result<DialogueView, ReviewError> {
        let snap = self.snapshot.load();
        let (split, d) = snap
            .data
            .dialogues
            .get(id)
            .ok_or_else(|| ReviewError::UnknownDialogue(id.to_string()))?;
        Ok(DialogueView {
            split: *split,
            dialogue: d.clone(),
            email: snap.data.emails.get(&d.email_id).cloned(),
            gold: snap.gold.get(id).cloned().unwrap_or_default(),
        })
    }

    /// Stores a rating; a later one from the same rater replaces it.
    pub async fn submit_rating(&self, dialogue_id: &str, input: RatingInput) -> Result<Rating, ReviewError> {
        let violations = input.violations();
        if !violations.is_empty() {
            return Err(ReviewError::invalid(violations.join("; ")));
        }
        let _guard = self.writer.lock().await;
        let mut snap = Snapshot::clone(&self.snapshot.load());
        if !snap.data.dialogues.contains_key(dialogue_id) {
            return Err(ReviewError::UnknownDialogue(dialogue_id.to_string()));
        }
        let rating = Rating {
            dialogue_id: dialogue_id.to_string(),
            input,
            submitted_at: self.clock.now(),
        };
        append(&self.dir.join(RATINGS_LOG), &rating)?;
        snap.apply_rating(rating.clone());
        self.snapshot.store(Arc::new(snap));
        Ok(rating)
    }

    pub async fn skip(&self, dialogue_id: &str, rater_id: &str) -> Result<SkipEvent, ReviewError> {
        if rater_id.trim().is_empty() {
            return Err(ReviewError::invalid("rater_id must not be empty"));
        }
        let _guard = self.writer.lock().await;
        let mut snap = Snapshot::clone(&self.snapshot.load());
        if !snap.data.dialogues.contains_key(dialogue_id) {
            return Err(ReviewError::UnknownDialogue(dialogue_id.to_string()));
        }
        let event = SkipEvent {
            dialogue_id: dialogue_id.to_string(),
            rater_id: rater_id.to_string(),
            at: self.clock.now(),
        };
        append(&self.dir.join(SKIPS_LOG), &event)?;
        snap.skips.push(event.clone());
        self.snapshot.store(Arc::new(snap));
        Ok(event)
    }

    pub fn ratings(&self, dialogue_id: &str) -> Vec<Rating> {
        self.snapshot.load().ratings_of(dialogue_id)
    }

    pub fn skips(&self) -> Vec<SkipEvent> {
        self.snapshot.load().skips.clone()
    }

    pub fn aggregate(&self, dialogue_id: &str) -> Result<AggregatedRating, ReviewError> {
        let snap = self.snapshot.load();
        if !snap.data.dialogues.contains_key(dialogue_id) {
            return Err(ReviewError::UnknownDialogue(dialogue_id.to_string()));
        }
        aggregate(dialogue_id, &snap.ratings_of(dialogue_id))
            .ok_or_else(|| ReviewError::NoRatings(dialogue_id.to_string()))
    }

    pub fn summary(&self) -> CorpusSummary {
        let snap = self.snapshot.load();
        let per: Vec<(String, Vec<Rating>)> = snap
            .ratings
            .keys()
            .map(|id| (id.clone(), snap.ratings_of(id)))
            .collect();
        summarize(per.iter().map(|(id, rs)| (id.as_str(), rs.as_slice())))
    }

    /// Validates and stores a gold edit for one test-split turn.
    pub async fn save_gold(&self, dialogue_id: &str, turn: usize, input: GoldInput) -> Result<GoldRecord, ReviewError> {
        if input.editor_id.trim().is_empty() {
            return Err(ReviewError::invalid("editor_id must not be empty"));
        }
        let items = match (input.items, input.annotation) {
            (Some(items), None) => items,
            (None, Some(text)) => {
                let text = text.trim();
                let text = text.strip_prefix(annotation::MARKER).unwrap_or(text);
                annotation::parse_items(text).map_err(|e| ReviewError::invalid(e.to_string()))?
            }
            _ => return Err(ReviewError::invalid("give exactly one of `annotation` or `items`")),
        };
        let _guard = self.writer.lock().await;
        let mut snap = Snapshot::clone(&self.snapshot.load());
        let (split, d) = snap
            .data
            .dialogues
            .get(dialogue_id)
            .ok_or_else(|| ReviewError::UnknownDialogue(dialogue_id.to_string()))?;
        if *split != Split::Test {
            return Err(ReviewError::NotTestSplit(dialogue_id.to_string()));
        }
        if turn >= d.turns.len() {
            return Err(ReviewError::invalid(format!(
                "turn {turn} out of range for {} turns",
                d.turns.len()
            )));
        }
        let violations = annotation::validate(&items, &snap.data.ontology);
        if !violations.is_empty() {
            let message = violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ");
            return Err(ReviewError::ValidationFailed { message, violations });
        }
        let record = GoldRecord {
            dialogue_id: dialogue_id.to_string(),
            turn,
            version: snap.gold_version.get(dialogue_id).copied().unwrap_or(0) + 1,
            annotation: annotation::serialize(&items),
            items,
            editor_id: input.editor_id,
            saved_at: self.clock.now(),
        };
        append(&self.dir.join(GOLD_LOG), &record)?;
        snap.apply_gold(record.clone());
        self.snapshot.store(Arc::new(snap));
        Ok(record)
    }

    /// Test dialogues with the latest gold items replacing model annotations.
    pub fn export_gold(&self) -> GoldExport {
        let snap = self.snapshot.load();
        let ids = snap.data.order.get(&Split::Test).map(Vec::as_slice).unwrap_or(&[]);
        let mut dialogues = Vec::with_capacity(ids.len());
        let (mut total, mut edited) = (0, 0);
        let mut unedited = Vec::new();
        for id in ids {
            let mut d = snap.data.dialogues[id].1.clone();
            let gold = snap.gold.get(id);
            for (t, turn) in d.turns.iter_mut().enumerate() {
                total += 1;
                match gold.and_then(|g| g.get(&t)) {
                    Some(g) => {
                        edited += 1;
                        turn.items = g.items.clone();
                        turn.raw_suffix = Some(g.annotation.clone());
                    }
                    None => unedited.push(TurnRef {
                        dialogue_id: id.clone(),
                        turn: t,
                    }),
                }
            }
            dialogues.push(d);
        }
        GoldExport {
            dialogues,
            coverage: Coverage {
                total_turns: total,
                edited_turns: edited,
                percent: if total == 0 { 0.0 } else { edited as f64 * 100.0 / total as f64 },
                unedited,
            },
        }
    }
}
