//! Dialogue data model and the text format produced by the generation model.
//!
//! A dialogue is rendered one utterance per line, each prefixed with
//! `User:` or `Bot:` and optionally followed by a `// ...` annotation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{self, AnnotationItem};
use crate::corpus::Split;

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("no dialogue found: no line starts with `User:` or `Bot:`")]
    NoDialogueFound,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dialogue file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Speaker {
    User,
    Bot,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::Bot => "Bot",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One utterance with the annotation items attached to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TurnRecord", into = "TurnRecord")]
pub struct AnnotatedUtterance {
    pub speaker: Speaker,
    pub text: String,
    pub items: Vec<AnnotationItem>,
    /// Annotation text as it appeared in the source, if any.
    pub raw_suffix: Option<String>,
}

impl AnnotatedUtterance {
    pub fn new(speaker: Speaker, text: impl Into<String>) -> Self {
        Self {
            speaker,
            text: text.into(),
            items: Vec::new(),
            raw_suffix: None,
        }
    }

    /// `Speaker: text`, without annotations.
    pub fn render(&self) -> String {
        format!("{}: {}", self.speaker, self.text)
    }
}

/// Wire form of a turn: structured items plus their canonical text.
///
/// When reading, `items` wins; a record with only `annotation` is parsed.
#[derive(Serialize, Deserialize)]
struct TurnRecord {
    speaker: Speaker,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    items: Option<Vec<AnnotationItem>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_suffix: Option<String>,
}

impl TryFrom<TurnRecord> for AnnotatedUtterance {
    type Error = String;

    fn try_from(r: TurnRecord) -> Result<Self, Self::Error> {
        let items = match (r.items, r.annotation) {
            (Some(items), _) => items,
            (None, Some(text)) => annotation::parse_items(&text).map_err(|e| e.to_string())?,
            (None, None) => Vec::new(),
        };
        Ok(Self {
            speaker: r.speaker,
            text: r.text,
            items,
            raw_suffix: r.raw_suffix,
        })
    }
}

impl From<AnnotatedUtterance> for TurnRecord {
    fn from(u: AnnotatedUtterance) -> Self {
        let annotation = annotation::serialize(&u.items);
        Self {
            speaker: u.speaker,
            text: u.text,
            items: Some(u.items),
            annotation: Some(annotation),
            raw_suffix: u.raw_suffix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub model: String,
    pub temperature: f64,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub email_id: String,
    pub variant_id: usize,
    pub generation_meta: GenerationMeta,
    pub turns: Vec<AnnotatedUtterance>,
}

impl Dialogue {
    pub fn id_for_email(email_id: &str) -> String {
        format!("dlg-{email_id}")
    }

    /// The dialogue as text, one `Speaker: text // items` line per turn.
    pub fn to_text(&self, with_annotations: bool) -> String {
        self.turns
            .iter()
            .map(|t| {
                if with_annotations && !t.items.is_empty() {
                    format!("{} // {}", t.render(), annotation::serialize(&t.items))
                } else {
                    t.render()
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

static SPEAKER_PREFIX: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)^\s*\**\s*(user|bot)\s*\**\s*:\s*\**\s*").unwrap());

/// Recognizes a `User:` / `Bot:` prefix (case-insensitive, markdown bold tolerated).
pub fn speaker_prefix(line: &str) -> Option<(Speaker, &str)> {
    let caps = SPEAKER_PREFIX.captures(line)?;
    let speaker = if caps[1].eq_ignore_ascii_case("user") {
        Speaker::User
    } else {
        Speaker::Bot
    };
    Some((speaker, &line[caps.get(0).unwrap().end()..]))
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Strips model chatter around a generated dialogue.
///
/// Drops code fences, everything before the first speaker line and everything
/// after the last one, and blank lines. Remaining lines are trimmed.
pub fn postprocess_dialogue(raw: &str) -> Result<String, DialogueError> {
    let lines: Vec<&str> = raw
        .lines()
        .filter(|l| !is_fence(l))
        .map(str::trim)
        .collect();
    let first = lines
        .iter()
        .position(|l| speaker_prefix(l).is_some())
        .ok_or(DialogueError::NoDialogueFound)?;
    let last = lines
        .iter()
        .rposition(|l| speaker_prefix(l).is_some())
        .expect("a first speaker line implies a last one");
    Ok(lines[first..=last]
        .iter()
        .filter(|l| !l.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningKind {
    /// Two consecutive turns by the same speaker.
    Alternation,
    /// An annotation suffix that does not follow the grammar.
    AnnotationParse,
    /// A turn whose text is empty; it is dropped.
    EmptyTurn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueWarning {
    pub turn: usize,
    pub kind: WarningKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedDialogue {
    pub turns: Vec<AnnotatedUtterance>,
    pub warnings: Vec<DialogueWarning>,
}

/// Splits post-processed text into turns.
///
/// Lines without a speaker prefix continue the previous turn. Annotations
/// are extracted from each turn's joined text; unparsable ones keep their raw
/// suffix, get no items, and produce a warning.
pub fn parse_dialogue_text(clean: &str) -> Result<ParsedDialogue, DialogueError> {
    let mut pending: Vec<(Speaker, String)> = Vec::new();
    for line in clean.lines() {
        let line = line.trim();
        if line.is_empty() || is_fence(line) {
            continue;
        }
        match speaker_prefix(line) {
            Some((speaker, rest)) => pending.push((speaker, rest.trim().to_string())),
            None => {
                if let Some((_, text)) = pending.last_mut() {
                    if !text.is_empty() {
                        text.push(' ');
                    }
                    text.push_str(line);
                }
            }
        }
    }
    if pending.is_empty() {
        return Err(DialogueError::NoDialogueFound);
    }
    let mut out = ParsedDialogue::default();
    for (speaker, joined) in pending {
        let (text, suffix) = annotation::extract_annotations(&joined);
        let turn = out.turns.len();
        if text.is_empty() {
            out.warnings.push(DialogueWarning {
                turn,
                kind: WarningKind::EmptyTurn,
                message: format!("empty {speaker} turn dropped"),
            });
            continue;
        }
        let items = match suffix.as_deref() {
            Some(s) => annotation::parse_items(s).unwrap_or_else(|e| {
                tracing::warn!(turn, error = %e, "unparsable annotation kept as raw text");
                out.warnings.push(DialogueWarning {
                    turn,
                    kind: WarningKind::AnnotationParse,
                    message: e.to_string(),
                });
                Vec::new()
            }),
            None => Vec::new(),
        };
        if let Some(prev) = out.turns.last() {
            if prev.speaker == speaker {
                out.warnings.push(DialogueWarning {
                    turn,
                    kind: WarningKind::Alternation,
                    message: format!("consecutive {speaker} turns"),
                });
            }
        }
        out.turns.push(AnnotatedUtterance {
            speaker,
            text,
            items,
            raw_suffix: suffix,
        });
    }
    Ok(out)
}

/// Dialogues grouped by split, as stored in a bundle directory
/// (`train.json`, `val.json`, `test.json`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetBundle {
    pub splits: BTreeMap<Split, Vec<Dialogue>>,
}

impl DatasetBundle {
    pub fn dialogues(&self, split: Split) -> &[Dialogue] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Split, &Dialogue)> {
        self.splits
            .iter()
            .flat_map(|(s, ds)| ds.iter().map(move |d| (*s, d)))
    }

    /// Reads whichever split files exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, DialogueError> {
        let mut bundle = Self::default();
        for split in Split::ALL {
            let path = dir.join(format!("{split}.json"));
            if path.exists() {
                bundle.splits.insert(split, read_dialogues(&path)?);
            }
        }
        Ok(bundle)
    }

    /// Writes all three split files; missing splits become empty arrays.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DialogueError> {
        fs::create_dir_all(dir).map_err(|source| DialogueError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for split in Split::ALL {
            write_dialogues(&dir.join(format!("{split}.json")), self.dialogues(split))?;
        }
        Ok(())
    }
}

pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>, DialogueError> {
    let text = fs::read_to_string(path).map_err(|source| DialogueError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| DialogueError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn dialogues_to_json(dialogues: &[Dialogue]) -> String {
    let mut s = serde_json::to_string_pretty(dialogues).expect("dialogues serialize");
    s.push('\n');
    s
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<(), DialogueError> {
    fs::write(path, dialogues_to_json(dialogues)).map_err(|source| DialogueError::Io {
        path: path.display().to_string(),
        source,
    })
}
