//! E-mail corpus preparation: ingest, filtering, anonymization, translation,
//! split sampling and length statistics.

mod anonymize;
mod filter;
mod ingest;
mod split;
mod stats;
mod translate;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anonymize::{anonymize, RedactionRule, RedactionRuleSet, Redactor};
pub use filter::{filter, FilterReason, FilterRuleSet, FilterVerdict};
pub use ingest::{ingest, IngestFormat, IngestOptions, IngestReport, IngestWarning};
pub use split::{sample_splits, Split, SplitAssignment};
pub use stats::{corpus_stats, HistogramBin, StatsReport, DEFAULT_SHORT_THRESHOLD};
pub use translate::{
    translate, translate_all, HttpMtClient, MockMtClient, MtClient, MtError, TranslateOptions,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("corpus has {available} e-mails but {requested} were requested")]
    InsufficientCorpus { available: usize, requested: usize },
    #[error("invalid rule file: {0}")]
    InvalidRules(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_lang() -> String {
    "de".to_string()
}

/// A monologue request as found in the raw dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEmail {
    pub id: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default = "default_lang")]
    pub source_lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_at: Option<String>,
}

impl RawEmail {
    pub fn new(id: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            body: body.into(),
            subject: None,
            source_lang: default_lang(),
            received_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RedactionCategory {
    EmailAddr,
    Phone,
    PersonName,
    Url,
    OtherPii,
}

impl RedactionCategory {
    pub fn placeholder(self) -> &'static str {
        match self {
            Self::EmailAddr => "[EMAIL_ADDR]",
            Self::Phone => "[PHONE]",
            Self::PersonName => "[PERSON_NAME]",
            Self::Url => "[URL]",
            Self::OtherPii => "[OTHER_PII]",
        }
    }
}

/// A replaced span; offsets are byte offsets into the pre-redaction body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redaction {
    pub start: usize,
    pub end: usize,
    pub category: RedactionCategory,
}

/// Canonical corpus record: one line of the corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanEmail {
    pub id: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default = "default_lang")]
    pub source_lang: String,
    #[serde(default)]
    pub translated: bool,
    #[serde(default)]
    pub redactions: Vec<Redaction>,
}

impl From<RawEmail> for CleanEmail {
    fn from(raw: RawEmail) -> Self {
        Self {
            id: raw.id,
            body: raw.body,
            subject: raw.subject,
            source_lang: raw.source_lang,
            translated: false,
            redactions: Vec::new(),
        }
    }
}

impl From<CleanEmail> for RawEmail {
    fn from(e: CleanEmail) -> Self {
        Self {
            id: e.id,
            body: e.body,
            subject: e.subject,
            source_lang: e.source_lang,
            received_at: None,
        }
    }
}

pub(crate) fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Reads a canonical corpus JSONL file. Blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<CleanEmail>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let email: CleanEmail =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(email);
    }
    Ok(out)
}

/// Writes records as JSONL, one object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(path: &Path, emails: &[CleanEmail]) -> Result<(), CorpusError> {
    write_jsonl(path, emails)
}
