use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{default_lang, CorpusError, RawEmail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum IngestFormat {
    Jsonl,
    Csv,
    #[value(name = "dir")]
    DirectoryOfText,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Abort on the first malformed record instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    /// 1-based line (JSONL), record (CSV) or file index (directory).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub emails: Vec<RawEmail>,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Deserialize)]
struct InputRecord {
    #[serde(default)]
    id: Option<String>,
    body: String,
    #[serde(default)]
    subject: Option<String>,
    #[serde(default)]
    source_lang: Option<String>,
    #[serde(default)]
    received_at: Option<String>,
}

/// Deterministic id for records that lack one.
fn generated_id(index: usize, body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    format!("e{index:06}-{}", &hex::encode(digest)[..8])
}

struct Collector<'a> {
    opts: &'a IngestOptions,
    seen: HashSet<String>,
    report: IngestReport,
}

impl Collector<'_> {
    fn malformed(&mut self, line: usize, message: String) -> Result<(), CorpusError> {
        if self.opts.strict {
            return Err(CorpusError::MalformedRecord { line, message });
        }
        tracing::warn!(line, %message, "skipping malformed record");
        self.report.warnings.push(IngestWarning { line, message });
        Ok(())
    }

    fn push(&mut self, line: usize, index: usize, rec: InputRecord) -> Result<(), CorpusError> {
        let id = match rec.id {
            Some(id) if !id.trim().is_empty() => id,
            _ => generated_id(index, &rec.body),
        };
        if !self.seen.insert(id.clone()) {
            return self.malformed(line, format!("duplicate id `{id}`"));
        }
        self.report.emails.push(RawEmail {
            id,
            body: rec.body,
            subject: rec.subject.filter(|s| !s.is_empty()),
            source_lang: rec
                .source_lang
                .filter(|s| !s.is_empty())
                .unwrap_or_else(default_lang),
            received_at: rec.received_at.filter(|s| !s.is_empty()),
        });
        Ok(())
    }
}

/// Reads raw e-mails from `path` in the given format.
pub fn ingest(
    path: &Path,
    format: IngestFormat,
    opts: &IngestOptions,
) -> Result<IngestReport, CorpusError> {
    let unreadable = |source| CorpusError::UnreadableFile {
        path: path.display().to_string(),
        source,
    };
    let mut c = Collector {
        opts,
        seen: HashSet::new(),
        report: IngestReport::default(),
    };
    match format {
        IngestFormat::Jsonl => {
            let text = fs::read_to_string(path).map_err(unreadable)?;
            let mut index = 0;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<InputRecord>(line) {
                    Ok(rec) => c.push(i + 1, index, rec)?,
                    Err(e) => c.malformed(i + 1, e.to_string())?,
                }
                index += 1;
            }
        }
        IngestFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(false)
                .from_path(path)
                .map_err(|e| match e.into_kind() {
                    csv::ErrorKind::Io(io) => unreadable(io),
                    other => unreadable(std::io::Error::other(format!("{other:?}"))),
                })?;
            for (i, rec) in reader.deserialize::<InputRecord>().enumerate() {
                match rec {
                    Ok(rec) => c.push(i + 2, i, rec)?,
                    Err(e) => c.malformed(i + 2, e.to_string())?,
                }
            }
        }
        IngestFormat::DirectoryOfText => {
            let mut files: Vec<_> = fs::read_dir(path)
                .map_err(unreadable)?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
                .collect();
            files.sort();
            for (i, file) in files.iter().enumerate() {
                match fs::read_to_string(file) {
                    Ok(text) => {
                        let (subject, body) = split_subject(&text);
                        let id = file
                            .file_stem()
                            .map(|s| s.to_string_lossy().into_owned());
                        c.push(
                            i + 1,
                            i,
                            InputRecord {
                                id,
                                body,
                                subject,
                                source_lang: None,
                                received_at: None,
                            },
                        )?;
                    }
                    Err(e) => c.malformed(i + 1, format!("{}: {e}", file.display()))?,
                }
            }
        }
    }
    Ok(c.report)
}

/// A leading `Subject: ...` line becomes the subject.
fn split_subject(text: &str) -> (Option<String>, String) {
    if let Some(rest) = text.strip_prefix("Subject:") {
        let (first, body) = rest.split_once('\n').unwrap_or((rest, ""));
        (Some(first.trim().to_string()), body.trim().to_string())
    } else {
        (None, text.trim().to_string())
    }
}
