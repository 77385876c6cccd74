use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::Deserialize;

use super::{ChatBackend, ChatRequest, LlmError};
use crate::annotation::extract_annotations;
use crate::dialogue::{speaker_prefix, Speaker};
use crate::prompt::{ANNOTATION_INPUT_HEADING, GENERATION_INPUT_HEADING};

/// File name looked up inside a `--mock-llm` directory.
pub const MOCK_FILE: &str = "mock.json";

/// A canned dialogue returned for e-mails containing `match`.
///
/// Dialogue lines may carry `// ...` annotations; they are stripped from
/// generation responses and served back to annotation requests for the
/// matching utterance.
#[derive(Debug, Clone, Deserialize)]
pub struct MockScript {
    #[serde(rename = "match")]
    pub needle: String,
    #[serde(default)]
    pub preamble: Option<String>,
    #[serde(default)]
    pub epilogue: Option<String>,
    pub dialogue: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
struct MockFile {
    #[serde(default)]
    scripts: Vec<MockScript>,
    #[serde(default)]
    fail: Vec<String>,
    #[serde(default)]
    default_annotation: Option<String>,
}

/// Deterministic offline backend. Every request is recorded.
#[derive(Debug, Default)]
pub struct MockLlm {
    scripts: Vec<MockScript>,
    fail: Vec<String>,
    default_annotation: Option<String>,
    annotations: HashMap<(Speaker, String), String>,
    captured: Mutex<Vec<ChatRequest>>,
}

impl MockLlm {
    pub fn new(scripts: Vec<MockScript>, fail: Vec<String>) -> Self {
        let mut annotations = HashMap::new();
        for script in &scripts {
            for line in &script.dialogue {
                if let Some((speaker, rest)) = speaker_prefix(line) {
                    let (text, suffix) = extract_annotations(rest);
                    annotations
                        .entry((speaker, text))
                        .or_insert_with(|| suffix.unwrap_or_default());
                }
            }
        }
        Self {
            scripts,
            fail,
            default_annotation: None,
            annotations,
            captured: Mutex::new(Vec::new()),
        }
    }

    /// Answers every annotation request with `completion`.
    pub fn with_default_annotation(mut self, completion: impl Into<String>) -> Self {
        self.default_annotation = Some(completion.into());
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: MockFile = serde_json::from_str(text)?;
        let mut mock = Self::new(file.scripts, file.fail);
        mock.default_annotation = file.default_annotation;
        Ok(mock)
    }

    /// Loads `dir/mock.json`; a missing file gives a mock with no scripts.
    pub fn load_dir(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MOCK_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.captured.lock().expect("mock lock").clone()
    }

    fn generate(&self, email: &str) -> String {
        match self.scripts.iter().find(|s| email.contains(&s.needle)) {
            Some(script) => {
                let mut out = Vec::new();
                if let Some(p) = &script.preamble {
                    out.push(p.clone());
                }
                for line in &script.dialogue {
                    out.push(extract_annotations(line).0);
                }
                if let Some(e) = &script.epilogue {
                    out.push(e.clone());
                }
                out.join("\n")
            }
            None => fallback_dialogue(email),
        }
    }

    fn annotate(&self, dialogue: &str) -> String {
        if let Some(fixed) = &self.default_annotation {
            return fixed.clone();
        }
        let last = dialogue.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        let Some((speaker, text)) = speaker_prefix(last) else {
            return "//".into();
        };
        match self.annotations.get(&(speaker, text.trim().to_string())) {
            Some(suffix) if !suffix.is_empty() => format!("// {suffix}"),
            _ => "//".into(),
        }
    }
}

fn after_heading<'a>(text: &'a str, heading: &str) -> Option<&'a str> {
    text.rfind(heading).map(|i| text[i + heading.len()..].trim())
}

/// Four neutral turns, the third quoting the start of the e-mail.
fn fallback_dialogue(email: &str) -> String {
    let flat = email.split_whitespace().collect::<Vec<_>>().join(" ").replace("//", "/");
    let mut first: String = flat
        .split_inclusive(['.', '!', '?'])
        .next()
        .unwrap_or("")
        .chars()
        .take(160)
        .collect();
    if first.trim().is_empty() {
        first = "I have a travel request.".into();
    }
    format!(
        "User: Hello, I would like some help with a trip.\nBot: Of course! What do you have in mind?\nUser: {}\nBot: Thank you, I will send you matching offers.",
        first.trim()
    )
}

#[async_trait]
impl ChatBackend for MockLlm {
    async fn send(&self, req: &ChatRequest) -> Result<String, LlmError> {
        self.captured.lock().expect("mock lock").push(req.clone());
        let user = req.last_user_content();
        let (input, is_generation) = if let Some(email) = after_heading(user, GENERATION_INPUT_HEADING) {
            (email, true)
        } else if let Some(dialogue) = after_heading(user, ANNOTATION_INPUT_HEADING) {
            (dialogue, false)
        } else {
            return Err(LlmError::BadResponse("mock cannot classify the request".into()));
        };
        if let Some(needle) = self.fail.iter().find(|n| input.contains(n.as_str())) {
            return Err(LlmError::EndpointUnavailable(format!("mock failure for `{needle}`")));
        }
        Ok(if is_generation {
            self.generate(input)
        } else {
            self.annotate(input)
        })
    }
}
