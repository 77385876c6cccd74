//! Prompt assembly for the generation and annotation phases.
//!
//! Templates are data: a JSON manifest names, per task, the preamble, the
//! rule list, three text templates (system message, user message, one
//! example) and the example sets. Text templates use `{{name}}` markers. The
//! default set is compiled into the binary from `templates/`.
//!
//! The system message carries the task description and rules; the user
//! message carries the few-shot examples followed by the input.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CleanEmail;
use crate::dialogue::Dialogue;
use crate::ontology::Ontology;

/// Heading that introduces the e-mail in a generation prompt.
pub const GENERATION_INPUT_HEADING: &str = "### Input e-mail";
/// Heading that introduces the dialogue prefix in an annotation prompt.
pub const ANNOTATION_INPUT_HEADING: &str = "### Dialogue so far";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{template}` references unfilled placeholder `{name}`")]
    MissingPlaceholder { template: String, name: String },
    #[error("template not found: {0}")]
    TemplateNotFound(String),
    #[error("turn index {index} out of range for a dialogue with {len} turns")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid template manifest: {0}")]
    Manifest(String),
    #[error("prompt of ~{estimate} tokens exceeds the limit of {limit}")]
    TooLong { estimate: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Generation,
    Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub variant_id: usize,
    pub messages: Vec<ChatMessage>,
    pub token_estimate: usize,
}

impl RenderedPrompt {
    fn new(kind: PromptKind, variant_id: usize, system: String, user: String) -> Self {
        let token_estimate = estimate_tokens(&system) + estimate_tokens(&user);
        Self {
            kind,
            variant_id,
            messages: vec![
                ChatMessage {
                    role: Role::System,
                    content: system,
                },
                ChatMessage {
                    role: Role::User,
                    content: user,
                },
            ],
            token_estimate,
        }
    }

    /// Concatenated message contents, for inspection.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn check_budget(&self, limit: Option<usize>) -> Result<(), PromptError> {
        match limit {
            Some(limit) if self.token_estimate > limit => Err(PromptError::TooLong {
                estimate: self.token_estimate,
                limit,
            }),
            _ => Ok(()),
        }
    }
}

/// Rough token count: one token per four bytes, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub id: String,
    pub pairs: Vec<ExamplePair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: String,
    pub kind: PromptKind,
    pub role_preamble: String,
    pub rules: Vec<String>,
    pub system: String,
    pub user: String,
    pub example: String,
    pub variants: Vec<ExampleSet>,
    /// Every placeholder referenced by the three text templates.
    pub placeholders: BTreeSet<String>,
}

fn allowed_placeholders(kind: PromptKind) -> &'static [&'static str] {
    match kind {
        PromptKind::Generation => &["preamble", "rules", "examples", "email", "n", "input", "output"],
        PromptKind::Annotation => &[
            "preamble", "rules", "slots", "examples", "dialogue", "n", "input", "output",
        ],
    }
}

/// Names of all `{{name}}` markers in `template`.
pub fn placeholders_in(template: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                out.insert(after[..close].trim().to_string());
                rest = &after[close + 2..];
            }
            None => break,
        }
    }
    out
}

/// Substitutes `{{name}}` markers in one pass; inserted values are not rescanned.
pub fn render(
    template_id: &str,
    template: &str,
    values: &BTreeMap<&str, &str>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = after[..close].trim();
        let value = values.get(name).ok_or_else(|| PromptError::MissingPlaceholder {
            template: template_id.to_string(),
            name: name.to_string(),
        })?;
        out.push_str(&rest[..open]);
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

impl PromptTemplate {
    fn system_values(&self) -> (String, String) {
        let rules = self
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{}. {r}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        (self.role_preamble.trim().to_string(), rules)
    }

    fn examples_section(&self, variant: usize) -> Result<String, PromptError> {
        let set = self.variants.get(variant).ok_or_else(|| {
            PromptError::TemplateNotFound(format!("{} variant {variant}", self.id))
        })?;
        let mut out = String::new();
        for (i, pair) in set.pairs.iter().enumerate() {
            let n = (i + 1).to_string();
            let values = BTreeMap::from([
                ("n", n.as_str()),
                ("input", pair.input.as_str()),
                ("output", pair.output.as_str()),
            ]);
            out.push_str(render(&self.id, &self.example, &values)?.trim_end());
            out.push_str("\n\n");
        }
        Ok(out)
    }
}

/// Picks the example variant for the e-mail at position `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum VariantPolicy {
    #[default]
    RoundRobin,
    Random { seed: u64 },
}

impl VariantPolicy {
    pub fn select(self, index: usize, n_variants: usize) -> usize {
        if n_variants == 0 {
            return 0;
        }
        match self {
            VariantPolicy::RoundRobin => index % n_variants,
            VariantPolicy::Random { seed } => {
                let mixed = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                ChaCha8Rng::seed_from_u64(mixed).random_range(0..n_variants)
            }
        }
    }
}

/// Builds the phase-one prompt: description and rules, then the chosen
/// variant's examples, then the e-mail body.
pub fn build_generation_prompt(
    email: &CleanEmail,
    variant: usize,
    tpl: &PromptTemplate,
) -> Result<RenderedPrompt, PromptError> {
    let (preamble, rules) = tpl.system_values();
    let system = render(
        &tpl.id,
        &tpl.system,
        &BTreeMap::from([("preamble", preamble.as_str()), ("rules", rules.as_str())]),
    )?;
    let examples = tpl.examples_section(variant)?;
    let user = render(
        &tpl.id,
        &tpl.user,
        &BTreeMap::from([
            ("examples", examples.as_str()),
            ("email", email.body.trim()),
        ]),
    )?;
    Ok(RenderedPrompt::new(
        PromptKind::Generation,
        variant,
        system.trim_end().to_string(),
        user.trim_end().to_string(),
    ))
}

/// Builds the phase-two prompt for one turn.
///
/// Only `turns[..=target_turn]` are rendered, without their annotations. The
/// source e-mail is never an input here.
pub fn build_annotation_prompt(
    dialogue: &Dialogue,
    target_turn: usize,
    ont: &Ontology,
    tpl: &PromptTemplate,
) -> Result<RenderedPrompt, PromptError> {
    if target_turn >= dialogue.turns.len() {
        return Err(PromptError::IndexOutOfRange {
            index: target_turn,
            len: dialogue.turns.len(),
        });
    }
    let (preamble, rules) = tpl.system_values();
    let slots = ont.slot_listing();
    let system = render(
        &tpl.id,
        &tpl.system,
        &BTreeMap::from([
            ("preamble", preamble.as_str()),
            ("rules", rules.as_str()),
            ("slots", slots.trim_end()),
        ]),
    )?;
    let examples = tpl.examples_section(0)?;
    let prefix = dialogue.turns[..=target_turn]
        .iter()
        .map(|t| t.render())
        .collect::<Vec<_>>()
        .join("\n");
    let user = render(
        &tpl.id,
        &tpl.user,
        &BTreeMap::from([
            ("examples", examples.as_str()),
            ("dialogue", prefix.as_str()),
        ]),
    )?;
    Ok(RenderedPrompt::new(
        PromptKind::Annotation,
        0,
        system.trim_end().to_string(),
        user.trim_end().to_string(),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub generation: PromptTemplate,
    pub annotation: PromptTemplate,
}

#[derive(Deserialize)]
struct Manifest {
    generation: TaskManifest,
    annotation: TaskManifest,
}

#[derive(Deserialize)]
struct TaskManifest {
    id: String,
    preamble: String,
    rules: String,
    system: String,
    user: String,
    example: String,
    variants: Vec<VariantManifest>,
}

#[derive(Deserialize)]
struct VariantManifest {
    id: String,
    examples: String,
}

const EMBEDDED: &[(&str, &str)] = &[
    ("manifest.json", include_str!("../templates/manifest.json")),
    ("generation/preamble.txt", include_str!("../templates/generation/preamble.txt")),
    ("generation/rules.txt", include_str!("../templates/generation/rules.txt")),
    ("generation/system.txt", include_str!("../templates/generation/system.txt")),
    ("generation/user.txt", include_str!("../templates/generation/user.txt")),
    ("generation/example.txt", include_str!("../templates/generation/example.txt")),
    (
        "generation/examples_short.json",
        include_str!("../templates/generation/examples_short.json"),
    ),
    (
        "generation/examples_prose.json",
        include_str!("../templates/generation/examples_prose.json"),
    ),
    (
        "generation/examples_list.json",
        include_str!("../templates/generation/examples_list.json"),
    ),
    ("annotation/preamble.txt", include_str!("../templates/annotation/preamble.txt")),
    ("annotation/rules.txt", include_str!("../templates/annotation/rules.txt")),
    ("annotation/system.txt", include_str!("../templates/annotation/system.txt")),
    ("annotation/user.txt", include_str!("../templates/annotation/user.txt")),
    ("annotation/example.txt", include_str!("../templates/annotation/example.txt")),
    ("annotation/examples.json", include_str!("../templates/annotation/examples.json")),
];

impl Default for TemplateSet {
    fn default() -> Self {
        Self::from_source(&|name| {
            EMBEDDED
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| PromptError::TemplateNotFound(name.to_string()))
        })
        .expect("embedded templates are valid")
    }
}

impl TemplateSet {
    /// Loads a template directory (containing `manifest.json`), or the
    /// built-in set when `dir` is `None`.
    pub fn load(dir: Option<&Path>) -> Result<Self, PromptError> {
        match dir {
            None => Ok(Self::default()),
            Some(dir) => Self::from_source(&|name| {
                std::fs::read_to_string(dir.join(name))
                    .map_err(|e| PromptError::TemplateNotFound(format!("{name}: {e}")))
            }),
        }
    }

    fn from_source(read: &dyn Fn(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let manifest: Manifest = serde_json::from_str(&read("manifest.json")?)
            .map_err(|e| PromptError::Manifest(e.to_string()))?;
        Ok(Self {
            generation: load_task(read, manifest.generation, PromptKind::Generation)?,
            annotation: load_task(read, manifest.annotation, PromptKind::Annotation)?,
        })
    }
}

fn load_task(
    read: &dyn Fn(&str) -> Result<String, PromptError>,
    m: TaskManifest,
    kind: PromptKind,
) -> Result<PromptTemplate, PromptError> {
    let rules = read(&m.rules)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    let mut variants = Vec::with_capacity(m.variants.len());
    for v in m.variants {
        let pairs: Vec<ExamplePair> = serde_json::from_str(&read(&v.examples)?)
            .map_err(|e| PromptError::Manifest(format!("{}: {e}", v.examples)))?;
        variants.push(ExampleSet { id: v.id, pairs });
    }
    if variants.is_empty() {
        return Err(PromptError::Manifest(format!("{}: no example variants", m.id)));
    }
    let system = read(&m.system)?;
    let user = read(&m.user)?;
    let example = read(&m.example)?;
    let mut placeholders = placeholders_in(&system);
    placeholders.extend(placeholders_in(&user));
    placeholders.extend(placeholders_in(&example));
    let allowed = allowed_placeholders(kind);
    if let Some(bad) = placeholders.iter().find(|p| !allowed.contains(&p.as_str())) {
        return Err(PromptError::MissingPlaceholder {
            template: m.id,
            name: bad.clone(),
        });
    }
    let input_marker = match kind {
        PromptKind::Generation => "email",
        PromptKind::Annotation => "dialogue",
    };
    if !placeholders.contains(input_marker) {
        return Err(PromptError::Manifest(format!(
            "{}: user template must contain {{{{{input_marker}}}}}",
            m.id
        )));
    }
    Ok(PromptTemplate {
        id: m.id,
        kind,
        role_preamble: read(&m.preamble)?,
        rules,
        system,
        user,
        example,
        variants,
        placeholders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{AnnotatedUtterance, GenerationMeta, Speaker};

    fn email(body: &str) -> CleanEmail {
        CleanEmail {
            id: "e1".into(),
            body: body.into(),
            subject: None,
            source_lang: "de".into(),
            translated: true,
            redactions: vec![],
        }
    }

    fn dialogue(texts: &[&str]) -> Dialogue {
        Dialogue {
            id: "d".into(),
            email_id: "e1".into(),
            variant_id: 0,
            generation_meta: GenerationMeta {
                model: "m".into(),
                temperature: 0.7,
                timestamp: "t".into(),
            },
            turns: texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    AnnotatedUtterance::new(if i % 2 == 0 { Speaker::User } else { Speaker::Bot }, *t)
                })
                .collect(),
        }
    }

    #[test]
    fn render_fills_and_reports_missing() {
        let v = BTreeMap::from([("a", "1"), ("b", "{{a}}")]);
        assert_eq!(render("t", "x{{a}}y{{ b }}z", &v).unwrap(), "x1y{{a}}z");
        assert!(matches!(
            render("t", "{{c}}", &v),
            Err(PromptError::MissingPlaceholder { ref name, .. }) if name == "c"
        ));
        assert_eq!(render("t", "unclosed {{a", &v).unwrap(), "unclosed {{a");
    }

    #[test]
    fn default_templates_load() {
        let t = TemplateSet::default();
        assert_eq!(t.generation.variants.len(), 3);
        assert_eq!(t.annotation.variants.len(), 1);
        assert!(t.generation.placeholders.contains("email"));
        let from_dir =
            TemplateSet::load(Some(&Path::new(env!("CARGO_MANIFEST_DIR")).join("templates"))).unwrap();
        assert_eq!(from_dir, t);
    }

    #[test]
    fn generation_layout_order() {
        let t = TemplateSet::default();
        let p = build_generation_prompt(&email("Namibia individual trip"), 0, &t.generation).unwrap();
        assert_eq!(p.messages.len(), 2);
        assert_eq!(p.messages[0].role, Role::System);
        let system = &p.messages[0].content;
        let user = &p.messages[1].content;
        assert!(system.find("You rewrite").unwrap() < system.find("Rules:\n1.").unwrap());
        let ex = user.find("### Example 1").unwrap();
        let input = user.find(GENERATION_INPUT_HEADING).unwrap();
        assert!(ex < input);
        assert!(user.ends_with("Namibia individual trip"));
        assert_eq!(p.full_text().matches("Namibia individual trip").count(), 1);
    }

    #[test]
    fn variants_differ_only_in_examples() {
        let t = TemplateSet::default();
        let e = email("Namibia individual trip");
        let a = build_generation_prompt(&e, 0, &t.generation).unwrap();
        let b = build_generation_prompt(&e, 1, &t.generation).unwrap();
        assert_eq!(a.messages[0], b.messages[0]);
        let strip = |s: &str| {
            let start = s.find("### Example").unwrap();
            let end = s.find("Write the dialogue").unwrap();
            format!("{}{}", &s[..start], &s[end..])
        };
        assert_ne!(a.messages[1].content, b.messages[1].content);
        assert_eq!(strip(&a.messages[1].content), strip(&b.messages[1].content));
        assert!(matches!(
            build_generation_prompt(&e, 3, &t.generation),
            Err(PromptError::TemplateNotFound(_))
        ));
    }

    #[test]
    fn annotation_prompt_contains_prefix_only() {
        let t = TemplateSet::default();
        let ont = Ontology::default();
        let d = dialogue(&["first AAA", "second BBB", "third CCC"]);
        let p = build_annotation_prompt(&d, 0, &ont, &t.annotation).unwrap();
        let section = p.messages[1]
            .content
            .split(ANNOTATION_INPUT_HEADING)
            .last()
            .unwrap()
            .trim()
            .to_string();
        assert_eq!(section, "User: first AAA");
        assert!(!p.full_text().contains("BBB"));
        let p = build_annotation_prompt(&d, 1, &ont, &t.annotation).unwrap();
        assert!(p.full_text().contains("BBB") && !p.full_text().contains("CCC"));
        assert!(p.messages[0]
            .content
            .contains("act: require_more, booking, information_sent, general"));
        assert!(matches!(
            build_annotation_prompt(&d, 3, &ont, &t.annotation),
            Err(PromptError::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn variant_policies() {
        let rr: Vec<usize> = (0..6).map(|i| VariantPolicy::RoundRobin.select(i, 3)).collect();
        assert_eq!(rr, [0, 1, 2, 0, 1, 2]);
        let r = VariantPolicy::Random { seed: 7 };
        let a: Vec<usize> = (0..50).map(|i| r.select(i, 3)).collect();
        let b: Vec<usize> = (0..50).map(|i| r.select(i, 3)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v < 3));
        assert!((0..3).all(|v| a.contains(&v)));
    }

    #[test]
    fn budget_check() {
        let t = TemplateSet::default();
        let p = build_generation_prompt(&email("x"), 0, &t.generation).unwrap();
        assert!(p.check_budget(None).is_ok());
        assert!(p.check_budget(Some(p.token_estimate)).is_ok());
        assert!(matches!(p.check_budget(Some(10)), Err(PromptError::TooLong { .. })));
    }

    #[test]
    fn unknown_placeholder_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("templates");
        for sub in ["", "generation", "annotation"] {
            std::fs::create_dir_all(dir.path().join(sub)).unwrap();
            for entry in std::fs::read_dir(src.join(sub)).unwrap() {
                let p = entry.unwrap().path();
                if p.is_file() {
                    std::fs::copy(&p, dir.path().join(sub).join(p.file_name().unwrap())).unwrap();
                }
            }
        }
        std::fs::write(dir.path().join("generation/user.txt"), "{{examples}} {{email}} {{budget}}").unwrap();
        assert!(matches!(
            TemplateSet::load(Some(dir.path())),
            Err(PromptError::MissingPlaceholder { ref name, .. }) if name == "budget"
        ));
    }
}
