use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CleanEmail, CorpusError, RawEmail, Redaction, RedactionCategory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionRule {
    pub category: RedactionCategory,
    pub pattern: String,
    /// Capture group to redact; 0 is the whole match.
    #[serde(default)]
    pub group: usize,
    /// Discard matches with fewer ASCII digits than this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_digits: Option<usize>,
}

/// Pattern rules plus an optional dictionary of person names.
///
/// Rules earlier in the list win when two matches start at the same offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedactionRuleSet {
    pub rules: Vec<RedactionRule>,
    pub names: Vec<String>,
}

const NAME: &str = r"[A-ZÄÖÜ][a-zäöüß]+(?:[ -][A-ZÄÖÜ][a-zäöüß]+)?";

impl Default for RedactionRuleSet {
    fn default() -> Self {
        let rule = |category, pattern: &str, group, min_digits| RedactionRule {
            category,
            pattern: pattern.to_string(),
            group,
            min_digits,
        };
        Self {
            rules: vec![
                rule(
                    RedactionCategory::EmailAddr,
                    r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}",
                    0,
                    None,
                ),
                rule(
                    RedactionCategory::Url,
                    r#"(?i)\b(?:https?://|www\.)[^\s<>"]*[^\s<>".,;:!?)]"#,
                    0,
                    None,
                ),
                rule(
                    RedactionCategory::OtherPii,
                    r"\b[A-Z]{2}\d{2}(?: ?[A-Z0-9]{4}){3,7}(?: ?[A-Z0-9]{1,3})?\b",
                    0,
                    None,
                ),
                rule(
                    RedactionCategory::OtherPii,
                    r"\b(?:\d{4}[ -]?){3}\d{4}\b",
                    0,
                    None,
                ),
                rule(
                    RedactionCategory::Phone,
                    r"(?:\+|\b00)\d{1,3}[ /-]?(?:\(0\)[ /-]?)?\d{1,5}(?:[ /-]?\d{2,}){1,4}\b",
                    0,
                    Some(7),
                ),
                rule(
                    RedactionCategory::Phone,
                    r"\(?\b0\d{2,5}\)?(?:[ /-]?\d{2,}){1,4}\b",
                    0,
                    Some(7),
                ),
                rule(
                    RedactionCategory::PersonName,
                    &format!(r"\b(?:Herrn?|Frau|Mr|Mrs|Ms|Dr)\.? +({NAME})"),
                    1,
                    None,
                ),
                rule(
                    RedactionCategory::PersonName,
                    &format!(
                        r"(?im)^[ \t]*(?:(?:mit )?(?:freundlichen |viele |liebe |beste |herzliche )?(?:grüße|grüßen|grüssen|gruß|gruss)|(?:best |kind |warm )?regards|cheers|sincerely|thanks|thank you|danke|lg|mfg|vg)[,.!]?[ \t]*\r?\n[ \t]*(?-i:({NAME}))[ \t]*$"
                    ),
                    1,
                    None,
                ),
            ],
            names: Vec::new(),
        }
    }
}

impl RedactionRuleSet {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::UnreadableFile {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CorpusError::InvalidRules(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| CorpusError::InvalidRules(e.to_string()))
        }
    }

    pub fn compile(&self) -> Result<Redactor, CorpusError> {
        let mut rules = Vec::with_capacity(self.rules.len() + 1);
        for r in &self.rules {
            let re = Regex::new(&r.pattern)
                .map_err(|e| CorpusError::InvalidRules(format!("{}: {e}", r.pattern)))?;
            if r.group >= re.captures_len() {
                return Err(CorpusError::InvalidRules(format!(
                    "{}: no capture group {}",
                    r.pattern, r.group
                )));
            }
            rules.push((r.clone(), re));
        }
        let names: Vec<String> = self
            .names
            .iter()
            .map(|n| n.trim())
            .filter(|n| !n.is_empty())
            .map(regex::escape)
            .collect();
        if !names.is_empty() {
            let pattern = format!(r"\b(?:{})\b", names.join("|"));
            let re = Regex::new(&pattern).map_err(|e| CorpusError::InvalidRules(e.to_string()))?;
            rules.push((
                RedactionRule {
                    category: RedactionCategory::PersonName,
                    pattern,
                    group: 0,
                    min_digits: None,
                },
                re,
            ));
        }
        Ok(Redactor { rules })
    }
}

/// Compiled form of a [`RedactionRuleSet`].
#[derive(Debug, Clone)]
pub struct Redactor {
    rules: Vec<(RedactionRule, Regex)>,
}

impl Default for Redactor {
    fn default() -> Self {
        RedactionRuleSet::default()
            .compile()
            .expect("default redaction rules compile")
    }
}

impl Redactor {
    /// Returns the non-overlapping spans to redact, sorted by start offset.
    pub fn find(&self, text: &str) -> Vec<Redaction> {
        let mut candidates: Vec<(usize, usize, usize, RedactionCategory)> = Vec::new();
        for (priority, (rule, re)) in self.rules.iter().enumerate() {
            for caps in re.captures_iter(text) {
                let Some(m) = caps.get(rule.group) else { continue };
                if m.is_empty() {
                    continue;
                }
                if let Some(min) = rule.min_digits {
                    if m.as_str().bytes().filter(u8::is_ascii_digit).count() < min {
                        continue;
                    }
                }
                candidates.push((m.start(), priority, m.end(), rule.category));
            }
        }
        candidates.sort_by_key(|&(start, priority, end, _)| (start, priority, std::cmp::Reverse(end)));
        let mut out: Vec<Redaction> = Vec::new();
        let mut covered = 0;
        for (start, _, end, category) in candidates {
            if start < covered {
                continue;
            }
            covered = end;
            out.push(Redaction {
                start,
                end,
                category,
            });
        }
        out
    }

    /// Replaces every span with its `[CATEGORY]` placeholder.
    pub fn redact(&self, text: &str) -> (String, Vec<Redaction>) {
        let spans = self.find(text);
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for r in &spans {
            out.push_str(&text[last..r.start]);
            out.push_str(r.category.placeholder());
            last = r.end;
        }
        out.push_str(&text[last..]);
        (out, spans)
    }
}

/// Redacts PII from an e-mail body; offsets in `redactions` refer to the original body.
pub fn anonymize(email: &RawEmail, redactor: &Redactor) -> CleanEmail {
    let (body, redactions) = redactor.redact(&email.body);
    let subject = email.subject.as_ref().map(|s| redactor.redact(s).0);
    CleanEmail {
        id: email.id.clone(),
        body,
        subject,
        source_lang: email.source_lang.clone(),
        translated: false,
        redactions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn redact(text: &str) -> (String, Vec<Redaction>) {
        Redactor::default().redact(text)
    }

    #[test]
    fn email_address_span() {
        let (out, spans) = redact("contact me at max@example.org");
        assert_eq!(out, "contact me at [EMAIL_ADDR]");
        assert_eq!(
            spans,
            vec![Redaction {
                start: 14,
                end: 29,
                category: RedactionCategory::EmailAddr
            }]
        );
    }

    #[test]
    fn no_pii_is_identity() {
        let (out, spans) = redact("Two weeks in Crete in May, 2 adults, budget 3000 EUR.");
        assert_eq!(out, "Two weeks in Crete in May, 2 adults, budget 3000 EUR.");
        assert!(spans.is_empty());
    }

    #[test]
    fn phone_numbers() {
        assert_eq!(redact("call +49 170 1234567").0, "call [PHONE]");
        assert_eq!(redact("Tel. 0170/1234567 bitte").0, "Tel. [PHONE] bitte");
        assert_eq!(redact("from 2024-05-12 to 2024-05-26").0, "from 2024-05-12 to 2024-05-26");
        assert_eq!(redact("PLZ 01067 Dresden").0, "PLZ 01067 Dresden");
    }

    #[test]
    fn names_by_honorific_signoff_and_dictionary() {
        assert_eq!(redact("Sehr geehrte Frau Müller,").0, "Sehr geehrte Frau [PERSON_NAME],");
        assert_eq!(
            redact("See you soon.\nBest regards,\nAnna Schmidt").0,
            "See you soon.\nBest regards,\n[PERSON_NAME]"
        );
        let r = RedactionRuleSet {
            names: vec!["Jürgen".into()],
            ..Default::default()
        }
        .compile()
        .unwrap();
        assert_eq!(r.redact("Jürgen and I want to travel").0, "[PERSON_NAME] and I want to travel");
    }

    #[test]
    fn urls_and_ibans() {
        assert_eq!(
            redact("see https://example.com/offer?id=3. Thanks").0,
            "see [URL]. Thanks"
        );
        assert_eq!(
            redact("IBAN DE89 3704 0044 0532 0130 00 please").0,
            "IBAN [OTHER_PII] please"
        );
    }

    #[test]
    fn subject_is_redacted_too() {
        let mut e = RawEmail::new("e", "hello there");
        e.subject = Some("Anfrage von max@example.org".into());
        let c = anonymize(&e, &Redactor::default());
        assert_eq!(c.subject.as_deref(), Some("Anfrage von [EMAIL_ADDR]"));
        assert!(c.redactions.is_empty());
    }

    #[test]
    fn bad_rule_rejected() {
        let set = RedactionRuleSet {
            rules: vec![RedactionRule {
                category: RedactionCategory::Url,
                pattern: "a".into(),
                group: 2,
                min_digits: None,
            }],
            names: vec![],
        };
        assert!(set.compile().is_err());
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn fragment() -> impl Strategy<Value = String> {
            prop_oneof![
                Just("max@example.org".to_string()),
                Just("+49 170 1234567".to_string()),
                Just("0170 7654321".to_string()),
                Just("Frau Müller".to_string()),
                Just("https://x.example/a".to_string()),
                Just("Regards,\nTom Baker".to_string()),
                "[a-zA-Z0-9 ,.]{0,12}",
            ]
        }

        proptest! {
            #[test]
            fn second_pass_finds_nothing(parts in proptest::collection::vec(fragment(), 0..6)) {
                let text = parts.join(" ");
                let r = Redactor::default();
                let (once, _) = r.redact(&text);
                let (twice, spans) = r.redact(&once);
                prop_assert!(spans.is_empty(), "{:?} -> {:?}", once, spans);
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn spans_never_overlap(parts in proptest::collection::vec(fragment(), 0..6)) {
                let text = parts.join(" ");
                let spans = Redactor::default().find(&text);
                for w in spans.windows(2) {
                    prop_assert!(w[0].end <= w[1].start);
                }
            }
        }
    }
}
