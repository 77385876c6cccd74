use std::collections::HashSet;
use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{token_count, CorpusError, RawEmail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterReason {
    Empty,
    TooShort,
    OutOfOffice,
    TestMessage,
    ScamSuspect,
    Duplicate,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub email_id: String,
    pub kept: bool,
    pub reason: FilterReason,
}

/// Keyword and threshold rules for noise filtering.
///
/// Phrase lists are matched case-insensitively as substrings of subject and
/// body. `test_patterns` are regexes matched against the body only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRuleSet {
    pub min_tokens: usize,
    pub out_of_office: Vec<String>,
    pub test_patterns: Vec<String>,
    pub scam_keywords: Vec<String>,
    /// URLs per token above which a message counts as scam...
    pub max_url_ratio: f64,
    /// ...provided it carries at least this many URLs.
    pub min_urls_for_ratio: usize,
    pub dedup: bool,
}

impl Default for FilterRuleSet {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        Self {
            min_tokens: 2,
            out_of_office: s(&[
                "out of office",
                "out-of-office",
                "automatic reply",
                "auto-reply",
                "autoreply",
                "i am currently out of the office",
                "i am out of the office",
                "abwesenheitsnotiz",
                "automatische antwort",
                "bin ich nicht im büro",
                "bin nicht im büro",
                "derzeit nicht im büro",
                "außer haus",
                "ausser haus",
            ]),
            test_patterns: s(&[
                r"(?i)^\W*(this is a )?(test|testing|testmail|test-mail|testnachricht|probe(mail|nachricht)?)\b",
                r"(?i)^\W*(test )?(mail|message|e-mail|nachricht) (test|probe)\b",
            ]),
            scam_keywords: s(&[
                "bitcoin",
                "lottery",
                "you have won",
                "sie haben gewonnen",
                "western union",
                "moneygram",
                "inheritance",
                "erbschaft",
                "wire transfer",
                "verify your account",
                "konto verifizieren",
                "beneficiary",
            ]),
            max_url_ratio: 0.2,
            min_urls_for_ratio: 2,
            dedup: false,
        }
    }
}

static URL: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").unwrap());

impl FilterRuleSet {
    /// Loads rules from a `.toml` or `.json` file; unspecified keys keep defaults.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::UnreadableFile {
            path: path.display().to_string(),
            source,
        })?;
        let rules: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CorpusError::InvalidRules(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CorpusError::InvalidRules(e.to_string()))?
        };
        rules.compile()?;
        Ok(rules)
    }

    fn compile(&self) -> Result<Vec<Regex>, CorpusError> {
        self.test_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| CorpusError::InvalidRules(e.to_string())))
            .collect()
    }
}

fn contains_any(haystack: &str, needles: &[String]) -> bool {
    needles
        .iter()
        .any(|n| !n.is_empty() && haystack.contains(&n.to_lowercase()))
}

/// Classifies every e-mail; one verdict per input, in input order.
///
/// Checks run in a fixed order (empty, length, out-of-office, test, scam,
/// duplicate) and the first hit decides the reason. Duplicates are detected
/// against bodies already kept, so re-filtering a kept set keeps all of it.
pub fn filter(emails: &[RawEmail], rules: &FilterRuleSet) -> Vec<FilterVerdict> {
    // Rules passed through `load` are pre-validated; invalid ad-hoc patterns are skipped.
    let test_res: Vec<Regex> = rules
        .test_patterns
        .iter()
        .filter_map(|p| Regex::new(p).ok())
        .collect();
    let mut kept_hashes = HashSet::new();
    emails
        .iter()
        .map(|e| {
            let reason = classify(e, rules, &test_res, &mut kept_hashes);
            FilterVerdict {
                email_id: e.id.clone(),
                kept: reason == FilterReason::None,
                reason,
            }
        })
        .collect()
}

fn classify(
    e: &RawEmail,
    rules: &FilterRuleSet,
    test_res: &[Regex],
    kept_hashes: &mut HashSet<[u8; 32]>,
) -> FilterReason {
    let body = e.body.trim();
    if body.is_empty() {
        return FilterReason::Empty;
    }
    let tokens = token_count(body);
    if tokens < rules.min_tokens {
        return FilterReason::TooShort;
    }
    let lower = body.to_lowercase();
    let subject = e.subject.as_deref().unwrap_or("").to_lowercase();
    if contains_any(&lower, &rules.out_of_office) || contains_any(&subject, &rules.out_of_office) {
        return FilterReason::OutOfOffice;
    }
    if test_res.iter().any(|re| re.is_match(body)) {
        return FilterReason::TestMessage;
    }
    let urls = URL.find_iter(body).count();
    if contains_any(&lower, &rules.scam_keywords)
        || (urls >= rules.min_urls_for_ratio.max(1)
            && urls as f64 / tokens as f64 > rules.max_url_ratio)
    {
        return FilterReason::ScamSuspect;
    }
    if rules.dedup {
        let hash: [u8; 32] = Sha256::digest(e.body.as_bytes()).into();
        if !kept_hashes.insert(hash) {
            return FilterReason::Duplicate;
        }
    }
    FilterReason::None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(body: &str) -> FilterReason {
        filter(&[RawEmail::new("x", body)], &FilterRuleSet::default())[0].reason
    }

    #[test]
    fn named_cases() {
        assert_eq!(verdict(""), FilterReason::Empty);
        assert_eq!(verdict("  \n\t "), FilterReason::Empty);
        assert_eq!(verdict("Hallo"), FilterReason::TooShort);
        assert_eq!(
            verdict("I am OUT OF OFFICE until Monday."),
            FilterReason::OutOfOffice
        );
        assert_eq!(verdict("Namibia individual trip"), FilterReason::None);
        assert_eq!(verdict("Test bitte ignorieren"), FilterReason::TestMessage);
        assert_eq!(verdict("Testing testing 123"), FilterReason::TestMessage);
        assert_eq!(
            verdict("We want to test the hotel spa in Crete"),
            FilterReason::None
        );
        assert_eq!(
            verdict("You have won the lottery, send your bank details"),
            FilterReason::ScamSuspect
        );
        assert_eq!(
            verdict("Click https://a.example/x and www.b.example now"),
            FilterReason::ScamSuspect
        );
    }

    #[test]
    fn out_of_office_in_subject() {
        let mut e = RawEmail::new("x", "Ich bin ab dem 5. wieder da.");
        e.subject = Some("Automatische Antwort: Anfrage".into());
        assert_eq!(filter(&[e], &FilterRuleSet::default())[0].reason, FilterReason::OutOfOffice);
    }

    #[test]
    fn dedup_is_opt_in_and_idempotent() {
        let emails = vec![
            RawEmail::new("a", "Crete in May please"),
            RawEmail::new("b", "Crete in May please"),
        ];
        let off = filter(&emails, &FilterRuleSet::default());
        assert!(off.iter().all(|v| v.kept));
        let rules = FilterRuleSet {
            dedup: true,
            ..Default::default()
        };
        let on = filter(&emails, &rules);
        assert!(on[0].kept);
        assert_eq!(on[1].reason, FilterReason::Duplicate);

        let kept: Vec<RawEmail> = emails
            .iter()
            .zip(&on)
            .filter(|(_, v)| v.kept)
            .map(|(e, _)| e.clone())
            .collect();
        assert!(filter(&kept, &rules).iter().all(|v| v.kept));
    }

    #[test]
    fn kept_iff_reason_none() {
        let emails: Vec<RawEmail> = ["", "a", "a b", "out of office now", "bitcoin offer here"]
            .iter()
            .enumerate()
            .map(|(i, b)| RawEmail::new(i.to_string(), *b))
            .collect();
        for v in filter(&emails, &FilterRuleSet::default()) {
            assert_eq!(v.kept, v.reason == FilterReason::None);
        }
    }

    #[test]
    fn rule_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("rules.toml");
        std::fs::write(&toml_path, "min_tokens = 4\ndedup = true\n").unwrap();
        let rules = FilterRuleSet::load(&toml_path).unwrap();
        assert_eq!(rules.min_tokens, 4);
        assert!(rules.dedup);
        assert_eq!(rules.scam_keywords, FilterRuleSet::default().scam_keywords);

        let json_path = dir.path().join("rules.json");
        std::fs::write(&json_path, r#"{"test_patterns": ["("]}"#).unwrap();
        assert!(matches!(
            FilterRuleSet::load(&json_path),
            Err(CorpusError::InvalidRules(_))
        ));
    }
}
