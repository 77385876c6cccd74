//! Human review: per-rater quality judgments, their aggregation, and gold
//! annotation edits for the test split.
//!
//! Criteria per dialogue:
//!
//! | field  | kind   | meaning                                       |
//! |--------|--------|-----------------------------------------------|
//! | c0     | yes/no | the e-mail asks for a holiday booking         |
//! | c1     | 1..=5  | e-mail content appears in the dialogue        |
//! | c2     | yes/no | the user adds details missing from the e-mail |
//! | c2_1   | 1..=5  | only if c2: the added details are plausible   |
//! | c2_2   | 1..=5  | only if c2: the added details matter for it   |
//! | c3     | 1..=5  | the dialogue obeys the generation rules       |
//! | c4     | 1..=5  | it reads like a real chat                     |
//! | c5     | 1..=5  | the bot helps the user                        |

mod api;
mod store;

use serde::{Deserialize, Serialize};

pub use api::{router, serve};
pub use store::{
    Coverage, DialogueSummary, DialogueView, GoldExport, GoldInput, GoldRecord, Page, ReviewError,
    ReviewStore, SkipEvent, TurnRef, DEFAULT_PAGE_SIZE,
};

/// Ratings each dialogue is meant to receive.
pub const TARGET_RATINGS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingInput {
    pub rater_id: String,
    pub c0: bool,
    pub c1: u8,
    pub c2: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_1: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_2: Option<u8>,
    pub c3: u8,
    pub c4: u8,
    pub c5: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub dialogue_id: String,
    #[serde(flatten)]
    pub input: RatingInput,
    pub submitted_at: String,
}

impl RatingInput {
    /// Problems with this rating; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rater_id.trim().is_empty() {
            out.push("rater_id must not be empty".to_string());
        }
        for (name, v) in [("c1", self.c1), ("c3", self.c3), ("c4", self.c4), ("c5", self.c5)] {
            if !(1..=5).contains(&v) {
                out.push(format!("{name} must be in 1..=5, got {v}"));
            }
        }
        for (name, v) in [("c2_1", self.c2_1), ("c2_2", self.c2_2)] {
            match (self.c2, v) {
                (true, None) => out.push(format!("{name} is required when c2 is true")),
                (false, Some(_)) => out.push(format!("{name} must be absent when c2 is false")),
                (true, Some(v)) if !(1..=5).contains(&v) => {
                    out.push(format!("{name} must be in 1..=5, got {v}"))
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRating {
    pub dialogue_id: String,
    pub n_raters: usize,
    /// Strict majority of c0; ties count as invalid.
    pub c0_valid: bool,
    pub c1: f64,
    pub c2_rate: f64,
    /// Mean over raters with c2 = true; `None` when there are none.
    pub c2_1: Option<f64>,
    pub c2_2: Option<f64>,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Majority and means over one dialogue's ratings. `None` without ratings.
pub fn aggregate(dialogue_id: &str, ratings: &[Rating]) -> Option<AggregatedRating> {
    if ratings.is_empty() {
        return None;
    }
    let n = ratings.len();
    let likert = |f: fn(&RatingInput) -> u8| mean(ratings.iter().map(|r| f(&r.input) as f64)).unwrap();
    let positive_c0 = ratings.iter().filter(|r| r.input.c0).count();
    let with_c2: Vec<&RatingInput> = ratings.iter().map(|r| &r.input).filter(|r| r.c2).collect();
    Some(AggregatedRating {
        dialogue_id: dialogue_id.to_string(),
        n_raters: n,
        c0_valid: 2 * positive_c0 > n,
        c1: likert(|r| r.c1),
        c2_rate: with_c2.len() as f64 / n as f64,
        c2_1: mean(with_c2.iter().filter_map(|r| r.c2_1).map(f64::from)),
        c2_2: mean(with_c2.iter().filter_map(|r| r.c2_2).map(f64::from)),
        c3: likert(|r| r.c3),
        c4: likert(|r| r.c4),
        c5: likert(|r| r.c5),
    })
}

/// One row of the corpus summary. Yes/no criteria are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub criterion: String,
    pub percent: bool,
    pub average: Option<f64>,
    pub valid: Option<f64>,
    pub invalid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub dialogues: usize,
    pub valid_dialogues: usize,
    pub invalid_dialogues: usize,
    pub ratings: usize,
    pub rows: Vec<SummaryRow>,
}

/// Corpus-level table: every rating pooled (Average), and the ratings of
/// dialogues whose c0 majority is valid (Valid) or not (Invalid).
pub fn summarize<'a>(per_dialogue: impl IntoIterator<Item = (&'a str, &'a [Rating])>) -> CorpusSummary {
    let mut all: Vec<(&RatingInput, bool)> = Vec::new();
    let (mut dialogues, mut valid_dialogues) = (0, 0);
    for (id, ratings) in per_dialogue {
        let Some(agg) = aggregate(id, ratings) else { continue };
        dialogues += 1;
        valid_dialogues += agg.c0_valid as usize;
        all.extend(ratings.iter().map(|r| (&r.input, agg.c0_valid)));
    }
    type Pick = fn(&RatingInput) -> Option<f64>;
    fn pct(b: bool) -> Option<f64> {
        Some(if b { 100.0 } else { 0.0 })
    }
    let criteria: [(&str, bool, Pick); 8] = [
        ("C-0", true, |r| pct(r.c0)),
        ("C-1", false, |r| Some(r.c1.into())),
        ("C-2", true, |r| pct(r.c2)),
        ("C-2-1", false, |r| r.c2_1.filter(|_| r.c2).map(f64::from)),
        ("C-2-2", false, |r| r.c2_2.filter(|_| r.c2).map(f64::from)),
        ("C-3", false, |r| Some(r.c3.into())),
        ("C-4", false, |r| Some(r.c4.into())),
        ("C-5", false, |r| Some(r.c5.into())),
    ];
    let rows = criteria
        .iter()
        .map(|(name, percent, pick)| {
            let over = |filter: Option<bool>| {
                mean(
                    all.iter()
                        .filter(|(_, v)| filter.is_none_or(|f| f == *v))
                        .filter_map(|(r, _)| pick(r)),
                )
            };
            let split = *name != "C-0";
            SummaryRow {
                criterion: name.to_string(),
                percent: *percent,
                average: over(None),
                valid: if split { over(Some(true)) } else { None },
                invalid: if split { over(Some(false)) } else { None },
            }
        })
        .collect();
    CorpusSummary {
        dialogues,
        valid_dialogues,
        invalid_dialogues: dialogues - valid_dialogues,
        ratings: all.len(),
        rows,
    }
}
