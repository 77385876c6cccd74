//! Per-utterance state metrics and dataset evaluation.
//!
//! Each utterance's annotation is reduced to a [`StateSet`] of
//! `(slot, value)` pairs. Three 0/1 metrics compare a gold set `y` with a
//! predicted set `ŷ`:
//!
//! * EM: `y == ŷ`.
//! * SM: the slot projections or the value projections agree. In
//!   [`SmMode::Prose`] "agree" means equal (values as multisets); in
//!   [`SmMode::Appendix`] it means the projections intersect.
//! * PR: `y ⊆ ŷ`.
//!
//! Two empty sets match under every metric; an empty `y` is present in any
//! `ŷ`. Act types are ignored unless `strict` is set.

mod dst;
mod evaluate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationItem;
use crate::ontology::{Ontology, SlotRef};

pub use dst::{dst_records, write_dst_jsonl, DstRecord};
pub use evaluate::{
    evaluate, read_predictions, render_table, DialogueScore, EvalOptions, MetricReport, MetricsError,
    Predictions, Scores,
};

/// Trims, lowercases and collapses internal whitespace.
pub fn normalize_value(v: &str) -> String {
    v.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SmMode {
    /// Slot sets equal, or value multisets equal.
    #[default]
    Prose,
    /// Slot sets intersect, or value sets intersect.
    Appendix,
}

impl fmt::Display for SmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmMode::Prose => "prose",
            SmMode::Appendix => "appendix",
        })
    }
}

impl FromStr for SmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "prose" => Ok(SmMode::Prose),
            "appendix" => Ok(SmMode::Appendix),
            other => Err(format!("unknown soft-match mode `{other}`")),
        }
    }
}

/// One `(slot, value)` pair; `act` is only set in strict mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act: Option<String>,
    pub slot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl StateItem {
    pub fn new(slot: impl Into<String>, value: Option<&str>) -> Self {
        Self {
            act: None,
            slot: slot.into(),
            value: value.map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSet(pub BTreeSet<StateItem>);

impl StateSet {
    /// Canonical state of an annotation: slots resolved to `domain.slot`
    /// where unique, values normalized, duplicates merged.
    pub fn from_items(items: &[AnnotationItem], ont: &Ontology, strict: bool) -> Self {
        Self(
            items
                .iter()
                .map(|it| StateItem {
                    act: strict.then(|| it.act_type.to_lowercase()),
                    slot: canonical_slot(&it.slot, ont),
                    value: it.value.as_deref().map(normalize_value),
                })
                .collect(),
        )
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Option<&'a str>)>) -> Self {
        Self(pairs.into_iter().map(|(s, v)| StateItem::new(s, v)).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    fn slots(&self) -> BTreeSet<&str> {
        self.0.iter().map(|i| i.slot.as_str()).collect()
    }

    fn value_counts(&self) -> BTreeMap<Option<&str>, usize> {
        let mut m = BTreeMap::new();
        for i in &self.0 {
            *m.entry(i.value.as_deref()).or_default() += 1;
        }
        m
    }
}

/// `domain.slot` when the reference resolves uniquely, the reference as written otherwise.
pub fn canonical_slot(slot: &SlotRef, ont: &Ontology) -> String {
    match ont.resolve(slot) {
        Ok((d, s)) => format!("{d}.{s}"),
        Err(_) => slot.to_string(),
    }
}

pub fn exact_match(y: &StateSet, yhat: &StateSet) -> u8 {
    (y == yhat) as u8
}

pub fn soft_match(y: &StateSet, yhat: &StateSet, mode: SmMode) -> u8 {
    if y.is_empty() && yhat.is_empty() {
        return 1;
    }
    let hit = match mode {
        SmMode::Prose => y.slots() == yhat.slots() || y.value_counts() == yhat.value_counts(),
        SmMode::Appendix => {
            let vy = y.value_counts();
            let vh = yhat.value_counts();
            !y.slots().is_disjoint(&yhat.slots()) || vy.keys().any(|v| vh.contains_key(v))
        }
    };
    hit as u8
}

pub fn presence(y: &StateSet, yhat: &StateSet) -> u8 {
    y.0.is_subset(&yhat.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> StateSet {
        StateSet::from_pairs(pairs.iter().map(|(s, v)| (*s, Some(*v))))
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_value(" Namibia "), "namibia");
        assert_eq!(normalize_value("2"), "2");
        assert_eq!(normalize_value("JULY  2024"), "july 2024");
        assert_eq!(normalize_value("a\t\nb"), "a b");
    }

    #[test]
    fn exact_match_cases() {
        let n = set(&[("destination", "namibia")]);
        assert_eq!(exact_match(&n, &n), 1);
        assert_eq!(exact_match(&StateSet::default(), &StateSet::default()), 1);
        let ng = set(&[("destination", "namibia"), ("guests", "2")]);
        assert_eq!(exact_match(&n, &ng), 0);
    }

    #[test]
    fn soft_match_cases() {
        let a = set(&[("destination", "namibia")]);
        let b = set(&[("destination", "windhoek")]);
        for mode in [SmMode::Prose, SmMode::Appendix] {
            assert_eq!(soft_match(&a, &b, mode), 1);
            assert_eq!(soft_match(&StateSet::default(), &StateSet::default(), mode), 1);
            assert_eq!(soft_match(&a, &StateSet::default(), mode), 0);
        }
        let ng = set(&[("destination", "namibia"), ("guests", "2")]);
        assert_eq!(soft_match(&ng, &a, SmMode::Prose), 0);
        assert_eq!(soft_match(&ng, &a, SmMode::Appendix), 1);
        // equal value multisets under different slots
        let x = set(&[("guests", "2"), ("length", "2")]);
        let y = set(&[("guests_children", "2"), ("stars", "2")]);
        assert_eq!(soft_match(&x, &y, SmMode::Prose), 1);
        let z = set(&[("guests_children", "2")]);
        assert_eq!(soft_match(&x, &z, SmMode::Prose), 0);
    }

    #[test]
    fn valueless_items() {
        let r = StateSet::from_pairs([("trip.type", None)]);
        let i = StateSet::from_pairs([("trip.destination", None)]);
        assert_eq!(soft_match(&r, &i, SmMode::Prose), 1);
        assert_eq!(soft_match(&r, &i, SmMode::Appendix), 1);
        assert_eq!(exact_match(&r, &i), 0);
    }

    #[test]
    fn presence_cases() {
        let n = set(&[("destination", "namibia")]);
        let ng = set(&[("destination", "namibia"), ("guests", "2")]);
        assert_eq!(presence(&n, &ng), 1);
        assert_eq!(presence(&StateSet::default(), &ng), 1);
        assert_eq!(presence(&n, &set(&[("guests", "2")])), 0);
    }

    #[test]
    fn canonical_state() {
        let ont = Ontology::default();
        let items = crate::annotation::parse_items(
            "inform(destination= Namibia ) inform(trip.destination=namibia) request(price) inform(foo=1)",
        )
        .unwrap();
        let s = StateSet::from_items(&items, &ont, false);
        let expected = StateSet::from_pairs([
            ("trip.destination", Some("namibia")),
            ("price", None),
            ("foo", Some("1")),
        ]);
        assert_eq!(s, expected);
        let strict = StateSet::from_items(&items, &ont, true);
        assert!(strict.0.iter().all(|i| i.act.is_some()));
    }
}
