use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{exact_match, presence, soft_match, SmMode, StateSet};
use crate::annotation::AnnotationItem;
use crate::dialogue::Dialogue;
use crate::ontology::{Ontology, SlotRef};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dialogue ids differ; missing in prediction: {missing:?}; unexpected in prediction: {extra:?}")]
    MismatchedIds { missing: Vec<String>, extra: Vec<String> },
    #[error("turn counts differ (dialogue, gold, predicted): {offenders:?}")]
    MismatchedTurnCounts { offenders: Vec<(String, usize, usize)> },
    #[error("duplicate dialogue id `{0}`")]
    DuplicateId(String),
    #[error("cannot read {path}: {message}")]
    Input { path: String, message: String },
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::MismatchedIds { .. } => "MISMATCHED_IDS",
            MetricsError::MismatchedTurnCounts { .. } => "MISMATCHED_TURN_COUNTS",
            MetricsError::DuplicateId(_) => "DUPLICATE_ID",
            MetricsError::Input { .. } => "INPUT",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub sm_mode: SmMode,
    /// Include the act type in item identity.
    pub strict: bool,
}

/// Predicted items per dialogue and turn.
///
/// `turn_counts` holds the number of turns each prediction claims; it is
/// `None` for the reduced JSONL form, where absent turns count as empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub turns: BTreeMap<String, BTreeMap<usize, Vec<AnnotationItem>>>,
    pub turn_counts: BTreeMap<String, Option<usize>>,
}

impl Predictions {
    pub fn from_dialogues(dialogues: &[Dialogue]) -> Result<Self, MetricsError> {
        let mut p = Self::default();
        for d in dialogues {
            if p.turn_counts.insert(d.id.clone(), Some(d.turns.len())).is_some() {
                return Err(MetricsError::DuplicateId(d.id.clone()));
            }
            p.turns.insert(
                d.id.clone(),
                d.turns.iter().enumerate().map(|(i, t)| (i, t.items.clone())).collect(),
            );
        }
        Ok(p)
    }
}

#[derive(Deserialize)]
struct ReducedLine {
    dialogue_id: String,
    /// Absent on a line that only declares a dialogue, e.g. one without turns.
    #[serde(default)]
    turn: Option<usize>,
    #[serde(default)]
    items: Vec<ReducedItem>,
}

#[derive(Deserialize)]
struct ReducedItem {
    slot: String,
    #[serde(default)]
    value: Option<String>,
    #[serde(default, alias = "act_type")]
    act: Option<String>,
}

/// Reads predictions as a JSON array of dialogues or as reduced JSONL
/// (`{"dialogue_id","turn","items":[{"slot","value"}]}` per line). A line
/// without `turn` and `items` just declares the dialogue.
pub fn read_predictions(path: &Path) -> Result<Predictions, MetricsError> {
    let input_err = |message: String| MetricsError::Input {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| input_err(e.to_string()))?;
    if text.trim_start().starts_with('[') {
        let dialogues: Vec<Dialogue> = serde_json::from_str(&text).map_err(|e| input_err(e.to_string()))?;
        return Predictions::from_dialogues(&dialogues);
    }
    let mut p = Predictions::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReducedLine =
            serde_json::from_str(line).map_err(|e| input_err(format!("line {}: {e}", n + 1)))?;
        let mut items = Vec::with_capacity(rec.items.len());
        for it in rec.items {
            let slot: SlotRef = it
                .slot
                .parse()
                .map_err(|e| input_err(format!("line {}: {e}", n + 1)))?;
            items.push(AnnotationItem {
                act_type: it.act.unwrap_or_else(|| "inform".into()),
                slot,
                value: it.value,
            });
        }
        p.turn_counts.insert(rec.dialogue_id.clone(), None);
        let turns = p.turns.entry(rec.dialogue_id).or_default();
        match rec.turn {
            Some(t) => turns.entry(t).or_default().extend(items),
            None if items.is_empty() => {}
            None => return Err(input_err(format!("line {}: items without a turn", n + 1))),
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub em: f64,
    pub sm: f64,
    pub pr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueScore {
    pub dialogue_id: String,
    pub utterances: usize,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sm_mode: SmMode,
    pub strict: bool,
    pub utterances: usize,
    pub dialogues: usize,
    /// Mean over all utterances, in percent.
    pub micro: Scores,
    /// Mean of per-dialogue means, in percent.
    pub macro_avg: Scores,
    pub per_dialogue: Vec<DialogueScore>,
}

fn percent(hits: usize, n: usize) -> f64 {
    // both-empty convention: nothing to score counts as a full match
    if n == 0 {
        100.0
    } else {
        hits as f64 * 100.0 / n as f64
    }
}

/// Scores predictions against gold dialogues.
///
/// Both sides must hold the same dialogue ids. Dialogue predictions must
/// have the gold turn count; reduced predictions may omit turns but must not
/// name turns past the end.
pub fn evaluate(
    gold: &[Dialogue],
    pred: &Predictions,
    ont: &Ontology,
    opts: EvalOptions,
) -> Result<MetricReport, MetricsError> {
    let mut gold_ids = BTreeSet::new();
    for d in gold {
        if !gold_ids.insert(d.id.as_str()) {
            return Err(MetricsError::DuplicateId(d.id.clone()));
        }
    }
    let pred_ids: BTreeSet<&str> = pred.turn_counts.keys().map(String::as_str).collect();
    if gold_ids != pred_ids {
        return Err(MetricsError::MismatchedIds {
            missing: gold_ids.difference(&pred_ids).map(|s| s.to_string()).collect(),
            extra: pred_ids.difference(&gold_ids).map(|s| s.to_string()).collect(),
        });
    }
    let offenders: Vec<(String, usize, usize)> = gold
        .iter()
        .filter_map(|d| {
            let n = d.turns.len();
            let claimed = match pred.turn_counts[&d.id] {
                Some(c) => c,
                None => pred.turns.get(&d.id)?.keys().next_back().map_or(0, |t| t + 1),
            };
            let bad = match pred.turn_counts[&d.id] {
                Some(c) => c != n,
                None => claimed > n,
            };
            bad.then(|| (d.id.clone(), n, claimed))
        })
        .collect();
    if !offenders.is_empty() {
        return Err(MetricsError::MismatchedTurnCounts { offenders });
    }

    let empty = Vec::new();
    let (mut em, mut sm, mut pr, mut total) = (0usize, 0usize, 0usize, 0usize);
    let mut per_dialogue = Vec::with_capacity(gold.len());
    for d in gold {
        let turns = pred.turns.get(&d.id);
        let (mut dem, mut dsm, mut dpr) = (0usize, 0usize, 0usize);
        for (t, turn) in d.turns.iter().enumerate() {
            let predicted = turns.and_then(|m| m.get(&t)).unwrap_or(&empty);
            let y = StateSet::from_items(&turn.items, ont, opts.strict);
            let yhat = StateSet::from_items(predicted, ont, opts.strict);
            dem += exact_match(&y, &yhat) as usize;
            dsm += soft_match(&y, &yhat, opts.sm_mode) as usize;
            dpr += presence(&y, &yhat) as usize;
        }
        let n = d.turns.len();
        em += dem;
        sm += dsm;
        pr += dpr;
        total += n;
        per_dialogue.push(DialogueScore {
            dialogue_id: d.id.clone(),
            utterances: n,
            scores: Scores {
                em: percent(dem, n),
                sm: percent(dsm, n),
                pr: percent(dpr, n),
            },
        });
    }
    let scored: Vec<&DialogueScore> = per_dialogue.iter().filter(|d| d.utterances > 0).collect();
    let mean = |f: fn(&Scores) -> f64| {
        if scored.is_empty() {
            100.0
        } else {
            scored.iter().map(|d| f(&d.scores)).sum::<f64>() / scored.len() as f64
        }
    };
    Ok(MetricReport {
        sm_mode: opts.sm_mode,
        strict: opts.strict,
        utterances: total,
        dialogues: gold.len(),
        micro: Scores {
            em: percent(em, total),
            sm: percent(sm, total),
            pr: percent(pr, total),
        },
        macro_avg: Scores {
            em: mean(|s| s.em),
            sm: mean(|s| s.sm),
            pr: mean(|s| s.pr),
        },
        per_dialogue,
    })
}

pub fn render_table(r: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} dialogues, {} utterances, SM mode {}{}",
        r.dialogues,
        r.utterances,
        r.sm_mode,
        if r.strict { ", strict" } else { "" }
    );
    let _ = writeln!(out, "{:<8} {:>8} {:>8} {:>8}", "", "EM", "SM", "PR");
    for (label, s) in [("micro", &r.micro), ("macro", &r.macro_avg)] {
        let _ = writeln!(out, "{label:<8} {:>8.2} {:>8.2} {:>8.2}", s.em, s.sm, s.pr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_items;
    use crate::dialogue::{AnnotatedUtterance, GenerationMeta, Speaker};

    fn dialogue(id: &str, annotations: &[&str]) -> Dialogue {
        Dialogue {
            id: id.into(),
            email_id: id.into(),
            variant_id: 0,
            generation_meta: GenerationMeta {
                model: "m".into(),
                temperature: 0.0,
                timestamp: "t".into(),
            },
            turns: annotations
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let mut u = AnnotatedUtterance::new(
                        if i % 2 == 0 { Speaker::User } else { Speaker::Bot },
                        format!("turn {i}"),
                    );
                    u.items = parse_items(a).unwrap();
                    u
                })
                .collect(),
        }
    }

    fn run(gold: &[Dialogue], pred: &[Dialogue]) -> Result<MetricReport, MetricsError> {
        evaluate(
            gold,
            &Predictions::from_dialogues(pred).unwrap(),
            &Ontology::default(),
            EvalOptions::default(),
        )
    }

    #[test]
    fn identical_is_perfect() {
        let g = vec![dialogue("a", &["inform(destination=Namibia)", "request(guests)", ""])];
        let r = run(&g, &g).unwrap();
        assert_eq!((r.micro.em, r.micro.sm, r.micro.pr), (100.0, 100.0, 100.0));
        assert_eq!(r.utterances, 3);
    }

    #[test]
    fn one_hit_one_miss() {
        let g = vec![dialogue("a", &["inform(destination=Namibia)", "inform(guests=2)"])];
        let p = vec![dialogue("a", &["inform(destination=namibia)", "request(stars)"])];
        let r = run(&g, &p).unwrap();
        assert_eq!(r.micro.em, 50.0);
        assert_eq!(r.micro.pr, 50.0);
    }

    #[test]
    fn mismatches_are_reported() {
        let g = vec![dialogue("a", &["", ""]), dialogue("b", &[""])];
        let p = vec![dialogue("a", &["", ""]), dialogue("c", &[""])];
        match run(&g, &p) {
            Err(MetricsError::MismatchedIds { missing, extra }) => {
                assert_eq!(missing, ["b"]);
                assert_eq!(extra, ["c"]);
            }
            other => panic!("{other:?}"),
        }
        let p = vec![dialogue("a", &[""]), dialogue("b", &[""])];
        match run(&g, &p) {
            Err(MetricsError::MismatchedTurnCounts { offenders }) => {
                assert_eq!(offenders, [("a".to_string(), 2, 1)])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn macro_differs_from_micro() {
        let g = vec![
            dialogue("a", &["inform(guests=2)"]),
            dialogue("b", &["inform(guests=2)", "inform(guests=2)", "inform(guests=2)"]),
        ];
        let p = vec![
            dialogue("a", &["inform(guests=2)"]),
            dialogue("b", &["", "", ""]),
        ];
        let r = run(&g, &p).unwrap();
        assert_eq!(r.micro.em, 25.0);
        assert_eq!(r.macro_avg.em, 50.0);
    }

    #[test]
    fn reduced_jsonl_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"dialogue_id":"a","turn":0,"items":[{"slot":"destination","value":"Namibia"}]}"#,
                "\n",
                r#"{"dialogue_id":"a","turn":0,"items":[{"slot":"trip.guests","value":"2"}]}"#,
                "\n"
            ),
        )
        .unwrap();
        let p = read_predictions(&path).unwrap();
        let g = vec![dialogue("a", &["inform(destination=Namibia) inform(guests=2)", ""])];
        let r = evaluate(&g, &p, &Ontology::default(), EvalOptions::default()).unwrap();
        assert_eq!(r.micro.em, 100.0);

        std::fs::write(&path, r#"{"dialogue_id":"a","turn":2,"items":[]}"#).unwrap();
        let p = read_predictions(&path).unwrap();
        assert!(matches!(
            evaluate(&g, &p, &Ontology::default(), EvalOptions::default()),
            Err(MetricsError::MismatchedTurnCounts { .. })
        ));
    }

    #[test]
    fn strict_mode_uses_act_types() {
        let g = vec![dialogue("a", &["inform(guests=2)"])];
        let p = vec![dialogue("a", &["confirm(guests=2)"])];
        assert_eq!(run(&g, &p).unwrap().micro.em, 100.0);
        let strict = evaluate(
            &g,
            &Predictions::from_dialogues(&p).unwrap(),
            &Ontology::default(),
            EvalOptions {
                strict: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(strict.micro.em, 0.0);
    }

    #[test]
    fn table_mentions_mode() {
        let g = vec![dialogue("a", &[""])];
        let t = render_table(&run(&g, &g).unwrap());
        assert!(t.contains("SM mode prose"));
        assert!(t.contains("100.00"));
    }
}
