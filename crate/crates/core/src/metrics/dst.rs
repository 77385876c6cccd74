//! Flattened state-tracking examples: the dialogue history up to a turn as
//! input, that turn's annotation as target.
//!
//! ```text
//! input:  <ctx>User: I am looking for a package deal for our vacation. </ctx>
//! target: <annot>request:trip_type</annot>
//! ```
//!
//! Items are written `act:domain_slot` or `act:domain_slot=value` and joined
//! with `; `. Slots that do not resolve keep their written name.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationItem;
use crate::dialogue::Dialogue;
use crate::ontology::Ontology;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DstRecord {
    pub dialogue_id: String,
    pub turn: usize,
    pub input: String,
    pub target: String,
}

fn target_item(item: &AnnotationItem, ont: &Ontology) -> String {
    let slot = match ont.resolve(&item.slot) {
        Ok((d, s)) => format!("{d}_{s}"),
        Err(_) => item.slot.to_string(),
    };
    match &item.value {
        Some(v) => format!("{}:{slot}={v}", item.act_type),
        None => format!("{}:{slot}", item.act_type),
    }
}

/// One record per turn, in dialogue order.
pub fn dst_records(dialogues: &[Dialogue], ont: &Ontology) -> Vec<DstRecord> {
    let mut out = Vec::new();
    for d in dialogues {
        let mut ctx = String::new();
        for (t, turn) in d.turns.iter().enumerate() {
            ctx.push_str(&format!("{}: {} ", turn.speaker, turn.text));
            let target = turn
                .items
                .iter()
                .map(|i| target_item(i, ont))
                .collect::<Vec<_>>()
                .join("; ");
            out.push(DstRecord {
                dialogue_id: d.id.clone(),
                turn: t,
                input: format!("<ctx>{ctx}</ctx>"),
                target: format!("<annot>{target}</annot>"),
            });
        }
    }
    out
}

pub fn write_dst_jsonl(path: &Path, records: &[DstRecord]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse_items;
    use crate::dialogue::{AnnotatedUtterance, GenerationMeta, Speaker};

    #[test]
    fn flattened_shape() {
        let mut u0 = AnnotatedUtterance::new(Speaker::User, "I am looking for a package deal for our vacation.");
        u0.items = parse_items("request(trip.type)").unwrap();
        let mut u1 = AnnotatedUtterance::new(Speaker::Bot, "Where to?");
        u1.items = parse_items("request(destination) inform(price=cheap) act(general)").unwrap();
        let d = Dialogue {
            id: "d".into(),
            email_id: "e".into(),
            variant_id: 0,
            generation_meta: GenerationMeta {
                model: "m".into(),
                temperature: 0.0,
                timestamp: "t".into(),
            },
            turns: vec![u0, u1, AnnotatedUtterance::new(Speaker::User, "Crete")],
        };
        let r = dst_records(&[d], &Ontology::default());
        assert_eq!(r.len(), 3);
        assert_eq!(r[0].input, "<ctx>User: I am looking for a package deal for our vacation. </ctx>");
        assert_eq!(r[0].target, "<annot>request:trip_type</annot>");
        assert_eq!(
            r[1].input,
            "<ctx>User: I am looking for a package deal for our vacation. Bot: Where to? </ctx>"
        );
        assert_eq!(
            r[1].target,
            "<annot>request:trip_destination; inform:price=cheap; act:act_general</annot>"
        );
        assert_eq!(r[2].target, "<annot></annot>");
    }
}
