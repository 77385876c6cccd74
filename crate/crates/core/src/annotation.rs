//! The comment-style annotation language attached to utterances.
//!
//! An annotated line looks like
//!
//! ```text
//! I want to go to Namibia. // inform(destination=Namibia) inform(guests=2)
//! ```
//!
//! Grammar of the part after the `//` marker:
//!
//! ```text
//! items := sep* (item (sep+ item)*)? sep*
//! sep   := whitespace | ','
//! item  := NAME ws* '(' ws* NAME ws* ('=' VALUE)? ')'
//! NAME  := [A-Za-z_][A-Za-z0-9_.-]*
//! VALUE := any characters up to the next ')', trimmed, non-empty
//! ```
//!
//! A slot name containing a `.` is read as `domain.slot`. Values cannot
//! contain `)` since there is no escape syntax.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Ontology, ResolveError, SlotRef};

/// Act types accepted by [`validate`] unless a custom allow-list is given.
pub const DEFAULT_ACT_TYPES: [&str; 5] = ["inform", "request", "act", "confirm", "offer"];

/// Marker separating the utterance from its annotations.
pub const MARKER: &str = "//";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub act_type: String,
    pub slot: SlotRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl AnnotationItem {
    pub fn new(act_type: impl Into<String>, slot: SlotRef, value: Option<&str>) -> Self {
        Self {
            act_type: act_type.into(),
            slot,
            value: value.map(str::to_string),
        }
    }
}

impl fmt::Display for AnnotationItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{}({}={})", self.act_type, self.slot, v),
            None => write!(f, "{}({})", self.act_type, self.slot),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {expected}, found {found}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

/// Splits a line at the first `//` into trimmed text and annotation suffix.
pub fn extract_annotations(line: &str) -> (String, Option<String>) {
    match line.find(MARKER) {
        Some(pos) => (
            line[..pos].trim().to_string(),
            Some(line[pos + MARKER.len()..].trim().to_string()),
        ),
        None => (line.trim().to_string(), None),
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn skip_separators(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_whitespace() || c == ',') {
            self.bump();
        }
        self.pos > start
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            expected: expected.to_string(),
            found: match self.peek() {
                Some(c) => format!("{c:?}"),
                None => "end of input".to_string(),
            },
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&format!("{want:?}")))
        }
    }

    fn name(&mut self, what: &str) -> Result<&'a str, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                self.bump();
            }
            _ => return Err(self.error(what)),
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
        {
            self.bump();
        }
        Ok(&self.src[start..self.pos])
    }

    fn item(&mut self) -> Result<AnnotationItem, ParseError> {
        let act_type = self.name("act type name")?;
        self.skip_ws();
        self.expect('(')?;
        self.skip_ws();
        let slot_start = self.pos;
        let slot_name = self.name("slot name")?;
        let slot: SlotRef = slot_name.parse().map_err(|_| ParseError {
            offset: slot_start,
            expected: "slot name of the form `slot` or `domain.slot`".into(),
            found: format!("{slot_name:?}"),
        })?;
        self.skip_ws();
        let value = if self.peek() == Some('=') {
            self.bump();
            let value_start = self.pos;
            match self.src[self.pos..].find(')') {
                Some(rel) => {
                    let raw = &self.src[value_start..value_start + rel];
                    let trimmed = raw.trim();
                    if trimmed.is_empty() {
                        self.pos = value_start + rel;
                        return Err(self.error("non-empty value"));
                    }
                    self.pos = value_start + rel;
                    Some(trimmed.to_string())
                }
                None => {
                    self.pos = self.src.len();
                    return Err(self.error("')' closing the value"));
                }
            }
        } else {
            None
        };
        self.expect(')')?;
        Ok(AnnotationItem {
            act_type: act_type.to_string(),
            slot,
            value,
        })
    }
}

/// Parses an annotation suffix into items. All-or-nothing: any error discards
/// the whole suffix.
pub fn parse_items(raw_suffix: &str) -> Result<Vec<AnnotationItem>, ParseError> {
    let mut cur = Cursor {
        src: raw_suffix,
        pos: 0,
    };
    let mut items = Vec::new();
    cur.skip_separators();
    while cur.peek().is_some() {
        items.push(cur.item()?);
        if !cur.skip_separators() && cur.peek().is_some() {
            return Err(cur.error("separator (whitespace or ',')"));
        }
    }
    Ok(items)
}

/// Canonical text form: items separated by a single space, source order kept.
pub fn serialize(items: &[AnnotationItem]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    UnknownSlot,
    AmbiguousSlot,
    UnknownActType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Position of the offending item in the list.
    pub index: usize,
    pub kind: ViolationKind,
    pub item: String,
    pub message: String,
}

/// Checks items against the ontology and the default act-type allow-list.
pub fn validate(items: &[AnnotationItem], ont: &Ontology) -> Vec<Violation> {
    let acts: BTreeSet<String> = DEFAULT_ACT_TYPES.iter().map(|s| s.to_string()).collect();
    validate_with(items, ont, Some(&acts))
}

/// Like [`validate`]; `act_types = None` accepts any act type.
pub fn validate_with(
    items: &[AnnotationItem],
    ont: &Ontology,
    act_types: Option<&BTreeSet<String>>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, item) in items.iter().enumerate() {
        if let Some(allowed) = act_types {
            if !allowed.contains(&item.act_type) {
                out.push(Violation {
                    index,
                    kind: ViolationKind::UnknownActType,
                    item: item.to_string(),
                    message: format!("unknown act type `{}`", item.act_type),
                });
            }
        }
        if let Err(e) = ont.resolve(&item.slot) {
            let kind = match e {
                ResolveError::Unknown(_) => ViolationKind::UnknownSlot,
                ResolveError::Ambiguous { .. } => ViolationKind::AmbiguousSlot,
            };
            out.push(Violation {
                index,
                kind,
                item: item.to_string(),
                message: e.to_string(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(act: &str, slot: &str, value: Option<&str>) -> AnnotationItem {
        AnnotationItem::new(act, slot.parse().unwrap(), value)
    }

    #[test]
    fn extract_splits_at_first_marker() {
        assert_eq!(
            extract_annotations("I want to go to Namibia. // inform(destination=Namibia)"),
            (
                "I want to go to Namibia.".to_string(),
                Some("inform(destination=Namibia)".to_string())
            )
        );
        assert_eq!(extract_annotations("Hello!"), ("Hello!".to_string(), None));
        assert_eq!(
            extract_annotations("A // B // C"),
            ("A".to_string(), Some("B // C".to_string()))
        );
        assert_eq!(extract_annotations("//"), (String::new(), Some(String::new())));
    }

    #[test]
    fn parses_multiple_items() {
        let items = parse_items("inform(destination=Namibia) inform(guests=2)").unwrap();
        assert_eq!(
            items,
            vec![
                item("inform", "destination", Some("Namibia")),
                item("inform", "guests", Some("2"))
            ]
        );
    }

    #[test]
    fn value_is_optional() {
        assert_eq!(
            parse_items("request(travel_period_start)").unwrap(),
            vec![item("request", "travel_period_start", None)]
        );
    }

    #[test]
    fn comma_inside_value_belongs_to_value() {
        assert_eq!(
            parse_items("inform(destination=Windhoek, Namibia)").unwrap(),
            vec![item("inform", "destination", Some("Windhoek, Namibia"))]
        );
    }

    #[test]
    fn comma_and_whitespace_separators() {
        let items = parse_items(" , inform(a=1),request(b) ,, act(general) ").unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(serialize(&items), "inform(a=1) request(b) act(general)");
    }

    #[test]
    fn hyphenated_and_qualified_slots() {
        assert_eq!(
            parse_items("inform(user.e-mail=[EMAIL_ADDR])").unwrap(),
            vec![item("inform", "user.e-mail", Some("[EMAIL_ADDR]"))]
        );
    }

    #[test]
    fn inner_whitespace_is_normalized() {
        let items = parse_items("inform ( destination =  Namibia  )").unwrap();
        assert_eq!(serialize(&items), "inform(destination=Namibia)");
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse_items("inform(destination=Namibia").unwrap_err();
        assert_eq!(e.offset, 26);
        let e = parse_items("inform(destination=)").unwrap_err();
        assert_eq!(e.offset, 19);
        let e = parse_items("inform(a=1)request(b)").unwrap_err();
        assert_eq!(e.offset, 11);
        let e = parse_items("9inform(a)").unwrap_err();
        assert_eq!(e.offset, 0);
        let e = parse_items("inform(trip.=x)").unwrap_err();
        assert_eq!(e.offset, 7);
        assert!(parse_items("inform()").is_err());
        assert!(parse_items("inform").is_err());
    }

    #[test]
    fn value_with_close_paren_cannot_round_trip() {
        // `a)b` ends the value early; the trailing text is then a syntax error.
        assert!(parse_items("inform(x=a)b)").is_err());
    }

    #[test]
    fn serialize_cases() {
        assert_eq!(serialize(&[]), "");
        assert_eq!(
            serialize(&[item("inform", "destination", Some("Namibia"))]),
            "inform(destination=Namibia)"
        );
        assert_eq!(parse_items("").unwrap(), vec![]);
    }

    #[test]
    fn validate_cases() {
        let ont = Ontology::default();
        assert!(validate(&[item("inform", "destination", Some("Namibia"))], &ont).is_empty());
        assert!(validate(&[item("act", "require_more", None)], &ont).is_empty());
        let v = validate(&[item("inform", "warp_drive", Some("9"))], &ont);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::UnknownSlot);
        let v = validate(&[item("inform", "price", Some("cheap"))], &ont);
        assert_eq!(v[0].kind, ViolationKind::AmbiguousSlot);
        let v = validate(&[item("shout", "destination", Some("x"))], &ont);
        assert_eq!(v[0].kind, ViolationKind::UnknownActType);
        assert!(validate_with(&[item("shout", "destination", Some("x"))], &ont, None).is_empty());
    }

    #[test]
    fn item_json_shape() {
        let json = serde_json::to_string(&item("inform", "trip.destination", Some("Namibia"))).unwrap();
        assert_eq!(
            json,
            r#"{"act_type":"inform","slot":"trip.destination","value":"Namibia"}"#
        );
        let json = serde_json::to_string(&item("request", "guests", None)).unwrap();
        assert_eq!(json, r#"{"act_type":"request","slot":"guests"}"#);
    }
}
