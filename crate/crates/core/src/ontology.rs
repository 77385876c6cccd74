//! Domain/slot schema for the travel-booking annotations.
//!
//! An [`Ontology`] is an ordered map from domain name to its slot names plus
//! the list of dialogue-act slots. The built-in default is the travel schema
//! (hotel, flight, trip, user, act). Loading a file overlays its domains onto
//! the default: a domain named in the file replaces the default definition,
//! other default domains are kept.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("cannot read ontology file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ontology schema parse error: {0}")]
    SchemaParse(String),
    #[error("duplicate slot `{slot}` in domain `{domain}`")]
    DuplicateSlot { domain: String, slot: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unknown slot `{0}`")]
    Unknown(String),
    #[error("ambiguous slot `{slot}`; candidates: {}", candidates.join(", "))]
    Ambiguous {
        slot: String,
        candidates: Vec<String>,
    },
}

/// Reference to a slot, optionally qualified with its domain (`trip.destination`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotRef {
    pub domain: Option<String>,
    pub slot: String,
}

impl SlotRef {
    pub fn bare(slot: impl Into<String>) -> Self {
        Self {
            domain: None,
            slot: slot.into(),
        }
    }

    pub fn qualified(domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Self {
            domain: Some(domain.into()),
            slot: slot.into(),
        }
    }
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.domain {
            Some(d) => write!(f, "{d}.{}", self.slot),
            None => f.write_str(&self.slot),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid slot reference `{0}`")]
pub struct SlotRefParseError(pub String);

impl FromStr for SlotRef {
    type Err = SlotRefParseError;

    /// Splits at the first `.`; both halves must be non-empty.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((d, slot)) if !d.is_empty() && !slot.is_empty() => Ok(Self::qualified(d, slot)),
            Some(_) => Err(SlotRefParseError(s.to_string())),
            None if s.is_empty() => Err(SlotRefParseError(s.to_string())),
            None => Ok(Self::bare(s)),
        }
    }
}

impl Serialize for SlotRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SlotRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub domains: IndexMap<String, Vec<String>>,
    pub act_slots: Vec<String>,
}

const DEFAULT_DOMAINS: &[(&str, &[&str])] = &[
    (
        "hotel",
        &[
            "board",
            "name",
            "area",
            "address",
            "price",
            "feature",
            "room_type",
            "room_amount",
            "stars",
            "transfer",
            "reviews",
        ],
    ),
    (
        "flight",
        &[
            "departure_airport",
            "arrival_airport",
            "airline",
            "type",
            "class",
            "price",
            "duration",
        ],
    ),
    (
        "trip",
        &[
            "travel_period_start",
            "travel_period_end",
            "length",
            "price",
            "type",
            "destination",
            "guests",
            "guests_children",
            "availability",
            "confirmation_number",
        ],
    ),
    ("user", &["name", "phone", "e-mail"]),
    (
        "act",
        &["require_more", "booking", "information_sent", "general"],
    ),
];

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OntologyFile {
    #[serde(default)]
    domains: IndexMap<String, Vec<String>>,
    #[serde(default)]
    act_slots: Option<Vec<String>>,
}

impl Default for Ontology {
    fn default() -> Self {
        let domains: IndexMap<String, Vec<String>> = DEFAULT_DOMAINS
            .iter()
            .map(|(d, slots)| (d.to_string(), slots.iter().map(|s| s.to_string()).collect()))
            .collect();
        let act_slots = domains["act"].clone();
        Self { domains, act_slots }
    }
}

impl Ontology {
    /// Loads the ontology at `path`, or the built-in default when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, OntologyError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| OntologyError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                Self::from_json(&text)
            }
        }
    }

    /// Parses an ontology document and overlays it on the default schema.
    pub fn from_json(text: &str) -> Result<Self, OntologyError> {
        let file: OntologyFile =
            serde_json::from_str(text).map_err(|e| OntologyError::SchemaParse(e.to_string()))?;
        let mut ont = Self::default();
        for (domain, slots) in file.domains {
            if domain.is_empty() {
                return Err(OntologyError::SchemaParse("empty domain name".into()));
            }
            ont.domains.insert(domain, slots);
        }
        if let Some(acts) = file.act_slots {
            ont.act_slots = acts;
        }
        ont.check()?;
        Ok(ont)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ontology serializes")
    }

    fn check(&self) -> Result<(), OntologyError> {
        for (domain, slots) in &self.domains {
            let mut seen = HashSet::new();
            for slot in slots {
                if slot.is_empty() {
                    return Err(OntologyError::SchemaParse(format!(
                        "empty slot name in domain `{domain}`"
                    )));
                }
                if !seen.insert(slot.as_str()) {
                    return Err(OntologyError::DuplicateSlot {
                        domain: domain.clone(),
                        slot: slot.clone(),
                    });
                }
            }
        }
        let mut seen = HashSet::new();
        for slot in &self.act_slots {
            if !seen.insert(slot.as_str()) {
                return Err(OntologyError::DuplicateSlot {
                    domain: "act_slots".into(),
                    slot: slot.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn has_slot(&self, domain: &str, slot: &str) -> bool {
        self.domains
            .get(domain)
            .is_some_and(|slots| slots.iter().any(|s| s == slot))
    }

    /// Resolves a slot reference to its unique `(domain, slot)` pair.
    ///
    /// Bare names that occur in several domains are reported as ambiguous
    /// rather than picking one.
    pub fn resolve(&self, slot_ref: &SlotRef) -> Result<(String, String), ResolveError> {
        match &slot_ref.domain {
            Some(domain) => {
                if self.has_slot(domain, &slot_ref.slot) {
                    Ok((domain.clone(), slot_ref.slot.clone()))
                } else {
                    Err(ResolveError::Unknown(slot_ref.to_string()))
                }
            }
            None => {
                let candidates: Vec<&String> = self
                    .domains
                    .iter()
                    .filter(|(_, slots)| slots.contains(&slot_ref.slot))
                    .map(|(d, _)| d)
                    .collect();
                match candidates.as_slice() {
                    [] if self.act_slots.contains(&slot_ref.slot) => {
                        Ok(("act".to_string(), slot_ref.slot.clone()))
                    }
                    [] => Err(ResolveError::Unknown(slot_ref.slot.clone())),
                    [only] => Ok(((*only).clone(), slot_ref.slot.clone())),
                    many => Err(ResolveError::Ambiguous {
                        slot: slot_ref.slot.clone(),
                        candidates: many.iter().map(|d| (*d).clone()).collect(),
                    }),
                }
            }
        }
    }

    /// Human-readable slot listing, one `domain: slot, slot, ...` line per domain.
    pub fn slot_listing(&self) -> String {
        let mut out = String::new();
        for (domain, slots) in &self.domains {
            out.push_str(domain);
            out.push_str(": ");
            out.push_str(&slots.join(", "));
            out.push('\n');
        }
        if !self.domains.contains_key("act") && !self.act_slots.is_empty() {
            out.push_str("act: ");
            out.push_str(&self.act_slots.join(", "));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_travel_schema() {
        let ont = Ontology::load(None).unwrap();
        let names: Vec<&str> = ont.domains.keys().map(String::as_str).collect();
        assert_eq!(names, ["hotel", "flight", "trip", "user", "act"]);
        assert_eq!(ont.domains["hotel"].len(), 11);
        assert_eq!(ont.domains["flight"].len(), 7);
        assert_eq!(ont.domains["trip"].len(), 10);
        assert_eq!(ont.domains["user"], ["name", "phone", "e-mail"]);
        assert_eq!(
            ont.act_slots,
            ["require_more", "booking", "information_sent", "general"]
        );
    }

    #[test]
    fn overlay_replaces_one_domain() {
        let ont = Ontology::from_json(r#"{"domains": {"hotel": ["name", "stars"]}}"#).unwrap();
        assert_eq!(ont.domains.len(), 5);
        assert_eq!(ont.domains["hotel"], ["name", "stars"]);
        assert_eq!(ont.domains["trip"].len(), 10);
    }

    #[test]
    fn duplicate_slot_rejected() {
        let err = Ontology::from_json(r#"{"domains": {"hotel": ["name", "name"]}}"#).unwrap_err();
        assert!(matches!(err, OntologyError::DuplicateSlot { ref domain, ref slot } if domain == "hotel" && slot == "name"));
    }

    #[test]
    fn malformed_schema_rejected() {
        assert!(matches!(
            Ontology::from_json("{\"domains\": [1,2]}"),
            Err(OntologyError::SchemaParse(_))
        ));
        assert!(matches!(
            Ontology::from_json("{\"slots\": {}}"),
            Err(OntologyError::SchemaParse(_))
        ));
    }

    #[test]
    fn resolve_cases() {
        let ont = Ontology::default();
        assert_eq!(
            ont.resolve(&SlotRef::bare("destination")).unwrap(),
            ("trip".to_string(), "destination".to_string())
        );
        assert_eq!(
            ont.resolve(&SlotRef::bare("price")).unwrap_err(),
            ResolveError::Ambiguous {
                slot: "price".into(),
                candidates: vec!["hotel".into(), "flight".into(), "trip".into()],
            }
        );
        assert_eq!(
            ont.resolve(&SlotRef::bare("warp_drive")).unwrap_err(),
            ResolveError::Unknown("warp_drive".into())
        );
        assert_eq!(
            ont.resolve(&SlotRef::qualified("flight", "price")).unwrap(),
            ("flight".to_string(), "price".to_string())
        );
        assert!(ont.resolve(&SlotRef::qualified("user", "price")).is_err());
        assert_eq!(
            ont.resolve(&SlotRef::bare("e-mail")).unwrap(),
            ("user".to_string(), "e-mail".to_string())
        );
    }

    #[test]
    fn every_qualified_pair_resolves_to_itself() {
        let ont = Ontology::default();
        for (domain, slots) in &ont.domains {
            for slot in slots {
                let r = SlotRef::qualified(domain.clone(), slot.clone());
                assert_eq!(ont.resolve(&r).unwrap(), (domain.clone(), slot.clone()));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let ont = Ontology::from_json(r#"{"domains": {"cruise": ["ship", "cabin"]}}"#).unwrap();
        let back = Ontology::from_json(&ont.to_json()).unwrap();
        assert_eq!(ont, back);
        assert_eq!(Ontology::from_json(&Ontology::default().to_json()).unwrap(), Ontology::default());
    }

    #[test]
    fn slot_ref_parsing() {
        assert_eq!("trip.destination".parse::<SlotRef>().unwrap(), SlotRef::qualified("trip", "destination"));
        assert_eq!("guests".parse::<SlotRef>().unwrap(), SlotRef::bare("guests"));
        assert!("trip.".parse::<SlotRef>().is_err());
        assert!("".parse::<SlotRef>().is_err());
    }
}
