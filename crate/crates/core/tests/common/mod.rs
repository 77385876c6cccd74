#![allow(dead_code)]

use std::path::PathBuf;

use mailtod::annotation::{parse_items, AnnotationItem};
use mailtod::corpus::CleanEmail;
use mailtod::dialogue::{AnnotatedUtterance, Dialogue, GenerationMeta, Speaker};
use mailtod::llm::MockScript;
use mailtod::ontology::SlotRef;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mailtod"))
}

pub fn email(id: &str, body: &str) -> CleanEmail {
    CleanEmail {
        id: id.into(),
        body: body.into(),
        subject: None,
        source_lang: "en".into(),
        translated: false,
        redactions: Vec::new(),
    }
}

/// A dialogue whose turn `i` carries the parsed `annotations[i]`.
pub fn dialogue(id: &str, annotations: &[&str]) -> Dialogue {
    Dialogue {
        id: id.into(),
        email_id: format!("e-{id}"),
        variant_id: 0,
        generation_meta: GenerationMeta {
            model: "m".into(),
            temperature: 0.7,
            timestamp: "1970-01-01T00:00:00Z".into(),
        },
        turns: annotations
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let speaker = if i % 2 == 0 { Speaker::User } else { Speaker::Bot };
                let mut u = AnnotatedUtterance::new(speaker, format!("utterance {i} of {id}"));
                u.items = parse_items(a).expect("fixture annotation parses");
                u.raw_suffix = Some(a.to_string());
                u
            })
            .collect(),
    }
}

// ---- random generators ----

const NAME_START: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_";
const NAME_REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_-";

fn rand_name(rng: &mut impl Rng) -> String {
    let mut s = String::new();
    s.push(NAME_START[rng.random_range(0..NAME_START.len())] as char);
    for _ in 0..rng.random_range(0..8) {
        s.push(NAME_REST[rng.random_range(0..NAME_REST.len())] as char);
    }
    s
}

fn rand_value(rng: &mut impl Rng) -> String {
    const CHARS: &[char] = &[
        'a', 'Z', '0', '9', ' ', ',', '=', '(', '/', '-', '.', ':', 'é', 'ü', '€', '\t', '_',
    ];
    loop {
        let n = rng.random_range(1..12);
        let s: String = (0..n).map(|_| CHARS[rng.random_range(0..CHARS.len())]).collect();
        let t = s.trim();
        if !t.is_empty() {
            return t.to_string();
        }
    }
}

/// A random item list the grammar can represent.
pub fn rand_items(rng: &mut impl Rng) -> Vec<AnnotationItem> {
    (0..rng.random_range(0..6))
        .map(|_| {
            let slot = if rng.random_bool(0.5) {
                SlotRef::qualified(rand_name(rng), rand_name(rng))
            } else {
                SlotRef::bare(rand_name(rng))
            };
            let value = rng.random_bool(0.7).then(|| rand_value(rng));
            AnnotationItem {
                act_type: rand_name(rng),
                slot,
                value,
            }
        })
        .collect()
}

/// A random (slot, value) list of at most 6 pairs over small alphabets, so
/// collisions between gold and prediction are common.
pub fn rand_pairs(rng: &mut impl Rng) -> Vec<(String, Option<String>)> {
    const SLOTS: [&str; 4] = ["trip.destination", "trip.guests", "hotel.name", "price"];
    const VALUES: [&str; 3] = ["namibia", "2", "x"];
    (0..rng.random_range(0..=6))
        .map(|_| {
            let slot = SLOTS[rng.random_range(0..SLOTS.len())].to_string();
            let value = rng
                .random_bool(0.8)
                .then(|| VALUES[rng.random_range(0..VALUES.len())].to_string());
            (slot, value)
        })
        .collect()
}

// ---- brute-force metric oracle over plain pair lists ----

pub type Pair = (String, Option<String>);

fn dedup(xs: &[Pair]) -> Vec<Pair> {
    let mut out: Vec<Pair> = Vec::new();
    for x in xs {
        if !out.contains(x) {
            out.push(x.clone());
        }
    }
    out
}

fn same_elements<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    a.iter().all(|x| b.contains(x)) && b.iter().all(|x| a.contains(x))
}

pub fn oracle_em(y: &[Pair], yh: &[Pair]) -> u8 {
    let (y, yh) = (dedup(y), dedup(yh));
    same_elements(&y, &yh) as u8
}

pub fn oracle_pr(y: &[Pair], yh: &[Pair]) -> u8 {
    y.iter().all(|p| yh.contains(p)) as u8
}

/// Value multiset equality: every value occurs equally often on both sides.
fn same_value_counts(y: &[Pair], yh: &[Pair]) -> bool {
    let count = |xs: &[Pair], v: &Option<String>| xs.iter().filter(|(_, w)| w == v).count();
    y.iter().chain(yh).all(|(_, v)| count(y, v) == count(yh, v))
}

pub fn oracle_sm_prose(y: &[Pair], yh: &[Pair]) -> u8 {
    let (y, yh) = (dedup(y), dedup(yh));
    if y.is_empty() && yh.is_empty() {
        return 1;
    }
    let ys: Vec<&String> = y.iter().map(|p| &p.0).collect();
    let hs: Vec<&String> = yh.iter().map(|p| &p.0).collect();
    (same_elements(&ys, &hs) || same_value_counts(&y, &yh)) as u8
}

pub fn oracle_sm_appendix(y: &[Pair], yh: &[Pair]) -> u8 {
    if y.is_empty() && yh.is_empty() {
        return 1;
    }
    let mut hit = false;
    for a in y {
        for b in yh {
            if a.0 == b.0 || a.1 == b.1 {
                hit = true;
            }
        }
    }
    hit as u8
}

// ---- leakage fixture ----

pub fn body_sentinel(d: usize) -> String {
    format!("QZXBODY{d:02}Q")
}

pub fn turn_sentinel(d: usize, t: usize) -> String {
    format!("QZXT{d:02}K{t:02}Q")
}

/// Twenty e-mails whose bodies carry a body sentinel and whose scripted
/// dialogues carry a distinct sentinel in every turn.
pub fn leakage_fixture() -> (Vec<CleanEmail>, Vec<MockScript>, usize) {
    let mut emails = Vec::new();
    let mut scripts = Vec::new();
    let mut turns = 0;
    for d in 0..20 {
        let id = format!("lk-{d:02}");
        let body = format!(
            "Request number {d}: please plan a trip for us. Secret marker {} must stay in the e-mail.",
            body_sentinel(d)
        );
        let n = 2 + d % 5;
        let dialogue = (0..n)
            .map(|t| {
                let who = if t % 2 == 0 { "User" } else { "Bot" };
                format!("{who}: Turn {t} of request {d} says {}. // inform(guests={t})", turn_sentinel(d, t))
            })
            .collect();
        turns += n;
        scripts.push(MockScript {
            needle: format!("Request number {d}:"),
            preamble: None,
            epilogue: None,
            dialogue,
        });
        emails.push(email(&id, &body));
    }
    (emails, scripts, turns)
}

/// Parses `QZXT<d>K<t>Q` occurrences out of a request body.
pub fn turn_sentinels_in(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find("QZXT") {
        let tail = &rest[pos + 4..];
        if tail.len() >= 6 && &tail[2..3] == "K" && &tail[5..6] == "Q" {
            if let (Ok(d), Ok(t)) = (tail[..2].parse(), tail[3..5].parse()) {
                out.push((d, t));
            }
        }
        rest = &rest[pos + 4..];
    }
    out
}

/// Fraction `[num, den]` from a fixture as f64.
pub fn frac(v: &serde_json::Value) -> Option<f64> {
    let a = v.as_array()?;
    Some(a[0].as_f64()? / a[1].as_f64()?)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}
