use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use mailtod::annotation::parse_items;
use mailtod::dialogue::{write_dialogues, AnnotatedUtterance, Dialogue, GenerationMeta, Speaker};
use mailtod_ffi::*;
use serde_json::Value;

use MtdStatus::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a string returned by the library.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { mtd_string_free(p) };
    s
}

fn last_error() -> String {
    take(mtd_last_error())
}

fn items(text: &str) -> *mut MtdItems {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mtd_items_parse(c(text).as_ptr(), &mut out) }, MTD_OK, "{text}");
    out
}

fn ontology() -> *mut MtdOntology {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mtd_ontology_default(&mut out) }, MTD_OK);
    out
}

fn hand_fixture() -> Value {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/metrics_hand.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(mtd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn parse_serialize_round_trip() {
    let it = items("inform(destination = Namibia), request(trip.guests)");
    assert_eq!(unsafe { mtd_items_len(it) }, 2);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mtd_items_serialize(it, &mut s) }, MTD_OK);
    let text = take(s);
    let again = items(&text);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(mtd_items_to_json(it, &mut a), MTD_OK);
        assert_eq!(mtd_items_to_json(again, &mut b), MTD_OK);
    }
    let ja: Value = serde_json::from_str(&take(a)).unwrap();
    assert_eq!(ja, serde_json::from_str::<Value>(&take(b)).unwrap());
    assert_eq!(ja[0]["act_type"], "inform");
    assert_eq!(ja[1]["slot"], "trip.guests");
    unsafe {
        mtd_items_free(it);
        mtd_items_free(again);
    }
}

#[test]
fn parse_errors_set_last_error() {
    let mut out = ptr::null_mut();
    let st = unsafe { mtd_items_parse(c("inform(destination=").as_ptr(), &mut out) };
    assert_eq!(st, MTD_PARSE_ERROR);
    assert!(out.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_and_bad_utf8_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mtd_items_parse(ptr::null(), &mut out) }, MTD_NULL_ARGUMENT);
    assert!(last_error().contains("text"));
    assert_eq!(unsafe { mtd_items_parse(c("request(a)").as_ptr(), ptr::null_mut()) }, MTD_NULL_ARGUMENT);
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { mtd_items_parse(bad.as_ptr().cast(), &mut out) }, MTD_INVALID_UTF8);
    assert_eq!(unsafe { mtd_items_len(ptr::null()) }, 0);
    unsafe {
        mtd_items_free(ptr::null_mut());
        mtd_ontology_free(ptr::null_mut());
        mtd_string_free(ptr::null_mut());
    }
}

#[test]
fn ontology_resolution() {
    let ont = ontology();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(mtd_ontology_resolve(ont, c("destination").as_ptr(), &mut out), MTD_OK);
        assert_eq!(take(out), "trip.destination");
        assert_eq!(mtd_ontology_resolve(ont, c("nonsense_slot").as_ptr(), &mut out), MTD_UNRESOLVED_SLOT);
        assert_eq!(mtd_ontology_resolve(ont, c("price").as_ptr(), &mut out), MTD_UNRESOLVED_SLOT);
        mtd_ontology_free(ont);
    }
}

#[test]
fn custom_ontology_from_json() {
    let json = r#"{"domains": {"ferry": ["route", "deck"]}, "act_slots": []}"#;
    let mut ont = ptr::null_mut();
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(mtd_ontology_from_json(c(json).as_ptr(), &mut ont), MTD_OK);
        assert_eq!(mtd_ontology_resolve(ont, c("deck").as_ptr(), &mut out), MTD_OK);
        assert_eq!(take(out), "ferry.deck");
        mtd_ontology_free(ont);
        let mut bad = ptr::null_mut();
        assert_eq!(mtd_ontology_from_json(c("{").as_ptr(), &mut bad), MTD_SCHEMA_ERROR);
        assert!(bad.is_null());
    }
}

#[test]
fn validation_counts_violations() {
    let ont = ontology();
    let it = items("inform(destination=Namibia), inform(bogus=1), inform(name=x)");
    let mut n = 0usize;
    let mut details = ptr::null_mut();
    unsafe {
        assert_eq!(mtd_items_validate(it, ont, &mut n, &mut details), MTD_OK);
        assert_eq!(n, 2);
        let v: Vec<Value> = serde_json::from_str(&take(details)).unwrap();
        assert_eq!(v.len(), 2);
        // details are optional
        assert_eq!(mtd_items_validate(it, ont, &mut n, ptr::null_mut()), MTD_OK);
        mtd_items_free(it);
        mtd_ontology_free(ont);
    }
}

#[test]
fn turn_scores_match_hand_fixture() {
    let fx = hand_fixture();
    let ont = ontology();
    let mut checked = 0;
    for d in fx["dialogues"].as_array().unwrap() {
        for t in d["turns"].as_array().unwrap() {
            let e: Vec<u8> = serde_json::from_value(t["expect"].clone()).unwrap();
            let g = items(t["gold"].as_str().unwrap());
            let p = items(t["pred"].as_str().unwrap());
            for (mode, sm) in [(MtdSmMode::MTD_SM_PROSE, e[1]), (MtdSmMode::MTD_SM_APPENDIX, e[2])] {
                let mut s = MtdTurnScores::default();
                assert_eq!(unsafe { mtd_score_turn(g, p, ont, mode, false, &mut s) }, MTD_OK);
                assert_eq!((s.em, s.sm, s.pr), (e[0], sm, e[3]), "{} {mode:?}", d["id"]);
            }
            unsafe {
                mtd_items_free(g);
                mtd_items_free(p);
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
    unsafe { mtd_ontology_free(ont) };
}

#[test]
fn strict_scoring_distinguishes_acts() {
    let ont = ontology();
    let g = items("inform(board=Half Board)");
    let p = items("confirm(board=half board)");
    let mut s = MtdTurnScores::default();
    unsafe {
        assert_eq!(mtd_score_turn(g, p, ont, MtdSmMode::MTD_SM_PROSE, false, &mut s), MTD_OK);
        assert_eq!(s.em, 1);
        assert_eq!(mtd_score_turn(g, p, ont, MtdSmMode::MTD_SM_PROSE, true, &mut s), MTD_OK);
        assert_eq!(s.em, 0);
        mtd_items_free(g);
        mtd_items_free(p);
        mtd_ontology_free(ont);
    }
}

fn dialogue(id: &str, annotations: &[&str]) -> Dialogue {
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
                let mut u = AnnotatedUtterance::new(speaker, format!("utterance {i}"));
                u.items = parse_items(a).unwrap();
                u
            })
            .collect(),
    }
}

#[test]
fn evaluate_files_reports_and_maps_errors() {
    let fx = hand_fixture();
    let col = |d: &Value, k: &str| -> Vec<String> {
        d["turns"].as_array().unwrap().iter().map(|t| t[k].as_str().unwrap().to_string()).collect()
    };
    let build = |k: &str| -> Vec<Dialogue> {
        fx["dialogues"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| {
                let a = col(d, k);
                dialogue(d["id"].as_str().unwrap(), &a.iter().map(String::as_str).collect::<Vec<_>>())
            })
            .collect()
    };
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.json");
    let pred = dir.path().join("pred.json");
    write_dialogues(&gold, &build("gold")).unwrap();
    write_dialogues(&pred, &build("pred")).unwrap();
    let ont = ontology();
    let g = c(gold.to_str().unwrap());
    let p = c(pred.to_str().unwrap());
    let mut out = ptr::null_mut();
    unsafe {
        let st = mtd_evaluate_files(g.as_ptr(), p.as_ptr(), ont, MtdSmMode::MTD_SM_PROSE, false, &mut out);
        assert_eq!(st, MTD_OK);
    }
    let r: Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(r["utterances"], 20);
    assert_eq!(r["micro"]["em"].as_f64().unwrap(), 35.0);
    assert_eq!(r["micro"]["sm"].as_f64().unwrap(), 65.0);
    assert_eq!(r["micro"]["pr"].as_f64().unwrap(), 50.0);

    let other = dir.path().join("other.json");
    write_dialogues(&other, &[dialogue("zz", &[""])]).unwrap();
    let o = c(other.to_str().unwrap());
    let missing = c(dir.path().join("nope.json").to_str().unwrap());
    unsafe {
        let st = mtd_evaluate_files(g.as_ptr(), o.as_ptr(), ont, MtdSmMode::MTD_SM_PROSE, false, &mut out);
        assert_eq!(st, MTD_MISMATCHED_IDS);
        let st = mtd_evaluate_files(missing.as_ptr(), p.as_ptr(), ont, MtdSmMode::MTD_SM_PROSE, false, &mut out);
        assert_eq!(st, MTD_IO_ERROR);
        assert!(last_error().contains("nope.json"));
        mtd_ontology_free(ont);
    }
}

#[test]
fn extract_and_postprocess() {
    let (mut text, mut suffix) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        let line = c("User: Two adults please. // inform(guests=2)");
        assert_eq!(mtd_extract_annotations(line.as_ptr(), &mut text, &mut suffix), MTD_OK);
        assert_eq!(take(text), "User: Two adults please.");
        assert_eq!(take(suffix).trim(), "inform(guests=2)");
        let plain = c("Bot: Hello");
        assert_eq!(mtd_extract_annotations(plain.as_ptr(), &mut text, &mut suffix), MTD_OK);
        assert_eq!(take(text), "Bot: Hello");
        assert!(suffix.is_null());

        let raw = c("Sure, here it is:\nUser: Hi\nBot: Hello\nHope this helps!");
        let mut out = ptr::null_mut();
        assert_eq!(mtd_postprocess_dialogue(raw.as_ptr(), &mut out), MTD_OK);
        assert_eq!(take(out), "User: Hi\nBot: Hello");
        let none = c("no dialogue here");
        assert_eq!(mtd_postprocess_dialogue(none.as_ptr(), &mut out), MTD_PARSE_ERROR);
    }
}

#[test]
fn last_error_is_per_thread() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mtd_items_parse(c("((").as_ptr(), &mut out) }, MTD_PARSE_ERROR);
    let other = std::thread::spawn(|| mtd_last_error().is_null()).join().unwrap();
    assert!(other);
    assert!(!last_error().is_empty());
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/mailtod.h")).unwrap();
    for f in [
        "mtd_last_error", "mtd_version", "mtd_string_free", "mtd_ontology_default",
        "mtd_ontology_from_json", "mtd_ontology_free", "mtd_ontology_resolve", "mtd_items_parse",
        "mtd_items_free", "mtd_items_len", "mtd_items_serialize", "mtd_items_to_json",
        "mtd_items_validate", "mtd_score_turn", "mtd_evaluate_files", "mtd_extract_annotations",
        "mtd_postprocess_dialogue",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f}");
    }
    assert!(h.contains("typedef struct MtdOntology MtdOntology;"));
}
