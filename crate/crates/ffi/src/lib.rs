//! C ABI over the annotation language, the ontology and the state metrics.
//!
//! Conventions:
//! - Every fallible function returns an [`MtdStatus`]; results go through
//!   out-pointers, which are only written on `MTD_OK`.
//! - On failure a message is kept per thread; fetch it with
//!   [`mtd_last_error`].
//! - Strings handed out are NUL-terminated UTF-8 owned by the caller, to be
//!   released with [`mtd_string_free`]. Handles have their own `_free`.
//! - Panics never cross the boundary; they surface as `MTD_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mailtod::annotation::{self, AnnotationItem};
use mailtod::dialogue::{self, DatasetBundle, Dialogue};
use mailtod::metrics::{self, EvalOptions, Predictions, SmMode, StateSet};
use mailtod::ontology::{Ontology, SlotRef};

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtdStatus {
    MTD_OK = 0,
    MTD_NULL_ARGUMENT = 1,
    MTD_INVALID_UTF8 = 2,
    MTD_PARSE_ERROR = 3,
    MTD_SCHEMA_ERROR = 4,
    MTD_UNRESOLVED_SLOT = 5,
    MTD_IO_ERROR = 6,
    MTD_MISMATCHED_IDS = 7,
    MTD_MISMATCHED_TURN_COUNTS = 8,
    MTD_INVALID_ARGUMENT = 9,
    MTD_PANIC = 99,
}

use MtdStatus::*;

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtdSmMode {
    MTD_SM_PROSE = 0,
    MTD_SM_APPENDIX = 1,
}

impl From<MtdSmMode> for SmMode {
    fn from(m: MtdSmMode) -> Self {
        match m {
            MtdSmMode::MTD_SM_PROSE => SmMode::Prose,
            MtdSmMode::MTD_SM_APPENDIX => SmMode::Appendix,
        }
    }
}

/// Per-turn scores, each 0 or 1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MtdTurnScores {
    pub em: u8,
    pub sm: u8,
    pub pr: u8,
}

/// Opaque slot ontology.
pub struct MtdOntology {
    inner: Ontology,
}

/// Opaque list of annotation items.
pub struct MtdItems {
    inner: Vec<AnnotationItem>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MtdStatus, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(status: MtdStatus, msg: impl Into<String>) -> Res<T> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records any failure and maps panics to `MTD_PANIC`.
fn guard(f: impl FnOnce() -> Res<()>) -> MtdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MTD_OK,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MTD_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(MTD_NULL_ARGUMENT, format!("`{name}` is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MTD_INVALID_UTF8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Res<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(MTD_NULL_ARGUMENT, format!("`{name}` is null")), Ok)
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Res<&'a mut T> {
    p.as_mut()
        .map_or_else(|| fail(MTD_NULL_ARGUMENT, format!("`{name}` is null")), Ok)
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "\\0")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failure on this thread, or NULL if there was none.
/// The caller frees it with [`mtd_string_free`].
#[no_mangle]
pub extern "C" fn mtd_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Library version, static; do not free.
#[no_mangle]
pub extern "C" fn mtd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn mtd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- ontology ----

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtd_ontology_default(out: *mut *mut MtdOntology) -> MtdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = Box::into_raw(Box::new(MtdOntology {
            inner: Ontology::default(),
        }));
        Ok(())
    })
}

/// Parses an ontology JSON document (`{"domains": {...}, "act_slots": [...]}`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtd_ontology_from_json(json: *const c_char, out: *mut *mut MtdOntology) -> MtdStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let out = out_arg(out, "out")?;
        let inner = Ontology::from_json(json).or_else(|e| fail(MTD_SCHEMA_ERROR, e.to_string()))?;
        *out = Box::into_raw(Box::new(MtdOntology { inner }));
        Ok(())
    })
}

/// # Safety
/// `ont` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn mtd_ontology_free(ont: *mut MtdOntology) {
    if !ont.is_null() {
        drop(Box::from_raw(ont));
    }
}

/// Resolves `slot` or `domain.slot` to its canonical `domain.slot`.
///
/// # Safety
/// Pointers must be valid; `slot` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mtd_ontology_resolve(
    ont: *const MtdOntology,
    slot: *const c_char,
    out: *mut *mut c_char,
) -> MtdStatus {
    guard(|| {
        let ont = ref_arg(ont, "ont")?;
        let slot = str_arg(slot, "slot")?;
        let out = out_arg(out, "out")?;
        let r: SlotRef = slot.parse().or_else(|e: mailtod::ontology::SlotRefParseError| {
            fail(MTD_INVALID_ARGUMENT, e.to_string())
        })?;
        let (d, s) = ont
            .inner
            .resolve(&r)
            .or_else(|e| fail(MTD_UNRESOLVED_SLOT, e.to_string()))?;
        *out = owned(format!("{d}.{s}"));
        Ok(())
    })
}

// ---- annotation items ----

/// Parses an annotation suffix (the text after `//`).
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mtd_items_parse(text: *const c_char, out: *mut *mut MtdItems) -> MtdStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let inner = annotation::parse_items(text).or_else(|e| fail(MTD_PARSE_ERROR, e.to_string()))?;
        *out = Box::into_raw(Box::new(MtdItems { inner }));
        Ok(())
    })
}

/// # Safety
/// `items` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn mtd_items_free(items: *mut MtdItems) {
    if !items.is_null() {
        drop(Box::from_raw(items));
    }
}

/// Number of items; 0 for NULL.
///
/// # Safety
/// `items` must be NULL or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mtd_items_len(items: *const MtdItems) -> usize {
    items.as_ref().map_or(0, |i| i.inner.len())
}

/// Canonical text form of the items.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtd_items_serialize(items: *const MtdItems, out: *mut *mut c_char) -> MtdStatus {
    guard(|| {
        let items = ref_arg(items, "items")?;
        let out = out_arg(out, "out")?;
        *out = owned(annotation::serialize(&items.inner));
        Ok(())
    })
}

/// Items as a JSON array of `{"act_type","slot","value"?}`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtd_items_to_json(items: *const MtdItems, out: *mut *mut c_char) -> MtdStatus {
    guard(|| {
        let items = ref_arg(items, "items")?;
        let out = out_arg(out, "out")?;
        *out = owned(serde_json::to_string(&items.inner).expect("items serialize"));
        Ok(())
    })
}

/// Checks items against the ontology. Writes the number of violations to
/// `count` and, if `details` is not NULL, a JSON array describing them.
///
/// # Safety
/// `items`, `ont` and `count` must be valid; `details` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn mtd_items_validate(
    items: *const MtdItems,
    ont: *const MtdOntology,
    count: *mut usize,
    details: *mut *mut c_char,
) -> MtdStatus {
    guard(|| {
        let items = ref_arg(items, "items")?;
        let ont = ref_arg(ont, "ont")?;
        let count = out_arg(count, "count")?;
        let v = annotation::validate(&items.inner, &ont.inner);
        *count = v.len();
        if let Some(d) = details.as_mut() {
            *d = owned(serde_json::to_string(&v).expect("violations serialize"));
        }
        Ok(())
    })
}

/// Scores one predicted turn against its gold items.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mtd_score_turn(
    gold: *const MtdItems,
    pred: *const MtdItems,
    ont: *const MtdOntology,
    mode: MtdSmMode,
    strict: bool,
    out: *mut MtdTurnScores,
) -> MtdStatus {
    guard(|| {
        let gold = ref_arg(gold, "gold")?;
        let pred = ref_arg(pred, "pred")?;
        let ont = ref_arg(ont, "ont")?;
        let out = out_arg(out, "out")?;
        let y = StateSet::from_items(&gold.inner, &ont.inner, strict);
        let yh = StateSet::from_items(&pred.inner, &ont.inner, strict);
        *out = MtdTurnScores {
            em: metrics::exact_match(&y, &yh),
            sm: metrics::soft_match(&y, &yh, mode.into()),
            pr: metrics::presence(&y, &yh),
        };
        Ok(())
    })
}

fn load_dialogues(path: &Path) -> Res<Vec<Dialogue>> {
    let r = if path.is_dir() {
        DatasetBundle::load_dir(path).map(|b| b.iter().map(|(_, d)| d.clone()).collect())
    } else {
        dialogue::read_dialogues(path)
    };
    r.or_else(|e| fail(MTD_IO_ERROR, format!("{}: {e}", path.display())))
}

/// Evaluates predictions against gold and writes the JSON report.
/// `gold_path` is a dialogue JSON file or bundle directory; `pred_path` may
/// also be reduced JSONL.
///
/// # Safety
/// All pointers must be valid; paths NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mtd_evaluate_files(
    gold_path: *const c_char,
    pred_path: *const c_char,
    ont: *const MtdOntology,
    mode: MtdSmMode,
    strict: bool,
    out: *mut *mut c_char,
) -> MtdStatus {
    guard(|| {
        let gold = Path::new(str_arg(gold_path, "gold_path")?);
        let pred = Path::new(str_arg(pred_path, "pred_path")?);
        let ont = ref_arg(ont, "ont")?;
        let out = out_arg(out, "out")?;
        let gold = load_dialogues(gold)?;
        let pred = if pred.is_dir() {
            Predictions::from_dialogues(&load_dialogues(pred)?)
        } else {
            metrics::read_predictions(pred)
        };
        let report = pred
            .and_then(|p| {
                metrics::evaluate(&gold, &p, &ont.inner, EvalOptions { sm_mode: mode.into(), strict })
            })
            .or_else(|e| {
                let status = match e.code() {
                    "MISMATCHED_IDS" => MTD_MISMATCHED_IDS,
                    "MISMATCHED_TURN_COUNTS" => MTD_MISMATCHED_TURN_COUNTS,
                    "DUPLICATE_ID" => MTD_INVALID_ARGUMENT,
                    _ => MTD_IO_ERROR,
                };
                fail(status, e.to_string())
            })?;
        *out = owned(serde_json::to_string(&report).expect("report serializes"));
        Ok(())
    })
}

// ---- text helpers ----

/// Splits an annotated line at the first `//`. `suffix` receives NULL when
/// the line has no marker.
///
/// # Safety
/// `line` must be NUL-terminated; `text` and `suffix` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mtd_extract_annotations(
    line: *const c_char,
    text: *mut *mut c_char,
    suffix: *mut *mut c_char,
) -> MtdStatus {
    guard(|| {
        let line = str_arg(line, "line")?;
        let text = out_arg(text, "text")?;
        let suffix = out_arg(suffix, "suffix")?;
        let (t, s) = annotation::extract_annotations(line);
        *text = owned(t);
        *suffix = s.map_or(ptr::null_mut(), owned);
        Ok(())
    })
}

/// Cuts a raw model completion down to the `User:`/`Bot:` lines.
///
/// # Safety
/// `raw` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mtd_postprocess_dialogue(raw: *const c_char, out: *mut *mut c_char) -> MtdStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        let out = out_arg(out, "out")?;
        let clean = dialogue::postprocess_dialogue(raw).or_else(|e| fail(MTD_PARSE_ERROR, e.to_string()))?;
        *out = owned(clean);
        Ok(())
    })
}
