//! C ABI over the stepwise toolkit.
//!
//! Every fallible function returns a [`StepwiseStatus`]; on failure the
//! message is available from [`stepwise_last_error`] on the same thread.
//! Strings passed in must be NUL-terminated UTF-8. Strings handed out as
//! `char *` are owned by the caller and released with
//! [`stepwise_string_free`]; `const char *` results are borrowed.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use std::ffi::c_char;

use stepwise::corpus::{self, TaskRecord};
use stepwise::{annotate, evalkit, stepgen};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepwiseStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Data = 5,
    NoSteps = 6,
    Panic = 7,
}

/// Parsed numbered steps.
pub struct StepwiseSteps {
    steps: Vec<CString>,
}

/// A loaded task directory.
pub struct StepwiseCorpus {
    tasks: Vec<TaskRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: StepwiseStatus, msg: impl AsRef<str>) -> StepwiseStatus {
    set_error(msg.as_ref());
    status
}

fn guard(f: impl FnOnce() -> StepwiseStatus) -> StepwiseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == StepwiseStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => fail(StepwiseStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, StepwiseStatus> {
    if p.is_null() {
        return Err(fail(StepwiseStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(StepwiseStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn to_cstring(s: String) -> Result<CString, StepwiseStatus> {
    CString::new(s).map_err(|_| fail(StepwiseStatus::InvalidArgument, "result contains a NUL byte"))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn stepwise_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn stepwise_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library (or be NULL) and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn stepwise_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// ROUGE-L F-measure of `candidate` against the best of `n_refs` references.
///
/// # Safety
/// `candidate` must be a valid C string; `refs` must point to `n_refs` valid
/// C strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepwise_rouge_l(
    candidate: *const c_char,
    refs: *const *const c_char,
    n_refs: usize,
    out: *mut f64,
) -> StepwiseStatus {
    guard(|| {
        if out.is_null() || (refs.is_null() && n_refs > 0) {
            return fail(StepwiseStatus::NullPointer, "refs or out is NULL");
        }
        let cand = try_ffi!(read_str(candidate, "candidate"));
        let mut list = Vec::with_capacity(n_refs);
        for i in 0..n_refs {
            list.push(try_ffi!(read_str(*refs.add(i), "reference")));
        }
        if list.is_empty() {
            return fail(StepwiseStatus::InvalidArgument, "at least one reference is required");
        }
        *out = evalkit::rouge_l(cand, &list);
        StepwiseStatus::Ok
    })
}

/// Fleiss's kappa over a row-major `n_items` × `n_categories` count table.
///
/// # Safety
/// `counts` must point to `n_items * n_categories` readable values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn stepwise_fleiss_kappa(
    counts: *const u64,
    n_items: usize,
    n_categories: usize,
    out: *mut f64,
) -> StepwiseStatus {
    guard(|| {
        if counts.is_null() || out.is_null() {
            return fail(StepwiseStatus::NullPointer, "counts or out is NULL");
        }
        let Some(len) = n_items.checked_mul(n_categories) else {
            return fail(StepwiseStatus::InvalidArgument, "table size overflows");
        };
        let flat = std::slice::from_raw_parts(counts, len);
        let table: Vec<Vec<u64>> = flat.chunks(n_categories.max(1)).map(<[u64]>::to_vec).collect();
        match annotate::fleiss_kappa(&table) {
            Ok(k) => {
                *out = k;
                StepwiseStatus::Ok
            }
            Err(e) => fail(StepwiseStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Parse numbered steps out of `text`.
///
/// # Safety
/// `text` must be a valid C string and `out` writable. Free the handle with
/// [`stepwise_steps_free`].
#[no_mangle]
pub unsafe extern "C" fn stepwise_steps_parse(
    text: *const c_char,
    out: *mut *mut StepwiseSteps,
) -> StepwiseStatus {
    guard(|| {
        if out.is_null() {
            return fail(StepwiseStatus::NullPointer, "out is NULL");
        }
        let text = try_ffi!(read_str(text, "text"));
        let steps = match stepgen::parse_steps(text) {
            Ok(s) => s,
            Err(e) => return fail(StepwiseStatus::NoSteps, e.to_string()),
        };
        let steps = try_ffi!(steps.into_iter().map(to_cstring).collect::<Result<Vec<_>, _>>());
        *out = Box::into_raw(Box::new(StepwiseSteps { steps }));
        StepwiseStatus::Ok
    })
}

/// Number of steps; 0 for NULL.
///
/// # Safety
/// `steps` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stepwise_steps_len(steps: *const StepwiseSteps) -> usize {
    steps.as_ref().map_or(0, |s| s.steps.len())
}

/// Borrowed text of step `index` (0-based), or NULL when out of range.
///
/// # Safety
/// `steps` must be NULL or a live handle; the result lives as long as the handle.
#[no_mangle]
pub unsafe extern "C" fn stepwise_steps_get(steps: *const StepwiseSteps, index: usize) -> *const c_char {
    steps
        .as_ref()
        .and_then(|s| s.steps.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

fn as_strings(s: &StepwiseSteps) -> Vec<String> {
    s.steps.iter().map(|c| c.to_string_lossy().into_owned()).collect()
}

/// Seeded shuffle into a new handle, using the same permutation as the
/// `shuffle` command for an instruction-level seed.
///
/// # Safety
/// `steps` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stepwise_steps_shuffle(
    steps: *const StepwiseSteps,
    seed: u64,
    out: *mut *mut StepwiseSteps,
) -> StepwiseStatus {
    guard(|| {
        let (Some(s), false) = (steps.as_ref(), out.is_null()) else {
            return fail(StepwiseStatus::NullPointer, "steps or out is NULL");
        };
        let list = as_strings(s);
        let si = stepgen::StepInstruction {
            task_id: String::new(),
            raw_text: stepgen::renumber_and_join(&list),
            steps: list,
            provenance: stepgen::Provenance::Manual,
            refinement_rounds: 0,
            source_session: None,
        };
        let shuffled = stepwise::shuffle_steps(&si, seed);
        let steps = try_ffi!(shuffled.steps.into_iter().map(to_cstring).collect::<Result<Vec<_>, _>>());
        *out = Box::into_raw(Box::new(StepwiseSteps { steps }));
        StepwiseStatus::Ok
    })
}

/// Steps renumbered `1. ...` one per line; caller frees with [`stepwise_string_free`].
///
/// # Safety
/// `steps` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stepwise_steps_join(steps: *const StepwiseSteps) -> *mut c_char {
    match steps.as_ref() {
        Some(s) => to_cstring(stepgen::renumber_and_join(&as_strings(s))).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `steps` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn stepwise_steps_free(steps: *mut StepwiseSteps) {
    if !steps.is_null() {
        drop(Box::from_raw(steps));
    }
}

/// The step-generation prompt for a task category and definition.
///
/// # Safety
/// Inputs must be valid C strings and `out` writable; free the result with
/// [`stepwise_string_free`].
#[no_mangle]
pub unsafe extern "C" fn stepwise_generation_prompt(
    task_category: *const c_char,
    task_definition: *const c_char,
    out: *mut *mut c_char,
) -> StepwiseStatus {
    guard(|| {
        if out.is_null() {
            return fail(StepwiseStatus::NullPointer, "out is NULL");
        }
        let cat = try_ffi!(read_str(task_category, "task_category"));
        let def = try_ffi!(read_str(task_definition, "task_definition"));
        match stepgen::build_generation_prompt(cat, def) {
            Ok(p) => {
                *out = try_ffi!(to_cstring(p)).into_raw();
                StepwiseStatus::Ok
            }
            Err(e) => fail(StepwiseStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Load every task file in `dir`.
///
/// # Safety
/// `dir` must be a valid C string and `out` writable. Free the handle with
/// [`stepwise_corpus_free`].
#[no_mangle]
pub unsafe extern "C" fn stepwise_corpus_open(
    dir: *const c_char,
    out: *mut *mut StepwiseCorpus,
) -> StepwiseStatus {
    guard(|| {
        if out.is_null() {
            return fail(StepwiseStatus::NullPointer, "out is NULL");
        }
        let dir = try_ffi!(read_str(dir, "dir"));
        match corpus::load_tasks_dir(Path::new(dir), None) {
            Ok(tasks) => {
                *out = Box::into_raw(Box::new(StepwiseCorpus { tasks }));
                StepwiseStatus::Ok
            }
            Err(e @ corpus::CorpusError::Io { .. }) => fail(StepwiseStatus::Io, e.to_string()),
            Err(e) => fail(StepwiseStatus::Data, e.to_string()),
        }
    })
}

/// Number of tasks; 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn stepwise_corpus_len(corpus: *const StepwiseCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.tasks.len())
}

/// Score a prediction file against the corpus; writes the macro ROUGE-L
/// (task mean, in [0, 1]) and the number of missing predictions.
///
/// # Safety
/// `corpus` must be a live handle, `predictions_path` a valid C string and
/// both outputs writable (`missing_out` may be NULL).
#[no_mangle]
pub unsafe extern "C" fn stepwise_corpus_evaluate(
    corpus: *const StepwiseCorpus,
    predictions_path: *const c_char,
    instances_per_task: usize,
    macro_out: *mut f64,
    missing_out: *mut usize,
) -> StepwiseStatus {
    guard(|| {
        let (Some(c), false) = (corpus.as_ref(), macro_out.is_null()) else {
            return fail(StepwiseStatus::NullPointer, "corpus or macro_out is NULL");
        };
        let path = try_ffi!(read_str(predictions_path, "predictions_path"));
        let raw = match evalkit::read_predictions(Path::new(path)) {
            Ok(r) => r,
            Err(e @ evalkit::EvalError::Io { .. }) => return fail(StepwiseStatus::Io, e.to_string()),
            Err(e) => return fail(StepwiseStatus::Data, e.to_string()),
        };
        let outcome = evalkit::resolve_predictions(raw, &c.tasks).and_then(|p| {
            evalkit::evaluate(&p, &c.tasks, instances_per_task, evalkit::MacroMode::Tasks)
        });
        match outcome {
            Ok(o) => {
                *macro_out = o.macro_score;
                if !missing_out.is_null() {
                    *missing_out = o.missing.len();
                }
                StepwiseStatus::Ok
            }
            Err(e) => fail(StepwiseStatus::Data, e.to_string()),
        }
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn stepwise_corpus_free(corpus: *mut StepwiseCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}
