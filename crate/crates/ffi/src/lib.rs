//! C ABI over saved pair-scorer artifacts.
//!
//! Handles are opaque; every call returns a status code and the last error
//! message is retrievable per thread. Scores are entailment probabilities
//! in [0, 1]; prediction takes the argmax over candidate label texts with
//! ties broken toward the lexicographically smallest label.
//!
//! # Symbol prefix
//!
//! Functions: `nli_fsl_*`. The generated header lives at
//! `include/nli_fsl.h`.
//!
//! # Thread safety
//!
//! A loaded scorer is immutable; concurrent `score`/`predict` calls on the
//! same handle are safe. `load` and `free` must not race with other calls
//! on the same handle.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use nli_fsl::encoder::{load_scorer, PairScorer};
use nli_fsl::error::Error;

/// Status codes mirroring the CLI exit-code contract, plus
/// `InvalidArgument` for null/UTF-8 violations at the boundary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NliFslStatus {
    Ok = 0,
    ConfigError = 1,
    DataError = 2,
    TrainingError = 3,
    IntegrityError = 4,
    InvalidArgument = 5,
}

/// Opaque scorer handle.
pub struct NliFslScorer {
    inner: Box<dyn PairScorer>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> NliFslStatus {
    match err.exit_code() {
        1 => NliFslStatus::ConfigError,
        2 => NliFslStatus::DataError,
        3 => NliFslStatus::TrainingError,
        4 => NliFslStatus::IntegrityError,
        _ => NliFslStatus::DataError,
    }
}

fn fail(status: NliFslStatus, message: &str) -> NliFslStatus {
    set_last_error(message);
    status
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, NliFslStatus> {
    if ptr.is_null() {
        set_last_error(&format!("{name} is null"));
        return Err(NliFslStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(&format!("{name} is not valid UTF-8"));
        NliFslStatus::InvalidArgument
    })
}

unsafe fn str_array_arg<'a>(
    ptr: *const *const c_char,
    len: usize,
    name: &str,
) -> Result<Vec<&'a str>, NliFslStatus> {
    if ptr.is_null() {
        set_last_error(&format!("{name} is null"));
        return Err(NliFslStatus::InvalidArgument);
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        out.push(str_arg(*ptr.add(i), &format!("{name}[{i}]"))?);
    }
    Ok(out)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nli_fsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the calling thread's most recent failure. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nli_fsl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a saved scorer artifact (any backend). On success `*out` owns the
/// handle; release it with [`nli_fsl_scorer_free`].
///
/// # Safety
///
/// `artifact_dir` must be a NUL-terminated string and `out` a valid
/// pointer-to-pointer.
#[no_mangle]
pub unsafe extern "C" fn nli_fsl_scorer_load(
    artifact_dir: *const c_char,
    out: *mut *mut NliFslScorer,
) -> NliFslStatus {
    if out.is_null() {
        return fail(NliFslStatus::InvalidArgument, "out is null");
    }
    let dir = match str_arg(artifact_dir, "artifact_dir") {
        Ok(d) => d,
        Err(s) => return s,
    };
    match load_scorer(Path::new(dir)) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(NliFslScorer { inner }));
            NliFslStatus::Ok
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Release a handle returned by [`nli_fsl_scorer_load`]. Null is a no-op.
///
/// # Safety
///
/// `scorer` must be a pointer previously returned by this library and not
/// already freed.
#[no_mangle]
pub unsafe extern "C" fn nli_fsl_scorer_free(scorer: *mut NliFslScorer) {
    if !scorer.is_null() {
        drop(Box::from_raw(scorer));
    }
}

/// Entailment probabilities for `len` premise/hypothesis pairs, written to
/// `out_scores[0..len]`.
///
/// # Safety
///
/// `premises` and `hypotheses` must each point to `len` NUL-terminated
/// strings; `out_scores` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nli_fsl_scorer_score(
    scorer: *const NliFslScorer,
    premises: *const *const c_char,
    hypotheses: *const *const c_char,
    len: usize,
    out_scores: *mut f64,
) -> NliFslStatus {
    if scorer.is_null() {
        return fail(NliFslStatus::InvalidArgument, "scorer is null");
    }
    if len > 0 && out_scores.is_null() {
        return fail(NliFslStatus::InvalidArgument, "out_scores is null");
    }
    let premises = match str_array_arg(premises, len, "premises") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let hypotheses = match str_array_arg(hypotheses, len, "hypotheses") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let pairs: Vec<(String, String)> = premises
        .iter()
        .zip(&hypotheses)
        .map(|(p, h)| (p.to_string(), h.to_string()))
        .collect();
    match (*scorer).inner.score(&pairs) {
        Ok(scores) => {
            for (i, s) in scores.iter().enumerate() {
                *out_scores.add(i) = *s;
            }
            NliFslStatus::Ok
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}

/// Argmax intent prediction for one utterance over `n_labels` candidate
/// label texts. Writes the winning index to `*out_index` and, when
/// `out_scores` is non-null, all per-label probabilities to
/// `out_scores[0..n_labels]`. Ties go to the lexicographically smallest
/// label text.
///
/// # Safety
///
/// Pointer arguments must satisfy the same contracts as
/// [`nli_fsl_scorer_score`]; `out_index` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nli_fsl_scorer_predict(
    scorer: *const NliFslScorer,
    utterance: *const c_char,
    labels: *const *const c_char,
    n_labels: usize,
    out_index: *mut usize,
    out_scores: *mut f64,
) -> NliFslStatus {
    if scorer.is_null() {
        return fail(NliFslStatus::InvalidArgument, "scorer is null");
    }
    if out_index.is_null() {
        return fail(NliFslStatus::InvalidArgument, "out_index is null");
    }
    if n_labels == 0 {
        return fail(NliFslStatus::DataError, "label list is empty");
    }
    let utterance = match str_arg(utterance, "utterance") {
        Ok(u) => u,
        Err(s) => return s,
    };
    let labels = match str_array_arg(labels, n_labels, "labels") {
        Ok(v) => v,
        Err(s) => return s,
    };
    let pairs: Vec<(String, String)> =
        labels.iter().map(|l| (utterance.to_string(), l.to_string())).collect();
    match (*scorer).inner.score(&pairs) {
        Ok(scores) => {
            let mut best = 0usize;
            for i in 1..scores.len() {
                let better = scores[i] > scores[best]
                    || (scores[i] == scores[best] && labels[i] < labels[best]);
                if better {
                    best = i;
                }
            }
            *out_index = best;
            if !out_scores.is_null() {
                for (i, s) in scores.iter().enumerate() {
                    *out_scores.add(i) = *s;
                }
            }
            NliFslStatus::Ok
        }
        Err(e) => fail(status_of(&e), &e.to_string()),
    }
}
