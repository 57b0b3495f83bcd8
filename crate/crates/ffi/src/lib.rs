//! C ABI over `tec-core`.
//!
//! Every fallible function returns a [`TecStatus`]. On failure a message is
//! available from [`tec_last_error`] on the same thread. Strings returned
//! through `out` parameters are owned by the caller and must be released with
//! [`tec_string_free`]; handles are released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tec_core::edits::{align_sentences, f_beta};
use tec_core::model::{Checkpoint, Model};
use tec_core::stats::mann_whitney_u;
use tec_core::textnorm::{normalize_punctuation, Vocabulary};
use tec_core::training::{Corrector, NeuralCorrector};
use tec_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Checkpoint = 6,
    SequenceTooLong = 7,
    Panic = 8,
}

/// Opaque subword vocabulary.
pub struct TecVocab(Vocabulary);

/// Opaque loaded corrector with its vocabulary.
pub struct TecModel {
    model: Model,
    vocab: Vocabulary,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TecStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } | Error::Schema { .. } | Error::Json(_) => TecStatus::Parse,
            Error::Io(_) => TecStatus::Io,
            Error::Checkpoint(_) => TecStatus::Checkpoint,
            Error::SequenceTooLong { .. } => TecStatus::SequenceTooLong,
            _ => TecStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TecStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TecStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(TecStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TecStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(TecStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(TecStatus::InvalidArgument, "result contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Punctuation-normalized copy of `input`.
///
/// # Safety
/// `input` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tec_normalize(input: *const c_char, out: *mut *mut c_char) -> TecStatus {
    guard(|| {
        check_out(out)?;
        let s = text(input, "input")?;
        put_string(out, normalize_punctuation(s))
    })
}

/// Token-level edits turning `original` into `corrected`, as a JSON array of
/// `[start, end, "original tokens", "replacement tokens"]`.
///
/// # Safety
/// Both inputs must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tec_align_edits(
    original: *const c_char,
    corrected: *const c_char,
    out: *mut *mut c_char,
) -> TecStatus {
    guard(|| {
        check_out(out)?;
        let edits = align_sentences(text(original, "original")?, text(corrected, "corrected")?);
        put_string(out, serde_json::to_string(&edits).map_err(|e| Failure::from(Error::from(e)))?)
    })
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tec_f_beta(precision: f64, recall: f64, beta: f64, out: *mut f64) -> TecStatus {
    guard(|| {
        check_out(out)?;
        if !(0.0..=1.0).contains(&precision) || !(0.0..=1.0).contains(&recall) || !(beta > 0.0) {
            return Err(Failure(TecStatus::InvalidArgument, "precision and recall must be in [0, 1], beta > 0".into()));
        }
        *out = f_beta(precision, recall, beta);
        Ok(())
    })
}

/// Two-sided Mann-Whitney U test of `x` against `y`.
///
/// # Safety
/// `x` and `y` must point to `nx` and `ny` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tec_mann_whitney(
    x: *const f64,
    nx: usize,
    y: *const f64,
    ny: usize,
    out_u: *mut f64,
    out_p: *mut f64,
) -> TecStatus {
    guard(|| {
        check_out(out_u)?;
        check_out(out_p)?;
        if x.is_null() || y.is_null() {
            return Err(Failure(TecStatus::NullPointer, "sample pointer is null".into()));
        }
        let xs = std::slice::from_raw_parts(x, nx);
        let ys = std::slice::from_raw_parts(y, ny);
        let r = mann_whitney_u(xs, ys)?;
        *out_u = r.u_x;
        *out_p = r.p;
        Ok(())
    })
}

/// Loads a vocabulary file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tec_vocab_load(path: *const c_char, out: *mut *mut TecVocab) -> TecStatus {
    guard(|| {
        check_out(out)?;
        let v = Vocabulary::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(TecVocab(v)));
        Ok(())
    })
}

/// Number of symbols including specials.
///
/// # Safety
/// `vocab` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn tec_vocab_len(vocab: *const TecVocab) -> usize {
    vocab.as_ref().map_or(0, |v| v.0.len())
}

/// # Safety
/// `vocab` must come from [`tec_vocab_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tec_vocab_free(vocab: *mut TecVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Loads a checkpoint trained with `vocab`. The handle keeps its own copy of
/// the vocabulary.
///
/// # Safety
/// `path` must be a NUL-terminated string, `vocab` a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tec_model_load(
    path: *const c_char,
    vocab: *const TecVocab,
    out: *mut *mut TecModel,
) -> TecStatus {
    guard(|| {
        check_out(out)?;
        let vocab = vocab
            .as_ref()
            .ok_or_else(|| Failure(TecStatus::NullPointer, "`vocab` is null".into()))?;
        let ck = Checkpoint::load(text(path, "path")?)?;
        if ck.vocab_hash != vocab.0.hash() {
            return Err(Failure(TecStatus::Checkpoint, "checkpoint was trained with a different vocabulary".into()));
        }
        let model = Model::from_checkpoint(ck)?;
        *out = Box::into_raw(Box::new(TecModel {
            model,
            vocab: vocab.0.clone(),
        }));
        Ok(())
    })
}

/// Greedy correction of `original` given `source`.
///
/// # Safety
/// `model` must be a live handle, inputs NUL-terminated strings and `out`
/// writable. A handle may be used from several threads at once.
#[no_mangle]
pub unsafe extern "C" fn tec_model_correct(
    model: *const TecModel,
    source: *const c_char,
    original: *const c_char,
    out: *mut *mut c_char,
) -> TecStatus {
    guard(|| {
        check_out(out)?;
        let m = model
            .as_ref()
            .ok_or_else(|| Failure(TecStatus::NullPointer, "`model` is null".into()))?;
        let corrector = NeuralCorrector {
            model: &m.model,
            vocab: &m.vocab,
        };
        let s = corrector.correct(text(source, "source")?, text(original, "original")?)?;
        put_string(out, s)
    })
}

/// # Safety
/// `model` must come from [`tec_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tec_model_free(model: *mut TecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
