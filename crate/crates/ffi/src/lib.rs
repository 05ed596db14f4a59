//! C ABI over the `factcon` library.
//!
//! Conventions:
//! - every fallible call returns an [`FcStatus`]; results go through out
//!   pointers, which are left untouched on failure;
//! - on failure a message is kept per thread and read with
//!   [`fc_last_error`];
//! - text arguments are NUL-terminated UTF-8, tokens separated by
//!   whitespace;
//! - handles are opaque and released with their matching `*_free`;
//!   strings returned by the library are released with [`fc_string_free`].
//!
//! Panics never cross the boundary; they surface as `FC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use factcon::contrast::{loss_codec_pm, loss_coenc, DenominatorMode};
use factcon::corpus::{load_corpus, LoadMode};
use factcon::embed::load_embeddings;
use factcon::lfn::{build_corpus_negatives, generate_candidates, LfnConfig, NegativeRecord, NegativeSample};
use factcon::lm::{train_on_documents, NGramConfig, NGramModel, ScorerSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 3,
    /// A file could not be read or parsed.
    Io = 4,
    /// Index past the end of a collection.
    OutOfRange = 5,
    /// Internal failure; the message says where.
    Panic = 6,
}

/// A trained n-gram scorer.
pub struct FcModel {
    inner: Arc<NGramModel>,
}

/// Negatives built for one corpus and epoch.
pub struct FcNegatives {
    samples: Vec<NegativeSample>,
    failed: usize,
}

/// Negative construction settings; start from [`fc_lfn_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FcLfnOptions {
    pub max_iterations: u32,
    pub max_span_length: u32,
    pub rank_topk: u32,
    pub replace_topk: u32,
    pub replacement_ratio: f64,
    pub seed: u64,
    pub dynamic: bool,
}

impl From<&FcLfnOptions> for LfnConfig {
    fn from(o: &FcLfnOptions) -> Self {
        LfnConfig {
            max_iterations: o.max_iterations as usize,
            max_span_length: o.max_span_length as usize,
            rank_topk: o.rank_topk as usize,
            replace_topk: o.replace_topk as usize,
            replacement_ratio: o.replacement_ratio,
            seed: o.seed,
            dynamic: o.dynamic,
            ..LfnConfig::default()
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(FcStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(FcStatus::InvalidArgument, msg.into())
    }

    fn io(msg: impl Into<String>) -> Self {
        Failure(FcStatus::Io, msg.into())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, translating errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FcStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            FcStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer obtained from this library
    unsafe { p.as_ref() }.ok_or_else(|| Failure(FcStatus::NullArgument, format!("{name} is null")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure(FcStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(p)
    }
}

fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(FcStatus::NullArgument, format!("{name} is null")));
    }
    // SAFETY: non-null and NUL-terminated per the calling convention
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(FcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn tokens(p: *const c_char, name: &str) -> Result<Vec<String>, Failure> {
    Ok(text(p, name)?.split_whitespace().map(str::to_string).collect())
}

fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(FcStatus::NullArgument, format!("{name} is null")));
    }
    // SAFETY: the caller guarantees `len` readable elements
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn fc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or "" after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Trains an add-k n-gram model on every sentence of a JSONL corpus.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_model_train(
    corpus_path: *const c_char,
    order: u32,
    k: f64,
    out: *mut *mut FcModel,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = text(corpus_path, "corpus_path")?;
        if order == 0 || !(k.is_finite() && k >= 0.0) {
            return Err(Failure::invalid("order must be positive and k finite and non-negative"));
        }
        let docs = load_corpus(Path::new(path), LoadMode::Strict)
            .map_err(|e| Failure::io(format!("{path}: {e}")))?
            .documents;
        let model = train_on_documents(&docs, NGramConfig::new(order as usize, k))
            .map_err(|e| Failure::invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(FcModel { inner: Arc::new(model) }));
        Ok(())
    })
}

/// Loads a model written by `factcon train-lm`.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_model_load(lm_path: *const c_char, out: *mut *mut FcModel) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = text(lm_path, "lm_path")?;
        let f = File::open(path).map_err(|e| Failure::io(format!("{path}: {e}")))?;
        let model: NGramModel =
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Failure::io(format!("{path}: {e}")))?;
        *out = Box::into_raw(Box::new(FcModel { inner: Arc::new(model) }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from `fc_model_train`/`fc_model_load`.
#[no_mangle]
pub unsafe extern "C" fn fc_model_free(model: *mut FcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Total natural-log probability of `text`.
///
/// # Safety
/// Pointers must be valid as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn fc_model_logprob(model: *const FcModel, text: *const c_char, out: *mut f64) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = non_null(model, "model")?;
        *out = m.inner.logprob(&tokens(text, "text")?);
        Ok(())
    })
}

/// Log-probability of `target` continuing `condition`.
///
/// # Safety
/// Pointers must be valid as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn fc_model_conditional_logprob(
    model: *const FcModel,
    target: *const c_char,
    condition: *const c_char,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = non_null(model, "model")?;
        *out = m
            .inner
            .conditional_logprob(&tokens(target, "target")?, &tokens(condition, "condition")?);
        Ok(())
    })
}

/// Number of distinct compressions of `sentence` reachable with at most
/// `max_iterations` deletions of at most `max_span_length` adjacent tokens.
///
/// # Safety
/// Pointers must be valid as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn fc_candidate_count(
    sentence: *const c_char,
    max_iterations: u32,
    max_span_length: u32,
    out: *mut usize,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let words = tokens(sentence, "sentence")?;
        let c = generate_candidates(&words, max_iterations as usize, max_span_length as usize)
            .map_err(|e| Failure::invalid(e.to_string()))?;
        *out = c.len();
        Ok(())
    })
}

/// Fills `out` with the library defaults.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_lfn_options_default(out: *mut FcLfnOptions) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let d = LfnConfig::default();
        *out = FcLfnOptions {
            max_iterations: d.max_iterations as u32,
            max_span_length: d.max_span_length as u32,
            rank_topk: d.rank_topk as u32,
            replace_topk: d.replace_topk as u32,
            replacement_ratio: d.replacement_ratio,
            seed: d.seed,
            dynamic: d.dynamic,
        };
        Ok(())
    })
}

/// Builds one negative per summary sentence of the corpus, scored by
/// `model`. Sentences without a negative are only counted.
///
/// # Safety
/// Pointers must be valid as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn fc_negatives_build(
    model: *const FcModel,
    corpus_path: *const c_char,
    embeddings_path: *const c_char,
    options: *const FcLfnOptions,
    epoch: u64,
    out: *mut *mut FcNegatives,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = non_null(model, "model")?;
        let cfg = LfnConfig::from(non_null(options, "options")?);
        let corpus = text(corpus_path, "corpus_path")?;
        let emb = text(embeddings_path, "embeddings_path")?;
        let table = load_embeddings(Path::new(emb)).map_err(|e| Failure::io(format!("{emb}: {e}")))?;
        let docs = load_corpus(Path::new(corpus), LoadMode::Strict)
            .map_err(|e| Failure::io(format!("{corpus}: {e}")))?
            .documents;
        let aligned: Vec<_> = docs.iter().map(|d| (d.clone(), d.align())).collect();
        let built = build_corpus_negatives(&aligned, &ScorerSpec::Native(m.inner.clone()), &table, &cfg, epoch, 1)
            .map_err(|e| Failure::invalid(e.to_string()))?;
        *out = Box::into_raw(Box::new(FcNegatives {
            samples: built.samples,
            failed: built.diagnostics.len(),
        }));
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `negs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_negatives_len(negs: *const FcNegatives) -> usize {
    negs.as_ref().map_or(0, |n| n.samples.len())
}

/// Number of sentences that produced no negative; 0 for a null handle.
///
/// # Safety
/// `negs` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_negatives_failed(negs: *const FcNegatives) -> usize {
    negs.as_ref().map_or(0, |n| n.failed)
}

/// Sample `index` as one JSON object, in the `negatives.jsonl` record
/// format. Free the result with [`fc_string_free`].
///
/// # Safety
/// Pointers must be valid as described in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn fc_negatives_get_json(
    negs: *const FcNegatives,
    index: usize,
    out: *mut *mut c_char,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let n = non_null(negs, "negs")?;
        let s = n
            .samples
            .get(index)
            .ok_or_else(|| Failure(FcStatus::OutOfRange, format!("index {index} of {}", n.samples.len())))?;
        let json = serde_json::to_string(&NegativeRecord::from(s)).map_err(|e| Failure::invalid(e.to_string()))?;
        *out = CString::new(json)
            .map_err(|e| Failure::invalid(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `negs` must be null or come from `fc_negatives_build`.
#[no_mangle]
pub unsafe extern "C" fn fc_negatives_free(negs: *mut FcNegatives) {
    if !negs.is_null() {
        drop(Box::from_raw(negs));
    }
}

/// Position-masked max-margin loss over per-token log-probabilities of a
/// gold and a negative summary of equal length `len`.
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn fc_loss_codec_pm(
    gold: *const f64,
    negative: *const f64,
    len: usize,
    positions: *const usize,
    n_positions: usize,
    eta: f64,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g = slice(gold, len, "gold")?;
        let n = slice(negative, len, "negative")?;
        let r = slice(positions, n_positions, "positions")?;
        *out = loss_codec_pm(g, n, r, eta).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Encoder contrastive loss of one source against a positive and
/// `n_negatives` negatives, all `dim`-vectors; negatives are row-major.
/// `literal` non-zero leaves the positive out of the denominator.
///
/// # Safety
/// Arrays must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn fc_loss_coenc(
    source: *const f64,
    positive: *const f64,
    negatives: *const f64,
    dim: usize,
    n_negatives: usize,
    gamma: f64,
    literal: i32,
    out: *mut f64,
) -> FcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if dim == 0 || n_negatives == 0 || !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Failure::invalid(
                "dim and n_negatives must be positive and gamma finite and positive",
            ));
        }
        let s = slice(source, dim, "source")?;
        let p = slice(positive, dim, "positive")?;
        let flat = slice(negatives, dim * n_negatives, "negatives")?;
        let negs: Vec<Vec<f64>> = flat.chunks(dim).map(<[f64]>::to_vec).collect();
        let mode = if literal != 0 {
            DenominatorMode::Literal
        } else {
            DenominatorMode::Standard
        };
        *out = loss_coenc(s, p, &negs, gamma, mode);
        Ok(())
    })
}
