//! C ABI over the speculative decoding engine.
//!
//! Conventions: every fallible call returns an [`AasdStatus`] code and
//! reports results through out-parameters; handles are opaque pointers
//! created and released by matching `_new`/`_free` pairs; strings are
//! NUL-terminated UTF-8; token buffers are `uint32_t` arrays with explicit
//! lengths. The most recent error message per thread is available via
//! [`aasd_last_error_message`]. The C header is generated by cbindgen into
//! `include/aasd.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use aasd_core::engine::Session;
use aasd_core::models::{greedy_decode, LanguageModel, NGramLm, TableModel};
use aasd_core::types::{EngineConfig, TokenId, TokenSeq, VerificationMode};

/// Status code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AasdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Utf8Error = 3,
    IoError = 4,
    ParseError = 5,
    ModelError = 6,
    EngineError = 7,
    BufferTooSmall = 8,
    /// The session already emitted its end-of-sequence token or spent its
    /// budget; no further steps are possible.
    Finished = 9,
    /// A panic was caught at the boundary; see the last error message.
    Internal = 10,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let message = message.into();
    let cstring = CString::new(message).unwrap_or_else(|_| CString::new("invalid error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn fail(status: AasdStatus, message: impl Into<String>) -> AasdStatus {
    set_error(message);
    status
}

/// Opaque shared model handle. Safe to use from multiple sessions at once.
pub struct AasdModel {
    inner: Arc<dyn LanguageModel>,
}

/// Opaque decode session handle. Single-threaded use only.
pub struct AasdSession {
    inner: Session,
}

/// Verification mode selector for [`AasdConfig`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AasdMode {
    Strict = 0,
    FixedThreshold = 1,
    TopK = 2,
    Adaptive = 3,
}

/// Plain-data engine configuration. `fixed_threshold` is read only in
/// `FIXED_THRESHOLD` mode and `top_k` only in `TOP_K` mode. A negative
/// `eos_token` selects the default (`vocab_size - 1`).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AasdConfig {
    pub ngram_len: usize,
    pub max_key_len: usize,
    pub min_key_len: usize,
    pub max_expansion: usize,
    pub cache_topk: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mode: AasdMode,
    pub fixed_threshold: f64,
    pub top_k: usize,
    pub max_candidates: usize,
    pub max_new_tokens: usize,
    pub eos_token: i64,
    pub seed: u64,
}

/// Per-step accounting mirrored from the engine. `bonus` is -1 when the
/// step's bonus token was clipped away.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AasdStepStats {
    pub drafted: usize,
    pub accepted: usize,
    pub emitted: usize,
    pub bonus: i64,
}

/// Aggregated run metrics. Rates are NaN when their class was never drafted;
/// `tokens_per_sec` is NaN when no wall time was recorded.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct AasdMetrics {
    pub steps: usize,
    pub tokens_emitted: usize,
    pub mal: f64,
    pub acc_rate_input: f64,
    pub acc_rate_generated: f64,
    pub acc_rate_sampled: f64,
    pub aligned_acc: f64,
    pub misaligned_acc: f64,
    pub total_wall_ms: f64,
    pub tokens_per_sec: f64,
}

fn engine_config_from(config: &AasdConfig) -> Result<EngineConfig, AasdStatus> {
    let verification_mode = match config.mode {
        AasdMode::Strict => VerificationMode::Strict,
        AasdMode::FixedThreshold => VerificationMode::FixedThreshold(config.fixed_threshold),
        AasdMode::TopK => VerificationMode::TopK(config.top_k),
        AasdMode::Adaptive => VerificationMode::Adaptive,
    };
    let engine = EngineConfig {
        ngram_len: config.ngram_len,
        max_key_len: config.max_key_len,
        min_key_len: config.min_key_len,
        max_expansion: config.max_expansion,
        cache_topk: config.cache_topk,
        alpha: config.alpha,
        beta: config.beta,
        verification_mode,
        max_candidates: config.max_candidates,
        max_new_tokens: config.max_new_tokens,
        eos_token: (config.eos_token >= 0).then_some(config.eos_token as TokenId),
        seed: config.seed,
    };
    engine
        .validate()
        .map_err(|e| fail(AasdStatus::InvalidArgument, e.to_string()))?;
    Ok(engine)
}

unsafe fn path_from<'a>(ptr: *const c_char) -> Result<&'a str, AasdStatus> {
    if ptr.is_null() {
        return Err(fail(AasdStatus::NullPointer, "null path"));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(AasdStatus::Utf8Error, "path is not valid UTF-8"))
}

/// An empty length never dereferences the pointer, so null is fine there.
unsafe fn tokens_from<'a>(ptr: *const u32, len: usize) -> &'a [u32] {
    if len == 0 {
        &[]
    } else {
        unsafe { std::slice::from_raw_parts(ptr, len) }
    }
}

/// Write the library version into `buffer` (NUL-terminated when capacity
/// allows). Returns the full version length in bytes.
#[no_mangle]
pub extern "C" fn aasd_version(buffer: *mut c_char, capacity: usize) -> usize {
    write_str(env!("CARGO_PKG_VERSION"), buffer, capacity)
}

/// Copy the current thread's last error message into `buffer`. Returns the
/// message length in bytes (0 when no error has occurred).
#[no_mangle]
pub extern "C" fn aasd_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => write_str(message.to_str().unwrap_or(""), buffer, capacity),
        None => write_str("", buffer, capacity),
    })
}

fn write_str(text: &str, buffer: *mut c_char, capacity: usize) -> usize {
    if !buffer.is_null() && capacity > 0 {
        let bytes = text.as_bytes();
        let count = bytes.len().min(capacity - 1);
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buffer.cast::<u8>(), count);
            *buffer.add(count) = 0;
        }
    }
    text.len()
}

/// Fill `out` with the default configuration (adaptive mode).
///
/// # Safety
/// `out` must be a valid pointer to an `AasdConfig`, or null.
#[no_mangle]
pub unsafe extern "C" fn aasd_config_default(out: *mut AasdConfig) -> AasdStatus {
    if out.is_null() {
        return fail(AasdStatus::NullPointer, "null config out-pointer");
    }
    let defaults = EngineConfig::default();
    unsafe {
        *out = AasdConfig {
            ngram_len: defaults.ngram_len,
            max_key_len: defaults.max_key_len,
            min_key_len: defaults.min_key_len,
            max_expansion: defaults.max_expansion,
            cache_topk: defaults.cache_topk,
            alpha: defaults.alpha,
            beta: defaults.beta,
            mode: AasdMode::Adaptive,
            fixed_threshold: 0.1,
            top_k: 5,
            max_candidates: defaults.max_candidates,
            max_new_tokens: defaults.max_new_tokens,
            eos_token: -1,
            seed: defaults.seed,
        };
    }
    AasdStatus::Ok
}

fn model_out(model: impl LanguageModel + 'static, out: *mut *mut AasdModel) -> AasdStatus {
    let handle = Box::new(AasdModel {
        inner: Arc::new(model),
    });
    unsafe { *out = Box::into_raw(handle) };
    AasdStatus::Ok
}

/// Load a lookup-table model from its JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aasd_model_table_from_file(
    path: *const c_char,
    out: *mut *mut AasdModel,
) -> AasdStatus {
    if out.is_null() {
        return fail(AasdStatus::NullPointer, "null model out-pointer");
    }
    let path = match unsafe { path_from(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match TableModel::from_file(path) {
        Ok(model) => model_out(model, out),
        Err(e) => fail(AasdStatus::ModelError, e.to_string()),
    }
}

/// Train an n-gram model from a whitespace-separated token-id file.
/// `vocab_size` of 0 infers the vocab from the stream.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aasd_model_ngram_from_file(
    path: *const c_char,
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    out: *mut *mut AasdModel,
) -> AasdStatus {
    if out.is_null() {
        return fail(AasdStatus::NullPointer, "null model out-pointer");
    }
    let path = match unsafe { path_from(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    let vocab = (vocab_size > 0).then_some(vocab_size);
    match NGramLm::train_from_file(path, order, smoothing, vocab) {
        Ok(model) => model_out(model, out),
        Err(e) => fail(AasdStatus::ModelError, e.to_string()),
    }
}

/// Train an n-gram model from an in-memory token buffer.
///
/// # Safety
/// `tokens` must point to `len` readable `uint32_t`s; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aasd_model_ngram_train(
    tokens: *const u32,
    len: usize,
    order: usize,
    smoothing: f64,
    vocab_size: usize,
    out: *mut *mut AasdModel,
) -> AasdStatus {
    if out.is_null() || (tokens.is_null() && len > 0) {
        return fail(AasdStatus::NullPointer, "null token stream or out-pointer");
    }
    let stream = unsafe { tokens_from(tokens, len) };
    match NGramLm::train(stream, order, smoothing, vocab_size) {
        Ok(model) => model_out(model, out),
        Err(e) => fail(AasdStatus::ModelError, e.to_string()),
    }
}

/// Vocab size of a model handle; 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle from a model constructor, or null.
#[no_mangle]
pub unsafe extern "C" fn aasd_model_vocab_size(model: *const AasdModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.inner.vocab_size()
}

/// Release a model handle. Sessions created from it stay valid (the model is
/// reference-counted).
///
/// # Safety
/// `model` must come from a model constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aasd_model_free(model: *mut AasdModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Create a decode session over `prompt` and run the prefill pass.
///
/// # Safety
/// `model` must be a live model handle, `prompt` must point to `prompt_len`
/// readable tokens, `config` may be null (defaults), `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_new(
    model: *const AasdModel,
    config: *const AasdConfig,
    prompt: *const u32,
    prompt_len: usize,
    out: *mut *mut AasdSession,
) -> AasdStatus {
    if model.is_null() || out.is_null() || (prompt.is_null() && prompt_len > 0) {
        return fail(AasdStatus::NullPointer, "null model, prompt or out-pointer");
    }
    let engine = if config.is_null() {
        EngineConfig::default()
    } else {
        match engine_config_from(unsafe { &*config }) {
            Ok(engine) => engine,
            Err(status) => return status,
        }
    };
    let model = unsafe { &*model }.inner.clone();
    let prompt = unsafe { tokens_from(prompt, prompt_len) }.to_vec();
    let result = catch_unwind(AssertUnwindSafe(|| Session::new(model, engine, prompt)));
    match result {
        Ok(Ok(session)) => {
            unsafe { *out = Box::into_raw(Box::new(AasdSession { inner: session })) };
            AasdStatus::Ok
        }
        Ok(Err(e)) => fail(AasdStatus::EngineError, e.to_string()),
        Err(_) => fail(AasdStatus::Internal, "panic during session construction"),
    }
}

/// Run one draft/verify/commit step. `stats` may be null.
///
/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_step(
    session: *mut AasdSession,
    stats: *mut AasdStepStats,
) -> AasdStatus {
    if session.is_null() {
        return fail(AasdStatus::NullPointer, "null session");
    }
    let session = unsafe { &mut *session };
    if session.inner.finished() {
        return AasdStatus::Finished;
    }
    let result = catch_unwind(AssertUnwindSafe(|| session.inner.step().cloned()));
    match result {
        Ok(Ok(record)) => {
            if !stats.is_null() {
                unsafe {
                    *stats = AasdStepStats {
                        drafted: record.drafted,
                        accepted: record.accepted,
                        emitted: record.emitted,
                        bonus: record.bonus.map_or(-1, i64::from),
                    };
                }
            }
            AasdStatus::Ok
        }
        Ok(Err(e)) => fail(AasdStatus::EngineError, e.to_string()),
        Err(_) => fail(AasdStatus::Internal, "panic during step"),
    }
}

/// Step until the end-of-sequence token or the budget.
///
/// # Safety
/// `session` must be a live session handle.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_generate(session: *mut AasdSession) -> AasdStatus {
    if session.is_null() {
        return fail(AasdStatus::NullPointer, "null session");
    }
    let session = unsafe { &mut *session };
    match catch_unwind(AssertUnwindSafe(|| session.inner.generate())) {
        Ok(Ok(())) => AasdStatus::Ok,
        Ok(Err(e)) => fail(AasdStatus::EngineError, e.to_string()),
        Err(_) => fail(AasdStatus::Internal, "panic during generation"),
    }
}

/// 1 when the session can take no more steps, 0 otherwise, -1 on null.
///
/// # Safety
/// `session` must be a live session handle, or null.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_finished(session: *const AasdSession) -> i32 {
    if session.is_null() {
        return -1;
    }
    i32::from(unsafe { &*session }.inner.finished())
}

/// Total sequence length (prompt plus generated).
///
/// # Safety
/// `session` must be a live session handle, or null.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_len(session: *const AasdSession) -> usize {
    if session.is_null() {
        return 0;
    }
    unsafe { &*session }.inner.seq().len()
}

/// Length of the prompt the session was created with.
///
/// # Safety
/// `session` must be a live session handle, or null.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_prompt_len(session: *const AasdSession) -> usize {
    if session.is_null() {
        return 0;
    }
    unsafe { &*session }.inner.seq().prompt_len
}

/// Copy the whole sequence into `out`. `written` receives the token count.
/// Fails with `BUFFER_TOO_SMALL` when `capacity` is insufficient (and stores
/// the required size in `written` when that pointer is non-null).
///
/// # Safety
/// `session` must be live; `out` must point to `capacity` writable tokens.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_tokens(
    session: *const AasdSession,
    out: *mut u32,
    capacity: usize,
    written: *mut usize,
) -> AasdStatus {
    if session.is_null() || out.is_null() {
        return fail(AasdStatus::NullPointer, "null session or buffer");
    }
    let tokens = &unsafe { &*session }.inner.seq().tokens;
    if !written.is_null() {
        unsafe { *written = tokens.len() };
    }
    if tokens.len() > capacity {
        return fail(
            AasdStatus::BufferTooSmall,
            format!("need {} tokens, capacity {}", tokens.len(), capacity),
        );
    }
    unsafe { std::ptr::copy_nonoverlapping(tokens.as_ptr(), out, tokens.len()) };
    AasdStatus::Ok
}

/// Aggregate metrics over the steps taken so far.
///
/// # Safety
/// `session` must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_metrics(
    session: *const AasdSession,
    out: *mut AasdMetrics,
) -> AasdStatus {
    if session.is_null() || out.is_null() {
        return fail(AasdStatus::NullPointer, "null session or out-pointer");
    }
    match unsafe { &*session }.inner.metrics() {
        Ok(m) => {
            let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
            unsafe {
                *out = AasdMetrics {
                    steps: m.steps,
                    tokens_emitted: m.tokens_emitted,
                    mal: m.mal,
                    acc_rate_input: opt(m.acc_rate_input),
                    acc_rate_generated: opt(m.acc_rate_generated),
                    acc_rate_sampled: opt(m.acc_rate_sampled),
                    aligned_acc: opt(m.aligned_acc),
                    misaligned_acc: opt(m.misaligned_acc),
                    total_wall_ms: m.total_wall_ms,
                    tokens_per_sec: opt(m.tokens_per_sec),
                };
            }
            AasdStatus::Ok
        }
        Err(e) => fail(AasdStatus::EngineError, e.to_string()),
    }
}

/// Release a session handle.
///
/// # Safety
/// `session` must come from `aasd_session_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn aasd_session_free(session: *mut AasdSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Plain autoregressive greedy decoding, for parity checks from bindings.
/// Appends up to `max_new` tokens to `prompt` and writes the full sequence.
/// A negative `eos` decodes to the full budget.
///
/// # Safety
/// `model` must be live; `prompt` must point to `prompt_len` tokens; `out`
/// must point to `capacity` writable tokens; `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn aasd_greedy_decode(
    model: *const AasdModel,
    prompt: *const u32,
    prompt_len: usize,
    max_new: usize,
    eos: i64,
    out: *mut u32,
    capacity: usize,
    written: *mut usize,
) -> AasdStatus {
    if model.is_null() || out.is_null() || (prompt.is_null() && prompt_len > 0) {
        return fail(AasdStatus::NullPointer, "null model, prompt or buffer");
    }
    let model = &unsafe { &*model }.inner;
    let prompt = unsafe { tokens_from(prompt, prompt_len) }.to_vec();
    let eos = (eos >= 0).then_some(eos as TokenId);
    let result = catch_unwind(AssertUnwindSafe(|| {
        greedy_decode(model.as_ref(), &TokenSeq::from_prompt(prompt), max_new, eos)
    }));
    let decoded = match result {
        Ok(seq) => seq.tokens,
        Err(_) => return fail(AasdStatus::Internal, "panic during greedy decode"),
    };
    if !written.is_null() {
        unsafe { *written = decoded.len() };
    }
    if decoded.len() > capacity {
        return fail(
            AasdStatus::BufferTooSmall,
            format!("need {} tokens, capacity {}", decoded.len(), capacity),
        );
    }
    unsafe { std::ptr::copy_nonoverlapping(decoded.as_ptr(), out, decoded.len()) };
    AasdStatus::Ok
}
