//! C ABI over trained rtnet checkpoints and latent specs.
//!
//! Every fallible function returns an [`RtnetStatus`]; on failure the
//! message is available from [`rtnet_last_error_message`] on the same
//! thread. Handles are opaque and must be released with their `_free`
//! function. Buffers are owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rtnet::corpus::FRAME_MS;
use rtnet::inference::UserInput;
use rtnet::model::{ModelError, TrainedModel};
use rtnet::substrate::checkpoint::CheckpointError;
use rtnet::substrate::{RngStream, Seq};
use rtnet::vae::{LatentError, LatentSpec};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    UnknownAct = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// A loaded checkpoint.
pub struct RtnetModel {
    inner: TrainedModel,
}

/// Per-act latent Gaussians.
pub struct RtnetLatentSpec {
    inner: LatentSpec,
    names: Vec<CString>,
}

/// Input and output widths of a model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtnetModelInfo {
    pub acoustic_dim: usize,
    pub vocab_rows: usize,
    pub hz_dim: usize,
    /// Zero for models without a latent space.
    pub latent_dim: usize,
    pub is_vae: bool,
    pub frame_ms: f64,
}

/// One sampled response offset.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RtnetOffset {
    /// Frame at which the trigger fired.
    pub trigger_frame: usize,
    /// Offset in ms from the end of the user's last speech frame.
    pub offset_ms: f64,
    /// True when no trial fired and the trigger was forced at the last frame.
    pub censored: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(RtnetStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RtnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RtnetStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            RtnetStatus::Internal
        }
    }
}

fn fail<T>(code: RtnetStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(code, msg.into()))
}

fn model_failure(e: ModelError) -> Failure {
    let code = match &e {
        ModelError::Checkpoint(CheckpointError::Io(_)) => RtnetStatus::Io,
        ModelError::Checkpoint(_) | ModelError::Meta(_) | ModelError::Config(_) => RtnetStatus::Format,
        ModelError::Nn(_) => RtnetStatus::InvalidArgument,
    };
    Failure(code, e.to_string())
}

fn latent_failure(e: LatentError) -> Failure {
    let code = match &e {
        LatentError::UnknownAct(_) => RtnetStatus::UnknownAct,
        LatentError::Alpha(_) => RtnetStatus::InvalidArgument,
        LatentError::Width | LatentError::Parse { .. } => RtnetStatus::Format,
    };
    Failure(code, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(RtnetStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(RtnetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .map_or_else(|| fail(RtnetStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return fail(RtnetStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return fail(RtnetStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rtnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rtnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. On success `*out` receives a handle owned by the
/// caller.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rtnet_model_load(path: *const c_char, out: *mut *mut RtnetModel) -> RtnetStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return fail(RtnetStatus::NullPointer, "out is null");
        }
        let inner = TrainedModel::load(Path::new(path)).map_err(model_failure)?;
        *out = Box::into_raw(Box::new(RtnetModel { inner }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`rtnet_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rtnet_model_free(model: *mut RtnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rtnet_model_info(model: *const RtnetModel, out: *mut RtnetModelInfo) -> RtnetStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.inner.model;
        if out.is_null() {
            return fail(RtnetStatus::NullPointer, "out is null");
        }
        *out = RtnetModelInfo {
            acoustic_dim: m.config.acoustic_dim,
            vocab_rows: m.config.vocab_rows,
            hz_dim: m.config.hz_dim,
            latent_dim: m.latent_dim(),
            is_vae: m.is_vae(),
            frame_ms: FRAME_MS,
        };
        Ok(())
    })
}

/// Embedding row of a token in the model's vocabulary; unknown tokens map
/// to the unspecified-word row.
///
/// # Safety
/// `model` and `out` must be valid pointers, `token` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rtnet_model_token_id(
    model: *const RtnetModel,
    token: *const c_char,
    out: *mut u32,
) -> RtnetStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let token = str_arg(token, "token")?;
        if out.is_null() {
            return fail(RtnetStatus::NullPointer, "out is null");
        }
        *out = m.inner.meta.vocab.id(token) as u32;
        Ok(())
    })
}

/// Reads a latent spec file written by `rtnet fit-latent`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rtnet_latent_spec_load(path: *const c_char, out: *mut *mut RtnetLatentSpec) -> RtnetStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return fail(RtnetStatus::NullPointer, "out is null");
        }
        let text = std::fs::read_to_string(path).or_else(|e| fail(RtnetStatus::Io, format!("{path}: {e}")))?;
        let inner = LatentSpec::from_text(&text).map_err(latent_failure)?;
        let names = inner
            .acts
            .keys()
            .map(|k| CString::new(k.as_str()).or_else(|_| fail(RtnetStatus::Format, "act name holds NUL")))
            .collect::<Result<_, _>>()?;
        *out = Box::into_raw(Box::new(RtnetLatentSpec { inner, names }));
        Ok(())
    })
}

/// Releases a latent spec handle. Null is ignored.
///
/// # Safety
/// `spec` must come from [`rtnet_latent_spec_load`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rtnet_latent_spec_free(spec: *mut RtnetLatentSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of acts in the spec (0 for a null handle).
///
/// # Safety
/// `spec` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn rtnet_latent_spec_act_count(spec: *const RtnetLatentSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.names.len())
}

/// Name of act `index` (sorted order). The pointer lives as long as the
/// handle.
///
/// # Safety
/// `spec` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rtnet_latent_spec_act_name(
    spec: *const RtnetLatentSpec,
    index: usize,
    out: *mut *const c_char,
) -> RtnetStatus {
    guard(|| {
        let s = ref_arg(spec, "spec")?;
        if out.is_null() {
            return fail(RtnetStatus::NullPointer, "out is null");
        }
        match s.names.get(index) {
            Some(n) => {
                *out = n.as_ptr();
                Ok(())
            }
            None => fail(RtnetStatus::InvalidArgument, format!("act index {index} out of range")),
        }
    })
}

/// Response encoding `h_z` from the latent mean `(1 - alpha)·μ_a + alpha·μ_b`.
/// Pass the same act twice (any alpha) for a single act. `out_hz` must hold
/// `hz_dim` floats.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated; `out_hz` writable for
/// `hz_len` floats.
#[no_mangle]
pub unsafe extern "C" fn rtnet_latent_hz(
    model: *const RtnetModel,
    spec: *const RtnetLatentSpec,
    act_a: *const c_char,
    act_b: *const c_char,
    alpha: f64,
    out_hz: *mut f32,
    hz_len: usize,
) -> RtnetStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.inner.model;
        let s = &ref_arg(spec, "spec")?.inner;
        let (a, b) = (str_arg(act_a, "act_a")?, str_arg(act_b, "act_b")?);
        if hz_len < m.config.hz_dim {
            return fail(
                RtnetStatus::BufferTooSmall,
                format!("h_z needs {} floats, got {hz_len}", m.config.hz_dim),
            );
        }
        let out = slice_out(out_hz, hz_len, "out_hz")?;
        let g = s.interpolate(a, b, alpha).map_err(latent_failure)?;
        if g.mu.len() != m.latent_dim() {
            return fail(
                RtnetStatus::InvalidArgument,
                format!("spec latent width {} does not match the model's {}", g.mu.len(), m.latent_dim()),
            );
        }
        let z: Vec<f32> = g.mu.iter().map(|&v| v as f32).collect();
        let h = m.decode_latent(&z).map_err(model_failure)?;
        out[..h.len()].copy_from_slice(&h);
        Ok(())
    })
}

unsafe fn user_input(
    m: &TrainedModel,
    acoustic: *const f32,
    token_ids: *const u32,
    n_frames: usize,
) -> Result<UserInput<f32>, Failure> {
    let da = m.model.config.acoustic_dim;
    if n_frames == 0 {
        return fail(RtnetStatus::InvalidArgument, "no frames given");
    }
    let ac = slice_arg(acoustic, n_frames * da, "acoustic")?;
    let ids = slice_arg(token_ids, n_frames, "token_ids")?;
    let rows = m.model.config.vocab_rows as u32;
    if let Some(bad) = ids.iter().find(|&&i| i >= rows) {
        return fail(RtnetStatus::InvalidArgument, format!("token id {bad} outside vocabulary of {rows}"));
    }
    let acoustic = Seq::new(da, ac.to_vec()).or_else(|e| fail(RtnetStatus::InvalidArgument, e.to_string()))?;
    Ok(UserInput {
        acoustic,
        ids: ids.to_vec(),
    })
}

unsafe fn hz_arg<'a>(m: &TrainedModel, hz: *const f32, hz_len: usize) -> Result<&'a [f32], Failure> {
    if hz_len != m.model.config.hz_dim {
        return fail(
            RtnetStatus::InvalidArgument,
            format!("h_z has {hz_len} values, the model expects {}", m.model.config.hz_dim),
        );
    }
    slice_arg(hz, hz_len, "hz")
}

/// Trigger probability for every user frame given `h_z`; frames before
/// `r_start` get 0. `acoustic` is row-major `n_frames × acoustic_dim`,
/// `token_ids` holds one linguistic id per frame, `out_probs` receives
/// `n_frames` values.
///
/// # Safety
/// All arrays must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rtnet_trigger_probabilities(
    model: *const RtnetModel,
    acoustic: *const f32,
    token_ids: *const u32,
    n_frames: usize,
    hz: *const f32,
    hz_len: usize,
    r_start: usize,
    out_probs: *mut f64,
) -> RtnetStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.inner;
        let user = user_input(m, acoustic, token_ids, n_frames)?;
        let hz = hz_arg(m, hz, hz_len)?;
        let out = slice_out(out_probs, n_frames, "out_probs")?;
        let p = m
            .model
            .trigger_probabilities(&user, hz, r_start)
            .or_else(|e| fail(RtnetStatus::InvalidArgument, e.to_string()))?;
        out.copy_from_slice(&p);
        Ok(())
    })
}

/// Samples one response offset. The user frames should extend past the end
/// of speech (`user_end`, a frame index) with silence so the trigger has
/// room to fire; if it never does it is forced at the last frame and
/// flagged. Draws come from the stream `(seed, 0, pair_index)`.
///
/// # Safety
/// All arrays must be valid for the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtnet_sample_offset(
    model: *const RtnetModel,
    acoustic: *const f32,
    token_ids: *const u32,
    n_frames: usize,
    user_end: usize,
    hz: *const f32,
    hz_len: usize,
    r_start: usize,
    seed: u64,
    pair_index: u32,
    out: *mut RtnetOffset,
) -> RtnetStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.inner;
        let user = user_input(m, acoustic, token_ids, n_frames)?;
        let hz = hz_arg(m, hz, hz_len)?;
        if out.is_null() {
            return fail(RtnetStatus::NullPointer, "out is null");
        }
        if user_end >= n_frames || r_start >= n_frames {
            return fail(RtnetStatus::InvalidArgument, "user_end and r_start must be frame indices");
        }
        let mut rng = RngStream::for_pair(seed, 0, pair_index);
        let t = m
            .model
            .sample_trigger(&user, hz, r_start, &mut rng)
            .or_else(|e| fail(RtnetStatus::InvalidArgument, e.to_string()))?;
        *out = RtnetOffset {
            trigger_frame: t.frame,
            offset_ms: (t.frame as f64 - user_end as f64) * FRAME_MS,
            censored: t.censored,
        };
        Ok(())
    })
}
