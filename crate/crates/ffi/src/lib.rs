//! C ABI over the peglab library: opaque handles, integer status codes, and
//! a thread-local last-error message.
//!
//! Conventions, uniform across the API:
//! - Constructors return an owned pointer or null; on null the reason is
//!   available from [`peglab_last_error`]. Every handle has a `_free` that
//!   accepts null.
//! - All other calls return [`PeglabStatus`]; anything but `OK` sets the
//!   last-error message for the calling thread.
//! - `char*` results are NUL-terminated copies owned by the caller; release
//!   them with [`peglab_string_free`]. The pointer from
//!   [`peglab_last_error`] is the exception: it is borrowed and only valid
//!   until the next failing call on the same thread.
//! - Array outputs take `(buf, cap, written)`. The required length is always
//!   stored through `written`; a call with `cap` of zero just queries it.
//! - Handles are not synchronized; share one across threads only behind the
//!   caller's own lock.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use peglab::config::Config;
use peglab::harness::{evaluate, wilson_ci};
use peglab::nn::gradcheck_all;
use peglab::rl::{resolve_objects, Feat, PegEnvAdapter, Policy, PolicyMeta, RlEnv};
use peglab::sensors::pca::{calibrate, PcaModel};
use peglab::types::Task;

/// Result code of a C API call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PeglabStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument failed validation (encoding, range, or enum value).
    InvalidArgument = 2,
    /// Configuration text or file was rejected.
    ConfigError = 3,
    /// Filesystem read or write failed.
    IoError = 4,
    /// Simulation, training, or evaluation reported an error.
    RuntimeError = 5,
    /// Output buffer capacity is below the required length.
    BufferTooSmall = 6,
    /// An internal invariant failed; the handle should be discarded.
    Panic = 7,
}

/// Task selector for environment sessions and evaluation.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PeglabTask {
    Insert = 0,
    Extract = 1,
}

/// Outcome of one environment step.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PeglabStepInfo {
    /// Step reward: negative squared pose distance to the goal.
    pub reward: f64,
    /// Total contact reaction magnitude during the step.
    pub contact_force: f64,
    pub done: bool,
    pub success: bool,
}

/// Aggregate of one evaluation run.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PeglabEvalSummary {
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
    /// Wilson score interval around the success rate.
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Mean per-trial peak contact force over the leading successful trials;
    /// infinity when no trial succeeded.
    pub mean_max_force: f64,
    pub force_trials_used: usize,
    /// True when fewer successful trials existed than the force aggregate
    /// asks for.
    pub force_flagged: bool,
}

/// Opaque run configuration.
pub struct PeglabConfig {
    inner: Config,
}

/// Opaque tactile feature model.
pub struct PeglabPca {
    inner: PcaModel,
}

/// Opaque policy checkpoint with its stored metadata.
pub struct PeglabPolicy {
    policy: Policy,
    meta: PolicyMeta,
}

/// Opaque environment session: one object, one task, one seed.
pub struct PeglabEnv {
    adapter: PegEnvAdapter,
    feat: Option<Feat>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_err(msg: impl std::fmt::Display) {
    let text = msg.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn fail(status: PeglabStatus, msg: impl std::fmt::Display) -> PeglabStatus {
    set_err(msg);
    status
}

fn err_null<T>(msg: impl std::fmt::Display) -> *mut T {
    set_err(msg);
    std::ptr::null_mut()
}

/// Runs a status-returning body with a panic guard.
fn guarded<F: FnOnce() -> PeglabStatus>(f: F) -> PeglabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(PeglabStatus::Panic, "internal panic"),
    }
}

/// Runs a pointer-returning body with a panic guard.
fn guarded_ptr<T, F: FnOnce() -> *mut T>(f: F) -> *mut T {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(p) => p,
        Err(_) => err_null("internal panic"),
    }
}

/// Borrows a handle or returns null-pointer failure.
macro_rules! try_ref {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return fail(PeglabStatus::NullPointer, concat!($name, " is null")),
        }
    };
}

macro_rules! try_ref_null {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return err_null(concat!($name, " is null")),
        }
    };
}

fn take_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, PeglabStatus> {
    if ptr.is_null() {
        return Err(fail(PeglabStatus::NullPointer, format!("{name} is null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(PeglabStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

fn take_str_null<'a, T>(ptr: *const c_char, name: &str) -> Result<&'a str, *mut T> {
    if ptr.is_null() {
        return Err(err_null(format!("{name} is null")));
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| err_null(format!("{name} is not valid UTF-8")))
}

fn owned_cstring(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Copies a slice into a caller buffer under the `(buf, cap, written)`
/// convention.
fn write_slice<T: Copy>(
    src: &[T],
    buf: *mut T,
    cap: usize,
    written: *mut usize,
) -> PeglabStatus {
    if !written.is_null() {
        unsafe { *written = src.len() };
    }
    if cap < src.len() {
        return fail(
            PeglabStatus::BufferTooSmall,
            format!("buffer holds {cap} elements, {} required", src.len()),
        );
    }
    if src.is_empty() {
        return PeglabStatus::Ok;
    }
    if buf.is_null() {
        return fail(PeglabStatus::NullPointer, "output buffer is null");
    }
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    PeglabStatus::Ok
}

/// Library version as a static string; never freed.
#[no_mangle]
pub extern "C" fn peglab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's most recent failure. Borrowed; valid
/// until the next failing call on this thread. Never null.
#[no_mangle]
pub extern "C" fn peglab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this API. Accepts null.
#[no_mangle]
pub extern "C" fn peglab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Default configuration.
#[no_mangle]
pub extern "C" fn peglab_config_default() -> *mut PeglabConfig {
    guarded_ptr(|| Box::into_raw(Box::new(PeglabConfig { inner: Config::default() })))
}

/// Parses a configuration file of `key = value` lines.
#[no_mangle]
pub extern "C" fn peglab_config_from_file(path: *const c_char) -> *mut PeglabConfig {
    guarded_ptr(|| {
        let path = match take_str_null(path, "path") {
            Ok(s) => s,
            Err(n) => return n,
        };
        match Config::from_file(Path::new(path)) {
            Ok(c) => Box::into_raw(Box::new(PeglabConfig { inner: c })),
            Err(e) => err_null(e),
        }
    })
}

/// Parses configuration text of `key = value` lines.
#[no_mangle]
pub extern "C" fn peglab_config_from_text(text: *const c_char) -> *mut PeglabConfig {
    guarded_ptr(|| {
        let text = match take_str_null(text, "text") {
            Ok(s) => s,
            Err(n) => return n,
        };
        match Config::from_text(text) {
            Ok(c) => Box::into_raw(Box::new(PeglabConfig { inner: c })),
            Err(e) => err_null(e),
        }
    })
}

/// Canonical text form of a configuration; caller frees.
#[no_mangle]
pub extern "C" fn peglab_config_to_text(cfg: *const PeglabConfig) -> *mut c_char {
    guarded_ptr(|| {
        let cfg = try_ref_null!(cfg, "cfg");
        owned_cstring(cfg.inner.to_text())
    })
}

/// Hex fingerprint of a configuration; caller frees.
#[no_mangle]
pub extern "C" fn peglab_config_digest(cfg: *const PeglabConfig) -> *mut c_char {
    guarded_ptr(|| {
        let cfg = try_ref_null!(cfg, "cfg");
        owned_cstring(cfg.inner.digest())
    })
}

/// Releases a configuration. Accepts null.
#[no_mangle]
pub extern "C" fn peglab_config_free(cfg: *mut PeglabConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Fits the tactile feature model under a configuration.
#[no_mangle]
pub extern "C" fn peglab_pca_calibrate(cfg: *const PeglabConfig) -> *mut PeglabPca {
    guarded_ptr(|| {
        let cfg = try_ref_null!(cfg, "cfg");
        match calibrate(&cfg.inner) {
            Ok(m) => Box::into_raw(Box::new(PeglabPca { inner: m })),
            Err(e) => err_null(e),
        }
    })
}

/// Loads a persisted tactile feature model.
#[no_mangle]
pub extern "C" fn peglab_pca_load(path: *const c_char) -> *mut PeglabPca {
    guarded_ptr(|| {
        let path = match take_str_null(path, "path") {
            Ok(s) => s,
            Err(n) => return n,
        };
        match PcaModel::load(Path::new(path)) {
            Ok(m) => Box::into_raw(Box::new(PeglabPca { inner: m })),
            Err(e) => err_null(e),
        }
    })
}

/// Persists a tactile feature model.
#[no_mangle]
pub extern "C" fn peglab_pca_save(pca: *const PeglabPca, path: *const c_char) -> PeglabStatus {
    guarded(|| {
        let pca = try_ref!(pca, "pca");
        let path = match take_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match pca.inner.save(Path::new(path)) {
            Ok(()) => PeglabStatus::Ok,
            Err(e) => fail(PeglabStatus::IoError, e),
        }
    })
}

/// Input (raw flow) and output (component) dimensions of a feature model.
#[no_mangle]
pub extern "C" fn peglab_pca_dims(
    pca: *const PeglabPca,
    input_dim: *mut usize,
    output_dim: *mut usize,
) -> PeglabStatus {
    guarded(|| {
        let pca = try_ref!(pca, "pca");
        if !input_dim.is_null() {
            unsafe { *input_dim = pca.inner.input_dim() };
        }
        if !output_dim.is_null() {
            unsafe { *output_dim = pca.inner.output_dim() };
        }
        PeglabStatus::Ok
    })
}

/// Releases a feature model. Accepts null.
#[no_mangle]
pub extern "C" fn peglab_pca_free(pca: *mut PeglabPca) {
    if !pca.is_null() {
        drop(unsafe { Box::from_raw(pca) });
    }
}

/// Loads a policy checkpoint; the configuration must match the one the
/// checkpoint was trained under.
#[no_mangle]
pub extern "C" fn peglab_policy_load(
    path: *const c_char,
    cfg: *const PeglabConfig,
) -> *mut PeglabPolicy {
    guarded_ptr(|| {
        let cfg = try_ref_null!(cfg, "cfg");
        let path = match take_str_null(path, "path") {
            Ok(s) => s,
            Err(n) => return n,
        };
        match Policy::load(Path::new(path), &cfg.inner) {
            Ok((policy, meta)) => Box::into_raw(Box::new(PeglabPolicy { policy, meta })),
            Err(e) => err_null(e),
        }
    })
}

/// Policy kind label ("sac", "sl", or "residual"); caller frees.
#[no_mangle]
pub extern "C" fn peglab_policy_kind(policy: *const PeglabPolicy) -> *mut c_char {
    guarded_ptr(|| {
        let policy = try_ref_null!(policy, "policy");
        owned_cstring(policy.policy.kind().to_string())
    })
}

/// Releases a policy. Accepts null.
#[no_mangle]
pub extern "C" fn peglab_policy_free(policy: *mut PeglabPolicy) {
    if !policy.is_null() {
        drop(unsafe { Box::from_raw(policy) });
    }
}

fn to_task(task: PeglabTask) -> Task {
    match task {
        PeglabTask::Insert => Task::Insert,
        PeglabTask::Extract => Task::Extract,
    }
}

/// Opens an environment session on one object. Masked modalities are zeroed
/// in every observation, matching ablation evaluations.
#[no_mangle]
pub extern "C" fn peglab_env_new(
    cfg: *const PeglabConfig,
    pca: *const PeglabPca,
    object_id: *const c_char,
    task: PeglabTask,
    seed: u64,
    mask_vision: bool,
    mask_tactile: bool,
) -> *mut PeglabEnv {
    guarded_ptr(|| {
        let cfg = try_ref_null!(cfg, "cfg");
        let pca = try_ref_null!(pca, "pca");
        let object_id = match take_str_null(object_id, "object_id") {
            Ok(s) => s,
            Err(n) => return n,
        };
        let objects = match resolve_objects(&[object_id.to_string()]) {
            Ok(o) => o,
            Err(e) => return err_null(e),
        };
        match PegEnvAdapter::for_trial(
            &cfg.inner,
            &objects[0],
            to_task(task),
            seed,
            &pca.inner,
            mask_vision,
            mask_tactile,
        ) {
            Ok(adapter) => Box::into_raw(Box::new(PeglabEnv { adapter, feat: None })),
            Err(e) => err_null(e),
        }
    })
}

/// Observation shape: the vector length and image height/width. Image
/// dimensions are zero when the session produces no image.
#[no_mangle]
pub extern "C" fn peglab_env_obs_dims(
    env: *const PeglabEnv,
    vec_dim: *mut usize,
    img_h: *mut usize,
    img_w: *mut usize,
) -> PeglabStatus {
    guarded(|| {
        let env = try_ref!(env, "env");
        let (h, w) = env.adapter.img_hw().unwrap_or((0, 0));
        if !vec_dim.is_null() {
            unsafe { *vec_dim = env.adapter.vec_dim() };
        }
        if !img_h.is_null() {
            unsafe { *img_h = h };
        }
        if !img_w.is_null() {
            unsafe { *img_w = w };
        }
        PeglabStatus::Ok
    })
}

/// Per-component action half-widths, environment units.
#[no_mangle]
pub extern "C" fn peglab_env_action_bounds(
    env: *const PeglabEnv,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PeglabStatus {
    guarded(|| {
        let env = try_ref!(env, "env");
        write_slice(&env.adapter.action_bounds(), buf, cap, written)
    })
}

/// Starts a new episode.
#[no_mangle]
pub extern "C" fn peglab_env_reset(env: *mut PeglabEnv) -> PeglabStatus {
    guarded(|| {
        let env = match unsafe { env.as_mut() } {
            Some(e) => e,
            None => return fail(PeglabStatus::NullPointer, "env is null"),
        };
        match env.adapter.reset() {
            Ok(feat) => {
                env.feat = Some(feat);
                PeglabStatus::Ok
            }
            Err(e) => {
                env.feat = None;
                fail(PeglabStatus::RuntimeError, e)
            }
        }
    })
}

fn current_feat<'a>(env: &'a PeglabEnv) -> Result<&'a Feat, PeglabStatus> {
    env.feat.as_ref().ok_or_else(|| {
        fail(PeglabStatus::InvalidArgument, "environment has no observation; call reset first")
    })
}

/// Copies the current vector observation.
#[no_mangle]
pub extern "C" fn peglab_env_obs_vec(
    env: *const PeglabEnv,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> PeglabStatus {
    guarded(|| {
        let env = try_ref!(env, "env");
        let feat = match current_feat(env) {
            Ok(f) => f,
            Err(s) => return s,
        };
        write_slice(&feat.vec, buf, cap, written)
    })
}

/// Copies the current image observation: three color planes of height by
/// width values in [0, 1]. Length zero when the session has no image.
#[no_mangle]
pub extern "C" fn peglab_env_obs_image(
    env: *const PeglabEnv,
    buf: *mut f32,
    cap: usize,
    written: *mut usize,
) -> PeglabStatus {
    guarded(|| {
        let env = try_ref!(env, "env");
        let feat = match current_feat(env) {
            Ok(f) => f,
            Err(s) => return s,
        };
        let img: &[f32] = feat.img.as_ref().map(|a| a.as_slice()).unwrap_or(&[]);
        write_slice(img, buf, cap, written)
    })
}

/// Applies a six-component action (three translations, three rotations);
/// components beyond the per-axis bounds are clipped.
#[no_mangle]
pub extern "C" fn peglab_env_step(
    env: *mut PeglabEnv,
    action: *const f64,
    info: *mut PeglabStepInfo,
) -> PeglabStatus {
    guarded(|| {
        let env = match unsafe { env.as_mut() } {
            Some(e) => e,
            None => return fail(PeglabStatus::NullPointer, "env is null"),
        };
        if action.is_null() {
            return fail(PeglabStatus::NullPointer, "action is null");
        }
        if env.feat.is_none() {
            return fail(
                PeglabStatus::InvalidArgument,
                "environment has no observation; call reset first",
            );
        }
        let a = unsafe { std::slice::from_raw_parts(action, 6) };
        match env.adapter.step(a) {
            Ok(out) => {
                if !info.is_null() {
                    unsafe {
                        *info = PeglabStepInfo {
                            reward: out.reward,
                            contact_force: out.contact_mag,
                            done: out.done,
                            success: out.success,
                        };
                    }
                }
                env.feat = Some(out.feat);
                PeglabStatus::Ok
            }
            Err(e) => fail(PeglabStatus::RuntimeError, e),
        }
    })
}

/// Releases an environment session. Accepts null.
#[no_mangle]
pub extern "C" fn peglab_env_free(env: *mut PeglabEnv) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Runs the policy on the environment's current observation and writes a
/// step-ready six-component action.
#[no_mangle]
pub extern "C" fn peglab_policy_act(
    policy: *const PeglabPolicy,
    env: *const PeglabEnv,
    action: *mut f64,
) -> PeglabStatus {
    guarded(|| {
        let policy = try_ref!(policy, "policy");
        let env = try_ref!(env, "env");
        if action.is_null() {
            return fail(PeglabStatus::NullPointer, "action is null");
        }
        let feat = match current_feat(env) {
            Ok(f) => f,
            Err(s) => return s,
        };
        match policy.policy.act(feat) {
            Ok(a) => {
                unsafe { std::ptr::copy_nonoverlapping(a.as_ptr(), action, 6) };
                PeglabStatus::Ok
            }
            Err(e) => fail(PeglabStatus::RuntimeError, e),
        }
    })
}

/// Evaluates a policy over repeated trials on a comma-separated object list,
/// using the modality masks stored in the policy checkpoint.
#[no_mangle]
pub extern "C" fn peglab_evaluate(
    cfg: *const PeglabConfig,
    pca: *const PeglabPca,
    policy: *const PeglabPolicy,
    objects: *const c_char,
    task: PeglabTask,
    summary: *mut PeglabEvalSummary,
) -> PeglabStatus {
    guarded(|| {
        let cfg = try_ref!(cfg, "cfg");
        let pca = try_ref!(pca, "pca");
        let policy = try_ref!(policy, "policy");
        let objects = match take_str(objects, "objects") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if summary.is_null() {
            return fail(PeglabStatus::NullPointer, "summary is null");
        }
        let ids: Vec<String> =
            objects.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if ids.is_empty() {
            return fail(PeglabStatus::InvalidArgument, "object list is empty");
        }
        let pairs = match resolve_objects(&ids) {
            Ok(p) => p,
            Err(e) => return fail(PeglabStatus::InvalidArgument, e),
        };
        let report = match evaluate(
            &cfg.inner,
            &pca.inner,
            &pairs,
            to_task(task),
            &policy.policy,
            policy.meta.mask_vision,
            policy.meta.mask_tactile,
        ) {
            Ok(r) => r,
            Err(e) => return fail(PeglabStatus::RuntimeError, e),
        };
        unsafe {
            *summary = PeglabEvalSummary {
                trials: report.total_trials,
                successes: report.total_successes,
                rate: report.rate,
                ci_lo: report.ci.0,
                ci_hi: report.ci.1,
                mean_max_force: report.mean_max_force,
                force_trials_used: report.force_trials_used,
                force_flagged: report.force_flagged,
            };
        }
        PeglabStatus::Ok
    })
}

/// Wilson score interval for `successes` out of `trials` at normal quantile
/// `z`.
#[no_mangle]
pub extern "C" fn peglab_wilson_interval(
    successes: usize,
    trials: usize,
    z: f64,
    lo: *mut f64,
    hi: *mut f64,
) -> PeglabStatus {
    guarded(|| match wilson_ci(successes, trials, z) {
        Ok((l, h)) => {
            if !lo.is_null() {
                unsafe { *lo = l };
            }
            if !hi.is_null() {
                unsafe { *hi = h };
            }
            PeglabStatus::Ok
        }
        Err(e) => fail(PeglabStatus::InvalidArgument, e),
    })
}

/// Worst relative error between analytic gradients and central finite
/// differences across all layer types; healthy builds sit well below 1e-4.
#[no_mangle]
pub extern "C" fn peglab_gradcheck_worst(seed: u64, worst: *mut f64) -> PeglabStatus {
    guarded(|| {
        if worst.is_null() {
            return fail(PeglabStatus::NullPointer, "worst is null");
        }
        let w = gradcheck_all(seed).into_iter().map(|(_, e)| e).fold(0.0, f64::max);
        unsafe { *worst = w };
        PeglabStatus::Ok
    })
}
