//! C ABI over `htgn`.
//!
//! Every fallible entry point returns an [`HtgnStatus`]; on failure the
//! message is kept per thread and read back with
//! [`htgn_last_error_message`]. Handles are opaque and owned by the
//! caller until passed to the matching `_free` function. Panics never
//! cross the boundary: they surface as `HTGN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use htgn::cli::{cmd_build, cmd_eval, cmd_generate, cmd_report, cmd_sweep, cmd_train, SplitName};
use htgn::config::RunConfig;
use htgn::hyperedge::{enumerate_maximal_cliques, HyperedgeBuilder};
use htgn::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HtgnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed input data (parse errors, bad node ids, self-loops).
    Data = 3,
    Consistency = 4,
    Config = 5,
    Io = 6,
    Checkpoint = 7,
    /// The output buffer is too small; the required size was reported.
    BufferTooSmall = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HtgnStatus {
    match e {
        Error::Parse { .. }
        | Error::NegativeTime { .. }
        | Error::FeatureLength { .. }
        | Error::BipartiteViolation { .. }
        | Error::NodeOutOfRange { .. }
        | Error::SelfLoop(_)
        | Error::SameSide { .. }
        | Error::Json(_) => HtgnStatus::Data,
        Error::Consistency(_) => HtgnStatus::Consistency,
        Error::Config(_) => HtgnStatus::Config,
        Error::Io { .. } => HtgnStatus::Io,
        Error::Checkpoint(_) => HtgnStatus::Checkpoint,
        _ => HtgnStatus::InvalidArgument,
    }
}

struct Failure(HtgnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(HtgnStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HtgnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HtgnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            HtgnStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HtgnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copies `s` plus a NUL into `buf` when it fits; always reports the
/// length without the NUL through `needed`.
unsafe fn copy_out(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Failure> {
    if !needed.is_null() {
        *needed = s.len();
    }
    if cap <= s.len() {
        return Err(Failure(
            HtgnStatus::BufferTooSmall,
            format!("need {} bytes, buffer holds {cap}", s.len() + 1),
        ));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Length in bytes of the last error message on this thread, 0 if none.
#[no_mangle]
pub extern "C" fn htgn_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes().len()))
}

/// Copies the last error message (NUL-terminated, truncated to fit) into
/// `buf`. Returns the number of bytes written without the NUL.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn htgn_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    if buf.is_null() || cap == 0 {
        return 0;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[][..], |c| c.as_bytes());
        let n = bytes.len().min(cap - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
        n
    })
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn htgn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ------------------------------------------------------------------ builder

/// Streaming homogeneous hyperedge builder.
pub struct HtgnBuilder {
    inner: HyperedgeBuilder,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HtgnBuilderStats {
    pub live_hyperedges: usize,
    pub peak_slots: usize,
    pub free_slots: usize,
}

/// Creates a builder over `num_nodes` nodes flushing every `batch` links.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_new(num_nodes: usize, batch: usize, out: *mut *mut HtgnBuilder) -> HtgnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if batch == 0 {
            return Err(Failure(HtgnStatus::InvalidArgument, "batch must be positive".into()));
        }
        let b = Box::new(HtgnBuilder {
            inner: HyperedgeBuilder::new(num_nodes, batch),
        });
        *out = Box::into_raw(b);
        Ok(())
    })
}

/// # Safety
/// `b` must come from [`htgn_builder_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_free(b: *mut HtgnBuilder) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Ingests link `u–v` at time `t`. The number of hyperedges created by
/// merges during this call goes to `merges` when it is non-null.
///
/// # Safety
/// `b` must be a live handle; `merges` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_ingest(
    b: *mut HtgnBuilder,
    u: usize,
    v: usize,
    t: f64,
    merges: *mut usize,
) -> HtgnStatus {
    guard(|| {
        let b = b.as_mut().ok_or_else(|| null("builder"))?;
        let ing = b.inner.ingest(u, v, t)?;
        if !merges.is_null() {
            *merges = ing.merges.len();
        }
        Ok(())
    })
}

/// Flushes the trailing partial snapshot at time `t`.
///
/// # Safety
/// As for [`htgn_builder_ingest`].
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_finish(b: *mut HtgnBuilder, t: f64, merges: *mut usize) -> HtgnStatus {
    guard(|| {
        let b = b.as_mut().ok_or_else(|| null("builder"))?;
        let n = b.inner.finish(t).len();
        if !merges.is_null() {
            *merges = n;
        }
        Ok(())
    })
}

/// # Safety
/// `b` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_stats(b: *const HtgnBuilder, out: *mut HtgnBuilderStats) -> HtgnStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("builder"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = &b.inner.registry;
        *out = HtgnBuilderStats {
            live_hyperedges: r.live_count(),
            peak_slots: r.peak_slots(),
            free_slots: r.free_slots(),
        };
        Ok(())
    })
}

/// Verifies the registry invariants; `HTGN_STATUS_CONSISTENCY` names the
/// first violation.
///
/// # Safety
/// `b` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_check(b: *const HtgnBuilder) -> HtgnStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("builder"))?;
        b.inner.registry.check_invariants()?;
        Ok(())
    })
}

/// Writes the live hyperedges as JSON lines. `needed` receives the
/// length without the NUL; a too-small buffer yields
/// `HTGN_STATUS_BUFFER_TOO_SMALL` and is left untouched.
///
/// # Safety
/// `b` must be a live handle, `buf` valid for `cap` bytes, `needed` null
/// or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn htgn_builder_dump(
    b: *const HtgnBuilder,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> HtgnStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("builder"))?;
        copy_out(&b.inner.registry.dump_jsonl(), buf, cap, needed)
    })
}

// ------------------------------------------------------------------ cliques

/// Result of [`htgn_enumerate_cliques`].
pub struct HtgnCliques {
    cliques: Vec<Vec<usize>>,
}

/// Maximal cliques of the graph with `n_edges` links given as
/// `[u0, v0, u1, v1, ...]`, sorted by size then members.
///
/// # Safety
/// `edges` must be valid for `2 * n_edges` reads (may be null when
/// `n_edges` is 0) and `out` for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn htgn_enumerate_cliques(
    edges: *const usize,
    n_edges: usize,
    out: *mut *mut HtgnCliques,
) -> HtgnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let flat: &[usize] = if n_edges == 0 {
            &[]
        } else if edges.is_null() {
            return Err(null("edges"));
        } else {
            std::slice::from_raw_parts(edges, 2 * n_edges)
        };
        let cliques = enumerate_maximal_cliques(flat.chunks_exact(2).map(|p| (p[0], p[1])));
        *out = Box::into_raw(Box::new(HtgnCliques { cliques }));
        Ok(())
    })
}

/// # Safety
/// `c` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn htgn_cliques_count(c: *const HtgnCliques) -> usize {
    c.as_ref().map_or(0, |c| c.cliques.len())
}

/// Borrows clique `i`; the pointer stays valid until the handle is freed.
///
/// # Safety
/// `c` must be a live handle; `members` and `len` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn htgn_cliques_get(
    c: *const HtgnCliques,
    i: usize,
    members: *mut *const usize,
    len: *mut usize,
) -> HtgnStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("cliques"))?;
        if members.is_null() || len.is_null() {
            return Err(null("members/len"));
        }
        let k = c
            .cliques
            .get(i)
            .ok_or_else(|| Failure(HtgnStatus::InvalidArgument, format!("clique {i} of {}", c.cliques.len())))?;
        *members = k.as_ptr();
        *len = k.len();
        Ok(())
    })
}

/// # Safety
/// `c` must come from [`htgn_enumerate_cliques`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn htgn_cliques_free(c: *mut HtgnCliques) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// ----------------------------------------------------------------- commands

/// Runs one command (`generate`, `build`, `sweep`, `train`, `eval`,
/// `report`) on a TOML run configuration. `eval` scores the test split
/// with `checkpoint.json` from the output directory. The JSON summary is
/// returned through `summary` and must be released with
/// [`htgn_string_free`].
///
/// # Safety
/// `command` and `config_toml` must be NUL-terminated strings; `summary`
/// valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn htgn_run(
    command: *const c_char,
    config_toml: *const c_char,
    summary: *mut *mut c_char,
) -> HtgnStatus {
    guard(|| {
        let command = str_arg(command, "command")?;
        let cfg = RunConfig::from_toml(str_arg(config_toml, "config_toml")?)?;
        if summary.is_null() {
            return Err(null("summary"));
        }
        let outcome = match command {
            "generate" => cmd_generate(&cfg)?,
            "build" => cmd_build(&cfg)?,
            "sweep" => cmd_sweep(&cfg)?,
            "train" => cmd_train(&cfg)?,
            "eval" => {
                let ckpt = cfg.output_dir().join("checkpoint.json");
                cmd_eval(&cfg, Some(&ckpt), SplitName::Test, false)?
            }
            "report" => cmd_report(&cfg)?,
            other => return Err(Failure(HtgnStatus::InvalidArgument, format!("unknown command `{other}`"))),
        };
        let text = CString::new(outcome.summary.to_string()).expect("JSON has no NULs");
        *summary = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn htgn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
