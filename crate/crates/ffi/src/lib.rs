// SPDX-License-Identifier: Apache-2.0

//! C ABI over the grmfuzz core.
//!
//! Objects are opaque heap handles released with their `*_free` function.
//! Every fallible call returns a [`GrmStatus`]; the message of the most
//! recent failure on the calling thread is available from
//! [`grm_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use grmfuzz::dutsim::{BugConfig, BugId, UNIVERSE_SIZE};
use grmfuzz::engine::{replay_bare, write_artifacts, Campaign, CampaignConfig, EngineError, Stage};
use grmfuzz::isa::{encode, parse_program};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrmStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Io = 5,
    /// The campaign has reached its budget; no iteration ran.
    Done = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque campaign configuration.
pub struct GrmConfig(CampaignConfig);

/// Opaque running campaign.
pub struct GrmCampaign(Campaign);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct GrmIterationStats {
    pub iteration: u64,
    /// 0 for the GRM stage, 1 for the DUT stage.
    pub stage: u32,
    pub candidates: u64,
    pub validity_rate: f64,
    pub test_cases: u64,
    pub cum_coverage: u64,
    pub new_mismatches: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct GrmSummary {
    pub iterations: u64,
    pub grm_iterations: u64,
    pub dut_iterations: u64,
    pub test_cases: u64,
    pub cum_coverage: u64,
    pub universe_size: u64,
    pub new_mismatches: u64,
    /// Bit `i` set when bug V(i+1) was attributed to a NEW mismatch.
    pub bugs_found_mask: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct GrmDivergence {
    /// Nonzero when the two traces differ.
    pub diverged: u32,
    pub seq: u64,
    pub grm_length: u64,
    pub dut_length: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("NULs removed"));
}

fn fail(status: GrmStatus, msg: impl Into<String>) -> GrmStatus {
    set_error(msg);
    status
}

fn engine_status(e: EngineError) -> GrmStatus {
    let status = match e {
        EngineError::Config(_) => GrmStatus::Config,
        EngineError::Io(_) => GrmStatus::Io,
        _ => GrmStatus::Runtime,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> GrmStatus) -> GrmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == GrmStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(GrmStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, GrmStatus> {
    if p.is_null() {
        return Err(fail(GrmStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(GrmStatus::InvalidArgument, "string is not UTF-8"))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated)
/// and returns the buffer size needed, including the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn grm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n - 1) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn grm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Allocates the default configuration.
#[no_mangle]
pub extern "C" fn grm_config_default() -> *mut GrmConfig {
    Box::into_raw(Box::new(GrmConfig(CampaignConfig::default())))
}

/// Parses a JSON configuration; missing fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grm_config_from_json(json: *const c_char, out: *mut *mut GrmConfig) -> GrmStatus {
    guard(|| {
        if out.is_null() {
            return fail(GrmStatus::NullArgument, "null output pointer");
        }
        let s = match text(json) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let cfg: CampaignConfig = match serde_json::from_str(s) {
            Ok(c) => c,
            Err(e) => return fail(GrmStatus::Config, e.to_string()),
        };
        if let Err(e) = cfg.validate() {
            return engine_status(e);
        }
        *out = Box::into_raw(Box::new(GrmConfig(cfg)));
        GrmStatus::Ok
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn grm_config_set_seed(cfg: *mut GrmConfig, seed: u64) -> GrmStatus {
    guard(|| match cfg.as_mut() {
        Some(c) => {
            c.0.seed = seed;
            GrmStatus::Ok
        }
        None => fail(GrmStatus::NullArgument, "null config"),
    })
}

/// DUT-stage test-case budget.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn grm_config_set_stage_budget(cfg: *mut GrmConfig, test_cases: u64) -> GrmStatus {
    guard(|| match cfg.as_mut() {
        Some(c) => {
            c.0.dut_stage.max_test_cases = test_cases;
            GrmStatus::Ok
        }
        None => fail(GrmStatus::NullArgument, "null config"),
    })
}

/// Enabled bugs as `all`, `none` or a list such as `V1,V4`.
///
/// # Safety
/// `cfg` must be a live handle and `bugs` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn grm_config_set_bugs(cfg: *mut GrmConfig, bugs: *const c_char) -> GrmStatus {
    guard(|| {
        let Some(c) = cfg.as_mut() else {
            return fail(GrmStatus::NullArgument, "null config");
        };
        let s = match text(bugs) {
            Ok(s) => s,
            Err(e) => return e,
        };
        match BugConfig::parse_list(s) {
            Ok(b) => {
                c.0.bugs = b;
                GrmStatus::Ok
            }
            Err(e) => fail(GrmStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grm_config_free(cfg: *mut GrmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Pretrains a policy and creates a campaign; `cfg` is copied.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grm_campaign_new(cfg: *const GrmConfig, out: *mut *mut GrmCampaign) -> GrmStatus {
    guard(|| {
        let Some(c) = cfg.as_ref() else {
            return fail(GrmStatus::NullArgument, "null config");
        };
        if out.is_null() {
            return fail(GrmStatus::NullArgument, "null output pointer");
        }
        match Campaign::from_config(c.0.clone()) {
            Ok(campaign) => {
                *out = Box::into_raw(Box::new(GrmCampaign(campaign)));
                GrmStatus::Ok
            }
            Err(e) => engine_status(e),
        }
    })
}

/// Runs one iteration. Returns `Done` without running once the budget is spent.
///
/// # Safety
/// `c` must be a live handle; `stats` may be null.
#[no_mangle]
pub unsafe extern "C" fn grm_campaign_step(c: *mut GrmCampaign, stats: *mut GrmIterationStats) -> GrmStatus {
    guard(|| {
        let Some(c) = c.as_mut() else {
            return fail(GrmStatus::NullArgument, "null campaign");
        };
        if c.0.is_done() {
            return GrmStatus::Done;
        }
        match c.0.run_iteration() {
            Ok(r) => {
                if let Some(s) = stats.as_mut() {
                    *s = GrmIterationStats {
                        iteration: r.iteration,
                        stage: (r.stage == Stage::Dut) as u32,
                        candidates: r.candidates as u64,
                        validity_rate: r.validity_rate,
                        test_cases: r.test_cases,
                        cum_coverage: r.cum_coverage as u64,
                        new_mismatches: r.new_mismatches as u64,
                    };
                }
                GrmStatus::Ok
            }
            Err(e) => engine_status(e),
        }
    })
}

/// Runs until the budget is spent.
///
/// # Safety
/// `c` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn grm_campaign_run(c: *mut GrmCampaign) -> GrmStatus {
    guard(|| {
        let Some(c) = c.as_mut() else {
            return fail(GrmStatus::NullArgument, "null campaign");
        };
        match c.0.run() {
            Ok(_) => GrmStatus::Ok,
            Err(e) => engine_status(e),
        }
    })
}

/// # Safety
/// `c` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn grm_campaign_summary(c: *const GrmCampaign, out: *mut GrmSummary) -> GrmStatus {
    guard(|| {
        let (Some(c), Some(out)) = (c.as_ref(), out.as_mut()) else {
            return fail(GrmStatus::NullArgument, "null argument");
        };
        let s = c.0.summary();
        *out = GrmSummary {
            iterations: s.iterations,
            grm_iterations: s.grm_iterations,
            dut_iterations: s.dut_iterations,
            test_cases: s.test_cases,
            cum_coverage: s.cum_coverage as u64,
            universe_size: UNIVERSE_SIZE as u64,
            new_mismatches: s.new_mismatches as u64,
            bugs_found_mask: BugId::ALL
                .iter()
                .enumerate()
                .filter(|(_, b)| s.bugs_found.contains(b))
                .map(|(i, _)| 1u32 << i)
                .sum(),
        };
        GrmStatus::Ok
    })
}

/// Writes reports, mismatch log, filter and checkpoint under `dir`.
///
/// # Safety
/// `c` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn grm_campaign_write_artifacts(c: *const GrmCampaign, dir: *const c_char) -> GrmStatus {
    guard(|| {
        let Some(c) = c.as_ref() else {
            return fail(GrmStatus::NullArgument, "null campaign");
        };
        let d = match text(dir) {
            Ok(s) => s,
            Err(e) => return e,
        };
        match write_artifacts(&c.0, Path::new(d)) {
            Ok(()) => GrmStatus::Ok,
            Err(e) => engine_status(e),
        }
    })
}

/// # Safety
/// `c` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn grm_campaign_free(c: *mut GrmCampaign) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Assembles source text. `*out_len` receives the word count even when
/// `cap` is too small, in which case `BufferTooSmall` is returned.
///
/// # Safety
/// `src` must be NUL-terminated; `words` must be null or hold `cap` words.
#[no_mangle]
pub unsafe extern "C" fn grm_assemble(
    src: *const c_char,
    words: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> GrmStatus {
    guard(|| {
        if out_len.is_null() {
            return fail(GrmStatus::NullArgument, "null length pointer");
        }
        let s = match text(src) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let insts = match parse_program(s) {
            Ok(i) => i,
            Err((line, e)) => return fail(GrmStatus::InvalidArgument, format!("line {line}: {e}")),
        };
        let mut out = Vec::new();
        for i in &insts {
            match encode(i) {
                Ok(w) => out.extend(w),
                Err(e) => return fail(GrmStatus::InvalidArgument, format!("{i}: {e}")),
            }
        }
        *out_len = out.len();
        if out.len() > cap || (words.is_null() && !out.is_empty()) {
            return fail(GrmStatus::BufferTooSmall, format!("{} words needed", out.len()));
        }
        ptr::copy_nonoverlapping(out.as_ptr(), words, out.len());
        GrmStatus::Ok
    })
}

/// Runs `src` from the reset state of `seed` on both models and reports the
/// first divergence.
///
/// # Safety
/// `src` and `bugs` must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn grm_diff_program(
    src: *const c_char,
    seed: u64,
    bugs: *const c_char,
    out: *mut GrmDivergence,
) -> GrmStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return fail(GrmStatus::NullArgument, "null output pointer");
        };
        let (s, b) = match (text(src), text(bugs)) {
            (Ok(s), Ok(b)) => (s, b),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        let bugs = match BugConfig::parse_list(b) {
            Ok(b) => b,
            Err(e) => return fail(GrmStatus::InvalidArgument, e),
        };
        let insts = match parse_program(s) {
            Ok(i) => i,
            Err((line, e)) => return fail(GrmStatus::InvalidArgument, format!("line {line}: {e}")),
        };
        match replay_bare("ffi", &insts, seed, 256, &bugs, None) {
            Ok(t) => {
                *out = GrmDivergence {
                    diverged: t.record.is_some() as u32,
                    seq: t.record.as_ref().map_or(0, |r| r.seq),
                    grm_length: t.grm.len() as u64,
                    dut_length: t.dut.len() as u64,
                };
                GrmStatus::Ok
            }
            Err(e) => engine_status(e),
        }
    })
}
