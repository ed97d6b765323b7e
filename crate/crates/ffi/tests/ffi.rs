// SPDX-License-Identifier: Apache-2.0

use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use grmfuzz_ffi::*;

const SMALL: &str = r#"{
  "name": "ffi",
  "prefixes_per_iteration": 12,
  "grm_stage": { "max_iterations": 3 },
  "dut_stage": { "max_iterations": 3 },
  "pretrain": { "corpus_documents": 200, "epochs": 10 }
}"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe { grm_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn campaign_lifecycle() {
    let mut cfg = ptr::null_mut();
    let json = c(SMALL);
    assert_eq!(unsafe { grm_config_from_json(json.as_ptr(), &mut cfg) }, GrmStatus::Ok);
    assert_eq!(unsafe { grm_config_set_seed(cfg, 5) }, GrmStatus::Ok);
    assert_eq!(unsafe { grm_config_set_bugs(cfg, c("V1,V4").as_ptr()) }, GrmStatus::Ok);

    let mut camp = ptr::null_mut();
    assert_eq!(unsafe { grm_campaign_new(cfg, &mut camp) }, GrmStatus::Ok);
    unsafe { grm_config_free(cfg) };

    let mut stats = GrmIterationStats::default();
    let mut steps = 0;
    loop {
        match unsafe { grm_campaign_step(camp, &mut stats) } {
            GrmStatus::Ok => steps += 1,
            GrmStatus::Done => break,
            s => panic!("{s:?}: {}", last_error()),
        }
        assert_eq!(stats.iteration, steps - 1);
    }
    assert_eq!(steps, 6);
    assert_eq!(stats.stage, 1);

    let mut sum = GrmSummary::default();
    assert_eq!(unsafe { grm_campaign_summary(camp, &mut sum) }, GrmStatus::Ok);
    assert_eq!(sum.iterations, 6);
    assert_eq!(sum.cum_coverage, stats.cum_coverage);
    assert!(sum.cum_coverage <= sum.universe_size);
    assert_eq!(sum.bugs_found_mask & !0b01001, 0);

    let dir = tempfile::tempdir().unwrap();
    let path = c(dir.path().to_str().unwrap());
    assert_eq!(unsafe { grm_campaign_write_artifacts(camp, path.as_ptr()) }, GrmStatus::Ok);
    assert!(dir.path().join("reports/iterations.csv").exists());
    unsafe { grm_campaign_free(camp) };
}

#[test]
fn errors_are_reported_through_status_and_message() {
    let mut cfg = ptr::null_mut();
    let bad = c(r#"{"root_fraction": 3.0}"#);
    assert_eq!(unsafe { grm_config_from_json(bad.as_ptr(), &mut cfg) }, GrmStatus::Config);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(unsafe { grm_config_from_json(ptr::null(), &mut cfg) }, GrmStatus::NullArgument);
    assert_eq!(unsafe { grm_config_set_seed(ptr::null_mut(), 1) }, GrmStatus::NullArgument);

    let cfg = grm_config_default();
    assert_eq!(unsafe { grm_config_set_bugs(cfg, c("V9").as_ptr()) }, GrmStatus::InvalidArgument);
    assert_eq!(unsafe { grm_config_set_stage_budget(cfg, 10) }, GrmStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe { grm_config_free(cfg) };

    let needed = unsafe { grm_last_error(ptr::null_mut(), 0) };
    assert_eq!(needed, 1);
}

#[test]
fn assemble_and_diff() {
    let src = c("addi x1, x0, 5\nadd x2, x1, x1\n");
    let mut len = 0usize;
    assert_eq!(unsafe { grm_assemble(src.as_ptr(), ptr::null_mut(), 0, &mut len) }, GrmStatus::BufferTooSmall);
    assert_eq!(len, 2);
    let mut words = [0u32; 2];
    assert_eq!(unsafe { grm_assemble(src.as_ptr(), words.as_mut_ptr(), 2, &mut len) }, GrmStatus::Ok);
    assert_eq!(words, [0x0050_0093, 0x0010_8133]);

    let bad = c("frobnicate x1\n");
    assert_eq!(unsafe { grm_assemble(bad.as_ptr(), words.as_mut_ptr(), 2, &mut len) }, GrmStatus::InvalidArgument);
    assert!(last_error().starts_with("line 1"));

    let v1 = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/witnesses/v1.s")).unwrap();
    let v1 = c(&v1);
    let mut d = GrmDivergence::default();
    assert_eq!(unsafe { grm_diff_program(v1.as_ptr(), 1, c("all").as_ptr(), &mut d) }, GrmStatus::Ok);
    assert_eq!(d.diverged, 1);
    assert_eq!(unsafe { grm_diff_program(v1.as_ptr(), 1, c("none").as_ptr(), &mut d) }, GrmStatus::Ok);
    assert_eq!(d.diverged, 0);
    assert!(d.grm_length > 0 && d.grm_length == d.dut_length);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(grm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/grmfuzz.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "grm_config_from_json",
        "grm_campaign_step",
        "grm_campaign_free",
        "grm_assemble",
        "grm_diff_program",
        "grm_last_error",
        "GRM_STATUS_BUFFER_TOO_SMALL",
        "typedef struct GrmCampaign GrmCampaign",
    ] {
        assert!(text.contains(name), "{name}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
