use std::ffi::{c_char, CStr, CString};
use std::ptr;

use htgn_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { htgn_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap()[..n].to_string()
}

#[test]
fn builder_round_trip() {
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(htgn_builder_new(6, 3, &mut b), HtgnStatus::Ok);
        let mut merges = 0;
        for (u, v) in [(0, 1), (1, 2), (0, 2)] {
            assert_eq!(htgn_builder_ingest(b, u, v, 1.0, &mut merges), HtgnStatus::Ok);
        }
        assert_eq!(merges, 1);
        assert_eq!(htgn_builder_ingest(b, 4, 5, 2.0, ptr::null_mut()), HtgnStatus::Ok);
        assert_eq!(htgn_builder_finish(b, 2.0, &mut merges), HtgnStatus::Ok);
        assert_eq!(merges, 0);
        assert_eq!(htgn_builder_check(b), HtgnStatus::Ok);

        let mut stats = HtgnBuilderStats::default();
        assert_eq!(htgn_builder_stats(b, &mut stats), HtgnStatus::Ok);
        assert_eq!((stats.live_hyperedges, stats.peak_slots), (2, 3));

        let mut needed = 0;
        assert_eq!(htgn_builder_dump(b, ptr::null_mut(), 0, &mut needed), HtgnStatus::BufferTooSmall);
        let mut buf = vec![0 as c_char; needed + 1];
        assert_eq!(htgn_builder_dump(b, buf.as_mut_ptr(), buf.len(), &mut needed), HtgnStatus::Ok);
        let dump = CStr::from_ptr(buf.as_ptr()).to_str().unwrap();
        assert_eq!(dump.lines().count(), 2);
        assert!(dump.contains(r#""members":[0,1,2]"#));
        htgn_builder_free(b);
    }
}

#[test]
fn bad_links_report_data_errors() {
    let mut b = ptr::null_mut();
    unsafe {
        htgn_builder_new(3, 5, &mut b);
        assert_eq!(htgn_builder_ingest(b, 1, 1, 0.0, ptr::null_mut()), HtgnStatus::Data);
        assert!(last_error().contains("self-loop"));
        assert_eq!(htgn_builder_ingest(b, 0, 7, 0.0, ptr::null_mut()), HtgnStatus::Data);
        assert!(last_error().contains("out of range"));
        htgn_builder_free(b);
        assert_eq!(htgn_builder_ingest(ptr::null_mut(), 0, 1, 0.0, ptr::null_mut()), HtgnStatus::NullPointer);
        assert_eq!(htgn_builder_new(3, 0, &mut b), HtgnStatus::InvalidArgument);
    }
}

#[test]
fn cliques_through_the_abi() {
    let edges: [usize; 10] = [0, 1, 1, 2, 0, 2, 2, 3, 3, 4];
    let mut c = ptr::null_mut();
    unsafe {
        assert_eq!(htgn_enumerate_cliques(edges.as_ptr(), 5, &mut c), HtgnStatus::Ok);
        assert_eq!(htgn_cliques_count(c), 3);
        let mut m = ptr::null();
        let mut len = 0;
        assert_eq!(htgn_cliques_get(c, 2, &mut m, &mut len), HtgnStatus::Ok);
        assert_eq!(std::slice::from_raw_parts(m, len), &[0, 1, 2]);
        assert_eq!(htgn_cliques_get(c, 3, &mut m, &mut len), HtgnStatus::InvalidArgument);
        htgn_cliques_free(c);

        assert_eq!(htgn_enumerate_cliques(ptr::null(), 0, &mut c), HtgnStatus::Ok);
        assert_eq!(htgn_cliques_count(c), 0);
        htgn_cliques_free(c);
    }
}

#[test]
fn run_commands_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        "[sweep]\ndurations = [3, 45]\nseeds = 2\n[output]\ndirectory = {:?}\n",
        dir.path().display().to_string()
    );
    let cfg = CString::new(toml).unwrap();
    let mut summary = ptr::null_mut();
    unsafe {
        let cmd = CString::new("sweep").unwrap();
        assert_eq!(htgn_run(cmd.as_ptr(), cfg.as_ptr(), &mut summary), HtgnStatus::Ok);
        let s = CStr::from_ptr(summary).to_str().unwrap().to_string();
        htgn_string_free(summary);
        assert!(s.contains("\"burst_width\":3"), "{s}");

        let cmd = CString::new("generate").unwrap();
        assert_eq!(htgn_run(cmd.as_ptr(), cfg.as_ptr(), &mut summary), HtgnStatus::Config);
        let cmd = CString::new("fly").unwrap();
        assert_eq!(htgn_run(cmd.as_ptr(), cfg.as_ptr(), &mut summary), HtgnStatus::InvalidArgument);
        let bad = CString::new("[nope]").unwrap();
        assert_eq!(htgn_run(cmd.as_ptr(), bad.as_ptr(), &mut summary), HtgnStatus::Config);
    }
    assert!(dir.path().join("sweep_rows.csv").exists());
}

#[test]
fn header_declares_the_surface() {
    let header = include_str!("../include/htgn.h");
    for name in [
        "htgn_builder_new",
        "htgn_builder_ingest",
        "htgn_builder_dump",
        "htgn_enumerate_cliques",
        "htgn_run",
        "htgn_string_free",
        "htgn_last_error_message",
        "HTGN_STATUS_BUFFER_TOO_SMALL",
        "typedef struct HtgnBuilder HtgnBuilder",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
