use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rotwalk_ffi::*;

fn law(spec: &str) -> *mut RwLaw {
    let s = CString::new(spec).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rw_law_parse(s.as_ptr(), &mut out) }, RwStatus::Ok);
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rw_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn law_round_trip() {
    let l = law("circle");
    let mut sigma = 0.0;
    assert_eq!(unsafe { rw_law_sigma(l, &mut sigma) }, RwStatus::Ok);
    assert!((sigma - 0.5f64.sqrt()).abs() < 1e-15);
    unsafe { rw_law_free(l) };
    unsafe { rw_law_free(ptr::null_mut()) };
}

#[test]
fn bad_inputs_report_codes() {
    let s = CString::new("gaussian:-1").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { rw_law_parse(s.as_ptr(), &mut out) },
        RwStatus::InvalidParameter
    );
    assert!(out.is_null());
    assert!(last_error().contains("positive"));
    assert_eq!(unsafe { rw_law_parse(ptr::null(), &mut out) }, RwStatus::NullPointer);
    let mut v = 0.0;
    assert_eq!(unsafe { rw_threshold(0.5, 1, &mut v) }, RwStatus::Domain);
    assert_eq!(
        unsafe { rw_threshold(0.5, 100, ptr::null_mut()) },
        RwStatus::NullPointer
    );
    let (mut a, mut b) = (0.0, 0.0);
    assert_eq!(
        unsafe { rw_joint_tail(100, 0.0, 0.5, &mut a, &mut b) },
        RwStatus::DegenerateCovariance
    );
}

#[test]
fn grid_matches_points() {
    let l = law("gaussian:1");
    let mut inc = vec![RwComplex::default(); 100];
    assert_eq!(
        unsafe { rw_sample_increments(l, 100, 3, 1, inc.as_mut_ptr()) },
        RwStatus::Ok
    );
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { rw_grid_eval(inc.as_ptr(), 100, 5, &mut g) }, RwStatus::Ok);
    for i in 0..32 {
        let (mut a, mut b) = (RwComplex::default(), RwComplex::default());
        assert_eq!(unsafe { rw_grid_value(g, i, &mut a) }, RwStatus::Ok);
        assert_eq!(
            unsafe { rw_eval_point(inc.as_ptr(), 100, i as f64 / 32.0, &mut b) },
            RwStatus::Ok
        );
        assert!((a.re - b.re).abs() < 1e-10 && (a.im - b.im).abs() < 1e-10);
    }
    let mut z = RwComplex::default();
    assert_eq!(unsafe { rw_grid_value(g, 32, &mut z) }, RwStatus::Range);
    unsafe {
        rw_grid_free(g);
        rw_law_free(l);
    }
}

#[test]
fn oracles_and_mc() {
    let mut d = RwComplex::default();
    assert_eq!(unsafe { rw_dirichlet_kernel(4, 0.25, &mut d) }, RwStatus::Ok);
    assert!(d.re.abs() < 1e-15 && d.im.abs() < 1e-15);
    let (mut v, mut e) = (0.0, 0.0);
    assert_eq!(unsafe { rw_joint_tail(4, 0.25, 0.5, &mut v, &mut e) }, RwStatus::Ok);
    assert!((v - 0.25).abs() < 1e-10);
    let (mut lo, mut hi) = (0.0, 0.0);
    assert_eq!(
        unsafe { rw_joint_tail_envelope(100, 0.013, 0.5, &mut lo, &mut hi) },
        RwStatus::Ok
    );
    assert!(lo < hi);
    let l = law("gaussian:1");
    let mut est = RwTailEstimate::default();
    assert_eq!(unsafe { rw_mc_tail(l, 50, 0.5, 20_000, 9, &mut est) }, RwStatus::Ok);
    assert_eq!(est.replicas, 20_000);
    assert!(est.ci_lo < est.p_hat && est.p_hat < est.ci_hi);
    assert!((est.p_hat - 50f64.powf(-0.5)).abs() < 5.0 * est.stderr);
    unsafe { rw_law_free(l) };
}

#[test]
fn tree_handles() {
    let l = law("gaussian:1");
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { rw_tree_build(l, 3.0, 6, 0.5, 1, 0, &mut t) }, RwStatus::Ok);
    let mut depth = 0;
    assert_eq!(unsafe { rw_tree_depth(t, &mut depth) }, RwStatus::Ok);
    assert_eq!(depth, 6);
    let mut c = 0u64;
    assert_eq!(unsafe { rw_tree_count_circled(t, 7, &mut c) }, RwStatus::Range);
    let mut s = 0.0;
    assert_eq!(unsafe { rw_tree_subtree_sum(t, 3, 8, 6, &mut s) }, RwStatus::Range);
    assert_eq!(
        unsafe { rw_tree_build(l, 1.0, 6, 0.5, 1, 0, &mut t) },
        RwStatus::InvalidParameter
    );
    unsafe {
        rw_tree_free(t);
        rw_law_free(l);
    }
}

#[test]
fn header_is_current_and_c_program_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/rotwalk.h")).unwrap();
    for f in [
        "rw_law_parse",
        "rw_grid_eval",
        "rw_tree_build",
        "rw_mc_tail",
        "RW_STATUS_OK",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("librotwalk_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let work = tempfile::tempdir().unwrap();
    let exe = work.path().join("smoke");
    let status = Command::new("cc")
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "smoke exited with {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0"));
}
