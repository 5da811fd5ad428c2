use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use borelk_ffi::*;

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = bk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load_desk() -> *mut BkProblem {
    let mut h = ptr::null_mut();
    let path = cstr(&core_dir().join("configs/desk_problem.toml"));
    assert_eq!(unsafe { bk_problem_load(path.as_ptr(), &mut h) }, BkStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn desk_problem_loads_and_validates() {
    let h = load_desk();
    let mut k = 0.0;
    let mut ok = false;
    unsafe {
        assert_eq!(bk_problem_order(h, &mut k), BkStatus::Ok);
        assert_eq!(bk_problem_validate(h, 20.0, 41, &mut ok), BkStatus::Ok);
        bk_problem_free(h);
    }
    assert_eq!(k, 0.75);
    assert!(ok);
    assert!(bk_last_error().is_null());
}

#[test]
fn hypothesis_violation_maps_to_its_code() {
    let text =
        std::fs::read_to_string(core_dir().join("configs/desk_problem.toml")).unwrap().replace("k = 0.75", "k = 1.2");
    let text = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    let mut ok = true;
    unsafe {
        assert_eq!(bk_problem_parse(text.as_ptr(), &mut h), BkStatus::Ok);
        assert_eq!(bk_problem_validate(h, 20.0, 41, &mut ok), BkStatus::Hypothesis);
        bk_problem_free(h);
    }
    assert!(last_error().contains("(1/2, 1)"));
}

#[test]
fn parse_errors_and_null_arguments() {
    let bad = CString::new("k = [").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { bk_problem_parse(bad.as_ptr(), &mut h) }, BkStatus::Parse);
    assert!(h.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { bk_problem_parse(ptr::null(), &mut h) }, BkStatus::NullPointer);
    let mut k = 0.0;
    assert_eq!(unsafe { bk_problem_order(ptr::null(), &mut k) }, BkStatus::NullPointer);
    let missing = cstr(Path::new("/nonexistent/problem.toml"));
    assert_eq!(unsafe { bk_problem_load(missing.as_ptr(), &mut h) }, BkStatus::Io);
    unsafe { bk_problem_free(ptr::null_mut()) };
}

#[test]
fn tahara_coefficients_through_the_abi() {
    let mut buf = [0.0; 4];
    let mut len = 0;
    unsafe {
        assert_eq!(bk_tahara_coefficients(2, 0.6, buf.as_mut_ptr(), buf.len(), &mut len), BkStatus::Ok);
        assert_eq!(len, 1);
        assert!((buf[0] + 1.6).abs() < 1e-15);
        assert_eq!(bk_tahara_coefficients(6, 0.6, buf.as_mut_ptr(), buf.len(), &mut len), BkStatus::BufferTooSmall);
        assert_eq!(len, 5);
        assert_eq!(bk_tahara_coefficients(1, 0.6, ptr::null_mut(), 0, &mut len), BkStatus::Ok);
        assert_eq!(len, 0);
        assert_eq!(bk_tahara_coefficients(0, 0.6, ptr::null_mut(), 0, &mut len), BkStatus::InvalidInput);
    }
}

#[test]
fn pipeline_solves_on_a_sector() {
    let cfg = cstr(&core_dir().join("tests/data/small_run.toml"));
    let mut pl = ptr::null_mut();
    let mut dirs = [0.0; 8];
    let mut n = 0;
    let mut s = BkSolveSummary::default();
    unsafe {
        assert_eq!(bk_pipeline_new(cfg.as_ptr(), &mut pl), BkStatus::Ok);
        assert_eq!(bk_pipeline_directions(pl, dirs.as_mut_ptr(), dirs.len(), &mut n), BkStatus::Ok);
        assert_eq!(n, 3);
        let eps = num_polar(0.05, dirs[0]);
        assert_eq!(bk_pipeline_solve(pl, 0, eps.0, eps.1, &mut s), BkStatus::Ok);
        assert_eq!(bk_pipeline_solve(pl, 7, eps.0, eps.1, &mut s), BkStatus::InvalidInput, "{}", last_error());
        bk_pipeline_free(pl);
    }
    assert!(s.converged && s.iterations > 0);
    assert!(s.max_ratio < 1.0 && s.norm_f > 0.0 && s.residual < 1e-6);
    assert!(s.varpi >= s.norm_f);
}

fn num_polar(r: f64, a: f64) -> (f64, f64) {
    (r * a.cos(), r * a.sin())
}

#[test]
fn header_compiles_and_links_from_c() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = root.join("include/borelk.h");
    assert!(header.exists());
    let target = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = target.join("libborelk_ffi.a");
    assert!(lib.exists(), "{}", lib.display());
    let dir = std::env::temp_dir().join(format!("borelk-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "borelk.h"
int main(void) {
    double c[2];
    size_t n = 0;
    if (bk_tahara_coefficients(3, 0.75, c, 2, &n) != BkStatus_Ok || n != 2) return 3;
    BkProblem *p = NULL;
    if (bk_problem_parse("k = [", &p) != BkStatus_Parse || bk_last_error() == NULL) return 4;
    printf("%.12f %.12f\n", c[0], c[1]);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let cc = std::process::Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("a C compiler is required for this test");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = std::process::Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    let out = String::from_utf8(run.stdout).unwrap();
    let vals: Vec<f64> = out.split_whitespace().map(|v| v.parse().unwrap()).collect();
    let mut want = [0.0; 2];
    let mut n = 0;
    unsafe { bk_tahara_coefficients(3, 0.75, want.as_mut_ptr(), 2, &mut n) };
    assert!((vals[0] - want[0]).abs() < 1e-11 && (vals[1] - want[1]).abs() < 1e-11);
    let _ = std::fs::remove_dir_all(&dir);
}
