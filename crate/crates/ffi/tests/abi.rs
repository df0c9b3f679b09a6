use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use miglmm_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(miglmm_last_error_message()) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions_report_status() {
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(miglmm_phi(0.0, 1.0, &mut v), MiglmmStatus::Ok);
        assert_eq!(v, 0.5);
        assert_eq!(last_error(), "");
        assert_eq!(miglmm_link_inverse(MiglmmLink::Logit, 0.0, &mut v), MiglmmStatus::Ok);
        assert_eq!(v, 0.5);
        assert_eq!(miglmm_adjust(MiglmmLink::Probit, 2.0, 3.0, &mut v), MiglmmStatus::Ok);
        assert!((v - 2.0).abs() < 1e-15);
        assert_eq!(miglmm_adjust(MiglmmLink::Sqrt, 1.0, 4.0, &mut v), MiglmmStatus::Domain);
        assert!(last_error().contains("model undefined"));
        assert_eq!(miglmm_adjust(MiglmmLink::Reciprocal, 1.0, 1.0, &mut v), MiglmmStatus::Unsupported);
        assert_eq!(miglmm_phi(f64::NAN, 1.0, &mut v), MiglmmStatus::InvalidArgument);
        assert_eq!(miglmm_phi(0.0, 1.0, ptr::null_mut()), MiglmmStatus::NullPointer);
    }
}

#[test]
fn rule_handles_expose_nodes_and_weights() {
    let mut rule = ptr::null_mut();
    unsafe {
        assert_eq!(miglmm_rule_new(20, &mut rule), MiglmmStatus::Ok);
        assert_eq!(miglmm_rule_order(rule), 20);
        let mut w = vec![0.0; 20];
        let mut x = vec![0.0; 20];
        assert_eq!(miglmm_rule_weights(rule, w.as_mut_ptr(), 20), MiglmmStatus::Ok);
        assert_eq!(miglmm_rule_nodes(rule, x.as_mut_ptr(), 20), MiglmmStatus::Ok);
        assert!((w.iter().sum::<f64>() - std::f64::consts::PI.sqrt()).abs() < 1e-13);
        assert!(x.iter().zip(x.iter().rev()).all(|(a, b)| (a + b).abs() < 1e-12));
        assert_eq!(miglmm_rule_nodes(rule, x.as_mut_ptr(), 19), MiglmmStatus::InvalidArgument);
        let mut v = 0.0;
        assert_eq!(miglmm_rule_phi(rule, 0.0, 2.0, &mut v), MiglmmStatus::Ok);
        assert!((v - 0.5).abs() < 1e-15);
        miglmm_rule_free(rule);
        miglmm_rule_free(ptr::null_mut());
        assert_eq!(miglmm_rule_new(0, &mut rule), MiglmmStatus::InvalidArgument);
    }
}

const MODEL: &str = r#"
family = "poisson"
link = "log"
response = "y"

[[fixed]]
name = "b0"
term = "1"
prior = { mean = 0.0, variance = 100.0 }

[[random]]
name = "g"
group = ["g"]
variance = [{ name = "sigma", prior = { mean = 0.0, variance = 1.0 } }]
"#;

#[test]
fn fit_handles_expose_draws() {
    let model = CString::new(MODEL).unwrap();
    let mut csv = String::from("g,y\n");
    for i in 0..30 {
        csv.push_str(&format!("{},{}\n", i % 6, (i * 7) % 5));
    }
    let data = CString::new(csv).unwrap();
    let mut fit = ptr::null_mut();
    unsafe {
        let status = miglmm_fit_new(model.as_ptr(), data.as_ptr(), 2_000, 500, 5, 9, 1, 0, &mut fit);
        assert_eq!(status, MiglmmStatus::Ok, "{}", last_error());
        assert_eq!(miglmm_fit_draw_count(fit), 300);
        assert_eq!(miglmm_fit_param_count(fit), 2);
        let name = CStr::from_ptr(miglmm_fit_param_name(fit, 1)).to_str().unwrap();
        assert_eq!(name, "sigma");
        assert!(miglmm_fit_param_name(fit, 2).is_null());
        let mut draws = vec![0.0; 300];
        assert_eq!(miglmm_fit_draws(fit, 1, draws.as_mut_ptr(), 300), MiglmmStatus::Ok);
        assert!(draws.iter().all(|s| *s > 0.0));
        let mut rate = 0.0;
        assert_eq!(miglmm_fit_acceptance(fit, MiglmmBlock::Beta, &mut rate), MiglmmStatus::Ok);
        assert!(rate > 0.0 && rate < 1.0);
        miglmm_fit_free(fit);

        let bad = CString::new("family = \"nope\"").unwrap();
        let status = miglmm_fit_new(bad.as_ptr(), data.as_ptr(), 100, 10, 1, 1, 0, 0, &mut fit);
        assert_eq!(status, MiglmmStatus::Config);
        assert_eq!(miglmm_fit_new(ptr::null(), data.as_ptr(), 100, 10, 1, 1, 0, 0, &mut fit), MiglmmStatus::NullPointer);
    }
}

fn ffi_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

#[test]
fn header_is_current_and_links_from_c() {
    let header = ffi_dir().join("include/miglmm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in ["miglmm_phi", "miglmm_fit_new", "miglmm_rule_free", "MIGLMM_STATUS_DOMAIN", "MiglmmFit"] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("libmiglmm_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(ffi_dir().join("tests/c/smoke.c"))
        .arg("-I")
        .arg(ffi_dir().join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
