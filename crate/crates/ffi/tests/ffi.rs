use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use qsd_ffi::*;

fn params() -> QsdParams {
    QsdParams { mass: 1.0, omega: 1.0, gamma: 0.2, hbar: 1.0, n_bar: 0.5 }
}

fn coherent(re: f64) -> QsdInitial {
    QsdInitial { kind: QsdInitialKind::Coherent, alpha_re: re, alpha_im: 0.0, fock_n: 0 }
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    let n = unsafe { qsd_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, qsd_last_error_length().min(511));
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn model(n_f: usize) -> *mut QsdModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { qsd_model_new(&params(), n_f, &mut m) }, QsdStatus::Ok);
    m
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(qsd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_round_trip() {
    let m = model(12);
    assert_eq!(unsafe { qsd_model_dim(m) }, 12);
    unsafe { qsd_model_free(m) };
    unsafe { qsd_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { qsd_model_dim(ptr::null()) }, 0);
}

#[test]
fn invalid_params_report_error() {
    let mut m = ptr::null_mut();
    let bad = QsdParams { mass: -1.0, ..params() };
    assert_eq!(unsafe { qsd_model_new(&bad, 10, &mut m) }, QsdStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(last_error().contains("mass"), "{}", last_error());
    let bad = QsdParams { n_bar: f64::NAN, ..params() };
    assert_eq!(unsafe { qsd_model_new(&bad, 10, &mut m) }, QsdStatus::InvalidArgument);
    assert_eq!(unsafe { qsd_model_new(ptr::null(), 10, &mut m) }, QsdStatus::NullPointer);
    assert_eq!(unsafe { qsd_model_new(&params(), 10, ptr::null_mut()) }, QsdStatus::NullPointer);
}

#[test]
fn ensemble_series_and_worker_invariance() {
    let m = model(20);
    let mut cfg = QsdRunConfig {
        trajectories: 8,
        base_seed: 3,
        dt: 1e-3,
        t_end: 0.5,
        record_stride: 50,
        workers: 1,
        initial: coherent(1.0),
    };
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { qsd_ensemble_run(m, &cfg, &mut a) }, QsdStatus::Ok);
    cfg.workers = 3;
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { qsd_ensemble_run(m, &cfg, &mut b) }, QsdStatus::Ok);

    let n = unsafe { qsd_ensemble_samples(a) };
    assert_eq!(n, 11);
    let mut t = vec![0.0; n];
    assert_eq!(unsafe { qsd_ensemble_times(a, t.as_mut_ptr(), n) }, QsdStatus::Ok);
    assert!((t[n - 1] - 0.5).abs() < 1e-12);

    let idx = (0..qsd_observable_count())
        .find(|&i| unsafe { CStr::from_ptr(qsd_observable_name(i)) }.to_str().unwrap() == "n_mean")
        .unwrap();
    let (mut xa, mut xb) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { qsd_ensemble_series(a, idx, 0, xa.as_mut_ptr(), n) }, QsdStatus::Ok);
    assert_eq!(unsafe { qsd_ensemble_series(b, idx, 0, xb.as_mut_ptr(), n) }, QsdStatus::Ok);
    assert_eq!(xa, xb);
    assert!((xa[0] - 1.0).abs() < 1e-9);

    let mut se = vec![0.0; n];
    assert_eq!(unsafe { qsd_ensemble_series(a, idx, 1, se.as_mut_ptr(), n) }, QsdStatus::Ok);
    assert!(se[0].abs() < 1e-12 && se[n - 1] > 0.0);

    assert_eq!(unsafe { qsd_ensemble_series(a, idx, 0, xa.as_mut_ptr(), n - 1) }, QsdStatus::BufferTooSmall);
    assert_eq!(unsafe { qsd_ensemble_series(a, 99, 0, xa.as_mut_ptr(), n) }, QsdStatus::InvalidArgument);
    assert!(qsd_observable_name(99).is_null());

    unsafe {
        qsd_ensemble_free(a);
        qsd_ensemble_free(b);
        qsd_model_free(m);
    }
}

#[test]
fn truncation_failure_is_numerical() {
    let m = model(6);
    let cfg = QsdRunConfig {
        trajectories: 2,
        base_seed: 1,
        dt: 1e-3,
        t_end: 0.1,
        record_stride: 10,
        workers: 0,
        initial: coherent(2.0),
    };
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { qsd_ensemble_run(m, &cfg, &mut e) }, QsdStatus::Numerical);
    assert!(e.is_null());
    assert!(last_error().contains("truncation"), "{}", last_error());
    unsafe { qsd_model_free(m) };
}

#[test]
fn oracle_density_has_unit_trace() {
    let m = model(20);
    let dim = 20;
    let mut rho = vec![0.0; 2 * dim * dim];
    let status = unsafe { qsd_oracle_density(m, &coherent(1.0), 2.0, 0.005, rho.as_mut_ptr(), rho.len()) };
    assert_eq!(status, QsdStatus::Ok);
    let trace: f64 = (0..dim).map(|i| rho[2 * (i * dim + i)]).sum();
    assert!((trace - 1.0).abs() < 1e-10);
    // decay toward n̄ = 0.5 from ⟨n⟩ = 1
    let n: f64 = (0..dim).map(|i| i as f64 * rho[2 * (i * dim + i)]).sum();
    let expected = 0.5 + 0.5 * (-0.2f64 * 2.0).exp();
    assert!((n - expected).abs() < 1e-6, "{n} vs {expected}");
    let status = unsafe { qsd_oracle_density(m, &coherent(1.0), 2.0, 0.005, rho.as_mut_ptr(), 10) };
    assert_eq!(status, QsdStatus::BufferTooSmall);
    unsafe { qsd_model_free(m) };
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/qsd.h");
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .output()
    else {
        eprintln!("cc not available, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
