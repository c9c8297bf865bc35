use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use ldphh_ffi::*;

#[test]
fn olh_round_trip() {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ldphh_olh_new(2.0, &mut h) }, LdphhStatus::Ok);
    assert_eq!(unsafe { ldphh_olh_d_prime(h) }, 9);
    let value = [0xabu8, 0xcd];
    let other = [0x12u8, 0x34];
    let n = 20_000;
    let (mut seeds, mut ys) = (vec![0u64; n], vec![0u32; n]);
    for i in 0..n {
        let v = if i % 4 == 0 { &other } else { &value };
        let st = unsafe { ldphh_olh_perturb(h, v.as_ptr(), 16, 3, i as u64, &mut seeds[i], &mut ys[i]) };
        assert_eq!(st, LdphhStatus::Ok);
    }
    let mut est = 0.0;
    let st = unsafe { ldphh_olh_estimate(h, seeds.as_ptr(), ys.as_ptr(), n, value.as_ptr(), 16, &mut est) };
    assert_eq!(st, LdphhStatus::Ok);
    assert!((est - 15_000.0).abs() < 1_000.0, "{est}");
    unsafe { ldphh_olh_free(h) };
}

#[test]
fn protocol_run_and_result_access() {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { ldphh_dataset_zipf(1.5, 64, 0, 20_000, 16, 1, &mut d) }, LdphhStatus::Ok);
    assert_eq!(unsafe { ldphh_dataset_len(d) }, 20_000);
    for protocol in [LdphhProtocol::Pem, LdphhProtocol::Spm, LdphhProtocol::Mcm] {
        let mut r = ptr::null_mut();
        let st = unsafe { ldphh_run(d, protocol, LdphhVariant::Split, 4, 4.0, 0.0, 1 << 16, 9, &mut r) };
        assert_eq!(st, LdphhStatus::Ok, "{protocol:?}");
        let len = unsafe { ldphh_result_len(r) };
        assert!(len >= 1 && len <= 4);
        assert!(unsafe { ldphh_result_queries(r) } > 0);
        let (mut hex, mut est) = (ptr::null_mut(), 0.0);
        assert_eq!(unsafe { ldphh_result_get(r, 0, &mut hex, &mut est) }, LdphhStatus::Ok);
        assert_eq!(unsafe { CStr::from_ptr(hex) }.to_bytes().len(), 4);
        unsafe { ldphh_string_free(hex) };
        assert_eq!(unsafe { ldphh_result_get(r, 99, &mut hex, &mut est) }, LdphhStatus::InvalidArgument);
        let mut json = ptr::null_mut();
        assert_eq!(unsafe { ldphh_result_json(r, &mut json) }, LdphhStatus::Ok);
        assert!(unsafe { CStr::from_ptr(json) }.to_str().unwrap().contains("queries_used"));
        unsafe { ldphh_string_free(json) };
        unsafe { ldphh_result_free(r) };
    }
    let mut r = ptr::null_mut();
    let st = unsafe { ldphh_run(d, LdphhProtocol::Pem, LdphhVariant::Split, 4, 1.0, 0.0, 8, 9, &mut r) };
    assert_eq!(st, LdphhStatus::Infeasible);
    assert!(r.is_null());
    unsafe { ldphh_dataset_free(d) };
}

#[test]
fn loading_reports_io_errors() {
    let path = CString::new("/nonexistent/values.txt").unwrap();
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { ldphh_dataset_load(path.as_ptr(), 8, LdphhLoadMode::Int, &mut d) }, LdphhStatus::Io);
    let msg = unsafe { CStr::from_ptr(ldphh_last_error()) }.to_str().unwrap();
    assert!(msg.contains("/nonexistent/values.txt"));
}

#[test]
fn analysis_entry_points() {
    let mut n = 0;
    assert_eq!(unsafe { ldphh_min_population(0.001, 10f64.ln(), 3.0, &mut n) }, LdphhStatus::Ok);
    assert_eq!(n, 4_410_000);
    let mut s = 0.0;
    let st = unsafe { ldphh_utility_score_zipf(1.5, 1024, 0, 16, 16, 6, 1e5, 1.0, LdphhWeights::F1, &mut s) };
    assert_eq!(st, LdphhStatus::Ok);
    assert!((0.0..=1.0).contains(&s));
}

#[test]
fn null_handles_are_rejected() {
    assert_eq!(unsafe { ldphh_dataset_len(ptr::null()) }, 0);
    let mut r = ptr::null_mut();
    let st = unsafe { ldphh_run(ptr::null(), LdphhProtocol::Pem, LdphhVariant::Split, 4, 1.0, 0.0, 1 << 16, 1, &mut r) };
    assert_eq!(st, LdphhStatus::InvalidArgument);
}

#[test]
fn header_compiles_as_c() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; header check skipped");
        return;
    };
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/ldphh.h");
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
