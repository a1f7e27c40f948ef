use std::ffi::{c_char, CStr, CString};
use std::ptr;

use ncsim_ffi::*;

fn last_error() -> String {
    let p = ncs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn preset_round_trip() {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { ncs_system_preset(NcsClass::Pendulum, &mut sys) }, NcsStatus::Ok);
    let mut dim = 0;
    assert_eq!(unsafe { ncs_system_state_dim(sys, &mut dim) }, NcsStatus::Ok);
    assert_eq!(dim, 4);

    let mut need = 0;
    let st = unsafe { ncs_system_gain(sys, ptr::null_mut(), 0, &mut need) };
    assert_eq!((st, need), (NcsStatus::BufferTooSmall, 4));
    let mut gain = [0.0; 4];
    assert_eq!(unsafe { ncs_system_gain(sys, gain.as_mut_ptr(), 4, ptr::null_mut()) }, NcsStatus::Ok);
    assert!(gain.iter().all(|g| g.is_finite()) && gain.iter().any(|g| *g != 0.0));

    let (mut one, mut five, mut norm) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(ncs_mse_of_age(sys, 1, &mut one), NcsStatus::Ok);
        assert_eq!(ncs_mse_of_age(sys, 5, &mut five), NcsStatus::Ok);
        assert_eq!(ncs_nmse_of_age(sys, 1, &mut norm), NcsStatus::Ok);
        ncs_system_free(sys);
    }
    assert!(five > one);
    assert!((norm - 1.0).abs() < 1e-12);
}

#[test]
fn scalar_plant_mse_is_a_geometric_sum() {
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { ncs_system_scalar(1.2, &mut sys) }, NcsStatus::Ok);
    let mut mse = 0.0;
    assert_eq!(unsafe { ncs_mse_of_age(sys, 3, &mut mse) }, NcsStatus::Ok);
    unsafe { ncs_system_free(sys) };
    assert!((mse - (1.0 + 1.44 + 1.44 * 1.44)).abs() < 1e-12);
}

#[test]
fn closed_forms() {
    let mut rr = 0.0;
    assert_eq!(unsafe { ncs_rr_mean_aoi(9, &mut rr) }, NcsStatus::Ok);
    assert_eq!(rr, 5.0);

    let mut sa = 0.0;
    assert_eq!(unsafe { ncs_sa_mean_aoi(10, 0.1, &mut sa) }, NcsStatus::Ok);
    let succ = 0.1 * 0.9f64.powi(9);
    assert!((sa - 1.0 / succ).abs() < 1e-9 * sa);

    let (mut delta, mut p, mut aoi) = (0u32, 0.0, 0.0);
    assert_eq!(unsafe { ncs_optimize_adra(10, &mut delta, &mut p, &mut aoi) }, NcsStatus::Ok);
    assert!(aoi < sa && p > 0.0 && p <= 1.0);
    let mut again = 0.0;
    assert_eq!(unsafe { ncs_adra_mean_aoi(10, delta, p, &mut again) }, NcsStatus::Ok);
    assert!((again - aoi).abs() < 1e-9 * aoi);
}

#[test]
fn bad_arguments_set_status_and_message() {
    let mut out = 0.0;
    assert_eq!(unsafe { ncs_sa_mean_aoi(5, 1.5, &mut out) }, NcsStatus::Domain);
    assert!(last_error().contains("1.5"));

    assert_eq!(unsafe { ncs_rr_mean_aoi(3, ptr::null_mut()) }, NcsStatus::NullPointer);
    assert!(last_error().contains("out"));

    assert_eq!(unsafe { ncs_mse_of_age(ptr::null(), 1, &mut out) }, NcsStatus::NullPointer);

    let bad = CString::new("scenario = \"single\"\nn = 3\nbogus = 1\n").unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { ncs_experiment_parse(bad.as_ptr(), &mut exp) }, NcsStatus::Config);
    assert!(exp.is_null());
    assert!(last_error().contains("bogus"));

    unsafe {
        ncs_system_free(ptr::null_mut());
        ncs_experiment_free(ptr::null_mut());
        ncs_results_free(ptr::null_mut());
    }
}

#[test]
fn experiment_runs_and_reports() {
    let doc = CString::new(
        "scenario = \"single\"\nprotocols = [\"rr\", \"wifresh\"]\nn = 3\nduration_s = 12.0\nreplications = 2\n",
    )
    .unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { ncs_experiment_parse(doc.as_ptr(), &mut exp) }, NcsStatus::Ok);
    assert_eq!(unsafe { ncs_experiment_set_seed(exp, 5, 0) }, NcsStatus::Ok);

    let mut res = ptr::null_mut();
    assert_eq!(unsafe { ncs_experiment_run(exp, 1, &mut res) }, NcsStatus::Ok);
    let mut len = 0;
    assert_eq!(unsafe { ncs_results_len(res, &mut len) }, NcsStatus::Ok);
    assert_eq!(len, 2);

    let mut label = [0 as c_char; 32];
    let (mut need, mut n) = (0, 0);
    let st = unsafe { ncs_results_describe(res, 0, label.as_mut_ptr(), label.len(), &mut need, &mut n) };
    assert_eq!(st, NcsStatus::Ok);
    let text = unsafe { CStr::from_ptr(label.as_ptr()) }.to_str().unwrap();
    assert_eq!((text, n, need), ("round_robin", 3, text.len() + 1));

    let name = CString::new("mean_aoi").unwrap();
    let (mut mean, mut hw) = (0.0, 0.0);
    assert_eq!(unsafe { ncs_results_metric(res, 0, name.as_ptr(), &mut mean, &mut hw) }, NcsStatus::Ok);
    // Ideal round robin gives (N + 1) / 2; channel losses can only add age.
    assert!((2.0..3.0).contains(&mean), "round-robin AoI {mean}");
    assert!(hw.is_finite());

    let missing = CString::new("nope").unwrap();
    let st = unsafe { ncs_results_metric(res, 0, missing.as_ptr(), &mut mean, ptr::null_mut()) };
    assert_eq!(st, NcsStatus::NotFound);
    let st = unsafe { ncs_results_metric(res, 9, name.as_ptr(), &mut mean, ptr::null_mut()) };
    assert_eq!(st, NcsStatus::InvalidArgument);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ncs_results_write_csv(res, path.as_ptr()) }, NcsStatus::Ok);
    assert!(dir.path().join("out/summary.csv").is_file());

    unsafe {
        ncs_results_free(res);
        ncs_experiment_free(exp);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ncs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
