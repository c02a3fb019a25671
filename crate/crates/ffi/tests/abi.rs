use std::ffi::{c_char, CStr, CString};
use std::ptr;

use homog_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { homog_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn laminate_tensor_through_handles() {
    let name = CString::new("laminate").unwrap();
    let mut coeffs = ptr::null_mut();
    assert_eq!(unsafe { homog_coefficients_preset(name.as_ptr(), 0, &mut coeffs) }, HomogStatus::Ok);

    let (mut mu, mut kappa) = (0.0, 0.0);
    assert_eq!(unsafe { homog_coefficients_validate(coeffs, 16, &mut mu, &mut kappa) }, HomogStatus::Ok);
    assert!(mu > 0.0 && kappa == 0.0, "laminate has no lower-order terms");

    let mut cell = ptr::null_mut();
    assert_eq!(unsafe { homog_cell_compute(coeffs, 64, &mut cell) }, HomogStatus::Ok);
    let (mut d, mut m) = (0, 0);
    assert_eq!(unsafe { homog_cell_layout(cell, &mut d, &mut m) }, HomogStatus::Ok);
    assert_eq!((d, m), (2, 1));

    let mut needed = 0;
    let status = unsafe { homog_cell_tensor(cell, HomogTensor::A, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, HomogStatus::InvalidArgument);
    assert_eq!(needed, 4);
    let mut a = vec![0.0; needed];
    assert_eq!(unsafe { homog_cell_tensor(cell, HomogTensor::A, a.as_mut_ptr(), a.len(), &mut needed) }, HomogStatus::Ok);
    assert!((a[0] - 3f64.sqrt()).abs() < 1e-3, "a11 = {}", a[0]);
    assert!((a[3] - 2.0).abs() < 1e-3, "a22 = {}", a[3]);

    unsafe {
        homog_cell_free(cell);
        homog_coefficients_free(coeffs);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut coeffs = ptr::null_mut();
    let name = CString::new("no-such-preset").unwrap();
    let status = unsafe { homog_coefficients_preset(name.as_ptr(), 0, &mut coeffs) };
    assert_ne!(status, HomogStatus::Ok);
    assert!(coeffs.is_null());
    assert!(last_error().contains("no-such-preset"));

    let status = unsafe { homog_coefficients_preset(ptr::null(), 0, &mut coeffs) };
    assert_ne!(status, HomogStatus::Ok);

    let bad = CString::new("[plan]\nbogus = 1\n").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { homog_verify(bad.as_ptr(), &mut json) }, HomogStatus::Config);
    assert!(json.is_null());

    let neg = CString::new("[coefficients]\na = { \"1,1,1,1\" = \"-1\" }\n").unwrap();
    assert_eq!(
        unsafe { homog_coefficients_from_config(neg.as_ptr(), &mut coeffs) },
        HomogStatus::Ok,
        "construction is lazy; validation reports the sign"
    );
    let (mut mu, mut kappa) = (0.0, 0.0);
    assert_eq!(unsafe { homog_coefficients_validate(coeffs, 16, &mut mu, &mut kappa) }, HomogStatus::Ellipticity);
    unsafe { homog_coefficients_free(coeffs) };

    unsafe {
        homog_coefficients_free(ptr::null_mut());
        homog_cell_free(ptr::null_mut());
        homog_string_free(ptr::null_mut());
    }
}

#[test]
fn fit_rate_recovers_slope() {
    let eps = [0.125, 0.0625, 0.03125, 0.015625];
    let err: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.powf(0.5)).collect();
    let (mut s, mut c, mut r) = (0.0, 0.0, 0.0);
    let status = unsafe { homog_fit_rate(eps.as_ptr(), err.as_ptr(), 4, HomogModel::Power, 0.0, &mut s, &mut c, &mut r) };
    assert_eq!(status, HomogStatus::Ok);
    assert!((s - 0.5).abs() < 1e-12 && (c - 3.0).abs() < 1e-10 && r < 1e-12);

    let status = unsafe { homog_fit_rate(eps.as_ptr(), err.as_ptr(), 2, HomogModel::Power, 0.0, &mut s, &mut c, &mut r) };
    assert_eq!(status, HomogStatus::InvalidArgument);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/homog.h");
    let text = std::fs::read_to_string(header).unwrap();
    for f in ["homog_cell_compute", "homog_verify", "homog_run_plan", "homog_last_error", "homog_string_free"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"homog.h\"\nint main(void) { HomogCoefficients *c = 0; \
         return homog_coefficients_preset(\"laminate\", 0, &c) == HOMOG_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(_) => {
            eprintln!("no C compiler; header syntax not checked");
            return;
        }
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
