//! C ABI over the `aftgof` library.
//!
//! Conventions:
//! - Handles (`AftgofDataset`, `AftgofFit`, `AftgofReport`) are opaque;
//!   create them through the constructors and release them with the
//!   matching `_free` function. Passing NULL to a `_free` is a no-op.
//! - Fallible calls return an [`AftgofStatus`]; on any non-OK status a
//!   thread-local message is readable via [`aftgof_last_error`] until the
//!   next fallible call on the same thread.
//! - Array arguments are borrowed for the duration of the call only.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use aftgof::{Error, Estimator, FittedModel, GofReport, SurvivalDataset, TestKind};

/// Result codes; everything except `Ok` leaves a message in
/// `aftgof_last_error`.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum AftgofStatus {
    /// Success.
    Ok = 0,
    /// NULL handle, bad enum value, or otherwise malformed arguments.
    InvalidArgument = 1,
    /// Data failed validation (wrong sizes, non-positive times, ...).
    BadInput = 2,
    /// Numerical failure: non-convergence, singular system, degenerate
    /// resampling.
    Numerical = 3,
    /// A panic crossed the boundary; state may be inconsistent.
    Panic = 4,
}

/// Opaque survival dataset handle.
pub struct AftgofDataset(SurvivalDataset);
/// Opaque fitted-model handle.
pub struct AftgofFit {
    model: FittedModel,
    p: usize,
}
/// Opaque diagnostic-test report handle.
pub struct AftgofReport(GofReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn status_of(err: &Error) -> AftgofStatus {
    match err.exit_code() {
        2 => AftgofStatus::BadInput,
        _ => AftgofStatus::Numerical,
    }
}

fn fail(err: &Error) -> AftgofStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn invalid(msg: &str) -> AftgofStatus {
    set_error(msg);
    AftgofStatus::InvalidArgument
}

fn guarded<F: FnOnce() -> AftgofStatus>(f: F) -> AftgofStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            AftgofStatus::Panic
        }
    }
}

/// Message for the most recent non-OK status on this thread. The pointer
/// stays valid until the next fallible call on the same thread; never
/// free it.
#[no_mangle]
pub extern "C" fn aftgof_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn estimator_of(code: i32) -> Option<Estimator> {
    match code {
        0 => Some(Estimator::Mns),
        1 => Some(Estimator::Mis),
        2 => Some(Estimator::Mls),
        _ => None,
    }
}

/// Build a dataset from parallel arrays: `time` and `status` of length
/// `n`, covariates row-major `n * p`. Column names default to
/// "z0", "z1", ... On success writes a handle through `out`.
///
/// # Safety
/// `time`, `status`, `covariates`, and `out` must point to readable
/// (resp. writable) memory of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn aftgof_dataset_new(
    time: *const f64,
    status: *const u8,
    covariates: *const f64,
    n: usize,
    p: usize,
    out: *mut *mut AftgofDataset,
) -> AftgofStatus {
    guarded(|| {
        if time.is_null() || status.is_null() || covariates.is_null() || out.is_null() {
            return invalid("aftgof_dataset_new: NULL pointer argument");
        }
        if n == 0 || p == 0 {
            return invalid("aftgof_dataset_new: n and p must be positive");
        }
        let time = slice::from_raw_parts(time, n).to_vec();
        let status = slice::from_raw_parts(status, n).to_vec();
        let cov = slice::from_raw_parts(covariates, n * p).to_vec();
        let names = (0..p).map(|q| format!("z{q}")).collect();
        match SurvivalDataset::new(time, status, cov, names) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(AftgofDataset(d)));
                AftgofStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a dataset handle.
///
/// # Safety
/// `handle` must come from `aftgof_dataset_new` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn aftgof_dataset_free(handle: *mut AftgofDataset) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of subjects in the dataset, or 0 on NULL.
///
/// # Safety
/// `handle` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn aftgof_dataset_n(handle: *const AftgofDataset) -> usize {
    handle.as_ref().map_or(0, |d| d.0.n())
}

/// Number of covariates in the dataset, or 0 on NULL.
///
/// # Safety
/// `handle` must be a live dataset handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn aftgof_dataset_p(handle: *const AftgofDataset) -> usize {
    handle.as_ref().map_or(0, |d| d.0.p())
}

/// Fit the model. `estimator`: 0 = non-smooth rank, 1 = induced-smoothed
/// rank, 2 = iterative least squares. Writes a fit handle through `out`.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aftgof_fit(
    dataset: *const AftgofDataset,
    estimator: i32,
    out: *mut *mut AftgofFit,
) -> AftgofStatus {
    guarded(|| {
        let Some(data) = dataset.as_ref() else {
            return invalid("aftgof_fit: NULL dataset");
        };
        if out.is_null() {
            return invalid("aftgof_fit: NULL out pointer");
        }
        let Some(est) = estimator_of(estimator) else {
            return invalid("aftgof_fit: estimator must be 0, 1, or 2");
        };
        match aftgof::fit(&data.0, est, None) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(AftgofFit {
                    model,
                    p: data.0.p(),
                }));
                AftgofStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a fit handle.
///
/// # Safety
/// `handle` must come from `aftgof_fit` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn aftgof_fit_free(handle: *mut AftgofFit) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Copy the fitted coefficients into `beta_out` (length `p`).
///
/// # Safety
/// `fit` must be a live fit handle; `beta_out` must hold `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn aftgof_fit_beta(
    fit: *const AftgofFit,
    beta_out: *mut f64,
    p: usize,
) -> AftgofStatus {
    guarded(|| {
        let Some(fit) = fit.as_ref() else {
            return invalid("aftgof_fit_beta: NULL fit");
        };
        if beta_out.is_null() {
            return invalid("aftgof_fit_beta: NULL output buffer");
        }
        if p != fit.p {
            return invalid("aftgof_fit_beta: buffer length does not match p");
        }
        slice::from_raw_parts_mut(beta_out, p).copy_from_slice(&fit.model.beta);
        AftgofStatus::Ok
    })
}

/// 1 when the solver converged, 0 otherwise (or on NULL).
///
/// # Safety
/// `fit` must be a live fit handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn aftgof_fit_converged(fit: *const AftgofFit) -> i32 {
    fit.as_ref().map_or(0, |f| i32::from(f.model.converged))
}

/// Run one diagnostic test. `test`: 0 = omnibus, 1 = link, 2 =
/// functional form of covariate `form_column` (ignored otherwise).
/// `standardized` is a boolean. `paths` resampled paths are drawn from
/// `seed`. Writes a report handle through `out`.
///
/// # Safety
/// `dataset` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aftgof_run_test(
    dataset: *const AftgofDataset,
    estimator: i32,
    test: i32,
    form_column: usize,
    standardized: i32,
    paths: usize,
    seed: u64,
    out: *mut *mut AftgofReport,
) -> AftgofStatus {
    guarded(|| {
        let Some(data) = dataset.as_ref() else {
            return invalid("aftgof_run_test: NULL dataset");
        };
        if out.is_null() {
            return invalid("aftgof_run_test: NULL out pointer");
        }
        let Some(est) = estimator_of(estimator) else {
            return invalid("aftgof_run_test: estimator must be 0, 1, or 2");
        };
        let kind = match test {
            0 => TestKind::Omnibus,
            1 => TestKind::Link,
            2 => TestKind::Form(form_column),
            _ => return invalid("aftgof_run_test: test must be 0, 1, or 2"),
        };
        match aftgof::run_test(&data.0, est, kind, standardized != 0, paths, seed) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(AftgofReport(report)));
                AftgofStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release a report handle.
///
/// # Safety
/// `handle` must come from `aftgof_run_test` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn aftgof_report_free(handle: *mut AftgofReport) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Resampling p-value of the test, or NaN on NULL.
///
/// # Safety
/// `report` must be a live report handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn aftgof_report_p_value(report: *const AftgofReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.p_value)
}

/// Observed supremum statistic, or NaN on NULL.
///
/// # Safety
/// `report` must be a live report handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn aftgof_report_statistic(report: *const AftgofReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.w_obs_sup)
}

/// Number of resampled paths that converged, or 0 on NULL.
///
/// # Safety
/// `report` must be a live report handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn aftgof_report_paths_effective(report: *const AftgofReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.k_effective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;
    use std::ptr;

    fn sample_arrays(n: usize) -> (Vec<f64>, Vec<u8>, Vec<f64>) {
        // Deterministic censored sample with one covariate.
        let mut time = Vec::new();
        let mut status = Vec::new();
        let mut cov = Vec::new();
        for i in 0..n {
            let z = (i as f64 * 0.37).sin() + 2.0;
            let noise = ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5;
            time.push((4.0 - z + noise).exp());
            status.push(if i % 5 == 0 { 0 } else { 1 });
            cov.push(z);
        }
        (time, status, cov)
    }

    #[test]
    fn round_trip_fit_and_test() {
        let n = 60;
        let (time, status, cov) = sample_arrays(n);
        unsafe {
            let mut data: *mut AftgofDataset = ptr::null_mut();
            let st = aftgof_dataset_new(
                time.as_ptr(),
                status.as_ptr(),
                cov.as_ptr(),
                n,
                1,
                &mut data,
            );
            assert!(st == AftgofStatus::Ok);
            assert_eq!(aftgof_dataset_n(data), n);
            assert_eq!(aftgof_dataset_p(data), 1);

            let mut fit: *mut AftgofFit = ptr::null_mut();
            assert!(aftgof_fit(data, 1, &mut fit) == AftgofStatus::Ok);
            assert_eq!(aftgof_fit_converged(fit), 1);
            let mut beta = [0.0f64];
            assert!(aftgof_fit_beta(fit, beta.as_mut_ptr(), 1) == AftgofStatus::Ok);
            assert!(beta[0].is_finite());

            let mut report: *mut AftgofReport = ptr::null_mut();
            let st = aftgof_run_test(data, 1, 2, 0, 1, 40, 7, &mut report);
            assert!(st == AftgofStatus::Ok);
            let p = aftgof_report_p_value(report);
            assert!((0.0..=1.0).contains(&p));
            assert!(aftgof_report_statistic(report) > 0.0);
            assert_eq!(aftgof_report_paths_effective(report), 40);

            aftgof_report_free(report);
            aftgof_fit_free(fit);
            aftgof_dataset_free(data);
        }
    }

    #[test]
    fn bad_input_reports_status_and_message() {
        let n = 5;
        let time = vec![-1.0; n]; // invalid: non-positive times
        let status = vec![1u8; n];
        let cov = vec![0.5; n];
        unsafe {
            let mut data: *mut AftgofDataset = ptr::null_mut();
            let st = aftgof_dataset_new(
                time.as_ptr(),
                status.as_ptr(),
                cov.as_ptr(),
                n,
                1,
                &mut data,
            );
            assert!(st == AftgofStatus::BadInput);
            let msg = CStr::from_ptr(aftgof_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());
        }
    }

    #[test]
    fn null_and_bad_enum_arguments_are_invalid() {
        unsafe {
            let mut out: *mut AftgofDataset = ptr::null_mut();
            let st = aftgof_dataset_new(ptr::null(), ptr::null(), ptr::null(), 3, 1, &mut out);
            assert!(st == AftgofStatus::InvalidArgument);

            let n = 60;
            let (time, status, cov) = sample_arrays(n);
            let mut data: *mut AftgofDataset = ptr::null_mut();
            aftgof_dataset_new(time.as_ptr(), status.as_ptr(), cov.as_ptr(), n, 1, &mut data);
            let mut fit: *mut AftgofFit = ptr::null_mut();
            assert!(aftgof_fit(data, 9, &mut fit) == AftgofStatus::InvalidArgument);
            assert!(aftgof_fit(ptr::null(), 1, &mut fit) == AftgofStatus::InvalidArgument);

            // Wrong beta buffer length.
            assert!(aftgof_fit(data, 1, &mut fit) == AftgofStatus::Ok);
            let mut beta = [0.0f64; 3];
            assert!(
                aftgof_fit_beta(fit, beta.as_mut_ptr(), 3) == AftgofStatus::InvalidArgument
            );
            aftgof_fit_free(fit);
            aftgof_dataset_free(data);

            // Free of NULL is a no-op.
            aftgof_dataset_free(ptr::null_mut());
            aftgof_fit_free(ptr::null_mut());
            aftgof_report_free(ptr::null_mut());
        }
    }

    #[test]
    fn ffi_results_match_native_api() {
        let n = 60;
        let (time, status, cov) = sample_arrays(n);
        let native = SurvivalDataset::new(
            time.clone(),
            status.clone(),
            cov.clone(),
            vec!["z0".into()],
        )
        .unwrap();
        let native_fit = aftgof::fit(&native, Estimator::Mis, None).unwrap();
        let native_report =
            aftgof::run_test(&native, Estimator::Mis, TestKind::Form(0), true, 30, 11).unwrap();
        unsafe {
            let mut data: *mut AftgofDataset = ptr::null_mut();
            aftgof_dataset_new(time.as_ptr(), status.as_ptr(), cov.as_ptr(), n, 1, &mut data);
            let mut fit: *mut AftgofFit = ptr::null_mut();
            aftgof_fit(data, 1, &mut fit);
            let mut beta = [0.0f64];
            aftgof_fit_beta(fit, beta.as_mut_ptr(), 1);
            assert_eq!(beta[0], native_fit.beta[0]);

            let mut report: *mut AftgofReport = ptr::null_mut();
            aftgof_run_test(data, 1, 2, 0, 1, 30, 11, &mut report);
            assert_eq!(aftgof_report_p_value(report), native_report.p_value);
            assert_eq!(aftgof_report_statistic(report), native_report.w_obs_sup);

            aftgof_report_free(report);
            aftgof_fit_free(fit);
            aftgof_dataset_free(data);
        }
    }
}
