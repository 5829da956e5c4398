//! C ABI over the `osc-conn` simulator.
//!
//! Conventions:
//! - every fallible call returns an [`OcStatus`]; on failure the message is
//!   available from [`oc_last_error_message`] on the same thread;
//! - 5x5 patches are passed as pointers to 25 row-major `double`s;
//! - simulation settings and kernel banks live behind opaque handles that
//!   must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use osc_conn::calibration::linear_fit;
use osc_conn::dynamics::{run_inference, run_inference_traced, InitMode, SimConfig};
use osc_conn::encoding::{
    encode_differences, gabor_kernel, ideal_dot, make_filter_bank, FreqCalib, Fragment25,
    Kernel25, PATCH_LEN,
};
use osc_conn::harness::{energy_per_inference, EnergyModel};
use osc_conn::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Parameter = 3,
    Range = 4,
    Shape = 5,
    DegenerateFit = 6,
    Numerical = 7,
    Bracket = 8,
    Parse = 9,
    Io = 10,
    Panic = 11,
}

impl From<&Error> for OcStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => OcStatus::Domain,
            Error::Parameter(_) => OcStatus::Parameter,
            Error::Range(_) => OcStatus::Range,
            Error::Shape(_) => OcStatus::Shape,
            Error::DegenerateFit(_) => OcStatus::DegenerateFit,
            Error::Numerical { .. } => OcStatus::Numerical,
            Error::Bracket { .. } => OcStatus::Bracket,
            Error::Parse { .. } => OcStatus::Parse,
            Error::Io { .. } => OcStatus::Io,
        }
    }
}

/// Detector readout of one inference.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OcDomResult {
    pub dom: f64,
    pub sample_time: f64,
    pub r_final: f64,
    pub ideal_dot: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OcFitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Non-zero when the responses had no variance.
    pub degenerate: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct OcEnergyModel {
    pub n_osc: u32,
    pub p_osc: f64,
    pub p_pd: f64,
    pub t_inf: f64,
}

/// Opaque simulation settings.
pub struct OcSimConfig(SimConfig);

/// Opaque list of 5x5 kernels.
pub struct OcKernelBank(Vec<Kernel25>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard<F>(f: F) -> OcStatus
where
    F: FnOnce() -> Result<(), (OcStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OcStatus::Panic
        }
    }
}

fn lift(e: Error) -> (OcStatus, String) {
    (OcStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (OcStatus, String) {
    (OcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn patch<'a>(p: *const f64, what: &str) -> Result<&'a [f64; PATCH_LEN], (OcStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(&*(p as *const [f64; PATCH_LEN]))
}

unsafe fn fragment(p: *const f64) -> Result<Fragment25, (OcStatus, String)> {
    Fragment25::new(*patch(p, "fragment")?).map_err(lift)
}

unsafe fn kernel(p: *const f64) -> Result<Kernel25, (OcStatus, String)> {
    Kernel25::from_values(*patch(p, "kernel")?, 0.0, 0.0, 1.0).map_err(lift)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn oc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// New settings with library defaults. Release with [`oc_sim_config_free`].
#[no_mangle]
pub extern "C" fn oc_sim_config_new() -> *mut OcSimConfig {
    Box::into_raw(Box::new(OcSimConfig(SimConfig::default())))
}

/// # Safety
/// `cfg` must come from [`oc_sim_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oc_sim_config_free(cfg: *mut OcSimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Sets a numeric field: `dt`, `t_end`, `t_del`, `t_int`, `tau_rise`,
/// `tau_leak` or `amplitude`. The updated settings must validate.
///
/// # Safety
/// `cfg` must be a live handle and `key` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn oc_sim_config_set(
    cfg: *mut OcSimConfig,
    key: *const c_char,
    value: f64,
) -> OcStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        if key.is_null() {
            return Err(null("key"));
        }
        let key = CStr::from_ptr(key)
            .to_str()
            .map_err(|_| (OcStatus::Parameter, "key is not UTF-8".to_string()))?;
        let mut next = cfg.0.clone();
        let slot = match key {
            "dt" => &mut next.dt,
            "t_end" => &mut next.t_end,
            "t_del" => &mut next.t_del,
            "t_int" => &mut next.t_int,
            "tau_rise" => &mut next.tau_rise,
            "tau_leak" => &mut next.tau_leak,
            "amplitude" => &mut next.amplitude,
            other => return Err((OcStatus::Parameter, format!("unknown key '{other}'"))),
        };
        *slot = value;
        next.validate().map_err(lift)?;
        cfg.0 = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn oc_sim_config_set_seed(cfg: *mut OcSimConfig, seed: u64) -> OcStatus {
    guard(|| {
        cfg.as_mut().ok_or_else(|| null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// `mode` 0 = uniform random phases, 1 = ring-state quantized phases.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn oc_sim_config_set_init_mode(cfg: *mut OcSimConfig, mode: u32) -> OcStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.init_mode = match mode {
            0 => InitMode::UniformRandom,
            1 => InitMode::IcQuantized,
            m => return Err((OcStatus::Parameter, format!("unknown init mode {m}"))),
        };
        Ok(())
    })
}

/// Detector sampling instant in ns, or NaN for a null handle.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oc_sim_config_sample_time(cfg: *const OcSimConfig) -> f64 {
    cfg.as_ref().map_or(f64::NAN, |c| c.0.sample_time())
}

/// Writes the 25 values of a Gabor kernel into `out`.
///
/// # Safety
/// `out` must point to 25 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn oc_gabor_kernel(theta_deg: f64, k: f64, sigma: f64, out: *mut f64) -> OcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let kern = gabor_kernel(theta_deg, k, sigma).map_err(lift)?;
        ptr::copy_nonoverlapping(kern.values().as_ptr(), out, PATCH_LEN);
        Ok(())
    })
}

/// Builds the orientation × k filter bank; null on error.
///
/// # Safety
/// `orientations` and `ks` must point to `n_orientations` and `n_ks` doubles.
#[no_mangle]
pub unsafe extern "C" fn oc_filter_bank_new(
    orientations: *const f64,
    n_orientations: usize,
    ks: *const f64,
    n_ks: usize,
    sigma: f64,
) -> *mut OcKernelBank {
    let mut bank = ptr::null_mut();
    let status = guard(|| {
        if orientations.is_null() || ks.is_null() {
            return Err(null("list"));
        }
        let o = std::slice::from_raw_parts(orientations, n_orientations);
        let k = std::slice::from_raw_parts(ks, n_ks);
        let kernels = make_filter_bank(o, k, sigma).map_err(lift)?;
        bank = Box::into_raw(Box::new(OcKernelBank(kernels)));
        Ok(())
    });
    if status == OcStatus::Ok {
        bank
    } else {
        ptr::null_mut()
    }
}

/// # Safety
/// `bank` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oc_filter_bank_len(bank: *const OcKernelBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.len())
}

/// Copies kernel `index` into `out` (25 doubles).
///
/// # Safety
/// `bank` must be a live handle and `out` point to 25 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn oc_filter_bank_kernel(
    bank: *const OcKernelBank,
    index: usize,
    out: *mut f64,
) -> OcStatus {
    guard(|| {
        let bank = bank.as_ref().ok_or_else(|| null("bank"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let kern = bank.0.get(index).ok_or_else(|| {
            (OcStatus::Range, format!("kernel {index} not in bank of {}", bank.0.len()))
        })?;
        ptr::copy_nonoverlapping(kern.values().as_ptr(), out, PATCH_LEN);
        Ok(())
    })
}

/// # Safety
/// `bank` must come from [`oc_filter_bank_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oc_filter_bank_free(bank: *mut OcKernelBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// # Safety
/// `fragment` and `kernel` must point to 25 doubles in [-1, 1]; `out` to one.
#[no_mangle]
pub unsafe extern "C" fn oc_ideal_dot(fragment_ptr: *const f64, kernel_ptr: *const f64, out: *mut f64) -> OcStatus {
    guard(|| {
        let f = fragment(fragment_ptr)?;
        let k = kernel(kernel_ptr)?;
        *out.as_mut().ok_or_else(|| null("out"))? = ideal_dot(&f, &k);
        Ok(())
    })
}

/// IDAC codes (0..=20) of the pixel-wise differences.
///
/// # Safety
/// `fragment` and `kernel` must point to 25 doubles; `out_codes` to 25 bytes.
#[no_mangle]
pub unsafe extern "C" fn oc_encode_differences(
    fragment_ptr: *const f64,
    kernel_ptr: *const f64,
    out_codes: *mut u8,
) -> OcStatus {
    guard(|| {
        let f = fragment(fragment_ptr)?;
        let k = kernel(kernel_ptr)?;
        if out_codes.is_null() {
            return Err(null("out_codes"));
        }
        let codes = encode_differences(&f, &k);
        ptr::copy_nonoverlapping(codes.codes().as_ptr(), out_codes, PATCH_LEN);
        Ok(())
    })
}

/// One inference with the stage-preset frequency calibration.
///
/// # Safety
/// Patches must point to 25 doubles, `cfg` must be a live handle and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn oc_run_inference(
    fragment_ptr: *const f64,
    kernel_ptr: *const f64,
    stages: u32,
    coupling_k: f64,
    cfg: *const OcSimConfig,
    out: *mut OcDomResult,
) -> OcStatus {
    guard(|| {
        let f = fragment(fragment_ptr)?;
        let k = kernel(kernel_ptr)?;
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let calib = FreqCalib::preset(stages).map_err(lift)?;
        let res = run_inference(&f, &k, &calib, coupling_k, &cfg.0).map_err(lift)?;
        *out = OcDomResult {
            dom: res.dom,
            sample_time: res.sample_time,
            r_final: res.r_final,
            ideal_dot: res.ideal_dot,
            seed: res.seed,
        };
        Ok(())
    })
}

/// Runs one inference and writes its detector trace CSV to `path`.
///
/// # Safety
/// As [`oc_run_inference`]; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn oc_write_trace_csv(
    fragment_ptr: *const f64,
    kernel_ptr: *const f64,
    stages: u32,
    coupling_k: f64,
    cfg: *const OcSimConfig,
    record_every: usize,
    path: *const c_char,
) -> OcStatus {
    guard(|| {
        let f = fragment(fragment_ptr)?;
        let k = kernel(kernel_ptr)?;
        let cfg = cfg.as_ref().ok_or_else(|| null("config"))?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = PathBuf::from(
            CStr::from_ptr(path)
                .to_str()
                .map_err(|_| (OcStatus::Parameter, "path is not UTF-8".to_string()))?,
        );
        let calib = FreqCalib::preset(stages).map_err(lift)?;
        let (_, trace) =
            run_inference_traced(&f, &k, &calib, coupling_k, &cfg.0, record_every).map_err(lift)?;
        trace.save_csv(&path, None).map_err(lift)
    })
}

/// Least-squares fit of `ys` against `xs`.
///
/// # Safety
/// `xs` and `ys` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn oc_linear_fit(xs: *const f64, ys: *const f64, n: usize, out: *mut OcFitResult) -> OcStatus {
    guard(|| {
        if xs.is_null() || ys.is_null() {
            return Err(null("data"));
        }
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let fit = linear_fit(std::slice::from_raw_parts(xs, n), std::slice::from_raw_parts(ys, n))
            .map_err(lift)?;
        *out = OcFitResult {
            slope: fit.slope,
            intercept: fit.intercept,
            r2: fit.r2,
            degenerate: fit.degenerate as u8,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn oc_energy_model_default() -> OcEnergyModel {
    let m = EnergyModel::default();
    OcEnergyModel {
        n_osc: m.n_osc,
        p_osc: m.p_osc,
        p_pd: m.p_pd,
        t_inf: m.t_inf,
    }
}

/// Energy per inference in picojoules.
///
/// # Safety
/// `model` must be readable and `out_pj` writable.
#[no_mangle]
pub unsafe extern "C" fn oc_energy_per_inference(model: *const OcEnergyModel, out_pj: *mut f64) -> OcStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out_pj.as_mut().ok_or_else(|| null("out_pj"))?;
        let model = EnergyModel {
            n_osc: m.n_osc,
            p_osc: m.p_osc,
            p_pd: m.p_pd,
            t_inf: m.t_inf,
        };
        model.validate().map_err(lift)?;
        *out = energy_per_inference(&model);
        Ok(())
    })
}
