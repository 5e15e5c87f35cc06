//! C interface to flowlag.
//!
//! Every function returns a [`FlowlagStatus`]; on failure the message is
//! available from [`flowlag_last_error`] on the same thread. Enumerated
//! arguments are plain `int32_t` codes (see the `FLOWLAG_PATH_*`,
//! `FLOWLAG_SHAPE_*` and `FLOWLAG_METHOD_*` constants) so that an out-of-range
//! value is an error rather than undefined behaviour. Arrays are row-major
//! `n x dim` buffers of doubles owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use flowlag::diagnostics::{frechet_gaussian, MomentStats};
use flowlag::experiment::load_checkpoint;
use flowlag::nn::AnyMlp;
use flowlag::oracle::{GaussianFlowSpec, OracleField};
use flowlag::solver::{
    calibrate_s_start, integrate, Method, ScaleSchedule, ScheduleShape, SolverSpec,
};
use flowlag::{Error, Interpolant, PathKind, VelocityField};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowlagStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid configuration or enumerated code.
    Config = 2,
    Assertion = 3,
    /// Numerical or I/O failure.
    Runtime = 4,
    /// Bad dimensions or an argument outside its domain.
    InvalidArgument = 5,
    Panic = 6,
}

pub const FLOWLAG_PATH_LINEAR: i32 = 0;
pub const FLOWLAG_PATH_VP: i32 = 1;
pub const FLOWLAG_PATH_GVP: i32 = 2;

pub const FLOWLAG_SHAPE_CONSTANT_ONE: i32 = 0;
pub const FLOWLAG_SHAPE_LINEAR: i32 = 1;
pub const FLOWLAG_SHAPE_COSINE: i32 = 2;
pub const FLOWLAG_SHAPE_QUAD_IN: i32 = 3;
pub const FLOWLAG_SHAPE_QUAD_OUT: i32 = 4;

pub const FLOWLAG_METHOD_EULER: i32 = 0;
pub const FLOWLAG_METHOD_HEUN: i32 = 1;
pub const FLOWLAG_METHOD_EULER_MARUYAMA: i32 = 2;

/// A network loaded from a checkpoint file.
pub struct FlowlagNet {
    net: AnyMlp,
    path: PathKind,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> FlowlagStatus {
    match e {
        Error::Config(_) | Error::Json(_) => FlowlagStatus::Config,
        Error::Assertion(_) => FlowlagStatus::Assertion,
        Error::Domain { .. }
        | Error::Shape { .. }
        | Error::UnsupportedPath { .. }
        | Error::Input(_)
        | Error::Usage(_) => FlowlagStatus::InvalidArgument,
        _ => FlowlagStatus::Runtime,
    }
}

enum Failure {
    Null(&'static str),
    Lab(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lab(e)
    }
}

type FfiResult<T> = std::result::Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> FlowlagStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlowlagStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            FlowlagStatus::NullPointer
        }
        Ok(Err(Failure::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FlowlagStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> FfiResult<&'a [f64]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> FfiResult<&'a mut [f64]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &'static str) -> FfiResult<()> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(value);
    Ok(())
}

fn checked_len(n: usize, dim: usize) -> FfiResult<usize> {
    n.checked_mul(dim)
        .ok_or_else(|| Failure::Lab(Error::Input(format!("{n} x {dim} overflows"))))
}

fn path_of(code: i32) -> FfiResult<PathKind> {
    Ok(match code {
        FLOWLAG_PATH_LINEAR => PathKind::Linear,
        FLOWLAG_PATH_VP => PathKind::Vp,
        FLOWLAG_PATH_GVP => PathKind::Gvp,
        _ => return Err(Error::Config(format!("unknown path code {code}")).into()),
    })
}

fn shape_of(code: i32) -> FfiResult<ScheduleShape> {
    Ok(match code {
        FLOWLAG_SHAPE_CONSTANT_ONE => ScheduleShape::ConstantOne,
        FLOWLAG_SHAPE_LINEAR => ScheduleShape::Linear,
        FLOWLAG_SHAPE_COSINE => ScheduleShape::Cosine,
        FLOWLAG_SHAPE_QUAD_IN => ScheduleShape::QuadIn,
        FLOWLAG_SHAPE_QUAD_OUT => ScheduleShape::QuadOut,
        _ => return Err(Error::Config(format!("unknown schedule shape code {code}")).into()),
    })
}

fn method_of(code: i32) -> FfiResult<Method> {
    Ok(match code {
        FLOWLAG_METHOD_EULER => Method::Euler,
        FLOWLAG_METHOD_HEUN => Method::Heun,
        FLOWLAG_METHOD_EULER_MARUYAMA => Method::EulerMaruyama,
        _ => return Err(Error::Config(format!("unknown method code {code}")).into()),
    })
}

fn schedule_of(shape: i32, s_start: f64, s_end: f64) -> FfiResult<ScaleSchedule> {
    match shape_of(shape)? {
        ScheduleShape::ConstantOne => Ok(ScaleSchedule::identity()),
        s => Ok(ScaleSchedule::new(s, s_start, s_end)?),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn flowlag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next flowlag call on the same thread.
#[no_mangle]
pub extern "C" fn flowlag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Closed-form optimal velocity for a centred Gaussian target with standard
/// deviation `data_std` in every coordinate.
///
/// # Safety
/// `x` and `out` must point to `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn flowlag_oracle_velocity(
    path: i32,
    dim: usize,
    data_std: f64,
    x: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let len = checked_len(n, dim)?;
        let x = slice(x, len, "x")?;
        let out = slice_mut(out, len, "out")?;
        let field = OracleField::new(
            GaussianFlowSpec::new(dim, data_std)?,
            Interpolant::new(path_of(path)?),
        );
        field.eval_batch(x, t, out)?;
        Ok(())
    })
}

/// Velocity multiplier gamma(t) of a scale schedule.
///
/// # Safety
/// `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn flowlag_schedule_gamma(
    shape: i32,
    s_start: f64,
    s_end: f64,
    t: f64,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let g = schedule_of(shape, s_start, s_end)?.gamma(t)?;
        write_out(out, g, "out")
    })
}

/// The `s_start` giving the schedule the requested area for a fixed `s_end`.
///
/// # Safety
/// `out` must point to one double.
#[no_mangle]
pub unsafe extern "C" fn flowlag_schedule_calibrate(
    shape: i32,
    s_end: f64,
    area: f64,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let s = calibrate_s_start(shape_of(shape)?, s_end, area)?;
        write_out(out, s, "out")
    })
}

/// Loads a checkpoint file. Release the handle with [`flowlag_net_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlag_net_load(
    path: *const c_char,
    out: *mut *mut FlowlagNet,
) -> FlowlagStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::Input("checkpoint path is not UTF-8".into()))?;
        let (ckpt, cfg) = load_checkpoint(Path::new(path))?;
        let handle = Box::new(FlowlagNet {
            net: ckpt.net,
            path: cfg.path,
        });
        out.write(Box::into_raw(handle));
        Ok(())
    })
}

/// State dimension of a loaded network, or 0 for NULL.
///
/// # Safety
/// `net` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowlag_net_dim(net: *const FlowlagNet) -> usize {
    net.as_ref().map_or(0, |n| n.net.dim())
}

/// # Safety
/// `net` must be a live handle; `x` and `out` must hold `n * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn flowlag_net_forward(
    net: *const FlowlagNet,
    x: *const f64,
    n: usize,
    t: f64,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let net = net.as_ref().ok_or(Failure::Null("net"))?;
        let len = checked_len(n, net.net.dim())?;
        net.net
            .eval_batch(slice(x, len, "x")?, t, slice_mut(out, len, "out")?)?;
        Ok(())
    })
}

/// Integrates `n_particles` from noise to t = 1 and writes the terminal
/// states. The SDE method uses the path the network was trained on.
///
/// # Safety
/// `net` must be a live handle and `out` must hold `n_particles * dim`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn flowlag_sample(
    net: *const FlowlagNet,
    method: i32,
    nfe: usize,
    shape: i32,
    s_start: f64,
    s_end: f64,
    n_particles: usize,
    seed: u64,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let net = net.as_ref().ok_or(Failure::Null("net"))?;
        let len = checked_len(n_particles, net.net.dim())?;
        let out = slice_mut(out, len, "out")?;
        let spec = SolverSpec::new(method_of(method)?, nfe)
            .with_schedule(schedule_of(shape, s_start, s_end)?)
            .with_checkpoints(vec![1.0])
            .with_path(net.path);
        spec.validate()?;
        let traj = integrate(&net.net, &spec, n_particles, seed)?;
        out.copy_from_slice(traj.terminal());
        Ok(())
    })
}

/// Releases a network handle. NULL is ignored.
///
/// # Safety
/// `net` must be NULL or a handle from [`flowlag_net_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn flowlag_net_free(net: *mut FlowlagNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Frechet distance between two Gaussians given by mean vectors and
/// row-major `dim x dim` covariances.
///
/// # Safety
/// Means must hold `dim` doubles, covariances `dim * dim`, `out` one.
#[no_mangle]
pub unsafe extern "C" fn flowlag_frechet(
    dim: usize,
    mean_a: *const f64,
    cov_a: *const f64,
    mean_b: *const f64,
    cov_b: *const f64,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let sq = checked_len(dim, dim)?;
        let a = MomentStats::exact(
            slice(mean_a, dim, "mean_a")?.to_vec(),
            slice(cov_a, sq, "cov_a")?.to_vec(),
        )?;
        let b = MomentStats::exact(
            slice(mean_b, dim, "mean_b")?.to_vec(),
            slice(cov_b, sq, "cov_b")?.to_vec(),
        )?;
        write_out(out, frechet_gaussian(&a, &b)?, "out")
    })
}

/// Frechet distance between the Gaussian fits of two sample sets.
///
/// # Safety
/// `x` must hold `n_x * dim` doubles, `y` `n_y * dim`, `out` one.
#[no_mangle]
pub unsafe extern "C" fn flowlag_frechet_samples(
    dim: usize,
    x: *const f64,
    n_x: usize,
    y: *const f64,
    n_y: usize,
    out: *mut f64,
) -> FlowlagStatus {
    guard(|| {
        let a = MomentStats::from_samples(slice(x, checked_len(n_x, dim)?, "x")?, dim)?;
        let b = MomentStats::from_samples(slice(y, checked_len(n_y, dim)?, "y")?, dim)?;
        write_out(out, frechet_gaussian(&a, &b)?, "out")
    })
}
