//! C ABI surface: opaque handles, integer error codes, out-parameters.
//!
//! Every function returns a `PstgcnStatus`; `pstgcn_last_error_message`
//! retrieves a thread-local description of the most recent failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use pstgcn::complexity::{analyze, ComplexityOptions, MacConvention};
use pstgcn::graph::{build_partitions, SkeletonTopology};
use pstgcn::net::ModelDescriptor;

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PstgcnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidTopology = 3,
    InvalidDescriptor = 4,
    IoError = 5,
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &pstgcn::Error) -> PstgcnStatus {
    use pstgcn::Error::*;
    match e {
        InvalidTopology(_) | DisconnectedGraph { .. } | MissingParents => {
            PstgcnStatus::InvalidTopology
        }
        InvalidConfig(_) | BadFormat(_) | ShapeMismatch { .. } => PstgcnStatus::InvalidDescriptor,
        Io(_) => PstgcnStatus::IoError,
        _ => PstgcnStatus::InternalError,
    }
}

fn fail(e: pstgcn::Error) -> PstgcnStatus {
    let code = classify(&e);
    set_error(e.to_string());
    code
}

/// Opaque skeleton topology handle.
pub struct PstgcnTopology(SkeletonTopology);

/// Opaque model descriptor handle.
pub struct PstgcnDescriptor(ModelDescriptor);

unsafe fn cstr_arg<'a>(s: *const c_char) -> Result<&'a str, PstgcnStatus> {
    if s.is_null() {
        set_error("null string argument".into());
        return Err(PstgcnStatus::NullArgument);
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        PstgcnStatus::InvalidUtf8
    })
}

/// Message describing the most recent error on this thread, or NULL.
/// The pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn pstgcn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(c) => c.as_ptr(),
        None => ptr::null(),
    })
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn pstgcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Build a preset topology (`ntu25`, `openpose18`, `toy11`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_topology_preset(
    name: *const c_char,
    out: *mut *mut PstgcnTopology,
) -> PstgcnStatus {
    if out.is_null() {
        set_error("null out pointer".into());
        return PstgcnStatus::NullArgument;
    }
    let name = match cstr_arg(name) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match SkeletonTopology::preset(name) {
        Ok(t) => {
            *out = Box::into_raw(Box::new(PstgcnTopology(t)));
            PstgcnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Load a topology from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_topology_load(
    path: *const c_char,
    out: *mut *mut PstgcnTopology,
) -> PstgcnStatus {
    if out.is_null() {
        set_error("null out pointer".into());
        return PstgcnStatus::NullArgument;
    }
    let path = match cstr_arg(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match SkeletonTopology::load(Path::new(path)) {
        Ok(t) => {
            *out = Box::into_raw(Box::new(PstgcnTopology(t)));
            PstgcnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of joints in the topology.
///
/// # Safety
/// `topology` must come from a `pstgcn_topology_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_topology_joint_count(
    topology: *const PstgcnTopology,
    out: *mut usize,
) -> PstgcnStatus {
    if topology.is_null() || out.is_null() {
        set_error("null argument".into());
        return PstgcnStatus::NullArgument;
    }
    *out = (*topology).0.joint_count;
    PstgcnStatus::Ok
}

/// Validate the topology, including connectivity.
///
/// # Safety
/// `topology` must come from a `pstgcn_topology_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_topology_validate(
    topology: *const PstgcnTopology,
) -> PstgcnStatus {
    if topology.is_null() {
        set_error("null argument".into());
        return PstgcnStatus::NullArgument;
    }
    match (*topology)
        .0
        .validate()
        .and_then(|_| build_partitions(&(*topology).0).map(|_| ()))
    {
        Ok(()) => PstgcnStatus::Ok,
        Err(e) => fail(e),
    }
}

/// Release a topology handle; NULL is allowed.
///
/// # Safety
/// `topology` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_topology_free(topology: *mut PstgcnTopology) {
    if !topology.is_null() {
        drop(Box::from_raw(topology));
    }
}

/// Load a model descriptor from a TOML file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_descriptor_load(
    path: *const c_char,
    out: *mut *mut PstgcnDescriptor,
) -> PstgcnStatus {
    if out.is_null() {
        set_error("null out pointer".into());
        return PstgcnStatus::NullArgument;
    }
    let path = match cstr_arg(path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match ModelDescriptor::load(Path::new(path)).and_then(|d| d.validate().map(|_| d)) {
        Ok(d) => {
            *out = Box::into_raw(Box::new(PstgcnDescriptor(d)));
            PstgcnStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of layers in the descriptor.
///
/// # Safety
/// `descriptor` must come from `pstgcn_descriptor_load`.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_descriptor_layer_count(
    descriptor: *const PstgcnDescriptor,
    out: *mut usize,
) -> PstgcnStatus {
    if descriptor.is_null() || out.is_null() {
        set_error("null argument".into());
        return PstgcnStatus::NullArgument;
    }
    *out = (*descriptor).0.layers.len();
    PstgcnStatus::Ok
}

/// Release a descriptor handle; NULL is allowed.
///
/// # Safety
/// `descriptor` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_descriptor_free(descriptor: *mut PstgcnDescriptor) {
    if !descriptor.is_null() {
        drop(Box::from_raw(descriptor));
    }
}

/// Parameter and FLOP totals for a descriptor at input length `frames`.
/// `flops_per_mac` must be 1 or 2.
///
/// # Safety
/// `descriptor` must come from `pstgcn_descriptor_load`; the out
/// pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pstgcn_complexity(
    descriptor: *const PstgcnDescriptor,
    frames: usize,
    flops_per_mac: u32,
    out_params: *mut u64,
    out_flops: *mut u64,
) -> PstgcnStatus {
    if descriptor.is_null() || out_params.is_null() || out_flops.is_null() {
        set_error("null argument".into());
        return PstgcnStatus::NullArgument;
    }
    let convention = match flops_per_mac {
        1 => MacConvention::One,
        2 => MacConvention::Two,
        other => {
            set_error(format!("flops_per_mac must be 1 or 2, got {other}"));
            return PstgcnStatus::InvalidDescriptor;
        }
    };
    let opts = ComplexityOptions {
        convention,
        ..Default::default()
    };
    let report = analyze(&(*descriptor).0, frames, opts);
    *out_params = report.total_params;
    *out_flops = report.total_flops;
    PstgcnStatus::Ok
}
