//! C ABI over the tnkde engine.
//!
//! Every call returns a [`TnkdeStatus`]. On failure the message is kept per
//! thread and can be read with [`tnkde_last_error`] until the next call.
//! Densities and lixel metadata use the order of `generate_lixels`: edges in
//! graph file order, lixels by index within each edge.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tnkde::engine::{compute_density, Method, QuerySpec, RunOptions};
use tnkde::events::EventStores;
use tnkde::io::{read_events, read_graph};
use tnkde::kernels::{KernelConfig, KernelKind};
use tnkde::network::{generate_lixels, RoadNetwork};
use tnkde::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnkdeStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad parameter, kernel or method.
    InvalidArgument = 2,
    /// Malformed graph or event data.
    InvalidInput = 3,
    Io = 4,
    /// `capacity` is smaller than the result; `written` holds the size needed.
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnkdeMethod {
    Sps = 0,
    Ada = 1,
    Rfs = 2,
    Drfs = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnkdeKernel {
    Triangular = 0,
    Epanechnikov = 1,
    Exponential = 2,
    Cosine = 3,
    Constant = 4,
}

/// One density query. `depth` and `quantize` of 0 mean unset.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TnkdeQuery {
    pub t: i64,
    pub b_s: f64,
    pub b_t: f64,
    pub lixel_length: f64,
    pub method: TnkdeMethod,
    pub spatial: TnkdeKernel,
    pub temporal: TnkdeKernel,
    pub lixel_sharing: bool,
    pub depth: u32,
    pub quantize: u32,
    /// Worker threads; 0 uses all cores.
    pub threads: u32,
}

/// Opaque handle holding a loaded network and its events.
pub struct TnkdeContext {
    net: RoadNetwork,
    stores: EventStores,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TnkdeStatus {
    match e {
        Error::Io { .. } => TnkdeStatus::Io,
        Error::UnsupportedKernel(..)
        | Error::InvalidParameter(..)
        | Error::InconsistentBatch(..)
        | Error::IndexMismatch => TnkdeStatus::InvalidArgument,
        _ => TnkdeStatus::InvalidInput,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TnkdeStatus, String)>) -> TnkdeStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TnkdeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TnkdeStatus::Panic
        }
    }
}

fn lift(e: Error) -> (TnkdeStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (TnkdeStatus, String) {
    (TnkdeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, (TnkdeStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (TnkdeStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

fn kernel(k: TnkdeKernel) -> KernelKind {
    match k {
        TnkdeKernel::Triangular => KernelKind::Triangular,
        TnkdeKernel::Epanechnikov => KernelKind::Epanechnikov,
        TnkdeKernel::Exponential => KernelKind::Exponential,
        TnkdeKernel::Cosine => KernelKind::Cosine,
        TnkdeKernel::Constant => KernelKind::Constant,
    }
}

fn spec_of(q: &TnkdeQuery) -> QuerySpec {
    QuerySpec {
        t: q.t,
        b_s: q.b_s,
        b_t: q.b_t,
        g: q.lixel_length,
        method: match q.method {
            TnkdeMethod::Sps => Method::Sps,
            TnkdeMethod::Ada => Method::Ada,
            TnkdeMethod::Rfs => Method::Rfs,
            TnkdeMethod::Drfs => Method::Drfs,
        },
        lixel_sharing: q.lixel_sharing,
        depth: (q.depth > 0).then_some(q.depth),
        quantize: (q.quantize > 0).then_some(q.quantize),
        kernels: KernelConfig {
            spatial: kernel(q.spatial),
            temporal: kernel(q.temporal),
        },
    }
}

/// Loads a graph CSV and an event CSV. The handle must be released with
/// [`tnkde_context_free`].
#[no_mangle]
pub unsafe extern "C" fn tnkde_context_open(
    graph_path: *const c_char,
    events_path: *const c_char,
    out: *mut *mut TnkdeContext,
) -> TnkdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let net = read_graph(path_arg(graph_path, "graph_path")?).map_err(lift)?;
        let stores = read_events(path_arg(events_path, "events_path")?, &net).map_err(lift)?;
        *out = Box::into_raw(Box::new(TnkdeContext { net, stores }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn tnkde_context_free(ctx: *mut TnkdeContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

#[no_mangle]
pub unsafe extern "C" fn tnkde_edge_count(ctx: *const TnkdeContext) -> usize {
    ctx.as_ref().map_or(0, |c| c.net.edge_count())
}

#[no_mangle]
pub unsafe extern "C" fn tnkde_event_count(ctx: *const TnkdeContext) -> usize {
    ctx.as_ref().map_or(0, |c| c.stores.total_events())
}

/// Number of lixels of length `lixel_length`.
#[no_mangle]
pub unsafe extern "C" fn tnkde_lixel_count(
    ctx: *const TnkdeContext,
    lixel_length: f64,
    count: *mut usize,
) -> TnkdeStatus {
    guard(|| {
        let c = ctx.as_ref().ok_or_else(|| null("ctx"))?;
        let n = count.as_mut().ok_or_else(|| null("count"))?;
        *n = generate_lixels(&c.net, lixel_length).map_err(lift)?.len();
        Ok(())
    })
}

/// Edge index and center offset of every lixel. Either output may be null.
#[no_mangle]
pub unsafe extern "C" fn tnkde_lixels(
    ctx: *const TnkdeContext,
    lixel_length: f64,
    edges: *mut u32,
    centers: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TnkdeStatus {
    guard(|| {
        let c = ctx.as_ref().ok_or_else(|| null("ctx"))?;
        let w = written.as_mut().ok_or_else(|| null("written"))?;
        let lixels = generate_lixels(&c.net, lixel_length).map_err(lift)?;
        *w = lixels.len();
        if capacity < lixels.len() {
            return Err((TnkdeStatus::BufferTooSmall, format!("need room for {} lixels", lixels.len())));
        }
        for (i, l) in lixels.iter().enumerate() {
            if !edges.is_null() {
                *edges.add(i) = l.edge;
            }
            if !centers.is_null() {
                *centers.add(i) = l.center;
            }
        }
        Ok(())
    })
}

/// Writes one density per lixel into `out`.
#[no_mangle]
pub unsafe extern "C" fn tnkde_compute(
    ctx: *const TnkdeContext,
    query: *const TnkdeQuery,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TnkdeStatus {
    guard(|| {
        let c = ctx.as_ref().ok_or_else(|| null("ctx"))?;
        let q = query.as_ref().ok_or_else(|| null("query"))?;
        let w = written.as_mut().ok_or_else(|| null("written"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = spec_of(q);
        let needed = generate_lixels(&c.net, spec.g).map_err(lift)?.len();
        *w = needed;
        if capacity < needed {
            return Err((TnkdeStatus::BufferTooSmall, format!("need room for {needed} densities")));
        }
        let opts = RunOptions {
            threads: (q.threads > 0).then_some(q.threads as usize),
        };
        let field = compute_density(&c.net, &c.stores, &spec, &opts).map_err(lift)?;
        std::slice::from_raw_parts_mut(out, needed).copy_from_slice(&field.density);
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call from the same thread.
#[no_mangle]
pub extern "C" fn tnkde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tnkde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
