//! C ABI over the `ssc` engine.
//!
//! Graphs are opaque handles created by `ssc_graph_*` constructors and released
//! with [`ssc_graph_free`]. Every fallible call returns an [`SscStatus`]; on
//! failure the message is available from [`ssc_last_error_message`] until the
//! next failing call on the same thread. Dense matrices are row-major `double`
//! buffers owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::ArrayView2;
use ssc::filters::FilterSpec;
use ssc::graph::{build_bipartite, sym_normalize, NormalizedAdjacency};
use ssc::sparse::SparseMatrix;
use ssc::spectral::{estimate_factors, make_shifted_operator};
use ssc::SscError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SscStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Parse = 5,
    Numerical = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SscFilterKind {
    Lightgcn = 0,
    Jgcf = 1,
}

/// Shifting/scaling factors and the spectrum edges they map onto `[-1, 1]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SscFactors {
    pub mu: f64,
    pub delta: f64,
    pub lambda_min_est: f64,
    pub lambda_max: f64,
}

/// Opaque normalized adjacency.
pub struct SscGraph {
    adj: NormalizedAdjacency,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &SscError) -> SscStatus {
    match e {
        SscError::DimensionMismatch(_) => SscStatus::DimensionMismatch,
        SscError::Io(_) | SscError::MissingFile(_) => SscStatus::Io,
        SscError::Parse { .. } | SscError::Format { .. } | SscError::Json(_) => SscStatus::Parse,
        SscError::NonFiniteLoss { .. } | SscError::NanSimilarity(..) | SscError::ZeroVector => SscStatus::Numerical,
        _ => SscStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (SscStatus, String)>) -> SscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SscStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SscStatus::Internal
        }
    }
}

fn lift(e: SscError) -> (SscStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SscStatus, String) {
    (SscStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], (SscStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn publish(graph: SscGraph, out: *mut *mut SscGraph) {
    // SAFETY: callers check `out` for null before building the graph.
    unsafe { *out = Box::into_raw(Box::new(graph)) };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call.
#[no_mangle]
pub extern "C" fn ssc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ssc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the normalized bipartite graph of `len` `(users[k], items[k])` pairs.
///
/// # Safety
/// `users` and `items` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_graph_from_pairs(
    num_users: usize,
    num_items: usize,
    users: *const usize,
    items: *const usize,
    len: usize,
    out: *mut *mut SscGraph,
) -> SscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let users = slice(users, len, "users")?;
        let items = slice(items, len, "items")?;
        let pairs: Vec<(usize, usize)> = users.iter().copied().zip(items.iter().copied()).collect();
        let a = build_bipartite(&pairs, num_users, num_items).map_err(lift)?;
        let adj = sym_normalize(&a, num_users).map_err(lift)?;
        publish(SscGraph { adj }, out);
        Ok(())
    })
}

/// Normalizes an `n × n` symmetric nonnegative adjacency given in CSR form
/// (`row_offsets` has `n + 1` entries, the other arrays `nnz`). Nodes
/// `0..num_users` are users.
///
/// # Safety
/// The arrays must hold the stated number of readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_graph_from_csr(
    n: usize,
    num_users: usize,
    row_offsets: *const usize,
    col_indices: *const usize,
    values: *const f64,
    nnz: usize,
    out: *mut *mut SscGraph,
) -> SscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let offsets = slice(row_offsets, n + 1, "row_offsets")?.to_vec();
        let cols = slice(col_indices, nnz, "col_indices")?.to_vec();
        let vals = slice(values, nnz, "values")?.to_vec();
        let m = SparseMatrix::try_new(n, n, offsets, cols, vals).map_err(lift)?;
        if !m.is_symmetric(1e-12) {
            return Err((SscStatus::InvalidArgument, "adjacency is not symmetric".into()));
        }
        let adj = sym_normalize(&m, num_users).map_err(lift)?;
        publish(SscGraph { adj }, out);
        Ok(())
    })
}

/// Loads a normalized adjacency saved by `ssc prepare` (`adjacency.csr`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_graph_load(path: *const c_char, num_users: usize, out: *mut *mut SscGraph) -> SscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (SscStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let matrix = SparseMatrix::load(path).map_err(lift)?;
        if num_users > matrix.rows() {
            return Err((SscStatus::DimensionMismatch, "more users than nodes".into()));
        }
        let num_items = matrix.rows() - num_users;
        let degrees = matrix.row_sums();
        publish(
            SscGraph {
                adj: NormalizedAdjacency {
                    matrix,
                    degrees,
                    num_users,
                    num_items,
                },
            },
            out,
        );
        Ok(())
    })
}

/// Releases a graph. Null is ignored.
///
/// # Safety
/// `graph` must come from an `ssc_graph_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ssc_graph_free(graph: *mut SscGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of nodes, or 0 for null.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssc_graph_num_nodes(graph: *const SscGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.adj.matrix.rows())
}

/// Stored nonzeros, or 0 for null.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ssc_graph_nnz(graph: *const SscGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.adj.matrix.nnz())
}

/// Estimates `mu` and `delta` with `iterations` power steps from a seeded start.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ssc_estimate_factors(
    graph: *const SscGraph,
    iterations: usize,
    seed: u64,
    out: *mut SscFactors,
) -> SscStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let f = estimate_factors(&g.adj, iterations, seed);
        *out = SscFactors {
            mu: f.mu,
            delta: f.delta,
            lambda_min_est: f.lambda_min_est,
            lambda_max: f.lambda_max,
        };
        Ok(())
    })
}

/// `out = g((Ã − mu I) / delta) E` for a `num_nodes × dim` row-major `E`.
/// `a` and `b` are ignored for LightGCN.
///
/// # Safety
/// `embeddings` and `out` must each hold `num_nodes * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn ssc_propagate(
    graph: *const SscGraph,
    kind: SscFilterKind,
    num_layers: usize,
    a: f64,
    b: f64,
    mu: f64,
    delta: f64,
    embeddings: *const f64,
    dim: usize,
    out: *mut f64,
) -> SscStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        let n = g.adj.matrix.rows();
        let len = n * dim;
        let e = slice(embeddings, len, "embeddings")?;
        if out.is_null() && len > 0 {
            return Err(null("out"));
        }
        let filter = match kind {
            SscFilterKind::Lightgcn => FilterSpec::lightgcn(num_layers),
            SscFilterKind::Jgcf => FilterSpec::jgcf(num_layers, a, b),
        };
        filter.validate().map_err(lift)?;
        let view = ArrayView2::from_shape((n, dim), e).map_err(|e| (SscStatus::DimensionMismatch, e.to_string()))?;
        let op = make_shifted_operator(&g.adj, mu, delta).map_err(lift)?;
        let h = filter.propagate(&op, view).map_err(lift)?;
        if len > 0 {
            let dst = std::slice::from_raw_parts_mut(out, len);
            dst.iter_mut().zip(h.iter()).for_each(|(d, &s)| *d = s);
        }
        Ok(())
    })
}
