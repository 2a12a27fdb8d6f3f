use std::ffi::{CStr, CString};
use std::ptr;

use ssc_ffi::*;

fn path4_graph() -> *mut SscGraph {
    // Users 0,1 and items 0,1 forming the path u0 - i0 - u1 - i1.
    let users = [0usize, 1, 1];
    let items = [0usize, 0, 1];
    let mut g = ptr::null_mut();
    let status = unsafe { ssc_graph_from_pairs(2, 2, users.as_ptr(), items.as_ptr(), 3, &mut g) };
    assert_eq!(status, SscStatus::Ok);
    assert!(!g.is_null());
    g
}

fn last_error() -> String {
    let p = ssc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn graph_lifecycle() {
    let g = path4_graph();
    unsafe {
        assert_eq!(ssc_graph_num_nodes(g), 4);
        assert_eq!(ssc_graph_nnz(g), 6);
        ssc_graph_free(g);
        ssc_graph_free(ptr::null_mut());
        assert_eq!(ssc_graph_num_nodes(ptr::null()), 0);
    }
}

#[test]
fn bipartite_factors_are_near_identity() {
    let g = path4_graph();
    let mut f = SscFactors::default();
    let status = unsafe { ssc_estimate_factors(g, 100, 42, &mut f) };
    assert_eq!(status, SscStatus::Ok);
    assert!(f.mu.abs() < 1e-6, "{f:?}");
    assert!((f.delta - 1.0).abs() < 1e-6);
    assert_eq!(f.lambda_max, 1.0);
    unsafe { ssc_graph_free(g) };
}

#[test]
fn propagate_matches_core() {
    let g = path4_graph();
    let dim = 3;
    let e: Vec<f64> = (0..4 * dim).map(|k| (k as f64 * 0.37).sin()).collect();
    let mut out = vec![0.0; e.len()];
    let status = unsafe {
        ssc_propagate(g, SscFilterKind::Jgcf, 3, 1.0, 1.0, 0.1, 0.9, e.as_ptr(), dim, out.as_mut_ptr())
    };
    assert_eq!(status, SscStatus::Ok);

    let a = ssc::graph::build_bipartite(&[(0, 0), (1, 0), (1, 1)], 2, 2).unwrap();
    let adj = ssc::graph::sym_normalize(&a, 2).unwrap();
    let op = ssc::spectral::make_shifted_operator(&adj, 0.1, 0.9).unwrap();
    let view = ndarray::ArrayView2::from_shape((4, dim), &e).unwrap();
    let expected = ssc::filters::FilterSpec::jgcf(3, 1.0, 1.0).propagate(&op, view).unwrap();
    assert_eq!(out.as_slice(), expected.as_slice().unwrap());
    unsafe { ssc_graph_free(g) };
}

#[test]
fn errors_set_status_and_message() {
    let mut g = ptr::null_mut();
    let users = [0usize, 5];
    let items = [0usize, 0];
    let status = unsafe { ssc_graph_from_pairs(2, 1, users.as_ptr(), items.as_ptr(), 2, &mut g) };
    assert_ne!(status, SscStatus::Ok);
    assert!(g.is_null());
    assert!(!last_error().is_empty());

    let status = unsafe { ssc_estimate_factors(ptr::null(), 10, 1, ptr::null_mut()) };
    assert_eq!(status, SscStatus::NullPointer);
    assert!(last_error().contains("graph"));

    let g = path4_graph();
    let e = [0.0; 4];
    let mut out = [0.0; 4];
    let status = unsafe {
        ssc_propagate(g, SscFilterKind::Lightgcn, 2, 0.0, 0.0, 0.0, 0.0, e.as_ptr(), 1, out.as_mut_ptr())
    };
    assert_eq!(status, SscStatus::InvalidArgument);
    assert!(last_error().contains("scaling factor"));
    let status = unsafe {
        ssc_propagate(g, SscFilterKind::Jgcf, 2, -1.0, -1.0, 0.0, 1.0, e.as_ptr(), 1, out.as_mut_ptr())
    };
    assert_eq!(status, SscStatus::InvalidArgument);
    unsafe { ssc_graph_free(g) };
}

#[test]
fn csr_input_must_be_symmetric() {
    let offsets = [0usize, 1, 1];
    let cols = [1usize];
    let vals = [1.0];
    let mut g = ptr::null_mut();
    let status = unsafe { ssc_graph_from_csr(2, 1, offsets.as_ptr(), cols.as_ptr(), vals.as_ptr(), 1, &mut g) };
    assert_eq!(status, SscStatus::InvalidArgument);

    let offsets = [0usize, 1, 2];
    let cols = [1usize, 0];
    let vals = [2.0, 2.0];
    let status = unsafe { ssc_graph_from_csr(2, 1, offsets.as_ptr(), cols.as_ptr(), vals.as_ptr(), 2, &mut g) };
    assert_eq!(status, SscStatus::Ok);
    unsafe {
        assert_eq!(ssc_graph_nnz(g), 2);
        ssc_graph_free(g);
    }
}

#[test]
fn load_round_trips_prepared_adjacency() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adjacency.csr");
    let a = ssc::graph::build_bipartite(&[(0, 0), (1, 0), (1, 1)], 2, 2).unwrap();
    ssc::graph::sym_normalize(&a, 2).unwrap().matrix.save(&path).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { ssc_graph_load(c_path.as_ptr(), 2, &mut g) }, SscStatus::Ok);
    unsafe {
        assert_eq!(ssc_graph_nnz(g), 6);
        ssc_graph_free(g);
    }
    let missing = CString::new(dir.path().join("nope.csr").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ssc_graph_load(missing.as_ptr(), 2, &mut g) }, SscStatus::Io);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ssc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ssc.h")).unwrap();
    for symbol in [
        "typedef struct SscGraph SscGraph",
        "SSC_STATUS_OK = 0",
        "SSC_FILTER_KIND_JGCF = 1",
        "ssc_graph_from_pairs(",
        "ssc_graph_from_csr(",
        "ssc_graph_load(",
        "ssc_graph_free(",
        "ssc_estimate_factors(",
        "ssc_propagate(",
        "ssc_last_error_message(",
    ] {
        assert!(header.contains(symbol), "missing `{symbol}` in header");
    }
}
