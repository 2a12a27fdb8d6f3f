#ifndef SSC_H
#define SSC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SscFilterKind {
  SSC_FILTER_KIND_LIGHTGCN = 0,
  SSC_FILTER_KIND_JGCF = 1,
} SscFilterKind;

// Result code of every fallible call.
typedef enum SscStatus {
  SSC_STATUS_OK = 0,
  SSC_STATUS_NULL_POINTER = 1,
  SSC_STATUS_INVALID_ARGUMENT = 2,
  SSC_STATUS_DIMENSION_MISMATCH = 3,
  SSC_STATUS_IO = 4,
  SSC_STATUS_PARSE = 5,
  SSC_STATUS_NUMERICAL = 6,
  SSC_STATUS_INTERNAL = 7,
} SscStatus;

// Opaque normalized adjacency.
typedef struct SscGraph SscGraph;

// Shifting/scaling factors and the spectrum edges they map onto `[-1, 1]`.
typedef struct SscFactors {
  double mu;
  double delta;
  double lambda_min_est;
  double lambda_max;
} SscFactors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call.
const char *ssc_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ssc_version(void);

// Builds the normalized bipartite graph of `len` `(users[k], items[k])` pairs.
//
// # Safety
// `users` and `items` must point to `len` readable values; `out` must be writable.
enum SscStatus ssc_graph_from_pairs(uintptr_t num_users,
                                    uintptr_t num_items,
                                    const uintptr_t *users,
                                    const uintptr_t *items,
                                    uintptr_t len,
                                    struct SscGraph **out);

// Normalizes an `n × n` symmetric nonnegative adjacency given in CSR form
// (`row_offsets` has `n + 1` entries, the other arrays `nnz`). Nodes
// `0..num_users` are users.
//
// # Safety
// The arrays must hold the stated number of readable values; `out` must be writable.
enum SscStatus ssc_graph_from_csr(uintptr_t n,
                                  uintptr_t num_users,
                                  const uintptr_t *row_offsets,
                                  const uintptr_t *col_indices,
                                  const double *values,
                                  uintptr_t nnz,
                                  struct SscGraph **out);

// Loads a normalized adjacency saved by `ssc prepare` (`adjacency.csr`).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SscStatus ssc_graph_load(const char *path, uintptr_t num_users, struct SscGraph **out);

// Releases a graph. Null is ignored.
//
// # Safety
// `graph` must come from an `ssc_graph_*` constructor and not be used afterwards.
void ssc_graph_free(struct SscGraph *graph);

// Number of nodes, or 0 for null.
//
// # Safety
// `graph` must be null or a live handle.
uintptr_t ssc_graph_num_nodes(const struct SscGraph *graph);

// Stored nonzeros, or 0 for null.
//
// # Safety
// `graph` must be null or a live handle.
uintptr_t ssc_graph_nnz(const struct SscGraph *graph);

// Estimates `mu` and `delta` with `iterations` power steps from a seeded start.
//
// # Safety
// `graph` must be a live handle; `out` must be writable.
enum SscStatus ssc_estimate_factors(const struct SscGraph *graph,
                                    uintptr_t iterations,
                                    uint64_t seed,
                                    struct SscFactors *out);

// `out = g((Ã − mu I) / delta) E` for a `num_nodes × dim` row-major `E`.
// `a` and `b` are ignored for LightGCN.
//
// # Safety
// `embeddings` and `out` must each hold `num_nodes * dim` doubles.
enum SscStatus ssc_propagate(const struct SscGraph *graph,
                             enum SscFilterKind kind,
                             uintptr_t num_layers,
                             double a,
                             double b,
                             double mu,
                             double delta,
                             const double *embeddings,
                             uintptr_t dim,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSC_H */
