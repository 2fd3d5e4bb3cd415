#ifndef FEATPROP_H
#define FEATPROP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum FpStatus {
  FP_STATUS_OK = 0,
  FP_STATUS_PARAMETER = 1,
  FP_STATUS_SHAPE = 2,
  FP_STATUS_EMPTY_GRAPH = 3,
  FP_STATUS_STAGE = 4,
  FP_STATUS_NO_KNOWN_ITEMS = 5,
  FP_STATUS_NO_MISSING_ITEMS = 6,
  FP_STATUS_NO_TEST_USERS = 7,
  FP_STATUS_FEATURES = 8,
  FP_STATUS_PARSE = 9,
  FP_STATUS_FORMAT = 10,
  FP_STATUS_IO = 11,
  FP_STATUS_SERIALIZE = 12,
  FP_STATUS_NULL_POINTER = 13,
  FP_STATUS_PANIC = 14,
} FpStatus;

// Baseline imputation strategies.
typedef enum FpBaseline {
  FP_BASELINE_ZEROS = 0,
  FP_BASELINE_MEAN = 1,
  FP_BASELINE_RANDOM = 2,
} FpBaseline;

// Opaque normalized item-item graph.
typedef struct FpGraph FpGraph;

// Opaque user-item interaction matrix.
typedef struct FpInteractions FpInteractions;

// Opaque item-level missing mask.
typedef struct FpMask FpMask;

// Propagation settings. Obtain defaults from
// [`fp_propagation_config_default`].
typedef struct FpPropagationConfig {
  size_t max_layers;
  double tolerance;
  // Fill unreachable missing items with the known mean instead of zeros.
  bool fallback_mean;
} FpPropagationConfig;

// Diagnostics of one propagation run.
typedef struct FpPropagationReport {
  size_t layers_run;
  double final_residual;
  size_t num_unreachable;
} FpPropagationReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next `fp_*` call on the same thread.
const char *fp_last_error(void);

// Library version as a static NUL-terminated string.
const char *fp_version(void);

// Builds an interaction matrix from `len` parallel `(user, item)` pairs.
// Duplicate pairs collapse.
//
// # Safety
// `users` and `items` must point to `len` readable values; `out` must be
// writable.
enum FpStatus fp_interactions_new(size_t num_users,
                                  size_t num_items,
                                  const size_t *users,
                                  const size_t *items,
                                  size_t len,
                                  struct FpInteractions **out);

// Loads a `user<TAB>item` file; tokens are indexed by first appearance.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FpStatus fp_interactions_load(const char *path, struct FpInteractions **out);

// # Safety
// `r` must be a live handle or NULL.
size_t fp_interactions_num_users(const struct FpInteractions *r);

// # Safety
// `r` must be a live handle or NULL.
size_t fp_interactions_num_items(const struct FpInteractions *r);

// # Safety
// `r` must be a live handle or NULL.
size_t fp_interactions_count(const struct FpInteractions *r);

// # Safety
// `r` must come from this library and not be used afterwards. NULL is a no-op.
void fp_interactions_free(struct FpInteractions *r);

// Projects, keeps the top `n` neighbors per item and normalizes.
//
// # Safety
// `r` must be a live handle; `out` must be writable.
enum FpStatus fp_graph_build(const struct FpInteractions *r,
                             size_t n,
                             bool exclude_diagonal,
                             struct FpGraph **out);

// Loads a normalized graph written by `fp_graph_save` or the CLI.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FpStatus fp_graph_load(const char *path, struct FpGraph **out);

// # Safety
// `g` must be a live handle; `path` a NUL-terminated string.
enum FpStatus fp_graph_save(const struct FpGraph *g, const char *path);

// # Safety
// `g` must be a live handle or NULL.
size_t fp_graph_num_items(const struct FpGraph *g);

// Undirected edge count.
//
// # Safety
// `g` must be a live handle or NULL.
size_t fp_graph_num_edges(const struct FpGraph *g);

// # Safety
// `g` must come from this library and not be used afterwards. NULL is a no-op.
void fp_graph_free(struct FpGraph *g);

// Hides `round(rate * num_items)` items chosen by a seeded generator.
//
// # Safety
// `out` must be writable.
enum FpStatus fp_mask_sample(size_t num_items, double rate, uint64_t seed, struct FpMask **out);

// Mask from `num_items` flags, nonzero meaning known.
//
// # Safety
// `known` must point to `num_items` readable bytes; `out` must be writable.
enum FpStatus fp_mask_new(const uint8_t *known, size_t num_items, struct FpMask **out);

// # Safety
// `m` must be a live handle or NULL.
size_t fp_mask_num_items(const struct FpMask *m);

// # Safety
// `m` must be a live handle or NULL.
size_t fp_mask_num_missing(const struct FpMask *m);

// False for out-of-range items and NULL masks.
//
// # Safety
// `m` must be a live handle or NULL.
bool fp_mask_is_known(const struct FpMask *m, size_t item);

// # Safety
// `m` must come from this library and not be used afterwards. NULL is a no-op.
void fp_mask_free(struct FpMask *m);

// 20 layers, tolerance 1e-6, unreachable items left at zero.
struct FpPropagationConfig fp_propagation_config_default(void);

// Feature propagation of one modality. `features` holds the observed
// values (missing rows are ignored); the imputed matrix is written to
// `out`, which may alias `features`. `report` may be NULL.
//
// # Safety
// Buffers must hold `num_items * dim` doubles; handles must be live.
enum FpStatus fp_featprop(const struct FpGraph *graph,
                          const struct FpMask *mask,
                          const double *features,
                          size_t num_items,
                          size_t dim,
                          const struct FpPropagationConfig *config,
                          double *out,
                          struct FpPropagationReport *report);

// Zeros, mean or uniform random `[low, high)` fill of the missing rows.
// `seed`, `low` and `high` only matter for the random baseline.
//
// # Safety
// Buffers must hold `num_items * dim` doubles; `mask` must be live.
enum FpStatus fp_impute_baseline(enum FpBaseline method,
                                 const struct FpMask *mask,
                                 const double *features,
                                 size_t num_items,
                                 size_t dim,
                                 uint64_t seed,
                                 double low,
                                 double high,
                                 double *out);

// Largest deviation of a missing row from its propagated neighborhood.
//
// # Safety
// `features` must hold `num_items * dim` doubles; `out` must be writable.
enum FpStatus fp_harmonic_residual(const struct FpGraph *graph,
                                   const struct FpMask *mask,
                                   const double *features,
                                   size_t num_items,
                                   size_t dim,
                                   double *out);

// Dirichlet energy of `features` over the graph.
//
// # Safety
// `features` must hold `num_items * dim` doubles; `out` must be writable.
enum FpStatus fp_dirichlet_energy(const struct FpGraph *graph,
                                  const double *features,
                                  size_t num_items,
                                  size_t dim,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEATPROP_H */
