/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef AMLGRAPH_H
#define AMLGRAPH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum AmlStatus {
  AML_STATUS_OK = 0,
  AML_STATUS_NULL_POINTER = 1,
  AML_STATUS_INVALID_UTF8 = 2,
  AML_STATUS_INVALID_INPUT = 3,
  AML_STATUS_CONFIG = 4,
  AML_STATUS_IO = 5,
  AML_STATUS_FORMAT = 6,
  AML_STATUS_STRUCTURAL = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  AML_STATUS_INTERNAL = 8,
} AmlStatus;

/**
 * Pipeline configuration.
 */
typedef struct AmlConfig AmlConfig;

/**
 * Weighted digraph for direct community detection.
 */
typedef struct AmlDigraph AmlDigraph;

/**
 * Result of a pipeline run.
 */
typedef struct AmlReport AmlReport;

/**
 * One scored community, by value.
 */
typedef struct AmlCommunity {
  uint32_t community;
  uint32_t mcs_id;
  size_t node_count;
  size_t edge_count;
  double money;
  double avg_degree;
  double entropy;
  double psi;
  /**
   * Risk level 1..=3, or 0 when unranked.
   */
  uint8_t level;
} AmlCommunity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *aml_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aml_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void aml_string_free(char *s);

/**
 * Default configuration. Never null.
 */
struct AmlConfig *aml_config_default(void);

/**
 * Parses a JSON configuration; absent keys take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum AmlStatus aml_config_from_json(const char *json, struct AmlConfig **out);

/**
 * Serializes a configuration as JSON into a new string.
 *
 * # Safety
 * `cfg` must be a live handle and `out` writable.
 */
enum AmlStatus aml_config_to_json(const struct AmlConfig *cfg, char **out);

/**
 * Sets the worker count; 0 means all cores.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum AmlStatus aml_config_set_workers(struct AmlConfig *cfg, size_t workers);

/**
 * # Safety
 * `cfg` must come from this library and not be freed twice. Null is ignored.
 */
void aml_config_free(struct AmlConfig *cfg);

/**
 * Runs the whole pipeline on a transaction CSV.
 *
 * # Safety
 * `input_path` must be a NUL-terminated string, `cfg` a live handle and
 * `out` writable.
 */
enum AmlStatus aml_run_pipeline(const char *input_path,
                                const struct AmlConfig *cfg,
                                struct AmlReport **out);

/**
 * Number of scored communities, or 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t aml_report_community_count(const struct AmlReport *report);

/**
 * Modularity of the final partition, or NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double aml_report_modularity(const struct AmlReport *report);

/**
 * Community at `index` in descending risk order.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum AmlStatus aml_report_community(const struct AmlReport *report,
                                    size_t index,
                                    struct AmlCommunity *out);

/**
 * Serializes the risk report as JSON into a new string.
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum AmlStatus aml_report_to_json(const struct AmlReport *report, char **out);

/**
 * # Safety
 * `report` must come from this library and not be freed twice. Null is ignored.
 */
void aml_report_free(struct AmlReport *report);

/**
 * Shannon entropy (bits) of binned deviations from the mean time.
 *
 * # Safety
 * `times` must point to `len` values and `out` be writable.
 */
enum AmlStatus aml_temporal_entropy(const int64_t *times, size_t len, size_t bins, double *out);

/**
 * Z-scores of `values` into `out` (population standard deviation).
 *
 * # Safety
 * `values` and `out` must each hold `len` values.
 */
enum AmlStatus aml_standardize(const double *values, size_t len, double *out);

/**
 * Builds a digraph on `n` nodes from `arc_count` weighted arcs. Every node
 * needs positive total weight.
 *
 * # Safety
 * `src`, `dst` and `weight` must each hold `arc_count` values and `out` be
 * writable.
 */
enum AmlStatus aml_digraph_new(size_t n,
                               const uint32_t *src,
                               const uint32_t *dst,
                               const double *weight,
                               size_t arc_count,
                               struct AmlDigraph **out);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t aml_digraph_node_count(const struct AmlDigraph *g);

/**
 * Detects communities. `parallel` selects the synchronous engine.
 * `assignment` receives one community id per node, numbered densely by
 * smallest member; `modularity` may be null.
 *
 * # Safety
 * `g` must be a live handle and `assignment` hold `aml_digraph_node_count(g)`
 * values.
 */
enum AmlStatus aml_digraph_louvain(const struct AmlDigraph *g,
                                   bool parallel,
                                   uint32_t *assignment,
                                   double *modularity);

/**
 * Modularity of a given assignment. Tags must lie in `0..n`.
 *
 * # Safety
 * `g` must be a live handle, `assignment` hold `n` values and `out` be
 * writable.
 */
enum AmlStatus aml_digraph_modularity(const struct AmlDigraph *g,
                                      const uint32_t *assignment,
                                      size_t n,
                                      double *out);

/**
 * # Safety
 * `g` must come from this library and not be freed twice. Null is ignored.
 */
void aml_digraph_free(struct AmlDigraph *g);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMLGRAPH_H */
