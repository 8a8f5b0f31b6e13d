#ifndef HTGN_H
#define HTGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HtgnStatus {
  HTGN_STATUS_OK = 0,
  HTGN_STATUS_NULL_POINTER = 1,
  HTGN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed input data (parse errors, bad node ids, self-loops).
   */
  HTGN_STATUS_DATA = 3,
  HTGN_STATUS_CONSISTENCY = 4,
  HTGN_STATUS_CONFIG = 5,
  HTGN_STATUS_IO = 6,
  HTGN_STATUS_CHECKPOINT = 7,
  /**
   * The output buffer is too small; the required size was reported.
   */
  HTGN_STATUS_BUFFER_TOO_SMALL = 8,
  HTGN_STATUS_PANIC = 9,
} HtgnStatus;

/**
 * Streaming homogeneous hyperedge builder.
 */
typedef struct HtgnBuilder HtgnBuilder;

/**
 * Result of [`htgn_enumerate_cliques`].
 */
typedef struct HtgnCliques HtgnCliques;

typedef struct HtgnBuilderStats {
  size_t live_hyperedges;
  size_t peak_slots;
  size_t free_slots;
} HtgnBuilderStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, 0 if none.
 */
size_t htgn_last_error_length(void);

/**
 * Copies the last error message (NUL-terminated, truncated to fit) into
 * `buf`. Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes or null.
 */
size_t htgn_last_error_message(char *buf, size_t cap);

/**
 * Library version, a static NUL-terminated string.
 */
const char *htgn_version(void);

/**
 * Creates a builder over `num_nodes` nodes flushing every `batch` links.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum HtgnStatus htgn_builder_new(size_t num_nodes, size_t batch, struct HtgnBuilder **out);

/**
 * # Safety
 * `b` must come from [`htgn_builder_new`] and not be used afterwards.
 */
void htgn_builder_free(struct HtgnBuilder *b);

/**
 * Ingests link `u–v` at time `t`. The number of hyperedges created by
 * merges during this call goes to `merges` when it is non-null.
 *
 * # Safety
 * `b` must be a live handle; `merges` null or valid for one write.
 */
enum HtgnStatus htgn_builder_ingest(struct HtgnBuilder *b,
                                    size_t u,
                                    size_t v,
                                    double t,
                                    size_t *merges);

/**
 * Flushes the trailing partial snapshot at time `t`.
 *
 * # Safety
 * As for [`htgn_builder_ingest`].
 */
enum HtgnStatus htgn_builder_finish(struct HtgnBuilder *b, double t, size_t *merges);

/**
 * # Safety
 * `b` must be a live handle and `out` valid for one write.
 */
enum HtgnStatus htgn_builder_stats(const struct HtgnBuilder *b, struct HtgnBuilderStats *out);

/**
 * Verifies the registry invariants; `HTGN_STATUS_CONSISTENCY` names the
 * first violation.
 *
 * # Safety
 * `b` must be a live handle.
 */
enum HtgnStatus htgn_builder_check(const struct HtgnBuilder *b);

/**
 * Writes the live hyperedges as JSON lines. `needed` receives the
 * length without the NUL; a too-small buffer yields
 * `HTGN_STATUS_BUFFER_TOO_SMALL` and is left untouched.
 *
 * # Safety
 * `b` must be a live handle, `buf` valid for `cap` bytes, `needed` null
 * or valid for one write.
 */
enum HtgnStatus htgn_builder_dump(const struct HtgnBuilder *b,
                                  char *buf,
                                  size_t cap,
                                  size_t *needed);

/**
 * Maximal cliques of the graph with `n_edges` links given as
 * `[u0, v0, u1, v1, ...]`, sorted by size then members.
 *
 * # Safety
 * `edges` must be valid for `2 * n_edges` reads (may be null when
 * `n_edges` is 0) and `out` for one pointer write.
 */
enum HtgnStatus htgn_enumerate_cliques(const size_t *edges,
                                       size_t n_edges,
                                       struct HtgnCliques **out);

/**
 * # Safety
 * `c` must be a live handle or null.
 */
size_t htgn_cliques_count(const struct HtgnCliques *c);

/**
 * Borrows clique `i`; the pointer stays valid until the handle is freed.
 *
 * # Safety
 * `c` must be a live handle; `members` and `len` valid for one write.
 */
enum HtgnStatus htgn_cliques_get(const struct HtgnCliques *c,
                                 size_t i,
                                 const size_t **members,
                                 size_t *len);

/**
 * # Safety
 * `c` must come from [`htgn_enumerate_cliques`] and not be used after.
 */
void htgn_cliques_free(struct HtgnCliques *c);

/**
 * Runs one command (`generate`, `build`, `sweep`, `train`, `eval`,
 * `report`) on a TOML run configuration. `eval` scores the test split
 * with `checkpoint.json` from the output directory. The JSON summary is
 * returned through `summary` and must be released with
 * [`htgn_string_free`].
 *
 * # Safety
 * `command` and `config_toml` must be NUL-terminated strings; `summary`
 * valid for one pointer write.
 */
enum HtgnStatus htgn_run(const char *command, const char *config_toml, char **summary);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void htgn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HTGN_H */
