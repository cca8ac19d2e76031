#ifndef PROVTRACE_H
#define PROVTRACE_H

/* Generated by cbindgen from provtrace-ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtDirection {
  PT_DIRECTION_BACKWARD = 0,
  PT_DIRECTION_FORWARD = 1,
  PT_DIRECTION_BOTH = 2,
} PtDirection;

/**
 * Result of every fallible call.
 */
typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_ARGUMENT = 1,
  PT_STATUS_INVALID_UTF8 = 2,
  PT_STATUS_IO = 3,
  PT_STATUS_PARSE = 4,
  PT_STATUS_VALIDATION = 5,
  PT_STATUS_UNKNOWN_NODE = 6,
  PT_STATUS_INVALID_ID = 7,
  PT_STATUS_BUS = 8,
  PT_STATUS_CORRUPT_JOURNAL = 9,
  PT_STATUS_REPLAY = 10,
  PT_STATUS_PANIC = 11,
} PtStatus;

/**
 * Publish/subscribe bus, optionally backed by a journal file.
 */
typedef struct PtBus PtBus;

/**
 * Lineage graph rebuilt from a journal.
 */
typedef struct PtGraph PtGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pt_version(void);

/**
 * Description of the last failure on this thread, or NULL after a success.
 * Valid until the next `pt_*` call on the same thread.
 */
const char *pt_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library and not yet freed.
 */
void pt_string_free(char *s);

/**
 * Rebuilds the lineage graph from a journal file. `palette` maps subsystems
 * to colors as `subsystem=color,...`; NULL selects the built-in palette.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `palette` NULL or NUL-terminated,
 * and `out` writable.
 */
enum PtStatus pt_graph_open(const char *path,
                            bool strict,
                            bool allow_dangling_parents,
                            const char *palette,
                            struct PtGraph **out);

/**
 * # Safety
 * `graph` must be NULL or a handle from [`pt_graph_open`] not yet freed.
 */
void pt_graph_free(struct PtGraph *graph);

/**
 * Highest journal sequence in the graph, 0 for NULL or empty.
 *
 * # Safety
 * `graph` must be NULL or a live handle.
 */
uint64_t pt_graph_high_water_mark(const struct PtGraph *graph);

/**
 * Lineage of a message as JSON. A negative `max_depth` means unlimited.
 *
 * # Safety
 * `graph` must be a live handle, `message_id` NUL-terminated, `out` writable.
 */
enum PtStatus pt_graph_trace_json(const struct PtGraph *graph,
                                  const char *message_id,
                                  enum PtDirection direction,
                                  int64_t max_depth,
                                  char **out);

/**
 * Lineage of a message as Graphviz DOT. A negative `max_depth` means
 * unlimited.
 *
 * # Safety
 * As for [`pt_graph_trace_json`].
 */
enum PtStatus pt_graph_trace_dot(const struct PtGraph *graph,
                                 const char *message_id,
                                 enum PtDirection direction,
                                 int64_t max_depth,
                                 char **out);

/**
 * Replay plan of a message's full backward lineage as JSON.
 *
 * # Safety
 * As for [`pt_graph_trace_json`].
 */
enum PtStatus pt_graph_replay_json(const struct PtGraph *graph, const char *message_id, char **out);

/**
 * Checks a header's invariants. Returns `PT_STATUS_VALIDATION` with one
 * violation per line in `violations` when any fail; `violations` is set to
 * NULL otherwise. Unknown fields are accepted.
 *
 * # Safety
 * `json` must point to `len` readable bytes; `violations` must be writable.
 */
enum PtStatus pt_header_validate(const uint8_t *json, size_t len, char **violations);

/**
 * Strictly parses and validates a header, writing its canonical serialization
 * to `canonical`.
 *
 * # Safety
 * `json` must point to `len` readable bytes; `canonical` must be writable.
 */
enum PtStatus pt_header_parse(const uint8_t *json, size_t len, char **canonical);

/**
 * Opens a bus. With a non-NULL `journal_path` the journal is recovered and
 * every publish is appended to it; with NULL the bus is memory-only.
 *
 * # Safety
 * `journal_path` must be NULL or NUL-terminated; `out` must be writable.
 */
enum PtStatus pt_bus_open(const char *journal_path,
                          bool allow_dangling_parents,
                          struct PtBus **out);

/**
 * # Safety
 * `bus` must be NULL or a handle from [`pt_bus_open`] not yet freed.
 */
void pt_bus_free(struct PtBus *bus);

/**
 * Publishes a message whose header is given as JSON. The assigned sequence
 * number is written to `sequence`.
 *
 * # Safety
 * `bus` must be a live handle; `topic` NUL-terminated; `header_json` and
 * `payload` must point to the given number of readable bytes; `sequence`
 * must be writable.
 */
enum PtStatus pt_bus_publish(const struct PtBus *bus,
                             const char *topic,
                             const uint8_t *header_json,
                             size_t header_len,
                             const uint8_t *payload,
                             size_t payload_len,
                             uint64_t *sequence);

/**
 * Sequence of the newest published record, 0 for NULL or empty.
 *
 * # Safety
 * `bus` must be NULL or a live handle.
 */
uint64_t pt_bus_newest_sequence(const struct PtBus *bus);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROVTRACE_H */
