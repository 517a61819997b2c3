#ifndef TIVM_H
#define TIVM_H

/* Generated by cbindgen from tivm-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Non-OK statuses leave a human-readable
 * explanation in [`tivm_last_error`].
 */
typedef enum TivmStatus {
  TIVM_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not valid UTF-8.
   */
  TIVM_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The machine, script, trace, or cost input was rejected.
   */
  TIVM_STATUS_PARSE_ERROR = 2,
  /**
   * The run failed (divergent cascade or invalid program/script pairing).
   */
  TIVM_STATUS_RUN_ERROR = 3,
} TivmStatus;

/**
 * How a trace ended; [`tivm_trace_termination`] reports one of these.
 */
typedef enum TivmTermination {
  TIVM_TERMINATION_RUNNING = 0,
  TIVM_TERMINATION_SUCCESS = 1,
  TIVM_TERMINATION_ERROR = 2,
  TIVM_TERMINATION_QUIESCENT = 3,
  TIVM_TERMINATION_MAX_INSTANTS = 4,
} TivmTermination;

/**
 * Opaque parsed machine.
 */
typedef struct TivmMachine TivmMachine;

/**
 * Opaque parsed environment script.
 */
typedef struct TivmScript TivmScript;

/**
 * Opaque execution trace.
 */
typedef struct TivmTrace TivmTrace;

/**
 * Run parameters; obtain defaults from [`tivm_run_config_default`].
 */
typedef struct TivmRunConfig {
  /**
   * 0 = virtual time (deterministic, fast), 1 = paced against the host clock.
   */
  uint8_t realtime;
  /**
   * Treat zero/non-evaluable wait delays as a whole-tree error.
   */
  uint8_t strict_await_zero;
  /**
   * Synchronous steps allowed per instant.
   */
  uint64_t step_budget;
  /**
   * Largest instant index a run may reach.
   */
  uint64_t max_instants;
} TivmRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message for the most recent non-OK status on this thread, or null.
 * The pointer stays valid until the next failing call on the same thread;
 * do not free it.
 */
const char *tivm_last_error(void);

/**
 * Free a string returned by this library; null is a no-op.
 *
 * # Safety
 * `s` must have been returned by a `tivm_*` function and not freed before.
 */
void tivm_string_free(char *s);

/**
 * Assemble a machine from its textual form.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum TivmStatus tivm_machine_parse(const char *text, struct TivmMachine **out);

/**
 * Rewrite every repeat into its sustain/spawn0/await encoding.
 *
 * # Safety
 * `machine` must be a live handle from this library; `out` must be valid.
 */
enum TivmStatus tivm_machine_lower_repeat(const struct TivmMachine *machine,
                                          struct TivmMachine **out);

/**
 * Render a machine back to assembly text; free with [`tivm_string_free`].
 *
 * # Safety
 * `machine` must be a live handle from this library.
 */
char *tivm_machine_print(const struct TivmMachine *machine);

/**
 * # Safety
 * `machine` must be a handle from this library, not yet freed.
 */
void tivm_machine_free(struct TivmMachine *machine);

/**
 * Parse an environment script. The empty string is the empty environment.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum TivmStatus tivm_script_parse(const char *text, struct TivmScript **out);

/**
 * # Safety
 * `script` must be a handle from this library, not yet freed.
 */
void tivm_script_free(struct TivmScript *script);

struct TivmRunConfig tivm_run_config_default(void);

/**
 * Execute `machine` against `script` and hand back the trace. A null
 * `config` uses the defaults; a null `script` means the empty environment.
 *
 * # Safety
 * Handles must be live handles from this library; `out` must be valid.
 */
enum TivmStatus tivm_run(const struct TivmMachine *machine,
                         const struct TivmScript *script,
                         const struct TivmRunConfig *config,
                         struct TivmTrace **out);

/**
 * Serialize a trace in the line format; free with [`tivm_string_free`].
 *
 * # Safety
 * `trace` must be a live handle from this library.
 */
char *tivm_trace_write(const struct TivmTrace *trace);

/**
 * Parse a serialized trace.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum TivmStatus tivm_trace_parse(const char *text, struct TivmTrace **out);

/**
 * The observational filter: keeps inputs received, external assignments,
 * and outputs sent.
 *
 * # Safety
 * `trace` must be a live handle from this library.
 */
struct TivmTrace *tivm_trace_observational(const struct TivmTrace *trace);

/**
 * How the traced run ended.
 *
 * # Safety
 * `trace` must be a live handle from this library.
 */
enum TivmTermination tivm_trace_termination(const struct TivmTrace *trace);

/**
 * # Safety
 * `trace` must be a handle from this library, not yet freed.
 */
void tivm_trace_free(struct TivmTrace *trace);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TIVM_H */
