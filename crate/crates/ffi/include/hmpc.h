#ifndef HMPC_H
#define HMPC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HmpcStatus {
  HMPC_STATUS_OK = 0,
  HMPC_STATUS_NULL_POINTER = 1,
  HMPC_STATUS_INVALID_ARGUMENT = 2,
  HMPC_STATUS_CONFIG = 3,
  // The QP solver failed. A run still hands back its truncated trace.
  HMPC_STATUS_SOLVER = 4,
  HMPC_STATUS_IO = 5,
  HMPC_STATUS_PANIC = 6,
} HmpcStatus;

typedef enum HmpcVariant {
  HMPC_VARIANT_SMPC = 0,
  HMPC_VARIANT_HMPC = 1,
  HMPC_VARIANT_HMPC_PASSIVE = 2,
  HMPC_VARIANT_HMPC_ROBUST = 3,
} HmpcVariant;

// A validated experiment configuration.
typedef struct HmpcExperiment HmpcExperiment;

// A closed-loop trace.
typedef struct HmpcTrace HmpcTrace;

typedef struct HmpcMetrics {
  double cumulative_violation;
  double peak_violation;
  double position_rms;
  double energy_consumed;
  size_t position_violations;
  size_t steps;
  bool completed;
} HmpcMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *hmpc_last_error(void);

const char *hmpc_version(void);

// The built-in vehicle case study.
//
// # Safety
// `out` must be a valid pointer.
enum HmpcStatus hmpc_experiment_default(struct HmpcExperiment **out);

// Parses a TOML config. Relative scenario paths resolve against
// `base_dir`, or the working directory when it is null.
//
// # Safety
// `text` and `base_dir` must be null or nul-terminated; `out` must be valid.
enum HmpcStatus hmpc_experiment_from_toml(const char *text,
                                          const char *base_dir,
                                          struct HmpcExperiment **out);

// Reads a TOML config file.
//
// # Safety
// `path` must be nul-terminated; `out` must be valid.
enum HmpcStatus hmpc_experiment_load(const char *path, struct HmpcExperiment **out);

// Replaces the single-layer horizon. The experiment is unchanged on error.
//
// # Safety
// `experiment` must be a live handle.
enum HmpcStatus hmpc_experiment_set_horizon_smpc(struct HmpcExperiment *experiment, size_t horizon);

// Configured number of simulated steps, 0 for a null handle.
//
// # Safety
// `experiment` must be null or a live handle.
size_t hmpc_experiment_duration(const struct HmpcExperiment *experiment);

// # Safety
// `experiment` must be null or a handle not yet freed.
void hmpc_experiment_free(struct HmpcExperiment *experiment);

// Simulates one controller variant. On a solver failure during the run
// the truncated trace is still stored in `out` and `HMPC_STATUS_SOLVER`
// is returned.
//
// # Safety
// `experiment` must be a live handle; `out` must be valid.
enum HmpcStatus hmpc_run(const struct HmpcExperiment *experiment,
                         enum HmpcVariant variant,
                         struct HmpcTrace **out);

// # Safety
// `trace` must be null or a handle not yet freed.
void hmpc_trace_free(struct HmpcTrace *trace);

// Number of steps at which an input was applied. States are recorded for
// one more step than this.
//
// # Safety
// `trace` must be null or a live handle.
size_t hmpc_trace_steps(const struct HmpcTrace *trace);

// # Safety
// `trace` must be null or a live handle.
size_t hmpc_trace_n_states(const struct HmpcTrace *trace);

// # Safety
// `trace` must be null or a live handle.
size_t hmpc_trace_n_inputs(const struct HmpcTrace *trace);

// Whether the run stopped early on a solver failure.
//
// # Safety
// `trace` must be null or a live handle.
bool hmpc_trace_failed(const struct HmpcTrace *trace);

// Copies the state at `step` (0 through `hmpc_trace_steps`) into `buf`.
//
// # Safety
// `buf` must have room for `len` doubles.
enum HmpcStatus hmpc_trace_state(const struct HmpcTrace *trace,
                                 size_t step,
                                 double *buf,
                                 size_t len);

// Copies the input applied at `step` (below `hmpc_trace_steps`) into `buf`.
//
// # Safety
// `buf` must have room for `len` doubles.
enum HmpcStatus hmpc_trace_input(const struct HmpcTrace *trace,
                                 size_t step,
                                 double *buf,
                                 size_t len);

// Scores a trace with the experiment's metric settings.
//
// # Safety
// Both handles must be live; `out` must be valid.
enum HmpcStatus hmpc_trace_metrics(const struct HmpcTrace *trace,
                                   const struct HmpcExperiment *experiment,
                                   struct HmpcMetrics *out);

// Writes the trace in the CLI's CSV format.
//
// # Safety
// `trace` must be a live handle; `path` must be nul-terminated.
enum HmpcStatus hmpc_trace_write_csv(const struct HmpcTrace *trace, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HMPC_H */
