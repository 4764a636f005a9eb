#ifndef QSD_H
#define QSD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QsdStatus {
  QSD_STATUS_OK = 0,
  QSD_STATUS_NULL_POINTER = 1,
  QSD_STATUS_INVALID_ARGUMENT = 2,
  QSD_STATUS_NUMERICAL = 3,
  QSD_STATUS_BUFFER_TOO_SMALL = 4,
  QSD_STATUS_PANIC = 5,
} QsdStatus;

typedef enum QsdInitialKind {
  QSD_INITIAL_KIND_COHERENT = 0,
  QSD_INITIAL_KIND_FOCK = 1,
  QSD_INITIAL_KIND_CAT = 2,
} QsdInitialKind;

// Ensemble statistics of a finished run.
typedef struct QsdEnsemble QsdEnsemble;

// Operators of the truncated model.
typedef struct QsdModel QsdModel;

// Physical parameters. `n_bar` sets the bath temperature through
// n̄ = 1/(e^{ħω/kT} − 1); pass 0 for a zero-temperature bath.
typedef struct QsdParams {
  double mass;
  double omega;
  double gamma;
  double hbar;
  double n_bar;
} QsdParams;

// Initial state: `alpha_re`/`alpha_im` for coherent and cat states,
// `fock_n` for number states.
typedef struct QsdInitial {
  enum QsdInitialKind kind;
  double alpha_re;
  double alpha_im;
  size_t fock_n;
} QsdInitial;

typedef struct QsdRunConfig {
  size_t trajectories;
  uint64_t base_seed;
  double dt;
  double t_end;
  size_t record_stride;
  // 0 runs on the global thread pool.
  size_t workers;
  struct QsdInitial initial;
} QsdRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *qsd_version(void);

// Length in bytes of the last error message on this thread, excluding the
// terminating NUL; 0 when there is none.
size_t qsd_last_error_length(void);

// Copies the last error message into `buf` (NUL-terminated, truncated to
// `len − 1` bytes). Returns the number of bytes written excluding the NUL.
//
// # Safety
// `buf` must be null or point to at least `len` writable bytes.
size_t qsd_last_error_message(char *buf, size_t len);

// Builds the truncated operators for `n_f` Fock levels.
//
// # Safety
// `params` must point to a valid `QsdParams`; `out` must be writable.
enum QsdStatus qsd_model_new(const struct QsdParams *params, size_t n_f, struct QsdModel **out);

// # Safety
// `model` must be null or a handle from [`qsd_model_new`] not yet freed.
void qsd_model_free(struct QsdModel *model);

// Hilbert-space dimension of the model, 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t qsd_model_dim(const struct QsdModel *model);

// Runs an ensemble of trajectories. The result is independent of `workers`.
//
// # Safety
// `model` and `cfg` must be live/valid; `out` must be writable.
enum QsdStatus qsd_ensemble_run(const struct QsdModel *model,
                                const struct QsdRunConfig *cfg,
                                struct QsdEnsemble **out);

// # Safety
// `ens` must be null or a handle from [`qsd_ensemble_run`] not yet freed.
void qsd_ensemble_free(struct QsdEnsemble *ens);

// Number of recorded samples, 0 for a null handle.
//
// # Safety
// `ens` must be null or a live handle.
size_t qsd_ensemble_samples(const struct QsdEnsemble *ens);

// Number of observable columns; see [`qsd_observable_name`].
size_t qsd_observable_count(void);

// Static NUL-terminated name of observable `index`, or null when out of range.
const char *qsd_observable_name(size_t index);

// Copies the sample times into `out` (capacity `len`).
//
// # Safety
// `ens` must be live; `out` must hold `len` doubles.
enum QsdStatus qsd_ensemble_times(const struct QsdEnsemble *ens, double *out, size_t len);

// Copies the ensemble mean (`stderr == 0`) or standard error (`stderr != 0`)
// of observable `index` at every sample into `out`.
//
// # Safety
// `ens` must be live; `out` must hold `len` doubles.
enum QsdStatus qsd_ensemble_series(const struct QsdEnsemble *ens,
                                   size_t index,
                                   int32_t stderr,
                                   double *out,
                                   size_t len);

// Lindblad density matrix at time `t` from the pure initial state, written
// row-major as interleaved (re, im) pairs; `len` must be at least 2·dim².
//
// # Safety
// `model` and `initial` must be valid; `out` must hold `len` doubles.
enum QsdStatus qsd_oracle_density(const struct QsdModel *model,
                                  const struct QsdInitial *initial,
                                  double t,
                                  double dt_oracle,
                                  double *out,
                                  size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSD_H */
