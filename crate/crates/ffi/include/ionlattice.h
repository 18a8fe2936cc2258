#ifndef IONLATTICE_H
#define IONLATTICE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum IlStatus {
  IL_STATUS_OK = 0,
  IL_STATUS_NULL_POINTER = 1,
  IL_STATUS_INVALID_ARGUMENT = 2,
  IL_STATUS_DOMAIN = 3,
  IL_STATUS_TRUNCATION = 4,
  IL_STATUS_NO_EQUILIBRIUM = 5,
  IL_STATUS_NON_CONVERGENCE = 6,
  IL_STATUS_CONFIG = 7,
  IL_STATUS_IO = 8,
  IL_STATUS_BUFFER_TOO_SMALL = 9,
  IL_STATUS_PANIC = 10,
} IlStatus;

/**
 * Lock-loop trace produced by [`il_lock_run`].
 */
typedef struct IlLockTrace IlLockTrace;

/**
 * Fifth-order voltage-to-position map.
 */
typedef struct IlPolynomialMap IlPolynomialMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the
 * terminator; zero when the last call succeeded.
 */
size_t il_last_error_length(void);

/**
 * Copy the last error message into `buf` as a NUL-terminated string.
 * Messages longer than `len - 1` bytes are truncated and
 * `IL_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes.
 */
enum IlStatus il_last_error_message(char *buf, size_t len);

/**
 * Standing-wave period (m) for laser wavelength `lambda` (m) and full beam
 * angle `beam_angle` (rad).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IlStatus il_lattice_period(double lambda, double beam_angle, double *out);

/**
 * Differential Stark shift (rad/s) at position `z` (m).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IlStatus il_stark_shift(double stark_amplitude,
                             double wavevector,
                             double phase,
                             double z,
                             double *out);

/**
 * Thermally and jitter-averaged echo signal at lattice phase `theta` and
 * pulse area `area` (rad).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IlStatus il_thermal_echo_signal(double nbar,
                                     double eta,
                                     double phase_jitter_rms,
                                     double theta,
                                     double area,
                                     double *out);

/**
 * Run the lock loop described by a JSON experiment configuration.
 * `duration_s <= 0` uses the configured duration. On success `*out` owns a
 * new trace.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IlStatus il_lock_run(const char *config_json, double duration_s, struct IlLockTrace **out);

/**
 * Number of update slots in the trace; zero for a null handle.
 *
 * # Safety
 * `trace` must be null or a handle from [`il_lock_run`].
 */
size_t il_lock_trace_len(const struct IlLockTrace *trace);

/**
 * Copy the residual phase (rad) of every slot into `buf`.
 *
 * # Safety
 * `trace` must be a handle from [`il_lock_run`]; `buf` must hold `len` doubles.
 */
enum IlStatus il_lock_trace_residuals(const struct IlLockTrace *trace, double *buf, size_t len);

/**
 * Rms residual phase (rad) and number of lock-lost slots.
 *
 * # Safety
 * `trace` must be a handle from [`il_lock_run`]; the out pointers must be valid.
 */
enum IlStatus il_lock_trace_stats(const struct IlLockTrace *trace, double *rms, size_t *lock_lost);

/**
 * # Safety
 * `trace` must be null or a handle from [`il_lock_run`] not yet freed.
 */
void il_lock_trace_free(struct IlLockTrace *trace);

/**
 * Map from the five coefficients `c1..c5` (m/V^i); the constant term is zero.
 *
 * # Safety
 * `coefficients` must point to five doubles and `out` must be valid.
 */
enum IlStatus il_map_new(const double *coefficients, struct IlPolynomialMap **out);

/**
 * Fifth-order map fitted to the equilibrium position of a segmented trap
 * over `[-range, range]` V. Lengths in metres, `feedthrough` in m/V.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IlStatus il_map_from_trap(double pitch,
                               double width,
                               double decay,
                               double feedthrough,
                               double range,
                               struct IlPolynomialMap **out);

/**
 * Position (m) at shift voltage `v` (V).
 *
 * # Safety
 * `map` must be a handle from this library and `out` valid.
 */
enum IlStatus il_map_evaluate(const struct IlPolynomialMap *map, double v, double *out);

/**
 * Slope dz/dV (m/V) at shift voltage `v`.
 *
 * # Safety
 * `map` must be a handle from this library and `out` valid.
 */
enum IlStatus il_map_derivative(const struct IlPolynomialMap *map, double v, double *out);

/**
 * Copy `c0..c5` into `out`, which must hold six doubles.
 *
 * # Safety
 * `map` must be a handle from this library; `out` must hold six doubles.
 */
enum IlStatus il_map_coefficients(const struct IlPolynomialMap *map, double *out);

/**
 * # Safety
 * `map` must be null or a handle from this library not yet freed.
 */
void il_map_free(struct IlPolynomialMap *map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IONLATTICE_H */
