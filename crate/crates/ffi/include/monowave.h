#ifndef MONOWAVE_H
#define MONOWAVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MwStatus {
  MW_STATUS_OK = 0,
  MW_STATUS_NULL_POINTER = 1,
  MW_STATUS_INVALID_INPUT = 2,
  MW_STATUS_PRECONDITION = 3,
  MW_STATUS_NO_CONVERGENCE = 4,
  MW_STATUS_DOMAIN_TOO_SMALL = 5,
  MW_STATUS_CONFIG = 6,
  MW_STATUS_IO = 7,
  MW_STATUS_BUFFER_TOO_SMALL = 8,
  MW_STATUS_PANIC = 9,
  MW_STATUS_OTHER = 10,
} MwStatus;

typedef enum MwStability {
  MW_STABILITY_STABLE = 0,
  MW_STABILITY_UNSTABLE = 1,
  MW_STABILITY_MARGINAL = 2,
  MW_STABILITY_UNCLASSIFIED = 3,
} MwStability;

/**
 * Equilibria of a kinetics with their stability labels.
 */
typedef struct MwEquilibria MwEquilibria;

/**
 * Reaction-diffusion kinetics.
 */
typedef struct MwKinetics MwKinetics;

/**
 * A traveling-wave solution.
 */
typedef struct MwWave MwWave;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mw_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mw_version(void);

/**
 * Scalar cubic kinetics `u_t = u_xx + u(1 - u)(u - a)`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum MwStatus mw_kinetics_cubic(double a, struct MwKinetics **out);

/**
 * Kinetics from the `[system]` table of a TOML run configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MwStatus mw_kinetics_from_toml(const char *toml, struct MwKinetics **out);

/**
 * # Safety
 * `k` must be null or a handle from this library, not yet freed.
 */
void mw_kinetics_free(struct MwKinetics *k);

/**
 * Number of species.
 *
 * # Safety
 * `k` must be a live handle and `n` a valid pointer.
 */
enum MwStatus mw_kinetics_species(const struct MwKinetics *k, size_t *n);

/**
 * Finds and labels the equilibria.
 *
 * # Safety
 * `k` must be a live handle and `out` a valid pointer.
 */
enum MwStatus mw_equilibria(const struct MwKinetics *k, struct MwEquilibria **out);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
void mw_equilibria_free(struct MwEquilibria *e);

/**
 * Number of equilibria and whether the bistable structure holds.
 *
 * # Safety
 * `e` must be a live handle; `len` and `bistable` valid pointers.
 */
enum MwStatus mw_equilibria_len(const struct MwEquilibria *e, size_t *len, bool *bistable);

/**
 * Copies equilibrium `index` into `state` (capacity `cap`, one entry per
 * species) together with its label and stability indicator.
 *
 * # Safety
 * `e` must be a live handle; `state` must hold `cap` doubles; `stability`
 * and `indicator` must be valid pointers.
 */
enum MwStatus mw_equilibria_get(const struct MwEquilibria *e,
                                size_t index,
                                double *state,
                                size_t cap,
                                enum MwStability *stability,
                                double *indicator);

/**
 * Direct wave construction from a step between the bottom and top states
 * on `[x_min, x_max]` with spacing `dx`, evolved over `horizon`.
 *
 * # Safety
 * `k` must be a live handle and `out` a valid pointer.
 */
enum MwStatus mw_wave_direct(const struct MwKinetics *k,
                             double x_min,
                             double x_max,
                             double dx,
                             double horizon,
                             struct MwWave **out);

/**
 * # Safety
 * `w` must be null or a live handle.
 */
void mw_wave_free(struct MwWave *w);

/**
 * Speed, wave residual and acceptance flag.
 *
 * # Safety
 * `w` must be a live handle; the outputs must be valid pointers.
 */
enum MwStatus mw_wave_summary(const struct MwWave *w,
                              double *speed,
                              double *residual,
                              bool *accepted);

/**
 * Grid size and state dimension of the wave profile.
 *
 * # Safety
 * `w` must be a live handle; `n_points` and `dim` valid pointers.
 */
enum MwStatus mw_wave_profile_shape(const struct MwWave *w, size_t *n_points, size_t *dim);

/**
 * Copies the profile: `x` gets `n_points` nodes and `u` gets
 * `n_points * dim` values, node-major.
 *
 * # Safety
 * `x` must hold `x_cap` doubles and `u` must hold `u_cap` doubles.
 */
enum MwStatus mw_wave_profile(const struct MwWave *w,
                              double *x,
                              size_t x_cap,
                              double *u,
                              size_t u_cap);

/**
 * Principal periodic eigenvalue at cell samples `u_bar` for
 * periodic-diffusion kinetics.
 *
 * # Safety
 * `u_bar` must hold `n` doubles; `k` must be a live handle; `out` valid.
 */
enum MwStatus mw_lambda1(const struct MwKinetics *k, const double *u_bar, size_t n, double *out);

/**
 * Runs a task from a config file as the command-line tool would, writing
 * artifacts and the registry record under `out_dir`. `exit_code` receives
 * the tool's exit code (0, 2, 3 or 4). `task` is a subcommand name.
 *
 * # Safety
 * The strings must be NUL-terminated; `exit_code` must be valid.
 */
enum MwStatus mw_run_config(const char *config_path,
                            const char *task,
                            const char *out_dir,
                            uint64_t seed,
                            bool plots,
                            int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MONOWAVE_H */
