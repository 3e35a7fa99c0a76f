#ifndef FPU_TORI_H
#define FPU_TORI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum FpuStatus {
  FPU_STATUS_OK = 0,
  FPU_STATUS_NULL_POINTER = 1,
  FPU_STATUS_INVALID_ARGUMENT = 2,
  FPU_STATUS_BUFFER_SIZE = 3,
  FPU_STATUS_INTEGRATOR = 4,
  FPU_STATUS_NOT_CONVERGED = 5,
  FPU_STATUS_PANIC = 99,
} FpuStatus;

/**
 * Chain parameters `(N, α, β)`.
 */
typedef struct FpuChain FpuChain;

/**
 * A normalized elliptic torus together with its coordinate transformations.
 */
typedef struct FpuTorus FpuTorus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *fpu_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated, NUL-terminated).
 * Returns the full message length in bytes.
 */
size_t fpu_last_error(char *buf, size_t len);

enum FpuStatus fpu_chain_new(size_t n, double alpha, double beta, struct FpuChain **out);

void fpu_chain_free(struct FpuChain *chain);

/**
 * Number of normal modes, `N − 1`; 0 for a null handle.
 */
size_t fpu_chain_modes(const struct FpuChain *chain);

/**
 * Total energy of the Cartesian state `(x, y)`, each of length `N − 1`.
 */
enum FpuStatus fpu_energy(const struct FpuChain *chain,
                          const double *x,
                          const double *y,
                          size_t len,
                          double *out);

/**
 * Semi-sinusoidal initial condition of amplitude `amplitude` written to `(x, y)`.
 */
enum FpuStatus fpu_semi_sinusoidal(const struct FpuChain *chain,
                                   double amplitude,
                                   double *x,
                                   double *y,
                                   size_t len);

/**
 * Advances `(x, y)` in place by `steps` SBAB3 steps of size `h`; `corrected` selects the
 * corrector.
 */
enum FpuStatus fpu_evolve(const struct FpuChain *chain,
                          double h,
                          uint64_t steps,
                          int corrected,
                          double *x,
                          double *y,
                          size_t len);

/**
 * Difference of the main frequency of mode 1 between the windows `[0, T]` and `[T, 2T]`
 * for the Cartesian initial condition `(x, y)`.
 */
enum FpuStatus fpu_frequency_variation(const struct FpuChain *chain,
                                       const double *x,
                                       const double *y,
                                       size_t len,
                                       double duration,
                                       double *out);

/**
 * Normalizes the torus with actions `istar[0..n1]` using the default settings for the
 * chain size. A handle is returned even when the rules fail; `fpu_torus_converged`
 * tells which.
 */
enum FpuStatus fpu_torus_normalize(const struct FpuChain *chain,
                                   const double *istar,
                                   size_t n1,
                                   struct FpuTorus **out);

void fpu_torus_free(struct FpuTorus *torus);

/**
 * 1 if the convergence rules held, 0 if not, −1 for a null handle.
 */
int fpu_torus_converged(const struct FpuTorus *torus);

/**
 * Energy of the torus, and its frequencies: `omega[0..n1]` on the torus,
 * `big_omega[0..N−1−n1]` transverse.
 */
enum FpuStatus fpu_torus_frequencies(const struct FpuTorus *torus,
                                     double *energy,
                                     double *omega,
                                     size_t n_omega,
                                     double *big_omega,
                                     size_t n_big);

/**
 * Cartesian point of the torus at angles `q[0..n1]`, written to `(x, y)`.
 */
enum FpuStatus fpu_torus_point(const struct FpuTorus *torus,
                               const double *q,
                               size_t n1,
                               double *x,
                               double *y,
                               size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FPU_TORI_H */
