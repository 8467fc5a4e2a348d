#ifndef BLASSO_H
#define BLASSO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum BlassoStatus {
  BLASSO_STATUS_OK = 0,
  BLASSO_STATUS_NULL_POINTER = 1,
  BLASSO_STATUS_INVALID_ARGUMENT = 2,
  BLASSO_STATUS_DIMENSION_MISMATCH = 3,
  // `M` is numerically singular: the observation is near the degenerate set.
  BLASSO_STATUS_SINGULAR_M = 4,
  BLASSO_STATUS_DEGENERATE_CERTIFICATE = 5,
  BLASSO_STATUS_INTERNAL = 6,
} BlassoStatus;

typedef enum BlassoSupportClass {
  BLASSO_SUPPORT_CLASS_EMPTY = 0,
  BLASSO_SUPPORT_CLASS_FULL_DOMAIN = 1,
  BLASSO_SUPPORT_CLASS_DISCRETE = 2,
} BlassoSupportClass;

// Opaque forward model.
typedef struct BlassoModel BlassoModel;

// Opaque solver output.
typedef struct BlassoSolution BlassoSolution;

typedef struct BlassoSolverOptions {
  size_t max_outer_iterations;
  // Relative duality-gap target (`gap <= tol * |y|^2`).
  double duality_gap_tolerance;
  double amplitude_prune_tolerance;
  // 0 selects the default scan size for the model dimension.
  size_t certificate_grid_size;
  uint64_t seed;
} BlassoSolverOptions;

typedef struct BlassoDofReport {
  size_t k;
  size_t d;
  // Parameter count `(d + 1) k`.
  size_t p;
  size_t rank_gamma;
  double sigma_min_gamma;
  double divergence;
  // NaN for non-Fourier models.
  double nu;
  enum BlassoSupportClass support_class;
  double m_min_eigenvalue;
  double condition_m;
} BlassoDofReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *blasso_last_error_message(void);

struct BlassoSolverOptions blasso_solver_options_default(void);

// Real Fourier features up to frequency `cutoff` (`n = 2 cutoff + 1`).
//
// # Safety
// `out` must be valid for writes.
enum BlassoStatus blasso_model_fourier(size_t cutoff, struct BlassoModel **out);

// ReLU features from row-major `n x d` weights. `radius <= 0` selects the default box.
//
// # Safety
// `weights` must point to `n * d` doubles and `out` must be valid for writes.
enum BlassoStatus blasso_model_relu(const double *weights,
                                    size_t n,
                                    size_t d,
                                    bool normalize,
                                    double radius,
                                    struct BlassoModel **out);

// # Safety
// `model` must come from a `blasso_model_*` constructor and not be used afterwards.
void blasso_model_free(struct BlassoModel *model);

// Number of measurements `n` (0 for a null handle).
//
// # Safety
// `model` must be null or a live handle.
size_t blasso_model_n(const struct BlassoModel *model);

// Parameter dimension `d` (0 for a null handle).
//
// # Safety
// `model` must be null or a live handle.
size_t blasso_model_dim(const struct BlassoModel *model);

// `y = Phi m` for `k` spikes.
//
// # Safety
// `positions` must hold `k * d` doubles, `amplitudes` `k` and `y_out` `n`.
enum BlassoStatus blasso_model_apply(const struct BlassoModel *model,
                                     const double *positions,
                                     const double *amplitudes,
                                     size_t k,
                                     double *y_out);

// Solves the Blasso. A non-converged run still returns `Ok` with a handle;
// check [`blasso_solution_converged`]. `options` may be null for defaults.
//
// # Safety
// `y` must hold `n` doubles, `options` must be null or valid, `out` valid for writes.
enum BlassoStatus blasso_solve(const struct BlassoModel *model,
                               const double *y,
                               size_t n,
                               double lambda,
                               const struct BlassoSolverOptions *options,
                               struct BlassoSolution **out);

// # Safety
// `solution` must come from [`blasso_solve`] and not be used afterwards.
void blasso_solution_free(struct BlassoSolution *solution);

// Number of spikes (0 for a null handle).
//
// # Safety
// `solution` must be null or a live handle.
size_t blasso_solution_len(const struct BlassoSolution *solution);

// # Safety
// `solution` must be null or a live handle.
bool blasso_solution_converged(const struct BlassoSolution *solution);

// # Safety
// `solution` must be null or a live handle.
double blasso_solution_duality_gap(const struct BlassoSolution *solution);

// # Safety
// `solution` must be null or a live handle.
double blasso_solution_objective(const struct BlassoSolution *solution);

// Copies the row-major `k x d` positions and the `k` amplitudes. Either output may be null.
//
// # Safety
// Non-null outputs must hold `k * d` and `k` doubles respectively.
enum BlassoStatus blasso_solution_spikes(const struct BlassoSolution *solution,
                                         double *positions_out,
                                         double *amplitudes_out);

// Degrees-of-freedom report of a solution for the same `y` and `lambda`.
//
// # Safety
// Handles must be live, `y` must hold `n` doubles and `out` be valid for writes.
enum BlassoStatus blasso_dof_report(const struct BlassoModel *model,
                                    const struct BlassoSolution *solution,
                                    const double *y,
                                    size_t n,
                                    double lambda,
                                    struct BlassoDofReport *out);

// `SURE = -n sigma^2 + |y - mu_hat|^2 + 2 sigma^2 divergence`.
//
// # Safety
// `y` and `mu_hat` must hold `n` doubles and `out` be valid for writes.
enum BlassoStatus blasso_sure(const double *y,
                              const double *mu_hat,
                              size_t n,
                              double divergence,
                              double sigma,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLASSO_H */
