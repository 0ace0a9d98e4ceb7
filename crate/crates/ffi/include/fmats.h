#ifndef FMATS_H
#define FMATS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum FmatsStatus {
  FMATS_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  FMATS_STATUS_NULL_POINTER = 1,
  /*
   Arguments or data failed validation.
   */
  FMATS_STATUS_INVALID_INPUT = 2,
  /*
   A numerical procedure failed (singular system, no convergence).
   */
  FMATS_STATUS_NUMERICAL = 3,
  /*
   Reading or writing a file failed.
   */
  FMATS_STATUS_IO = 4,
  /*
   The caller's output buffer has the wrong length.
   */
  FMATS_STATUS_BUFFER_SIZE = 5,
  /*
   An internal panic was caught at the boundary.
   */
  FMATS_STATUS_PANIC = 6,
} FmatsStatus;

typedef enum FmatsSigmaProfile {
  FMATS_SIGMA_PROFILE_SLOW = 0,
  FMATS_SIGMA_PROFILE_FAST = 1,
} FmatsSigmaProfile;

/*
 Opaque fitted FMA model.
 */
typedef struct FmatsModel FmatsModel;

/*
 Opaque functional sample.
 */
typedef struct FmatsSample FmatsSample;

/*
 Choices made by the selection procedures with default settings.
 */
typedef struct FmatsSelection {
  size_t d_tve;
  size_t d_ind;
  size_t q_lb;
  size_t q_aicc;
  size_t d_ffpe;
  size_t q_ffpe;
} FmatsSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread, or null when the
 last call succeeded. The pointer stays valid until the next call into
 this library on the same thread.
 */
const char *fmats_last_error(void);

/*
 Creates a sample from `n` curves of `dim` Fourier coefficients each,
 given row-major in `data`.
 */
enum FmatsStatus fmats_sample_from_coeffs(const double *data,
                                          size_t n,
                                          size_t dim,
                                          struct FmatsSample **out);

/*
 Simulates an FMA(q) sample. `kappas` holds `q` weights and may be null
 when `q` is 0.
 */
enum FmatsStatus fmats_sample_simulate(size_t n,
                                       size_t dim,
                                       size_t q,
                                       const double *kappas,
                                       enum FmatsSigmaProfile profile,
                                       uint64_t seed,
                                       struct FmatsSample **out);

/*
 Number of curves, or 0 for a null handle.
 */
size_t fmats_sample_len(const struct FmatsSample *sample);

/*
 Number of basis coefficients per curve, or 0 for a null handle.
 */
size_t fmats_sample_dim(const struct FmatsSample *sample);

/*
 Copies the coefficients (row-major, `len` = n·dim) into `out`.
 */
enum FmatsStatus fmats_sample_coeffs(const struct FmatsSample *sample, double *out, size_t len);

/*
 Releases a sample. Null is ignored.
 */
void fmats_sample_free(struct FmatsSample *sample);

/*
 Fits an FMA(q) model on the first `d` principal directions. `k` = 0
 selects the default number of lags.
 */
enum FmatsStatus fmats_fit(const struct FmatsSample *sample,
                           size_t d,
                           size_t q,
                           size_t k,
                           struct FmatsModel **out);

/*
 Runs every selection procedure with default parameters.
 */
enum FmatsStatus fmats_select(const struct FmatsSample *sample, struct FmatsSelection *out);

/*
 Subspace dimension d of a model, or 0 for a null handle.
 */
size_t fmats_model_d(const struct FmatsModel *model);

/*
 Order q of a model, or 0 for a null handle.
 */
size_t fmats_model_q(const struct FmatsModel *model);

/*
 Basis dimension D of a model, or 0 for a null handle.
 */
size_t fmats_model_dim(const struct FmatsModel *model);

/*
 Copies `θ̂_lag` (d×d, row-major, 1-based lag) into `out`.
 */
enum FmatsStatus fmats_model_theta(const struct FmatsModel *model,
                                   size_t lag,
                                   double *out,
                                   size_t len);

/*
 Forecast of the curve following the `n` rows of `data` (row-major,
 D columns); writes D coefficients to `out`.
 */
enum FmatsStatus fmats_model_predict(const struct FmatsModel *model,
                                     const double *data,
                                     size_t n,
                                     double *out,
                                     size_t len);

/*
 Kernel of `θ̂_lag` on a `grid_size`×`grid_size` equispaced grid
 (row-major, row index s).
 */
enum FmatsStatus fmats_model_kernel(const struct FmatsModel *model,
                                    size_t lag,
                                    size_t grid_size,
                                    double *out,
                                    size_t len);

/*
 Writes the model as a JSON document.
 */
enum FmatsStatus fmats_model_save(const struct FmatsModel *model, const char *path);

/*
 Reads a model JSON document.
 */
enum FmatsStatus fmats_model_load(const char *path, struct FmatsModel **out);

/*
 Releases a model. Null is ignored.
 */
void fmats_model_free(struct FmatsModel *model);

/*
 Upper-`alpha` quantile of the χ² distribution with `df` degrees of
 freedom.
 */
enum FmatsStatus fmats_chi_sq_quantile(size_t df, double alpha, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FMATS_H */
