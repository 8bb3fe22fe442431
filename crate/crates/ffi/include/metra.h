#ifndef METRA_H
#define METRA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Distance entry for a state that cannot be reached.
 */
#define METRA_UNREACHABLE UINT32_MAX

typedef enum MetraStatus {
  METRA_STATUS_OK = 0,
  METRA_STATUS_NULL_POINTER = 1,
  METRA_STATUS_INVALID_ARGUMENT = 2,
  METRA_STATUS_INVALID_ENV = 3,
  METRA_STATUS_NOT_ENUMERABLE = 4,
  METRA_STATUS_NUMERICAL = 5,
  METRA_STATUS_CHECKPOINT = 6,
  METRA_STATUS_IO = 7,
  METRA_STATUS_BUFFER_TOO_SMALL = 8,
  METRA_STATUS_PANIC = 9,
} MetraStatus;

/**
 * A grid world with its horizon.
 */
typedef struct MetraGrid MetraGrid;

/**
 * A trained run loaded from a checkpoint.
 */
typedef struct MetraRun MetraRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *metra_last_error(void);

/**
 * Open `width` x `height` grid starting at the center cell.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum MetraStatus metra_grid_new(uintptr_t width,
                                uintptr_t height,
                                uintptr_t horizon,
                                struct MetraGrid **out);

/**
 * Grid from an ASCII map: `#` wall, `.` free, `S` start, `>` `<` `^` `v` one-way doors.
 *
 * # Safety
 * `map` must be a NUL-terminated string and `out` valid for a pointer write.
 */
enum MetraStatus metra_grid_from_ascii(const char *map, uintptr_t horizon, struct MetraGrid **out);

/**
 * # Safety
 * `grid` must come from `metra_grid_new` or `metra_grid_from_ascii` and not be used afterwards. NULL is ignored.
 */
void metra_grid_free(struct MetraGrid *grid);

/**
 * # Safety
 * `grid` must be a live handle and `out` valid for a write.
 */
enum MetraStatus metra_grid_num_states(const struct MetraGrid *grid, uintptr_t *out);

/**
 * Cell `(x, y)` of state index `state`.
 *
 * # Safety
 * `grid` must be a live handle, `x` and `y` valid for writes.
 */
enum MetraStatus metra_grid_cell(const struct MetraGrid *grid,
                                 uintptr_t state,
                                 uintptr_t *x,
                                 uintptr_t *y);

/**
 * Row-major `n` x `n` step counts into `out` (`len >= n * n`), `METRA_UNREACHABLE` where no path exists.
 *
 * # Safety
 * `grid` must be a live handle and `out` valid for `len` writes.
 */
enum MetraStatus metra_grid_distances(const struct MetraGrid *grid,
                                      uint32_t *out,
                                      uintptr_t len);

/**
 * Best linear map on the ellipse `x^T A^{-1} x <= 1`: `a` is row-major `m` x `m`,
 * `w_out` receives row-major `m` x `d` (`w_len >= m * d`) and `value_out` the optimum.
 *
 * # Safety
 * `a` must hold `m * m` values, `w_out` be valid for `w_len` writes, `value_out` for one.
 */
enum MetraStatus metra_pca_optimum(const double *a,
                                   uintptr_t m,
                                   uintptr_t d,
                                   double *w_out,
                                   uintptr_t w_len,
                                   double *value_out);

/**
 * Loads a run directory or the checkpoint directory inside it.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for a pointer write.
 */
enum MetraStatus metra_checkpoint_load(const char *path, struct MetraRun **out);

/**
 * # Safety
 * `run` must come from `metra_checkpoint_load` and not be used afterwards. NULL is ignored.
 */
void metra_run_free(struct MetraRun *run);

/**
 * Dimensions of observations `phi` reads and of the latent space it writes.
 *
 * # Safety
 * `run` must be a live handle; `obs_dim` and `latent_dim` valid for writes.
 */
enum MetraStatus metra_run_dims(const struct MetraRun *run,
                                uintptr_t *obs_dim,
                                uintptr_t *latent_dim);

/**
 * Observation of the state at `coords`: a free cell `(x, y)` on grids, a point inside the ellipse otherwise.
 *
 * # Safety
 * `coords` must hold `n` values and `obs_out` be valid for `obs_len` writes.
 */
enum MetraStatus metra_run_observe(const struct MetraRun *run,
                                   const double *coords,
                                   uintptr_t n,
                                   double *obs_out,
                                   uintptr_t obs_len);

/**
 * `phi(obs)` into `out`.
 *
 * # Safety
 * `obs` must hold `obs_len` values and `out` be valid for `out_len` writes.
 */
enum MetraStatus metra_run_phi(const struct MetraRun *run,
                               const double *obs,
                               uintptr_t obs_len,
                               double *out,
                               uintptr_t out_len);

/**
 * Skill pointing from observation `s` to observation `g`. When the two embed
 * to the same point `*reached` is set to 1 and `z_out` is left untouched.
 *
 * # Safety
 * `s` and `g` must hold `obs_len` values, `z_out` be valid for `z_len` writes and `reached` for one.
 */
enum MetraStatus metra_run_zero_shot(const struct MetraRun *run,
                                     const double *s,
                                     const double *g,
                                     uintptr_t obs_len,
                                     double *z_out,
                                     uintptr_t z_len,
                                     int32_t *reached);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* METRA_H */
