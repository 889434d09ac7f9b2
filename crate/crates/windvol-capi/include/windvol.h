#ifndef WINDVOL_H
#define WINDVOL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define WV_OK 0

/**
 * A pointer argument was null or an index out of range.
 */
#define WV_ERR_ARGUMENT 1

/**
 * Invalid configuration or parameters.
 */
#define WV_ERR_CONFIG 2

/**
 * Data could not be loaded or failed validation.
 */
#define WV_ERR_DATA 3

/**
 * A numerical routine failed (non-convergence, singularity, degeneracy).
 */
#define WV_ERR_NUMERIC 4

/**
 * A panic was caught inside the library.
 */
#define WV_ERR_INTERNAL 5

/**
 * Opaque station panel handle.
 */
typedef struct WvPanel WvPanel;

/**
 * Opaque residual-panel handle (seasonal decomposition + AR(1) filter).
 */
typedef struct WvResiduals WvResiduals;

/**
 * Opaque spatial weight matrix handle.
 */
typedef struct WvWeights WvWeights;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message for the most recent error on this thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full message length.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes, or be null (the call
 * then only reports the length).
 */
uintptr_t wv_last_error_message(char *buf, uintptr_t cap);

/**
 * Load a panel from a CSV file with columns date, station_id, lon, lat,
 * value. `variable` is "ws10" or "ws100". On success `*out` owns the handle;
 * release it with `wv_panel_free`.
 *
 * # Safety
 * `path` and `variable` must be valid NUL-terminated strings; `out` must be
 * a valid pointer.
 */
int32_t wv_panel_load(const char *path, const char *variable, struct WvPanel **out);

/**
 * Release a panel handle. Null is ignored.
 *
 * # Safety
 * `panel` must be a handle returned by this library, not yet freed.
 */
void wv_panel_free(struct WvPanel *panel);

/**
 * Number of days and stations in the panel.
 *
 * # Safety
 * `panel` must be a live handle; `t_out` and `n_out` must be valid or null.
 */
int32_t wv_panel_dims(const struct WvPanel *panel, uintptr_t *t_out, uintptr_t *n_out);

/**
 * Copy the panel values (row-major T x N) into `buf`.
 *
 * # Safety
 * `buf` must point to at least T*N doubles.
 */
int32_t wv_panel_values(const struct WvPanel *panel, double *buf, uintptr_t len);

/**
 * Pooled descriptive statistics, written as
 * [median, mean, iqr, sd, min, max] into a 6-slot buffer.
 *
 * # Safety
 * `stats6` must point to 6 writable doubles.
 */
int32_t wv_panel_stats(const struct WvPanel *panel, double *stats6);

/**
 * Decompose and filter every station series; `period` is the seasonal
 * cycle length in days (365 for daily data).
 *
 * # Safety
 * `panel` must be a live handle and `out` a valid pointer.
 */
int32_t wv_preprocess(const struct WvPanel *panel, uintptr_t period, struct WvResiduals **out);

/**
 * Release a residual-panel handle. Null is ignored.
 *
 * # Safety
 * `res` must be a handle returned by this library, not yet freed.
 */
void wv_residuals_free(struct WvResiduals *res);

/**
 * Dimensions of the residual matrix ((T-1) rows by N stations).
 *
 * # Safety
 * `res` must be a live handle; outputs must be valid or null.
 */
int32_t wv_residuals_dims(const struct WvResiduals *res, uintptr_t *rows_out, uintptr_t *n_out);

/**
 * Copy the residual matrix (row-major) into `buf`.
 *
 * # Safety
 * `buf` must point to at least rows*N doubles.
 */
int32_t wv_residuals_values(const struct WvResiduals *res, double *buf, uintptr_t len);

/**
 * k-nearest-neighbour weights over the panel's projected coordinates.
 *
 * # Safety
 * `panel` must be a live handle and `out` a valid pointer.
 */
int32_t wv_weights_knn(const struct WvPanel *panel, uintptr_t k, struct WvWeights **out);

/**
 * Distance-band weights: all stations within `radius_m` metres.
 *
 * # Safety
 * `panel` must be a live handle and `out` a valid pointer.
 */
int32_t wv_weights_distance_band(const struct WvPanel *panel,
                                 double radius_m,
                                 struct WvWeights **out);

/**
 * Release a weight-matrix handle. Null is ignored.
 *
 * # Safety
 * `w` must be a handle returned by this library, not yet freed.
 */
void wv_weights_free(struct WvWeights *w);

/**
 * Single weight entry W[i][j] (0 when not neighbours).
 *
 * # Safety
 * `w` must be a live handle and `value_out` valid.
 */
int32_t wv_weights_get(const struct WvWeights *w, uintptr_t i, uintptr_t j, double *value_out);

/**
 * GARCH(1,1) maximum-likelihood fit of a single residual series. Outputs
 * are written as [omega, alpha, beta, loglik] into a 4-slot buffer.
 *
 * # Safety
 * `e` must point to `len` doubles, `out4` to 4 writable doubles.
 */
int32_t wv_fit_garch(const double *e, uintptr_t len, double *out4);

/**
 * EGARCH(1,1) fit. Outputs [omega, alpha, gamma, beta, loglik] into a
 * 5-slot buffer.
 *
 * # Safety
 * `e` must point to `len` doubles, `out5` to 5 writable doubles.
 */
int32_t wv_fit_egarch(const double *e, uintptr_t len, double *out5);

/**
 * Joint spatiotemporal ARMA-GARCH fit of a row-major T x N residual panel.
 * Outputs [mu, phi, theta, omega, alpha, beta, loglik] into a 7-slot
 * buffer.
 *
 * # Safety
 * `e` must point to `len` doubles (len = T*N for the weight matrix's N),
 * `out7` to 7 writable doubles.
 */
int32_t wv_fit_st(const double *e, uintptr_t len, const struct WvWeights *w, double *out7);

/**
 * Library version as a static string.
 */
const char *wv_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* WINDVOL_H */
