#ifndef FRINGECORR_H
#define FRINGECORR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result codes. Values are stable.
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_INPUT = 2,
  FC_STATUS_NUMERICAL = 3,
  FC_STATUS_PARSE = 4,
  FC_STATUS_IO = 5,
  FC_STATUS_PANIC = 6,
} FcStatus;

// Time-sorted detector events.
typedef struct FcEventSet FcEventSet;

// Normalized `g²(u, τ)` grid with its pair counts.
typedef struct FcGrid FcGrid;

// Tone list `φ(t) = Σ φ_j cos(2π f_j t + θ_j)`.
typedef struct FcPerturbation FcPerturbation;

// Fringe parameters of `g²(u, 0)`.
typedef struct FcFringeFit {
  double contrast_g2;
  double contrast_g2_se;
  // Period in mm.
  double period_g2;
  double period_g2_se;
  double phase_offset;
  double baseline;
  double residual_rms;
  // Nonzero when the fringe amplitude is not distinguishable from noise.
  int below_noise_floor;
} FcFringeFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL after a
// successful call. The pointer stays valid until the next `fc_*` call on
// the same thread.
const char *fc_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *fc_version(void);

// Builds a tone list from parallel arrays: frequencies in Hz, peak phase
// deviations and phases in radians. `n` may be zero.
//
// # Safety
// Each array must hold `n` readable values; `out` must be writable.
enum FcStatus fc_perturbation_new(const double *frequencies_hz,
                                  const double *amplitudes,
                                  const double *phases,
                                  size_t n,
                                  struct FcPerturbation **out_handle);

// Parses `"HZ:AMP:PHASE;HZ:AMP:PHASE"` with angles in radians or multiples
// of π (`"0.4pi"`).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum FcStatus fc_perturbation_parse(const char *text, struct FcPerturbation **out_handle);

// Number of tones; 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
size_t fc_perturbation_len(const struct FcPerturbation *p);

// `φ(t)` in radians; NaN for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
double fc_perturbation_evaluate(const struct FcPerturbation *p, double t);

// # Safety
// `p` must be NULL or a handle not yet freed.
void fc_perturbation_free(struct FcPerturbation *p);

// Simulates `n_events` arrivals at `count_rate_hz` on a fringe of the given
// contrast and period (mm) over a detector of `acquisition_length_mm`.
// `perturbation` may be NULL for an unperturbed pattern.
//
// # Safety
// `perturbation` must be NULL or a live handle; `out` must be writable.
enum FcStatus fc_simulate(double contrast,
                          double period_mm,
                          const struct FcPerturbation *perturbation,
                          size_t n_events,
                          double count_rate_hz,
                          double acquisition_length_mm,
                          uint64_t seed,
                          struct FcEventSet **out_handle);

// Builds an event set from parallel columns (seconds, millimetres).
//
// # Safety
// `t` and `y` must each hold `n` readable values; `out` must be writable.
enum FcStatus fc_events_from_columns(const double *t,
                                     const double *y,
                                     size_t n,
                                     double acquisition_time_s,
                                     double acquisition_length_mm,
                                     struct FcEventSet **out_handle);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FcStatus fc_events_load(const char *path, struct FcEventSet **out_handle);

// Writes the event file and its metadata sidecar.
//
// # Safety
// `events` must be a live handle; `path` a NUL-terminated string.
enum FcStatus fc_events_save(const struct FcEventSet *events, const char *path);

// Number of events; 0 for NULL.
//
// # Safety
// `events` must be NULL or a live handle.
size_t fc_events_len(const struct FcEventSet *events);

// Acquisition time T in seconds; NaN for NULL.
//
// # Safety
// `events` must be NULL or a live handle.
double fc_events_acquisition_time(const struct FcEventSet *events);

// Acquisition length Y in mm; NaN for NULL.
//
// # Safety
// `events` must be NULL or a live handle.
double fc_events_acquisition_length(const struct FcEventSet *events);

// Copies the time and position columns into caller buffers of `capacity`
// values each. Either buffer may be NULL to skip it. Fails without writing
// if the capacity is smaller than [`fc_events_len`].
//
// # Safety
// `events` must be a live handle; non-NULL buffers must hold `capacity`
// writable values.
enum FcStatus fc_events_copy(const struct FcEventSet *events,
                             double *t_out,
                             double *y_out,
                             size_t capacity);

// Contrast of the position histogram for a known period (mm).
//
// # Safety
// `events` must be a live handle; `out` must be writable.
enum FcStatus fc_events_histogram_contrast(const struct FcEventSet *events,
                                           double period_mm,
                                           double *out_contrast);

// Removes a known perturbation: `y → y + (λ/2π) φ(t)`, folded back into
// the window.
//
// # Safety
// `events` and `perturbation` must be live handles; `out` must be writable.
enum FcStatus fc_reconstruct(const struct FcEventSet *events,
                             double period_mm,
                             const struct FcPerturbation *perturbation,
                             struct FcEventSet **out_handle);

// # Safety
// `events` must be NULL or a handle not yet freed.
void fc_events_free(struct FcEventSet *events);

// Counts event pairs into `(u, τ)` bins and normalizes them. Ranges round
// up to whole bins; `workers = 0` uses every available thread. The result
// does not depend on `workers`.
//
// # Safety
// `events` must be a live handle; `out` must be writable.
enum FcStatus fc_correlate(const struct FcEventSet *events,
                           double du_mm,
                           double dtau_s,
                           double tau_max_s,
                           double u_max_mm,
                           size_t workers,
                           struct FcGrid **out_handle);

// Reads a text or binary (`.fcg`) grid file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FcStatus fc_grid_load(const char *path, struct FcGrid **out_handle);

// Writes a grid; the encoding follows the extension (`.fcg` is binary).
//
// # Safety
// `grid` must be a live handle; `path` a NUL-terminated string.
enum FcStatus fc_grid_save(const struct FcGrid *grid, const char *path);

// Bin counts along u and τ.
//
// # Safety
// `grid` must be a live handle; `n_u` and `n_tau` must be writable.
enum FcStatus fc_grid_shape(const struct FcGrid *grid, size_t *n_u, size_t *n_tau);

// Bin sizes and ranges: `du` (mm), `dtau` (s), `u_max` (mm), `tau_max` (s).
//
// # Safety
// `grid` must be a live handle; all outputs must be writable.
enum FcStatus fc_grid_geometry(const struct FcGrid *grid,
                               double *du_mm,
                               double *dtau_s,
                               double *u_max_mm,
                               double *tau_max_s);

// `g²` at bin `(iu, itau)` and its pair count. Invalid bins near the window
// edge report 0 with `valid = 0`.
//
// # Safety
// `grid` must be a live handle; `value` must be writable; `count` and
// `valid` may be NULL.
enum FcStatus fc_grid_bin(const struct FcGrid *grid,
                          size_t iu,
                          size_t itau,
                          double *value,
                          uint64_t *count,
                          int *valid);

// Copies all values, row-major over `[iu][itau]`, into a buffer of
// `capacity` values.
//
// # Safety
// `grid` must be a live handle; `values` must hold `capacity` writable
// values.
enum FcStatus fc_grid_copy_values(const struct FcGrid *grid, double *values, size_t capacity);

// Fits `b + (K²/2) cos(k u + ψ)` at `τ = 0`.
//
// # Safety
// `grid` must be a live handle; `out` must be writable.
enum FcStatus fc_grid_fit_fringe(const struct FcGrid *grid, struct FcFringeFit *out_fit);

// # Safety
// `grid` must be NULL or a handle not yet freed.
void fc_grid_free(struct FcGrid *grid);

// Time-averaged contrast `K Π J₀(φ_j)` of the perturbed pattern.
// `perturbation` may be NULL.
//
// # Safety
// `perturbation` must be NULL or a live handle; `out` must be writable.
enum FcStatus fc_reduced_contrast(double contrast,
                                  double period_mm,
                                  const struct FcPerturbation *perturbation,
                                  double *out_contrast);

// Approximate correlation function `g²(u, τ)` (trivial multiplets only),
// with the default Bessel truncation. `perturbation` may be NULL.
//
// # Safety
// `perturbation` must be NULL or a live handle; `out` must be writable.
enum FcStatus fc_g2_approx(double contrast,
                           double period_mm,
                           const struct FcPerturbation *perturbation,
                           double u_mm,
                           double tau_s,
                           double *out_value);

// Bessel function of the first kind `J_n(x)` for integer order.
double fc_bessel_j(int n, double x);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRINGECORR_H */
