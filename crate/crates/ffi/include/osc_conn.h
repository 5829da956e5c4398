#ifndef OSC_CONN_H
#define OSC_CONN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum OcStatus {
  OC_STATUS_OK = 0,
  OC_STATUS_NULL_POINTER = 1,
  OC_STATUS_DOMAIN = 2,
  OC_STATUS_PARAMETER = 3,
  OC_STATUS_RANGE = 4,
  OC_STATUS_SHAPE = 5,
  OC_STATUS_DEGENERATE_FIT = 6,
  OC_STATUS_NUMERICAL = 7,
  OC_STATUS_BRACKET = 8,
  OC_STATUS_PARSE = 9,
  OC_STATUS_IO = 10,
  OC_STATUS_PANIC = 11,
} OcStatus;

/**
 * Opaque list of 5x5 kernels.
 */
typedef struct OcKernelBank OcKernelBank;

/**
 * Opaque simulation settings.
 */
typedef struct OcSimConfig OcSimConfig;

/**
 * Detector readout of one inference.
 */
typedef struct OcDomResult {
  double dom;
  double sample_time;
  double r_final;
  double ideal_dot;
  uint64_t seed;
} OcDomResult;

typedef struct OcFitResult {
  double slope;
  double intercept;
  double r2;
  /**
   * Non-zero when the responses had no variance.
   */
  uint8_t degenerate;
} OcFitResult;

typedef struct OcEnergyModel {
  uint32_t n_osc;
  double p_osc;
  double p_pd;
  double t_inf;
} OcEnergyModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *oc_version(void);

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *oc_last_error_message(void);

/**
 * New settings with library defaults. Release with [`oc_sim_config_free`].
 */
struct OcSimConfig *oc_sim_config_new(void);

/**
 * # Safety
 * `cfg` must come from [`oc_sim_config_new`] and not be used afterwards.
 */
void oc_sim_config_free(struct OcSimConfig *cfg);

/**
 * Sets a numeric field: `dt`, `t_end`, `t_del`, `t_int`, `tau_rise`,
 * `tau_leak` or `amplitude`. The updated settings must validate.
 *
 * # Safety
 * `cfg` must be a live handle and `key` a NUL-terminated string.
 */
enum OcStatus oc_sim_config_set(struct OcSimConfig *cfg, const char *key, double value);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum OcStatus oc_sim_config_set_seed(struct OcSimConfig *cfg, uint64_t seed);

/**
 * `mode` 0 = uniform random phases, 1 = ring-state quantized phases.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum OcStatus oc_sim_config_set_init_mode(struct OcSimConfig *cfg, uint32_t mode);

/**
 * Detector sampling instant in ns, or NaN for a null handle.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
double oc_sim_config_sample_time(const struct OcSimConfig *cfg);

/**
 * Writes the 25 values of a Gabor kernel into `out`.
 *
 * # Safety
 * `out` must point to 25 writable doubles.
 */
enum OcStatus oc_gabor_kernel(double theta_deg, double k, double sigma, double *out);

/**
 * Builds the orientation × k filter bank; null on error.
 *
 * # Safety
 * `orientations` and `ks` must point to `n_orientations` and `n_ks` doubles.
 */
struct OcKernelBank *oc_filter_bank_new(const double *orientations,
                                        uintptr_t n_orientations,
                                        const double *ks,
                                        uintptr_t n_ks,
                                        double sigma);

/**
 * # Safety
 * `bank` must be null or a live handle.
 */
uintptr_t oc_filter_bank_len(const struct OcKernelBank *bank);

/**
 * Copies kernel `index` into `out` (25 doubles).
 *
 * # Safety
 * `bank` must be a live handle and `out` point to 25 writable doubles.
 */
enum OcStatus oc_filter_bank_kernel(const struct OcKernelBank *bank, uintptr_t index, double *out);

/**
 * # Safety
 * `bank` must come from [`oc_filter_bank_new`] and not be used afterwards.
 */
void oc_filter_bank_free(struct OcKernelBank *bank);

/**
 * # Safety
 * `fragment` and `kernel` must point to 25 doubles in [-1, 1]; `out` to one.
 */
enum OcStatus oc_ideal_dot(const double *fragment_ptr, const double *kernel_ptr, double *out);

/**
 * IDAC codes (0..=20) of the pixel-wise differences.
 *
 * # Safety
 * `fragment` and `kernel` must point to 25 doubles; `out_codes` to 25 bytes.
 */
enum OcStatus oc_encode_differences(const double *fragment_ptr,
                                    const double *kernel_ptr,
                                    uint8_t *out_codes);

/**
 * One inference with the stage-preset frequency calibration.
 *
 * # Safety
 * Patches must point to 25 doubles, `cfg` must be a live handle and `out`
 * writable.
 */
enum OcStatus oc_run_inference(const double *fragment_ptr,
                               const double *kernel_ptr,
                               uint32_t stages,
                               double coupling_k,
                               const struct OcSimConfig *cfg,
                               struct OcDomResult *out);

/**
 * Runs one inference and writes its detector trace CSV to `path`.
 *
 * # Safety
 * As [`oc_run_inference`]; `path` must be a NUL-terminated string.
 */
enum OcStatus oc_write_trace_csv(const double *fragment_ptr,
                                 const double *kernel_ptr,
                                 uint32_t stages,
                                 double coupling_k,
                                 const struct OcSimConfig *cfg,
                                 uintptr_t record_every,
                                 const char *path);

/**
 * Least-squares fit of `ys` against `xs`.
 *
 * # Safety
 * `xs` and `ys` must point to `n` doubles; `out` must be writable.
 */
enum OcStatus oc_linear_fit(const double *xs,
                            const double *ys,
                            uintptr_t n,
                            struct OcFitResult *out);

struct OcEnergyModel oc_energy_model_default(void);

/**
 * Energy per inference in picojoules.
 *
 * # Safety
 * `model` must be readable and `out_pj` writable.
 */
enum OcStatus oc_energy_per_inference(const struct OcEnergyModel *model, double *out_pj);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSC_CONN_H */
