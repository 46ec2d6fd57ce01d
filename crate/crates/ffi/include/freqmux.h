/* Generated by cbindgen. Do not edit. */

#ifndef FREQMUX_H
#define FREQMUX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FmArm {
  FM_ARM_SIGNAL = 0,
  FM_ARM_HERALD = 1,
} FmArm;

typedef enum FmDetectorCase {
  FM_DETECTOR_CASE_BEST = 0,
  FM_DETECTOR_CASE_WORST = 1,
} FmDetectorCase;

typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_OUT_OF_RANGE = 3,
  FM_STATUS_NOT_CONVERGED = 4,
  FM_STATUS_NUMERIC = 5,
  FM_STATUS_CONFIG = 6,
  FM_STATUS_IO = 7,
  FM_STATUS_PANIC = 8,
} FmStatus;

/**
 * Scenario configuration.
 */
typedef struct FmConfig FmConfig;

/**
 * Serrodyne frequency shifter.
 */
typedef struct FmShifter FmShifter;

/**
 * Heralded-state model used by the purity integral.
 */
typedef struct FmStateModel FmStateModel;

/**
 * Counting probabilities. Standard errors are zero for closed-form results.
 */
typedef struct FmCounting {
  double p_h;
  double p_s;
  double p_sh;
  double g2_h;
  double se_p_sh;
  double se_g2_h;
} FmCounting;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *fm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fm_version(void);

/**
 * Default scenario configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FmStatus fm_config_default(struct FmConfig **out);

/**
 * Parses a TOML configuration. Missing keys take their defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FmStatus fm_config_from_toml(const char *toml, struct FmConfig **out);

/**
 * # Safety
 * `config` must come from this library or be null.
 */
void fm_config_free(struct FmConfig *config);

/**
 * # Safety
 * `config` must be a valid handle.
 */
enum FmStatus fm_config_set_seed(struct FmConfig *config, uint64_t seed);

/**
 * State model from a configuration with the given spectrometer uncertainty
 * (frequency FWHM, GHz), ideal-detection flag and GVD parameter γ (s²).
 *
 * # Safety
 * `config` must be a valid handle and `out` a valid pointer.
 */
enum FmStatus fm_state_model_new(const struct FmConfig *config,
                                 double uncertainty_fwhm_ghz,
                                 bool ideal,
                                 double gamma,
                                 struct FmStateModel **out);

/**
 * State model for the configuration as written.
 *
 * # Safety
 * `config` must be a valid handle and `out` a valid pointer.
 */
enum FmStatus fm_state_model_from_config(const struct FmConfig *config, struct FmStateModel **out);

/**
 * # Safety
 * `model` must come from this library or be null.
 */
void fm_state_model_free(struct FmStateModel *model);

/**
 * Tr ρ² of the heralded signal state.
 *
 * # Safety
 * `model` must be a valid handle and `purity` a valid pointer.
 */
enum FmStatus fm_purity(const struct FmStateModel *model, double *purity);

/**
 * GVD parameter in s² for dispersion D (ps/(nm·km)), length (m) and
 * wavelength (m).
 *
 * # Safety
 * `gamma` must be a valid pointer.
 */
enum FmStatus fm_gvd_parameter(double dispersion_ps_nm_km,
                               double length_m,
                               double wavelength_m,
                               double *gamma);

/**
 * Shifter whose full drive gives `max_shift_hz`. Jitter in seconds.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FmStatus fm_shifter_new(double v_pi,
                             double nu_rf_hz,
                             double max_shift_hz,
                             double sigma_jitter_s,
                             struct FmShifter **out);

/**
 * # Safety
 * `shifter` must come from this library or be null.
 */
void fm_shifter_free(struct FmShifter *shifter);

/**
 * Signed frequency shift in Hz for drive amplitude `v0` (V).
 *
 * # Safety
 * `shifter` must be a valid handle and `shift_hz` a valid pointer.
 */
enum FmStatus fm_shift(const struct FmShifter *shifter, double v0, double *shift_hz);

/**
 * Purity after a shift of `shift_hz` applied by a drive with timing jitter
 * `sigma_jitter_s` to a pulse of amplitude spectral std `sigma` (rad/s).
 *
 * # Safety
 * `shifter` must be a valid handle and `purity` a valid pointer.
 */
enum FmStatus fm_phase_jitter_purity(const struct FmShifter *shifter,
                                     double sigma_jitter_s,
                                     double sigma,
                                     double shift_hz,
                                     double *purity);

/**
 * Counting statistics. `pulses == 0` selects the closed-form expansion,
 * otherwise a Monte Carlo run with `seed`.
 *
 * # Safety
 * `result` must be a valid pointer.
 */
enum FmStatus fm_counting(uint32_t n_modes,
                          double mu,
                          double eta_s,
                          double eta_h,
                          bool multiplexed,
                          uint64_t pulses,
                          uint64_t seed,
                          struct FmCounting *result);

/**
 * HOM visibility `purity · (1 − g2_h)`.
 *
 * # Safety
 * `visibility` must be a valid pointer.
 */
enum FmStatus fm_hom_visibility(double purity, double g2_h, double *visibility);

/**
 * Transmission of one arm under the laboratory loss table.
 *
 * # Safety
 * `efficiency` must be a valid pointer.
 */
enum FmStatus fm_arm_efficiency(enum FmDetectorCase case_, enum FmArm arm, double *efficiency);

/**
 * Pearson correlations of the unshifted and shifted joint histograms of a
 * feed-forward stream, and the fraction of events passing the filter.
 *
 * # Safety
 * `config` must be a valid handle; the output pointers must be valid.
 */
enum FmStatus fm_stream_correlations(const struct FmConfig *config,
                                     uint64_t pulses,
                                     double *unshifted_r,
                                     double *shifted_r,
                                     double *passed_fraction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREQMUX_H */
