#ifndef VSS_H
#define VSS_H

#include <stddef.h>
#include <stdint.h>

typedef enum VssStatus {
  VSS_STATUS_OK = 0,
  VSS_STATUS_NULL_POINTER = 1,
  // Solver or continuation failed to converge.
  VSS_STATUS_NO_CONVERGENCE = 2,
  VSS_STATUS_INVALID_ARGUMENT = 3,
  // Result computed but flagged (identity violated, unreliable estimate).
  VSS_STATUS_ANOMALY = 4,
  VSS_STATUS_BUFFER_TOO_SMALL = 5,
  VSS_STATUS_PANIC = 6,
} VssStatus;

typedef enum VssVariant {
  VSS_VARIANT_MONOTONE = 0,
  VSS_VARIANT_NON_MONOTONE = 1,
} VssVariant;

typedef enum VssParity {
  VSS_PARITY_EVEN = 0,
  VSS_PARITY_ODD = 1,
} VssParity;

// Problem parameters (m, N, p, α, variant).
typedef struct VssParams VssParams;

// A converged similarity profile.
typedef struct VssProfile VssProfile;

typedef struct VssBlowupSummary {
  double y0;
  double mu_fit;
  double mu_expected;
  double ratio_mean;
  double ratio_stddev;
  size_t zero_count;
} VssBlowupSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated, truncated to `len`).
// Returns the full message length excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t vss_last_error(char *buf, size_t len);

// Static NUL-terminated version string.
const char *vss_version(void);

double vss_critical_p(uint32_t l, uint32_t m, uint32_t n, double alpha);

double vss_critical_alpha(uint32_t l, uint32_t m, uint32_t n, double p);

// # Safety
// `out` must be a valid pointer.
enum VssStatus vss_mu0(uint32_t m, uint32_t n, double alpha, double *out);

// # Safety
// `out` must be a valid pointer; the handle written there is freed with [`vss_params_free`].
enum VssStatus vss_params_new(uint32_t m,
                              uint32_t n,
                              double p,
                              double alpha,
                              enum VssVariant variant,
                              struct VssParams **out);

// # Safety
// `params` must be null or a handle from [`vss_params_new`] not yet freed.
void vss_params_free(struct VssParams *params);

// β = (1+α)/(p-1).
//
// # Safety
// `params` must be a live handle.
double vss_params_beta(const struct VssParams *params);

// Shoots from the free parameters `guess[0..len]` (len = m).
//
// # Safety
// `params` must be a live handle, `guess` must point to `len` doubles, `out` must be valid.
enum VssStatus vss_profile_solve(const struct VssParams *params,
                                 enum VssParity par,
                                 const double *guess,
                                 size_t len,
                                 struct VssProfile **out);

// Follows the p-branch born at critical index `l` down to the parameters' p.
//
// # Safety
// `params` must be a live handle and `out` valid.
enum VssStatus vss_profile_from_bifurcation(const struct VssParams *params,
                                            uint32_t l,
                                            struct VssProfile **out);

// # Safety
// `profile` must be null or a handle not yet freed.
void vss_profile_free(struct VssProfile *profile);

// V(0) for even profiles, V'(0) for odd ones; NaN for a null handle.
//
// # Safety
// `profile` must be null or a live handle.
double vss_profile_amplitude(const struct VssProfile *profile);

// # Safety
// `profile` must be null or a live handle.
double vss_profile_sup_norm(const struct VssProfile *profile);

// # Safety
// `profile` must be null or a live handle.
size_t vss_profile_dominant_extrema(const struct VssProfile *profile);

// Relative residual of the integral identity.
//
// # Safety
// `profile` must be a live handle and `out` valid.
enum VssStatus vss_profile_identity_residual(const struct VssProfile *profile, double *out);

// Number of grid points on [0, L].
//
// # Safety
// `profile` must be null or a live handle.
size_t vss_profile_len(const struct VssProfile *profile);

// Copies the grid and V into caller buffers of length `cap`.
//
// # Safety
// `y` and `v` must each point to `cap` writable doubles.
enum VssStatus vss_profile_copy(const struct VssProfile *profile, double *y, double *v, size_t cap);

// Integrates V'''' = -|V|^{p-1}V from `init` (4 values) to the blow-up point.
//
// # Safety
// `init` must point to 4 doubles and `out` be valid.
enum VssStatus vss_blowup(double p, const double *init, struct VssBlowupSummary *out);

// Helper for C callers holding a NUL-terminated variant name.
//
// # Safety
// `name` must be null or a valid C string.
enum VssStatus vss_variant_from_name(const char *name, enum VssVariant *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VSS_H */
