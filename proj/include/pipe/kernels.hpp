#pragma once

#include <cstddef>

// Batched inner-loop kernels for the EM fitter and forecaster. Each kernel has
// a scalar reference implementation and an AVX2 variant; the backend is picked
// once at startup from the CPU feature set and can be overridden with the
// PIPE_KERNELS environment variable ("scalar" or "avx2") or set_backend().
// Variants are equivalence-tested against the scalar reference.
namespace pipe::kernels {

enum class backend { scalar, avx2 };

backend active_backend();
const char* backend_name(backend b);

// Throws numeric_error if the requested backend is not supported on this CPU.
void set_backend(backend b);

// y[i] = exp(x[i]). Inputs are clamped to [-707, 709]; values below the clamp
// flush to exp(-707) rather than denormals, which is fine for probability
// work where such terms are dead weight anyway.
void exp_batch(const double* x, double* y, std::size_t n);

// lp[i] = -0.5 * ((t[i] - mu) * inv_sigma)^2 - log_norm
// log_norm bundles log(sigma) + log(Z) + 0.5*log(2*pi) for a truncated
// Gaussian, so lp is its log-density for in-support t.
void gauss_logpdf_batch(const double* t, std::size_t n, double mu, double inv_sigma,
                        double log_norm, double* lp);

struct weighted_sums_result {
  double w = 0.0;    // sum of w[i]
  double wt = 0.0;   // sum of w[i] * t[i]
  double wtt = 0.0;  // sum of w[i] * t[i]^2
};

weighted_sums_result weighted_sums(const double* t, const double* w, std::size_t n);

namespace detail {
void exp_batch_scalar(const double* x, double* y, std::size_t n);
void gauss_logpdf_batch_scalar(const double* t, std::size_t n, double mu, double inv_sigma,
                               double log_norm, double* lp);
weighted_sums_result weighted_sums_scalar(const double* t, const double* w, std::size_t n);

bool avx2_available();
void exp_batch_avx2(const double* x, double* y, std::size_t n);
void gauss_logpdf_batch_avx2(const double* t, std::size_t n, double mu, double inv_sigma,
                             double log_norm, double* lp);
weighted_sums_result weighted_sums_avx2(const double* t, const double* w, std::size_t n);
}  // namespace detail

}  // namespace pipe::kernels
