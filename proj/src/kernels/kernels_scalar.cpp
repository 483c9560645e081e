#include <cmath>

#include "pipe/kernels.hpp"

namespace pipe::kernels::detail {

void exp_batch_scalar(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    if (v < -707.0) v = -707.0;
    if (v > 709.0) v = 709.0;
    y[i] = std::exp(v);
  }
}

void gauss_logpdf_batch_scalar(const double* t, std::size_t n, double mu, double inv_sigma,
                               double log_norm, double* lp) {
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (t[i] - mu) * inv_sigma;
    lp[i] = -0.5 * u * u - log_norm;
  }
}

weighted_sums_result weighted_sums_scalar(const double* t, const double* w, std::size_t n) {
  weighted_sums_result r;
  for (std::size_t i = 0; i < n; ++i) {
    r.w += w[i];
    r.wt += w[i] * t[i];
    r.wtt += w[i] * t[i] * t[i];
  }
  return r;
}

}  // namespace pipe::kernels::detail
