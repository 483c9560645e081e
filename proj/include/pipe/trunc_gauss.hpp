#pragma once

#include <span>

#include "pipe/common.hpp"

namespace pipe {

// TN(mu, sigma, a, b): a normal restricted and renormalized to [a, b].
// In link-parameter context a >= 0 additionally holds (travel times); the
// math here only needs sigma > 0 and a < b.
struct trunc_norm_params {
  double mu = 0.0;
  double sigma = 1.0;
  double a = 0.0;
  double b = 1.0;

  friend bool operator==(const trunc_norm_params&, const trunc_norm_params&) = default;
};

bool valid(const trunc_norm_params& p);
void validate(const trunc_norm_params& p);  // throws data_error

double std_normal_pdf(double z);
double std_normal_cdf(double z);     // erf-based, abs error well under 1e-12
double std_normal_quantile(double p);  // Wichura AS241

// Phi(beta) - Phi(alpha) for the standardized truncation points. Throws
// numeric_error when the mass is below 1e-300 (degenerate distribution).
double normalizer(const trunc_norm_params& p);

// Per-distribution constants shared by the density, CDF and EM gradients.
struct tn_consts {
  double alpha, beta;    // standardized truncation points
  double phi_a, phi_b;   // standard normal density there
  double z;              // Phi(beta) - Phi(alpha)
  double log_norm;       // log(sigma * z * sqrt(2*pi))
};
tn_consts consts(const trunc_norm_params& p);

double pdf(const trunc_norm_params& p, double x);
double log_pdf(const trunc_norm_params& p, double x);  // -inf outside [a, b]
double cdf(const trunc_norm_params& p, double x);

// Inverse-CDF draw in [a, b]; reproducible given the stream.
double sample(const trunc_norm_params& p, rng_stream& rng);

// Route-level composition: mu and a and b add, variances add.
trunc_norm_params sum_approx(std::span<const trunc_norm_params> parts);

double truncated_mean(const trunc_norm_params& p);

// Closed-form log-density derivatives used by the M-step.
double dlogpdf_dmu(const trunc_norm_params& p, double x);
double dlogpdf_dsigma2(const trunc_norm_params& p, double x);

}  // namespace pipe
