#include "pipe/trunc_gauss.hpp"

#include <cmath>

namespace pipe {

namespace {

constexpr double k_sqrt1_2 = 0.70710678118654752440;
constexpr double k_half_log_2pi = 0.91893853320467274178;
constexpr double k_min_mass = 1e-300;

// Phi(hi) - Phi(lo) without cancellation for same-sign tails.
double phi_diff(double lo, double hi) {
  if (lo >= 0.0) return 0.5 * (std::erfc(lo * k_sqrt1_2) - std::erfc(hi * k_sqrt1_2));
  if (hi <= 0.0) return 0.5 * (std::erfc(-hi * k_sqrt1_2) - std::erfc(-lo * k_sqrt1_2));
  return 0.5 * (std::erf(hi * k_sqrt1_2) + std::erf(-lo * k_sqrt1_2));
}

}  // namespace

bool valid(const trunc_norm_params& p) {
  return std::isfinite(p.mu) && std::isfinite(p.sigma) && std::isfinite(p.a) &&
         std::isfinite(p.b) && p.sigma > 0.0 && p.a < p.b;
}

void validate(const trunc_norm_params& p) {
  if (!valid(p)) {
    throw data_error("invalid truncated-normal parameters: mu=" + format_double(p.mu) +
                     " sigma=" + format_double(p.sigma) + " a=" + format_double(p.a) +
                     " b=" + format_double(p.b));
  }
}

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) * 0.39894228040143267794; }

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * k_sqrt1_2); }

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw numeric_error("normal quantile needs p in (0,1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                             6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                           1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                         1.3314166789178437745e2) * r + 3.3871328727963666080e0);
    const double den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                             3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                           5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                         4.2313330701600911252e1) * r + 1.0);
    return q * num / den;
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    const double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                             2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                           3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                         4.63033784615654529590e0) * r + 1.42343711074968357734e0);
    const double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                             1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                           6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                         2.05319162663775882187e0) * r + 1.0);
    val = num / den;
  } else {
    r -= 5.0;
    const double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                             1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                           2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                         5.46378491116411436990e0) * r + 6.65790464350110377720e0);
    const double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                             1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                           1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                         5.99832206555887937690e-1) * r + 1.0);
    val = num / den;
  }
  return q < 0.0 ? -val : val;
}

double normalizer(const trunc_norm_params& p) {
  validate(p);
  const double z = phi_diff((p.a - p.mu) / p.sigma, (p.b - p.mu) / p.sigma);
  if (!(z >= k_min_mass)) {
    throw numeric_error("degenerate truncated normal: mass " + format_double(z) +
                        " on [" + format_double(p.a) + ", " + format_double(p.b) +
                        "] for mu=" + format_double(p.mu) + " sigma=" + format_double(p.sigma));
  }
  return z;
}

tn_consts consts(const trunc_norm_params& p) {
  tn_consts c;
  c.alpha = (p.a - p.mu) / p.sigma;
  c.beta = (p.b - p.mu) / p.sigma;
  c.z = normalizer(p);
  c.phi_a = std_normal_pdf(c.alpha);
  c.phi_b = std_normal_pdf(c.beta);
  c.log_norm = std::log(p.sigma) + std::log(c.z) + k_half_log_2pi;
  return c;
}

double pdf(const trunc_norm_params& p, double x) {
  if (x < p.a || x > p.b) {
    validate(p);
    return 0.0;
  }
  const double z = normalizer(p);
  return std_normal_pdf((x - p.mu) / p.sigma) / (p.sigma * z);
}

double log_pdf(const trunc_norm_params& p, double x) {
  if (x < p.a || x > p.b) {
    validate(p);
    return -std::numeric_limits<double>::infinity();
  }
  const tn_consts c = consts(p);
  const double u = (x - p.mu) / p.sigma;
  return -0.5 * u * u - c.log_norm;
}

double cdf(const trunc_norm_params& p, double x) {
  if (x <= p.a) {
    validate(p);
    return 0.0;
  }
  if (x >= p.b) {
    validate(p);
    return 1.0;
  }
  const double z = normalizer(p);
  const double v = phi_diff((p.a - p.mu) / p.sigma, (x - p.mu) / p.sigma) / z;
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

double sample(const trunc_norm_params& p, rng_stream& rng) {
  const double z = normalizer(p);
  const double pa = std_normal_cdf((p.a - p.mu) / p.sigma);
  double q = pa + rng.next_double() * z;
  if (q <= 0.0) q = std::numeric_limits<double>::min();
  if (q >= 1.0) q = 1.0 - 1e-16;
  const double x = p.mu + p.sigma * std_normal_quantile(q);
  return x < p.a ? p.a : (x > p.b ? p.b : x);
}

trunc_norm_params sum_approx(std::span<const trunc_norm_params> parts) {
  if (parts.empty()) throw data_error("sum_approx over empty part list");
  trunc_norm_params out{0.0, 0.0, 0.0, 0.0};
  double var = 0.0;
  for (const auto& p : parts) {
    validate(p);
    out.mu += p.mu;
    var += p.sigma * p.sigma;
    out.a += p.a;
    out.b += p.b;
  }
  out.sigma = std::sqrt(var);
  return out;
}

double truncated_mean(const trunc_norm_params& p) {
  const tn_consts c = consts(p);
  return p.mu + p.sigma * (c.phi_a - c.phi_b) / c.z;
}

double dlogpdf_dmu(const trunc_norm_params& p, double x) {
  const tn_consts c = consts(p);
  return (x - p.mu) / (p.sigma * p.sigma) + (c.phi_b - c.phi_a) / (p.sigma * c.z);
}

double dlogpdf_dsigma2(const trunc_norm_params& p, double x) {
  const tn_consts c = consts(p);
  const double s2 = p.sigma * p.sigma;
  const double d = x - p.mu;
  const double tail = ((p.b - p.mu) * c.phi_b - (p.a - p.mu) * c.phi_a) /
                      (2.0 * s2 * p.sigma * c.z);
  return d * d / (2.0 * s2 * s2) - 1.0 / (2.0 * s2) + tail;
}

}  // namespace pipe
