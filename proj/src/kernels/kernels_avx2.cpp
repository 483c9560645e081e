#include "pipe/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)

#include <immintrin.h>

namespace pipe::kernels::detail {

bool avx2_available() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

namespace {

// exp() for 4 doubles, Cody-Waite range reduction plus the Cephes rational
// approximation on [-ln2/2, ln2/2]. Accurate to a couple of ulp over the
// clamped range, which the kernel equivalence tests pin down.
inline __m256d exp4(__m256d x) {
  const __m256d lo = _mm256_set1_pd(-707.0);
  const __m256d hi = _mm256_set1_pd(709.0);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, c1, x);
  r = _mm256_fnmadd_pd(n, c2, r);

  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_fmadd_pd(p0, rr, p1);
  p = _mm256_fmadd_pd(p, rr, p2);
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_fmadd_pd(q0, rr, q1);
  q = _mm256_fmadd_pd(q, rr, q2);
  q = _mm256_fmadd_pd(q, rr, q3);

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(two, e, one);

  // scale by 2^n via the exponent bits; |n| <= 1023 after clamping
  __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

}  // namespace

void exp_batch_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  }
  if (i < n) {
    double tx[4] = {0, 0, 0, 0}, ty[4];
    for (std::size_t k = i; k < n; ++k) tx[k - i] = x[k];
    _mm256_storeu_pd(ty, exp4(_mm256_loadu_pd(tx)));
    for (std::size_t k = i; k < n; ++k) y[k] = ty[k - i];
  }
}

void gauss_logpdf_batch_avx2(const double* t, std::size_t n, double mu, double inv_sigma,
                             double log_norm, double* lp) {
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vis = _mm256_set1_pd(inv_sigma);
  const __m256d vneg_ln = _mm256_set1_pd(-log_norm);
  const __m256d half = _mm256_set1_pd(0.5);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d u = _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(t + i), vmu), vis);
    _mm256_storeu_pd(lp + i, _mm256_fnmadd_pd(_mm256_mul_pd(half, u), u, vneg_ln));
  }
  for (; i < n; ++i) {
    const double u = (t[i] - mu) * inv_sigma;
    lp[i] = -0.5 * u * u - log_norm;
  }
}

weighted_sums_result weighted_sums_avx2(const double* t, const double* w, std::size_t n) {
  __m256d sw = _mm256_setzero_pd();
  __m256d swt = _mm256_setzero_pd();
  __m256d swtt = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vt = _mm256_loadu_pd(t + i);
    const __m256d vw = _mm256_loadu_pd(w + i);
    const __m256d vwt = _mm256_mul_pd(vw, vt);
    sw = _mm256_add_pd(sw, vw);
    swt = _mm256_add_pd(swt, vwt);
    swtt = _mm256_fmadd_pd(vwt, vt, swtt);
  }
  weighted_sums_result r{hsum(sw), hsum(swt), hsum(swtt)};
  for (; i < n; ++i) {
    r.w += w[i];
    r.wt += w[i] * t[i];
    r.wtt += w[i] * t[i] * t[i];
  }
  return r;
}

}  // namespace pipe::kernels::detail

#else  // non-x86: no AVX2 variant, dispatcher falls back to scalar

namespace pipe::kernels::detail {

bool avx2_available() { return false; }
void exp_batch_avx2(const double* x, double* y, std::size_t n) { exp_batch_scalar(x, y, n); }
void gauss_logpdf_batch_avx2(const double* t, std::size_t n, double mu, double inv_sigma,
                             double log_norm, double* lp) {
  gauss_logpdf_batch_scalar(t, n, mu, inv_sigma, log_norm, lp);
}
weighted_sums_result weighted_sums_avx2(const double* t, const double* w, std::size_t n) {
  return weighted_sums_scalar(t, w, n);
}

}  // namespace pipe::kernels::detail

#endif
