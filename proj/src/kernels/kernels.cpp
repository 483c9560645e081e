#include "pipe/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include "pipe/common.hpp"

namespace pipe::kernels {

namespace {

struct dispatch_table {
  backend which;
  void (*exp_fn)(const double*, double*, std::size_t);
  void (*logpdf_fn)(const double*, std::size_t, double, double, double, double*);
  weighted_sums_result (*wsums_fn)(const double*, const double*, std::size_t);
};

constexpr dispatch_table k_scalar{backend::scalar, detail::exp_batch_scalar,
                                  detail::gauss_logpdf_batch_scalar, detail::weighted_sums_scalar};
constexpr dispatch_table k_avx2{backend::avx2, detail::exp_batch_avx2,
                                detail::gauss_logpdf_batch_avx2, detail::weighted_sums_avx2};

std::atomic<const dispatch_table*> g_table{nullptr};
std::once_flag g_init;

const dispatch_table* pick_initial() {
  if (const char* env = std::getenv("PIPE_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return &k_scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!detail::avx2_available()) {
        throw numeric_error("PIPE_KERNELS=avx2 requested but CPU lacks AVX2/FMA");
      }
      return &k_avx2;
    }
    throw data_error(std::string("unknown PIPE_KERNELS value: ") + env);
  }
  return detail::avx2_available() ? &k_avx2 : &k_scalar;
}

const dispatch_table& table() {
  std::call_once(g_init, [] { g_table.store(pick_initial(), std::memory_order_release); });
  return *g_table.load(std::memory_order_acquire);
}

}  // namespace

backend active_backend() { return table().which; }

const char* backend_name(backend b) { return b == backend::avx2 ? "avx2" : "scalar"; }

void set_backend(backend b) {
  table();  // ensure initialized
  if (b == backend::avx2 && !detail::avx2_available()) {
    throw numeric_error("AVX2 backend not supported on this CPU");
  }
  g_table.store(b == backend::avx2 ? &k_avx2 : &k_scalar, std::memory_order_release);
}

void exp_batch(const double* x, double* y, std::size_t n) { table().exp_fn(x, y, n); }

void gauss_logpdf_batch(const double* t, std::size_t n, double mu, double inv_sigma,
                        double log_norm, double* lp) {
  table().logpdf_fn(t, n, mu, inv_sigma, log_norm, lp);
}

weighted_sums_result weighted_sums(const double* t, const double* w, std::size_t n) {
  return table().wsums_fn(t, w, n);
}

}  // namespace pipe::kernels
