#include "pipe/common.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

namespace pipe {

namespace {

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

timestamp parse_timestamp(const std::string& text) {
  int y, mo, d, h, mi, s;
  char tail;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d %2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail) != 6) {
    throw data_error("malformed timestamp: '" + text + "'");
  }
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
    throw data_error("timestamp out of range: '" + text + "'");
  }
  return timestamp{days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s};
}

std::string format_timestamp(timestamp ts) {
  std::int64_t days = ts.seconds / 86400;
  std::int64_t sod = ts.seconds % 86400;
  if (sod < 0) {
    sod += 86400;
    --days;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", y, m, d,
                static_cast<int>(sod / 3600), static_cast<int>(sod / 60 % 60), static_cast<int>(sod % 60));
  return buf;
}

std::string date_of(timestamp ts) { return format_timestamp(ts).substr(0, 10); }

double minutes_since_midnight(timestamp ts) {
  std::int64_t sod = ts.seconds % 86400;
  if (sod < 0) sod += 86400;
  return static_cast<double>(sod) / 60.0;
}

timestamp make_timestamp(const std::string& date, double minutes) {
  timestamp midnight = parse_timestamp(date + " 00:00:00");
  return timestamp{midnight.seconds + static_cast<std::int64_t>(std::llround(minutes * 60.0))};
}

rng_stream::rng_stream(std::uint64_t seed) : seed0_(seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

std::uint64_t rng_stream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double rng_stream::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t rng_stream::next_below(std::uint64_t n) {
  return static_cast<std::uint64_t>(next_double() * static_cast<double>(n)) % n;
}

rng_stream rng_stream::fork(std::uint64_t salt) const {
  std::uint64_t x = seed0_ ^ (0xd1b54a32d192ed03ull * (salt + 1));
  return rng_stream(splitmix64(x));
}

int sample_poisson(rng_stream& rng, double rate) {
  if (!(rate > 0.0)) return 0;
  if (rate < 64.0) {  // inversion by unscaled product
    const double limit = std::exp(-rate);
    double prod = rng.next_double();
    int k = 0;
    while (prod > limit) {
      prod *= rng.next_double();
      ++k;
    }
    return k;
  }
  // Split large rates; demand profiles in practice stay far below this.
  return sample_poisson(rng, rate / 2) + sample_poisson(rng, rate - rate / 2);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  for (int prec = 1; prec < 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof probe, "%.*g", prec, v);
    std::sscanf(probe, "%lf", &back);
    if (back == v) return probe;
  }
  return buf;
}

}  // namespace pipe
