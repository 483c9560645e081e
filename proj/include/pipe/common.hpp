#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pipe {

// Bad or inconsistent input data (files, records, schemas). CLI exit code 2.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure (degenerate distribution, non-finite gradient). CLI exit code 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

using station_id = std::string;
using line_id = std::string;
using edge_id = std::string;

// Civil timestamp with second resolution, no timezone. Trip logs are local
// wall-clock time and the model never crosses timezones.
struct timestamp {
  std::int64_t seconds = 0;  // since 1970-01-01 00:00:00, proleptic Gregorian

  friend auto operator<=>(const timestamp&, const timestamp&) = default;
};

// Parses "YYYY-MM-DD HH:MM:SS". Throws data_error on malformed input.
timestamp parse_timestamp(const std::string& text);
std::string format_timestamp(timestamp ts);

// Date part only ("YYYY-MM-DD").
std::string date_of(timestamp ts);
double minutes_since_midnight(timestamp ts);
timestamp make_timestamp(const std::string& date, double minutes);

// Deterministic random stream (xoshiro256++). All sampling in the project
// goes through this wrapper so outputs are reproducible across platforms
// (std::* distributions are implementation-defined).
class rng_stream {
 public:
  explicit rng_stream(std::uint64_t seed);

  std::uint64_t next_u64();
  double next_double();  // [0, 1)
  std::uint64_t next_below(std::uint64_t n);

  // Independent substream, derived from the original seed and the salt only,
  // so it is stable regardless of the parent's draw history.
  rng_stream fork(std::uint64_t salt) const;

 private:
  std::uint64_t seed0_;
  std::uint64_t s_[4];
};

int sample_poisson(rng_stream& rng, double rate);

std::string format_double(double v);  // shortest locale-free round-trip form

}  // namespace pipe
