#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "pipe/afc_ingest.hpp"
#include "pipe/network.hpp"
#include "pipe/trunc_gauss.hpp"

namespace pipe {

// Dense index over every transit link of a network: entry and exit per
// station, travel per edge, transfer per interchange station.
struct link_table {
  std::vector<transit_link> links;  // sorted by (kind, anchor)
  std::map<transit_link, int> index;

  static link_table build(const metro_network& net);
  int require(const transit_link& l) const;
  std::size_t size() const { return links.size(); }
};

// Truncated-normal parameters for every transit link (the model state Theta
// plus the fixed truncation points).
struct link_param_set {
  link_table table;
  std::vector<trunc_norm_params> params;  // by table index

  const trunc_norm_params& at(const transit_link& l) const { return params[table.require(l)]; }
  trunc_norm_params& at(const transit_link& l) { return params[table.require(l)]; }
};

// Per-(OD, category) route-choice probability vectors for multi-route pairs.
struct route_weights {
  using key = std::tuple<station_id, station_id, std::string>;
  std::map<key, std::vector<double>> pi;

  const std::vector<double>* find(const station_id& o, const station_id& d,
                                  const std::string& category) const {
    auto it = pi.find({o, d, category});
    return it == pi.end() ? nullptr : &it->second;
  }
};

struct truncation_options {
  double w0_minutes = 2.0;  // default transfer walking time
  // When an edge has no direct adjacent-pair trips: b = length/vmin and
  // stations missing data fall back to 2*(w0 + headway). Off by default.
  bool fallback = false;
};

struct truncation_table {
  std::map<transit_link, std::pair<double, double>> bounds;  // [a, b]
};

// Data-driven truncation points: per edge, b = fastest adjacent-pair trip and
// a = length / vmax; entry/exit upper bounds at both endpoints are raised to
// the trip-time range of the pair; transfers get [0, 2*(w0 + headway)].
truncation_table estimate_truncation(const metro_network& net,
                                     const std::vector<trip_record>& trips,
                                     const truncation_options& opts = {});

// mu at the interval midpoint, sigma = (b-a)/4 floored; throws on a >= b.
link_param_set init_link_params(const metro_network& net, const truncation_table& trunc,
                                double sigma2_floor = 1e-4);

route_weights init_route_weights(const route_catalog& catalog,
                                 const std::vector<std::string>& categories);

// Route-level TN(mu, sigma, a, b): field-wise sums over the route's links.
trunc_norm_params route_time_params(const route& r, const link_param_set& params);

struct sgd_options {
  double step = 1e-3;   // applied to the batch-mean gradient, decays 1/sqrt(epoch)
  int epochs = 3;
  int batch = 1024;
  double sigma2_floor = 1e-4;
};

struct fit_options {
  int max_iters = 200;
  double ll_tol = 1e-4;  // convergence when |delta LL| < ll_tol * trip count
  sgd_options sgd;
  std::uint64_t seed = 7;
  int workers = 1;
  std::vector<std::string> categories{"adult", "child", "senior", "student"};
};

struct fit_report {
  int iterations = 0;
  std::vector<double> ll_trace;
  bool converged = false;
  std::size_t trips_used = 0;
  std::size_t zero_support = 0;  // trips with zero density under every route
};

// Trips grouped by (origin, dest, category) with cached route structure.
// Holds the E-step responsibilities between calls; route truncation points
// are frozen at construction and only (mu, sigma^2) move during fitting.
class em_workspace {
 public:
  em_workspace(const route_catalog& catalog, const std::vector<trip_record>& trips,
               const truncation_table& trunc, int workers = 1);

  std::size_t trip_count() const { return trip_count_; }
  std::size_t zero_support_count() const { return zero_support_; }

  // E-step: responsibilities under (params, weights); returns the observed
  // log-likelihood. Zero-support trips get uniform rows, are tallied, and do
  // not contribute to the likelihood.
  double e_step(const link_param_set& params, const route_weights& weights);

  // Responsibilities of multi-route trips keyed by original trip index.
  std::map<std::size_t, std::vector<double>> responsibilities() const;

  // Expected complete-data log-likelihood under frozen responsibilities, and
  // its gradient in (mu, sigma^2) per link index.
  double expected_ll(const link_param_set& params, const route_weights& weights) const;
  void expected_ll_gradient(const link_param_set& params, std::vector<double>& g_mu,
                            std::vector<double>& g_sigma2) const;

  // One SGD ascent pass over the expected log-likelihood; truncation points
  // stay fixed, sigma^2 is floored, degenerate proposals halve the step.
  void m_step_sgd(link_param_set& params, const sgd_options& opts, rng_stream& rng);

  // Ratio update for pi; (OD, category) cells without trips keep prev values.
  route_weights update_weights(const route_weights& prev) const;

 private:
  struct group;
  std::vector<group> groups_;
  std::vector<std::pair<int, int>> trip_slots_;  // (group, local index), fit order
  std::size_t trip_count_ = 0;
  std::size_t zero_support_ = 0;
  int workers_ = 1;
  // link index -> (group, route) pairs using it, for degeneracy checks
  std::vector<std::vector<std::pair<int, int>>> link_users_;
  std::size_t n_links_ = 0;

  void refresh_route_params(const link_param_set& params, int g) const;
  double group_e_step(int g, const link_param_set& params, const route_weights& weights);
};

struct fitted_model {
  link_param_set params;
  route_weights weights;
  enum_options enumeration;
  fit_report report;
  std::uint64_t seed = 0;
};

fitted_model fit(const route_catalog& catalog, const std::vector<trip_record>& trips,
                 const truncation_table& trunc, const fit_options& opts = {});

std::string model_to_json(const fitted_model& m);
fitted_model model_from_json(const std::string& text);

}  // namespace pipe
