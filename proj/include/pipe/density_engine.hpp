#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pipe/afc_ingest.hpp"
#include "pipe/network.hpp"
#include "pipe/od_forecast.hpp"
#include "pipe/route_time_model.hpp"
#include "pipe/trunc_gauss.hpp"

namespace pipe {

// Time from tap-in to entering an edge (arrive) and to leaving it (leave =
// arrive plus the edge's travel link). A passenger occupies the edge over
// [arrive, leave), so the expected on-edge share at elapsed time x is
// cdf(arrive, x) - cdf(leave, x).
struct reach_time_params {
  trunc_norm_params arrive;
  trunc_norm_params leave;
};

// Per edge position of the route, in route order.
std::vector<reach_time_params> reach_params(const route& r, const link_param_set& params);

// P(route containing edge e | OD, category) = sum of pi over routes with e.
struct edge_inclusion_table {
  std::map<std::tuple<station_id, station_id, std::string, edge_id>, double> p;
};
edge_inclusion_table edge_inclusion(const route_catalog& catalog, const route_weights& weights,
                                    const std::vector<std::string>& categories);

// Category split of category-blind OD forecasts; missing pairs fall back to a
// uniform split.
struct category_shares {
  std::vector<std::string> categories{"adult", "child", "senior", "student"};
  std::map<od_pair, std::vector<double>> shares;  // aligned with categories

  static category_shares from_trips(const std::vector<trip_record>& trips,
                                    const std::vector<std::string>& categories);
  std::vector<double> at(const od_pair& key) const;
};

struct density_options {
  int sub_quadrature = 1;  // midpoint sub-points per source window
  int workers = 1;
};

struct density_field {
  std::vector<double> instants;  // minutes since midnight
  std::map<edge_id, std::vector<double>> edge_total;  // per instant
  // direction keyed by the upstream station of the traversal
  std::map<std::pair<edge_id, station_id>, std::vector<double>> edge_directed;
  std::map<station_id, std::vector<double>> in_station;  // entry+transfer+exit mass
};

// Discretization of the occupancy field: every forecast window contributes
// V * pi * (cdf_arrive - cdf_leave) evaluated at the window midpoint (or at
// sub_quadrature midpoints). Throws when the forecast does not cover the
// lookback horizon of some instant.
density_field predict_density(const od_forecast_day& forecast, const route_catalog& catalog,
                              const route_weights& weights, const link_param_set& params,
                              const category_shares& shares, const std::vector<double>& instants,
                              const density_options& opts = {});

// Expected alighting counts per (station, window): forecast mass pushed
// through the route-level travel-time CDF.
std::map<station_id, std::map<int, double>> predict_alighting(
    const od_forecast_day& forecast, const route_catalog& catalog, const route_weights& weights,
    const link_param_set& params, const category_shares& shares, const std::vector<int>& windows,
    const density_options& opts = {});

void write_density_csv(std::ostream& out, const std::string& date, const density_field& field);
std::string density_snapshot_json(const std::string& date, const density_field& field,
                                  std::size_t instant_index);
void write_alighting_csv(std::ostream& out,
                         const std::map<station_id, std::map<int, double>>& alighting);

// Rows = the line's segments in line order, columns = instants; one matrix per
// travel direction, keyed by the starting terminus.
struct line_density_matrix {
  line_id line;
  station_id start;                      // terminus the direction begins at
  std::vector<edge_id> segments;         // in line order
  std::vector<std::vector<double>> values;  // [segment][instant]
};
std::vector<line_density_matrix> line_matrices(const metro_network& net, const line_id& line,
                                               const density_field& field);
void write_line_matrix_csv(std::ostream& out, const line_density_matrix& m,
                           const std::vector<double>& instants);

}  // namespace pipe
