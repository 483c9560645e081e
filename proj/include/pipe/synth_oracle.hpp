#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pipe/afc_ingest.hpp"
#include "pipe/network.hpp"
#include "pipe/route_time_model.hpp"

namespace pipe {

struct demand_cell {
  station_id origin;  // "*" expands to every station
  station_id dest;
  std::string category;  // "*" expands to every configured category
  double rate = 0.0;     // Poisson rate per time window
  int first_window = -1;  // -1: scenario default
  int last_window = -1;
};

struct scenario_config {
  std::string network_path;
  std::uint64_t seed = 7;
  int days = 1;
  std::string base_date = "2026-03-02";
  int window_minutes = 20;
  int first_window = 18;  // 06:00 with 20-minute windows
  int last_window = 68;   // 22:40
  std::vector<double> day_factors;  // per-day demand multiplier, empty = all 1
  std::vector<std::string> categories{"adult", "child", "senior", "student"};
  enum_options enumeration;
  std::map<transit_link, trunc_norm_params> link_params;  // planted ground truth
  route_weights weights;  // planted; missing multi-route cells mean uniform
  std::vector<demand_cell> demand;

  std::string day_date(int day) const;
  double day_factor(int day) const {
    return day_factors.empty() ? 1.0 : day_factors.at(static_cast<std::size_t>(day));
  }
};

scenario_config scenario_from_json(const std::string& text);

// One occupancy interval of a trip, in minutes since its day's midnight.
struct gt_phase {
  link_kind kind;
  std::string anchor;
  double start_min = 0.0;
  double end_min = 0.0;
};

struct gt_trip {
  int day = 0;
  std::string date;
  int route_index = 0;
  std::vector<gt_phase> phases;  // route order; strictly increasing times
};

struct ground_truth {
  std::vector<gt_trip> trips;  // parallel to the generated trip list
};

struct generation {
  std::vector<trip_record> trips;
  ground_truth truth;
};

// Samples trips from the planted parameters: per-window Poisson counts,
// uniform tap-in inside the window, route from pi, each link duration drawn
// independently from its truncated normal (no sum approximation here; the
// oracle is exact so the fitter's approximation is what gets tested).
generation generate(const scenario_config& cfg, const route_catalog& catalog);

struct occupancy_counts {
  std::map<edge_id, int> on_edge;
  std::map<station_id, int> in_station;  // entry, transfer and exit phases
  int in_system = 0;
  int exited = 0;
};

// Exact event counts at one instant: a trip occupies an edge while
// edge-entry <= instant < edge-exit.
occupancy_counts count_occupancy(const ground_truth& gt, const std::string& date, double minute);

void write_ground_truth_csv(std::ostream& out, const ground_truth& gt);

}  // namespace pipe
