#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pipe/common.hpp"
#include "pipe/network.hpp"

namespace pipe {

struct trip_record {
  std::string card_id;
  std::string category;
  station_id origin;
  station_id dest;
  timestamp t_in;
  timestamp t_out;

  double travel_minutes() const {
    return static_cast<double>(t_out.seconds - t_in.seconds) / 60.0;
  }

  friend bool operator==(const trip_record&, const trip_record&) = default;
};

enum class reject_reason {
  missing,             // empty required field
  duplicate,           // byte-identical field tuple seen before
  bad_timestamp,
  unknown_station,
  unknown_category,
  non_positive_travel,  // t_out <= t_in
  same_origin_dest,
  bad_column_count,
};

const char* reject_reason_name(reject_reason r);

struct rejected_row {
  std::size_t line_no;  // 1-based, header is line 1
  reject_reason reason;
};

struct parse_report {
  std::size_t rows_read = 0;
  std::size_t accepted = 0;
  std::vector<rejected_row> rejected;
  // Same card with overlapping trip intervals; flagged but kept.
  std::size_t near_duplicates = 0;

  std::map<std::string, std::size_t> rejection_counts() const;
};

inline const std::set<std::string>& default_categories() {
  static const std::set<std::string> c{"adult", "child", "senior", "student"};
  return c;
}

// Columns: card_id,category,entry_datetime,exit_datetime,origin_id,dest_id.
// Malformed header is fatal; bad rows are rejected with a reason.
std::pair<std::vector<trip_record>, parse_report> parse_trips(
    std::istream& source, const metro_network& net,
    const std::set<std::string>& categories = default_categories());

void write_trips_csv(std::ostream& out, const std::vector<trip_record>& trips);

struct outlier_split {
  std::vector<trip_record> kept;
  std::vector<trip_record> removed;
};

// Per-OD IQR rule on travel time: drop records above Q3 + 1.5*IQR. Quartiles
// use linear interpolation between order statistics. Groups smaller than
// min_group pass through untouched; the lower tail is never removed.
outlier_split remove_outliers(const std::vector<trip_record>& trips, std::size_t min_group = 4);

struct time_window {
  int index = 0;
  int width_minutes = 20;

  double start_minutes() const { return static_cast<double>(index) * width_minutes; }
  double mid_minutes() const { return start_minutes() + width_minutes / 2.0; }
};

// Per-day, per-window counts: station inflow/outflow and OD counts.
// Windows are anchored at local midnight.
struct flow_series {
  int window_minutes = 20;
  std::vector<std::string> days;        // sorted dates
  std::vector<station_id> stations;     // sorted
  // [day][station][window]
  std::vector<std::vector<std::vector<double>>> inflow;
  std::vector<std::vector<std::vector<double>>> outflow;
  // [day][window], keyed by (origin, dest)
  std::map<std::pair<station_id, station_id>, std::vector<std::vector<double>>> od;

  int windows_per_day() const { return (1440 + window_minutes - 1) / window_minutes; }
  int window_of(double minutes) const {
    int w = static_cast<int>(minutes / window_minutes);
    const int n = windows_per_day();
    return w < 0 ? 0 : (w >= n ? n - 1 : w);
  }
  int day_index(const std::string& date) const;
  int station_index(const station_id& s) const;
  double od_at(int day, const station_id& o, const station_id& d, int window) const;

  void ensure_day(const std::string& date);
};

flow_series aggregate_flows(const std::vector<trip_record>& trips, const metro_network& net,
                            int window_minutes = 20);

// Columnar CSV serialization:
//   station flows: day,window,station,inflow,outflow
//   od counts:     day,window,origin,dest,count
void write_station_flows_csv(std::ostream& out, const flow_series& fs);
void write_od_counts_csv(std::ostream& out, const flow_series& fs);
flow_series read_flow_series(std::istream& station_csv, std::istream& od_csv,
                             int window_minutes);

}  // namespace pipe
