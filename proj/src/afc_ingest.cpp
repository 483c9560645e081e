#include "pipe/afc_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace pipe {

namespace {

std::vector<std::string> split_csv(const std::string& row) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : row) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

constexpr const char* k_trip_header = "card_id,category,entry_datetime,exit_datetime,origin_id,dest_id";

// R-7 quantile: linear interpolation between order statistics.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

}  // namespace

const char* reject_reason_name(reject_reason r) {
  switch (r) {
    case reject_reason::missing: return "missing";
    case reject_reason::duplicate: return "duplicate";
    case reject_reason::bad_timestamp: return "bad_timestamp";
    case reject_reason::unknown_station: return "unknown_station";
    case reject_reason::unknown_category: return "unknown_category";
    case reject_reason::non_positive_travel: return "non_positive_travel";
    case reject_reason::same_origin_dest: return "same_origin_dest";
    case reject_reason::bad_column_count: return "bad_column_count";
  }
  return "?";
}

std::map<std::string, std::size_t> parse_report::rejection_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : rejected) ++counts[reject_reason_name(r.reason)];
  return counts;
}

std::pair<std::vector<trip_record>, parse_report> parse_trips(
    std::istream& source, const metro_network& net, const std::set<std::string>& categories) {
  std::string header;
  if (!std::getline(source, header)) throw data_error("trip log is empty");
  while (!header.empty() && (header.back() == '\r' || header.back() == '\n')) header.pop_back();
  if (header != k_trip_header) {
    throw data_error("trip log header mismatch: expected '" + std::string(k_trip_header) +
                     "', got '" + header + "'");
  }

  std::vector<trip_record> trips;
  parse_report report;
  std::unordered_set<std::string> seen;
  std::string row;
  std::size_t line_no = 1;
  while (std::getline(source, row)) {
    ++line_no;
    if (row.empty() || row == "\r") continue;
    ++report.rows_read;
    const auto reject = [&](reject_reason why) { report.rejected.push_back({line_no, why}); };

    auto fields = split_csv(row);
    if (fields.size() != 6) {
      reject(reject_reason::bad_column_count);
      continue;
    }
    if (std::any_of(fields.begin(), fields.end(), [](const std::string& f) { return f.empty(); })) {
      reject(reject_reason::missing);
      continue;
    }
    std::string key = fields[0];
    for (std::size_t i = 1; i < fields.size(); ++i) key += '\x1f' + fields[i];
    if (!seen.insert(key).second) {
      reject(reject_reason::duplicate);
      continue;
    }

    trip_record tr;
    tr.card_id = fields[0];
    tr.category = fields[1];
    try {
      tr.t_in = parse_timestamp(fields[2]);
      tr.t_out = parse_timestamp(fields[3]);
    } catch (const data_error&) {
      reject(reject_reason::bad_timestamp);
      continue;
    }
    tr.origin = fields[4];
    tr.dest = fields[5];
    if (!net.has_station(tr.origin) || !net.has_station(tr.dest)) {
      reject(reject_reason::unknown_station);
      continue;
    }
    if (!categories.count(tr.category)) {
      reject(reject_reason::unknown_category);
      continue;
    }
    if (tr.origin == tr.dest) {
      reject(reject_reason::same_origin_dest);
      continue;
    }
    if (tr.t_out <= tr.t_in) {
      reject(reject_reason::non_positive_travel);
      continue;
    }
    trips.push_back(std::move(tr));
  }
  report.accepted = trips.size();

  // Overlapping intervals on one card: suspicious but kept.
  std::map<std::string, std::vector<std::pair<timestamp, timestamp>>> by_card;
  for (const auto& t : trips) by_card[t.card_id].push_back({t.t_in, t.t_out});
  for (auto& [card, spans] : by_card) {
    (void)card;
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
      if (spans[i].first < spans[i - 1].second) ++report.near_duplicates;
    }
  }
  return {std::move(trips), std::move(report)};
}

void write_trips_csv(std::ostream& out, const std::vector<trip_record>& trips) {
  out << k_trip_header << '\n';
  for (const auto& t : trips) {
    out << t.card_id << ',' << t.category << ',' << format_timestamp(t.t_in) << ','
        << format_timestamp(t.t_out) << ',' << t.origin << ',' << t.dest << '\n';
  }
}

outlier_split remove_outliers(const std::vector<trip_record>& trips, std::size_t min_group) {
  std::map<std::pair<station_id, station_id>, std::vector<double>> times;
  for (const auto& t : trips) times[{t.origin, t.dest}].push_back(t.travel_minutes());

  std::map<std::pair<station_id, station_id>, double> threshold;
  for (auto& [od, ts] : times) {
    if (ts.size() < min_group) continue;
    std::sort(ts.begin(), ts.end());
    const double q1 = quantile_sorted(ts, 0.25);
    const double q3 = quantile_sorted(ts, 0.75);
    threshold[od] = q3 + 1.5 * (q3 - q1);
  }

  outlier_split out;
  for (const auto& t : trips) {
    auto it = threshold.find({t.origin, t.dest});
    if (it != threshold.end() && t.travel_minutes() > it->second) {
      out.removed.push_back(t);
    } else {
      out.kept.push_back(t);
    }
  }
  return out;
}

int flow_series::day_index(const std::string& date) const {
  auto it = std::lower_bound(days.begin(), days.end(), date);
  if (it == days.end() || *it != date) return -1;
  return static_cast<int>(it - days.begin());
}

int flow_series::station_index(const station_id& s) const {
  auto it = std::lower_bound(stations.begin(), stations.end(), s);
  if (it == stations.end() || *it != s) return -1;
  return static_cast<int>(it - stations.begin());
}

double flow_series::od_at(int day, const station_id& o, const station_id& d, int window) const {
  auto it = od.find({o, d});
  if (it == od.end()) return 0.0;
  return it->second[day][window];
}

void flow_series::ensure_day(const std::string& date) {
  if (day_index(date) >= 0) return;
  days.push_back(date);
  std::sort(days.begin(), days.end());
  const std::size_t nw = static_cast<std::size_t>(windows_per_day());
  const auto idx = static_cast<std::size_t>(day_index(date));
  inflow.insert(inflow.begin() + idx, std::vector(stations.size(), std::vector<double>(nw, 0.0)));
  outflow.insert(outflow.begin() + idx, std::vector(stations.size(), std::vector<double>(nw, 0.0)));
  for (auto& [key, cells] : od) {
    (void)key;
    cells.insert(cells.begin() + idx, std::vector<double>(nw, 0.0));
  }
}

flow_series aggregate_flows(const std::vector<trip_record>& trips, const metro_network& net,
                            int window_minutes) {
  if (window_minutes <= 0) throw data_error("window width must be positive");
  flow_series fs;
  fs.window_minutes = window_minutes;
  for (const auto& s : net.stations()) fs.stations.push_back(s.id);
  std::sort(fs.stations.begin(), fs.stations.end());

  for (const auto& t : trips) {
    fs.ensure_day(date_of(t.t_in));
    fs.ensure_day(date_of(t.t_out));
  }
  const std::size_t nw = static_cast<std::size_t>(fs.windows_per_day());
  const std::size_t nd = fs.days.size();

  for (const auto& t : trips) {
    const int kd_in = fs.day_index(date_of(t.t_in));
    const int kd_out = fs.day_index(date_of(t.t_out));
    const int w_in = fs.window_of(minutes_since_midnight(t.t_in));
    const int w_out = fs.window_of(minutes_since_midnight(t.t_out));
    const int si = fs.station_index(t.origin);
    const int sj = fs.station_index(t.dest);
    if (si < 0 || sj < 0) throw data_error("trip references station outside the network");
    fs.inflow[kd_in][si][w_in] += 1.0;
    fs.outflow[kd_out][sj][w_out] += 1.0;
    auto& cells = fs.od[{t.origin, t.dest}];
    if (cells.empty()) cells.assign(nd, std::vector<double>(nw, 0.0));
    cells[kd_in][w_in] += 1.0;
  }
  return fs;
}

void write_station_flows_csv(std::ostream& out, const flow_series& fs) {
  out << "day,window,station,inflow,outflow\n";
  for (std::size_t k = 0; k < fs.days.size(); ++k) {
    for (int w = 0; w < fs.windows_per_day(); ++w) {
      for (std::size_t s = 0; s < fs.stations.size(); ++s) {
        const double in = fs.inflow[k][s][w];
        const double outv = fs.outflow[k][s][w];
        if (in == 0.0 && outv == 0.0) continue;
        out << fs.days[k] << ',' << w << ',' << fs.stations[s] << ',' << format_double(in)
            << ',' << format_double(outv) << '\n';
      }
    }
  }
}

void write_od_counts_csv(std::ostream& out, const flow_series& fs) {
  out << "day,window,origin,dest,count\n";
  for (std::size_t k = 0; k < fs.days.size(); ++k) {
    for (int w = 0; w < fs.windows_per_day(); ++w) {
      for (const auto& [key, cells] : fs.od) {
        const double v = cells[k][w];
        if (v == 0.0) continue;
        out << fs.days[k] << ',' << w << ',' << key.first << ',' << key.second << ','
            << format_double(v) << '\n';
      }
    }
  }
}

flow_series read_flow_series(std::istream& station_csv, std::istream& od_csv,
                             int window_minutes) {
  flow_series fs;
  fs.window_minutes = window_minutes;

  std::string row;
  if (!std::getline(station_csv, row) || split_csv(row) != split_csv("day,window,station,inflow,outflow")) {
    throw data_error("station flow CSV header mismatch");
  }
  struct srec { std::string day; int w; std::string s; double in, out; };
  std::vector<srec> srows;
  std::set<std::string> days;
  std::set<station_id> stations;
  while (std::getline(station_csv, row)) {
    if (row.empty()) continue;
    auto f = split_csv(row);
    if (f.size() != 5) throw data_error("bad station flow row: '" + row + "'");
    srows.push_back({f[0], std::stoi(f[1]), f[2], std::stod(f[3]), std::stod(f[4])});
    days.insert(f[0]);
    stations.insert(f[2]);
  }

  if (!std::getline(od_csv, row) || split_csv(row) != split_csv("day,window,origin,dest,count")) {
    throw data_error("od count CSV header mismatch");
  }
  struct orec { std::string day; int w; std::string o, d; double v; };
  std::vector<orec> orows;
  while (std::getline(od_csv, row)) {
    if (row.empty()) continue;
    auto f = split_csv(row);
    if (f.size() != 5) throw data_error("bad od count row: '" + row + "'");
    orows.push_back({f[0], std::stoi(f[1]), f[2], f[3], std::stod(f[4])});
    days.insert(f[0]);
    stations.insert(f[2]);
    stations.insert(f[3]);
  }

  fs.stations.assign(stations.begin(), stations.end());
  for (const auto& d : days) fs.ensure_day(d);
  const std::size_t nw = static_cast<std::size_t>(fs.windows_per_day());
  for (const auto& r : srows) {
    if (r.w < 0 || r.w >= static_cast<int>(nw)) throw data_error("window index out of range");
    fs.inflow[fs.day_index(r.day)][fs.station_index(r.s)][r.w] = r.in;
    fs.outflow[fs.day_index(r.day)][fs.station_index(r.s)][r.w] = r.out;
  }
  for (const auto& r : orows) {
    if (r.w < 0 || r.w >= static_cast<int>(nw)) throw data_error("window index out of range");
    auto& cells = fs.od[{r.o, r.d}];
    if (cells.empty()) cells.assign(fs.days.size(), std::vector<double>(nw, 0.0));
    cells[fs.day_index(r.day)][r.w] = r.v;
  }
  return fs;
}

}  // namespace pipe
