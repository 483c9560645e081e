#include "pipe/density_engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "json.hpp"

#include "pipe/parallel.hpp"

namespace pipe {

std::vector<reach_time_params> reach_params(const route& r, const link_param_set& params) {
  std::vector<reach_time_params> out;
  std::vector<trunc_norm_params> prefix;
  for (const auto& l : r.links) {
    const trunc_norm_params& p = params.at(l);
    if (l.kind == link_kind::travel) {
      reach_time_params rp;
      rp.arrive = sum_approx(prefix);
      prefix.push_back(p);
      rp.leave = sum_approx(prefix);
      out.push_back(rp);
    } else {
      prefix.push_back(p);
    }
  }
  return out;
}

edge_inclusion_table edge_inclusion(const route_catalog& catalog, const route_weights& weights,
                                    const std::vector<std::string>& categories) {
  edge_inclusion_table table;
  for (const auto& so : catalog.network().stations()) {
    for (const auto& sd : catalog.network().stations()) {
      if (so.id == sd.id) continue;
      const auto& rcs = catalog.at(so.id, sd.id);
      for (const auto& cat : categories) {
        const std::vector<double>* pi =
            rcs.routes.size() > 1 ? weights.find(so.id, sd.id, cat) : nullptr;
        for (std::size_t m = 0; m < rcs.routes.size(); ++m) {
          const double w = rcs.routes.size() == 1
                               ? 1.0
                               : (pi ? (*pi)[m] : 1.0 / static_cast<double>(rcs.routes.size()));
          if (w == 0.0) continue;
          for (const auto& e : rcs.routes[m].edges) {
            table.p[{so.id, sd.id, cat, e}] += w;
          }
        }
      }
    }
  }
  return table;
}

category_shares category_shares::from_trips(const std::vector<trip_record>& trips,
                                            const std::vector<std::string>& categories) {
  category_shares cs;
  cs.categories = categories;
  std::map<od_pair, std::vector<double>> counts;
  for (const auto& t : trips) {
    auto it = std::find(categories.begin(), categories.end(), t.category);
    if (it == categories.end()) continue;
    auto& row = counts[{t.origin, t.dest}];
    if (row.empty()) row.assign(categories.size(), 0.0);
    row[static_cast<std::size_t>(it - categories.begin())] += 1.0;
  }
  for (auto& [key, row] : counts) {
    double total = 0.0;
    for (double v : row) total += v;
    if (total <= 0.0) continue;
    for (auto& v : row) v /= total;
    cs.shares[key] = row;
  }
  return cs;
}

std::vector<double> category_shares::at(const od_pair& key) const {
  auto it = shares.find(key);
  if (it != shares.end()) return it->second;
  return std::vector<double>(categories.size(), 1.0 / static_cast<double>(categories.size()));
}

namespace {

// Per (OD pair, route): category-collapsed weight and occupancy intervals.
struct route_profile {
  const route* r = nullptr;
  double weight = 0.0;  // sum over categories of share * pi
  std::vector<reach_time_params> edges;
  struct station_phase {
    station_id s;
    bool entry = false;              // occupancy = 1 - cdf(depart, dt)
    trunc_norm_params arrive;        // unused for the entry phase
    trunc_norm_params depart;
  };
  std::vector<station_phase> phases;
  trunc_norm_params total;
};

std::vector<std::pair<od_pair, std::vector<route_profile>>> build_profiles(
    const od_forecast_day& forecast, const route_catalog& catalog, const route_weights& weights,
    const link_param_set& params, const category_shares& shares, bool with_phases) {
  std::vector<std::pair<od_pair, std::vector<route_profile>>> out;
  for (const auto& [key, cells] : forecast.od) {
    (void)cells;
    const auto& rcs = catalog.at(key.first, key.second);
    const auto share = shares.at(key);
    std::vector<route_profile> profiles;
    for (std::size_t m = 0; m < rcs.routes.size(); ++m) {
      route_profile p;
      p.r = &rcs.routes[m];
      if (rcs.routes.size() == 1) {
        p.weight = 1.0;
      } else {
        for (std::size_t c = 0; c < shares.categories.size(); ++c) {
          const std::vector<double>* pi =
              weights.find(key.first, key.second, shares.categories[c]);
          const double pim = pi ? (*pi)[m] : 1.0 / static_cast<double>(rcs.routes.size());
          p.weight += share[c] * pim;
        }
      }
      p.edges = reach_params(*p.r, params);
      p.total = route_time_params(*p.r, params);
      if (with_phases) {
        std::vector<trunc_norm_params> prefix;
        for (const auto& l : p.r->links) {
          const trunc_norm_params& lp = params.at(l);
          if (l.kind == link_kind::entry) {
            prefix.push_back(lp);
            p.phases.push_back({l.anchor, true, {}, sum_approx(prefix)});
          } else if (l.kind == link_kind::transfer) {
            route_profile::station_phase ph;
            ph.s = l.anchor;
            ph.arrive = sum_approx(prefix);
            prefix.push_back(lp);
            ph.depart = sum_approx(prefix);
            p.phases.push_back(std::move(ph));
          } else if (l.kind == link_kind::travel) {
            prefix.push_back(lp);
          } else {  // exit
            route_profile::station_phase ph;
            ph.s = l.anchor;
            ph.arrive = sum_approx(prefix);
            prefix.push_back(lp);
            ph.depart = sum_approx(prefix);
            p.phases.push_back(std::move(ph));
          }
        }
      }
      profiles.push_back(std::move(p));
    }
    out.push_back({key, std::move(profiles)});
  }
  return out;
}

double max_route_bound(const std::vector<std::pair<od_pair, std::vector<route_profile>>>& profiles) {
  double b = 0.0;
  for (const auto& [key, ps] : profiles) {
    (void)key;
    for (const auto& p : ps) b = std::max(b, p.total.b);
  }
  return b;
}

void check_coverage(const od_forecast_day& forecast, int w_lo, int w_hi, const char* what) {
  for (int w = w_lo; w <= w_hi; ++w) {
    if (!forecast.covers(w)) {
      throw data_error(std::string("forecast for ") + forecast.date + " is missing window " +
                       std::to_string(w) + " inside the lookback of " + what);
    }
  }
}

}  // namespace

density_field predict_density(const od_forecast_day& forecast, const route_catalog& catalog,
                              const route_weights& weights, const link_param_set& params,
                              const category_shares& shares, const std::vector<double>& instants,
                              const density_options& opts) {
  if (opts.sub_quadrature < 1) throw data_error("sub_quadrature must be at least 1");
  const auto profiles = build_profiles(forecast, catalog, weights, params, shares, true);
  const double b_max = max_route_bound(profiles);
  const int wpd = (1440 + forecast.window_minutes - 1) / forecast.window_minutes;

  density_field field;
  field.instants = instants;
  const std::size_t ni = instants.size();
  for (const auto& e : catalog.network().edges()) {
    field.edge_total[e.id].assign(ni, 0.0);
  }
  for (const auto& s : catalog.network().stations()) {
    field.in_station[s.id].assign(ni, 0.0);
  }
  for (const auto& [key, ps] : profiles) {
    (void)key;
    for (const auto& p : ps) {
      for (std::size_t k = 0; k < p.edges.size(); ++k) {
        field.edge_directed[{p.r->edges[k], p.r->stations[k]}].assign(ni, 0.0);
      }
    }
  }

  // coverage must span the lookback of every instant
  for (double t : instants) {
    const int lo = std::max(0, static_cast<int>(std::floor((t - b_max) / forecast.window_minutes)));
    const int hi = std::min(wpd - 1, static_cast<int>(std::floor(t / forecast.window_minutes)));
    if (lo <= hi) {
      check_coverage(forecast, lo, hi,
                     ("instant " + format_double(t) + " min").c_str());
    }
  }

  const double sub_w = static_cast<double>(forecast.window_minutes) / opts.sub_quadrature;
  parallel_for_index(static_cast<int>(ni), opts.workers, [&](int ti) {
    const double t = instants[static_cast<std::size_t>(ti)];
    const int lo = std::max(0, static_cast<int>(std::floor((t - b_max) / forecast.window_minutes)));
    const int hi = std::min(wpd - 1, static_cast<int>(std::floor(t / forecast.window_minutes)));
    for (int w = lo; w <= hi; ++w) {
      const double w_start = static_cast<double>(w) * forecast.window_minutes;
      for (const auto& [key, ps] : profiles) {
        const double v_window = forecast.covers(w) ? forecast.at(key, w) : 0.0;
        if (v_window == 0.0) continue;
        const double v_part = v_window / opts.sub_quadrature;
        for (int sub = 0; sub < opts.sub_quadrature; ++sub) {
          const double tau = w_start + (sub + 0.5) * sub_w;
          const double dt = t - tau;
          if (dt <= 0.0) continue;
          for (const auto& p : ps) {
            if (p.weight == 0.0) continue;
            const double scale = v_part * p.weight;
            if (dt >= p.total.b) continue;  // already exited
            for (std::size_t k = 0; k < p.edges.size(); ++k) {
              const double occ = cdf(p.edges[k].arrive, dt) - cdf(p.edges[k].leave, dt);
              if (occ <= 0.0) continue;
              field.edge_total[p.r->edges[k]][ti] += scale * occ;
              field.edge_directed[{p.r->edges[k], p.r->stations[k]}][ti] += scale * occ;
            }
            for (const auto& ph : p.phases) {
              const double occ = ph.entry ? 1.0 - cdf(ph.depart, dt)
                                          : cdf(ph.arrive, dt) - cdf(ph.depart, dt);
              if (occ <= 0.0) continue;
              field.in_station[ph.s][ti] += scale * occ;
            }
          }
        }
      }
    }
  });
  return field;
}

std::map<station_id, std::map<int, double>> predict_alighting(
    const od_forecast_day& forecast, const route_catalog& catalog, const route_weights& weights,
    const link_param_set& params, const category_shares& shares, const std::vector<int>& windows,
    const density_options& opts) {
  if (opts.sub_quadrature < 1) throw data_error("sub_quadrature must be at least 1");
  const auto profiles = build_profiles(forecast, catalog, weights, params, shares, false);
  const double b_max = max_route_bound(profiles);
  const int wpd = (1440 + forecast.window_minutes - 1) / forecast.window_minutes;

  std::map<station_id, std::map<int, double>> alight;
  for (const auto& s : catalog.network().stations()) {
    for (int w : windows) alight[s.id][w] = 0.0;
  }

  const double sub_w = static_cast<double>(forecast.window_minutes) / opts.sub_quadrature;
  for (int target : windows) {
    const double w_start = static_cast<double>(target) * forecast.window_minutes;
    const double w_end = w_start + forecast.window_minutes;
    const int lo =
        std::max(0, static_cast<int>(std::floor((w_start - b_max) / forecast.window_minutes)));
    const int hi = std::min(wpd - 1, target);
    if (lo <= hi) {
      check_coverage(forecast, lo, hi, ("alighting window " + std::to_string(target)).c_str());
    }
    for (int w = lo; w <= hi; ++w) {
      const double src_start = static_cast<double>(w) * forecast.window_minutes;
      for (const auto& [key, ps] : profiles) {
        const double v_window = forecast.at(key, w);
        if (v_window == 0.0) continue;
        const double v_part = v_window / opts.sub_quadrature;
        for (int sub = 0; sub < opts.sub_quadrature; ++sub) {
          const double tau = src_start + (sub + 0.5) * sub_w;
          if (tau >= w_end) continue;
          for (const auto& p : ps) {
            if (p.weight == 0.0) continue;
            const double hi_x = w_end - tau;
            const double lo_x = w_start - tau;
            const double mass =
                cdf(p.total, hi_x) - (lo_x <= p.total.a ? 0.0 : cdf(p.total, lo_x));
            if (mass <= 0.0) continue;
            alight[key.second][target] += v_part * p.weight * mass;
          }
        }
      }
    }
  }
  return alight;
}

void write_density_csv(std::ostream& out, const std::string& date, const density_field& field) {
  out << "edge_id,timestamp,expected_count\n";
  for (const auto& [eid, values] : field.edge_total) {
    for (std::size_t i = 0; i < field.instants.size(); ++i) {
      out << eid << ',' << format_timestamp(make_timestamp(date, field.instants[i])) << ','
          << format_double(values[i]) << '\n';
    }
  }
}

std::string density_snapshot_json(const std::string& date, const density_field& field,
                                  std::size_t instant_index) {
  nlohmann::json doc;
  doc["timestamp"] = format_timestamp(make_timestamp(date, field.instants.at(instant_index)));
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [eid, values] : field.edge_total) {
    edges.push_back({{"id", eid}, {"count", values[instant_index]}});
  }
  doc["edges"] = std::move(edges);
  nlohmann::json stations = nlohmann::json::array();
  for (const auto& [sid, values] : field.in_station) {
    stations.push_back({{"id", sid}, {"in_station_count", values[instant_index]}});
  }
  doc["stations"] = std::move(stations);
  return doc.dump(2) + "\n";
}

void write_alighting_csv(std::ostream& out,
                         const std::map<station_id, std::map<int, double>>& alighting) {
  out << "station_id,window,expected_count\n";
  for (const auto& [sid, per_window] : alighting) {
    for (const auto& [w, v] : per_window) {
      out << sid << ',' << w << ',' << format_double(v) << '\n';
    }
  }
}

std::vector<line_density_matrix> line_matrices(const metro_network& net, const line_id& line,
                                               const density_field& field) {
  // collect the line's edges and check it is a simple path or loop
  std::map<station_id, std::vector<const edge*>> adj;
  std::size_t n_edges = 0;
  for (const auto& e : net.edges()) {
    if (e.line != line) continue;
    adj[e.a].push_back(&e);
    adj[e.b].push_back(&e);
    ++n_edges;
  }
  if (n_edges == 0) throw data_error("line '" + line + "' has no edges");
  std::vector<station_id> ends;
  for (const auto& [s, es] : adj) {
    if (es.size() > 2) throw data_error("line '" + line + "' branches at '" + s + "'");
    if (es.size() == 1) ends.push_back(s);
  }
  std::sort(ends.begin(), ends.end());

  const auto walk = [&](const station_id& start, const edge* first) {
    line_density_matrix m;
    m.line = line;
    m.start = start;
    std::set<edge_id> used;
    station_id at = start;
    const edge* next = first;
    while (next != nullptr) {
      used.insert(next->id);
      m.segments.push_back(next->id);
      auto it = field.edge_directed.find({next->id, at});
      m.values.push_back(it != field.edge_directed.end()
                             ? it->second
                             : std::vector<double>(field.instants.size(), 0.0));
      at = next->other(at);
      next = nullptr;
      for (const edge* e : adj[at]) {
        if (!used.count(e->id)) {
          next = e;
          break;
        }
      }
    }
    if (m.segments.size() != n_edges) {
      throw data_error("line '" + line + "' is not a single connected path");
    }
    return m;
  };

  std::vector<line_density_matrix> out;
  if (ends.size() == 2) {  // path: one matrix per terminus
    out.push_back(walk(ends[0], adj[ends[0]][0]));
    out.push_back(walk(ends[1], adj[ends[1]][0]));
  } else if (ends.empty()) {  // loop: both rotations from the smallest station
    const station_id start = adj.begin()->first;
    auto& starters = adj[start];
    std::sort(starters.begin(), starters.end(),
              [](const edge* x, const edge* y) { return x->id < y->id; });
    out.push_back(walk(start, starters[0]));
    out.push_back(walk(start, starters[1]));
  } else {
    throw data_error("line '" + line + "' is neither a simple path nor a loop");
  }
  return out;
}

void write_line_matrix_csv(std::ostream& out, const line_density_matrix& m,
                           const std::vector<double>& instants) {
  out << "segment";
  for (double t : instants) out << ',' << format_double(t);
  out << '\n';
  for (std::size_t i = 0; i < m.segments.size(); ++i) {
    out << m.segments[i];
    for (double v : m.values[i]) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace pipe
