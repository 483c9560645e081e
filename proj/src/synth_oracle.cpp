#include "pipe/synth_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "json.hpp"

#include "pipe/parallel.hpp"
#include "pipe/trunc_gauss.hpp"

namespace pipe {

std::string scenario_config::day_date(int day) const {
  timestamp base = parse_timestamp(base_date + " 00:00:00");
  return date_of(timestamp{base.seconds + static_cast<std::int64_t>(day) * 86400});
}

scenario_config scenario_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("scenario is not valid JSON: ") + e.what());
  }
  scenario_config cfg;
  try {
    cfg.network_path = doc.at("network").get<std::string>();
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.days = doc.value("days", cfg.days);
    cfg.base_date = doc.value("base_date", cfg.base_date);
    cfg.window_minutes = doc.value("window_minutes", cfg.window_minutes);
    cfg.first_window = doc.value("first_window", cfg.first_window);
    cfg.last_window = doc.value("last_window", cfg.last_window);
    if (doc.contains("day_demand_factors")) {
      cfg.day_factors = doc["day_demand_factors"].get<std::vector<double>>();
    }
    if (doc.contains("categories")) {
      cfg.categories = doc["categories"].get<std::vector<std::string>>();
    }
    if (doc.contains("enumeration")) {
      const auto& en = doc["enumeration"];
      cfg.enumeration.beta = en.value("beta", cfg.enumeration.beta);
      cfg.enumeration.max_transfers = en.value("sigma", cfg.enumeration.max_transfers);
      cfg.enumeration.count_mode = en.value("count_mode", "all_links") == "travel_only"
                                       ? link_count_mode::travel_only
                                       : link_count_mode::all_links;
    }
    for (const auto& l : doc.at("link_params")) {
      transit_link link{link_kind_from_name(l.at("kind").get<std::string>()),
                        l.at("anchor").get<std::string>()};
      trunc_norm_params p{l.at("mu").get<double>(), l.at("sigma").get<double>(),
                          l.at("a").get<double>(), l.at("b").get<double>()};
      validate(p);
      if (p.a < 0.0) throw data_error("planted link lower bound must be non-negative");
      cfg.link_params[link] = p;
    }
    if (doc.contains("route_weights")) {
      for (const auto& w : doc["route_weights"]) {
        const auto pi = w.at("pi").get<std::vector<double>>();
        double sum = 0.0;
        for (double v : pi) {
          if (v < 0.0) throw data_error("planted route weight must be non-negative");
          sum += v;
        }
        if (std::fabs(sum - 1.0) > 1e-9) throw data_error("planted route weights must sum to 1");
        std::vector<std::string> cats;
        const std::string c = w.at("category").get<std::string>();
        if (c == "*") cats = cfg.categories;
        else cats.push_back(c);
        for (const auto& cat : cats) {
          cfg.weights.pi[{w.at("origin").get<std::string>(), w.at("dest").get<std::string>(),
                          cat}] = pi;
        }
      }
    }
    for (const auto& d : doc.at("demand")) {
      demand_cell cell;
      cell.origin = d.at("origin").get<std::string>();
      cell.dest = d.at("dest").get<std::string>();
      cell.category = d.value("category", "*");
      cell.rate = d.at("rate").get<double>();
      cell.first_window = d.value("first_window", -1);
      cell.last_window = d.value("last_window", -1);
      if (cell.rate < 0.0) throw data_error("demand rate must be non-negative");
      cfg.demand.push_back(std::move(cell));
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("scenario schema error: ") + e.what());
  }
  if (cfg.days < 1) throw data_error("scenario needs at least one day");
  if (!cfg.day_factors.empty() && cfg.day_factors.size() != static_cast<std::size_t>(cfg.days)) {
    throw data_error("day_demand_factors length must equal days");
  }
  if (cfg.first_window < 0 || cfg.last_window < cfg.first_window) {
    throw data_error("scenario window range is invalid");
  }
  return cfg;
}

namespace {

struct expanded_cell {
  station_id o, d;
  std::string cat;
  double rate;
  int w0, w1;
};

std::vector<expanded_cell> expand_demand(const scenario_config& cfg, const metro_network& net) {
  std::vector<expanded_cell> cells;
  std::vector<station_id> all;
  for (const auto& s : net.stations()) all.push_back(s.id);
  std::sort(all.begin(), all.end());
  for (const auto& cell : cfg.demand) {
    const std::vector<station_id> os =
        cell.origin == "*" ? all : std::vector<station_id>{cell.origin};
    const std::vector<station_id> ds =
        cell.dest == "*" ? all : std::vector<station_id>{cell.dest};
    const std::vector<std::string> cats =
        cell.category == "*" ? cfg.categories : std::vector<std::string>{cell.category};
    for (const auto& o : os) {
      if (!net.has_station(o)) throw data_error("demand references unknown station '" + o + "'");
      for (const auto& d : ds) {
        if (o == d) {
          if (cell.origin != "*" || cell.dest != "*") {
            throw data_error("demand cell has identical origin and destination '" + o + "'");
          }
          continue;
        }
        if (!net.has_station(d)) throw data_error("demand references unknown station '" + d + "'");
        for (const auto& c : cats) {
          cells.push_back({o, d, c, cell.rate,
                           cell.first_window < 0 ? cfg.first_window : cell.first_window,
                           cell.last_window < 0 ? cfg.last_window : cell.last_window});
        }
      }
    }
  }
  return cells;
}

}  // namespace

generation generate(const scenario_config& cfg, const route_catalog& catalog) {
  const metro_network& net = catalog.network();
  const auto cells = expand_demand(cfg, net);

  // planted parameters per route, resolved once
  struct route_info {
    const route* r;
    std::vector<const trunc_norm_params*> link_params;
  };
  std::map<std::pair<station_id, station_id>, std::vector<route_info>> routes;
  std::map<std::pair<station_id, station_id>, bool> seen;
  for (const auto& c : cells) {
    if (seen[{c.o, c.d}]) continue;
    seen[{c.o, c.d}] = true;
    const auto& rcs = catalog.at(c.o, c.d);
    std::vector<route_info> infos;
    for (const auto& r : rcs.routes) {
      route_info info;
      info.r = &r;
      for (const auto& l : r.links) {
        auto it = cfg.link_params.find(l);
        if (it == cfg.link_params.end()) {
          throw data_error("scenario link_params missing " + std::string(link_kind_name(l.kind)) +
                           "(" + l.anchor + ")");
        }
        info.link_params.push_back(&it->second);
      }
      infos.push_back(std::move(info));
    }
    routes[{c.o, c.d}] = std::move(infos);
  }

  const rng_stream master(cfg.seed);
  std::vector<generation> per_day(static_cast<std::size_t>(cfg.days));

  parallel_for_index(cfg.days, 0, [&](int day) {
    rng_stream rng = master.fork(static_cast<std::uint64_t>(day));
    const std::string date = cfg.day_date(day);
    const double factor = cfg.day_factor(day);
    generation out;
    for (int w = cfg.first_window; w <= cfg.last_window; ++w) {
      const double w_start = static_cast<double>(w) * cfg.window_minutes;
      for (const auto& cell : cells) {
        if (w < cell.w0 || w > cell.w1) continue;
        const int n = sample_poisson(rng, cell.rate * factor);
        if (n == 0) continue;
        const auto& infos = routes.at({cell.o, cell.d});
        const std::vector<double>* pi =
            infos.size() > 1 ? cfg.weights.find(cell.o, cell.d, cell.cat) : nullptr;
        for (int k = 0; k < n; ++k) {
          // tap-in rounded to whole seconds up front so ground-truth events
          // line up with the emitted record
          double m_in = w_start + rng.next_double() * cfg.window_minutes;
          m_in = std::floor(m_in * 60.0 + 0.5) / 60.0;

          int m = 0;
          if (infos.size() > 1) {
            double u = rng.next_double();
            for (std::size_t j = 0; j < infos.size(); ++j) {
              const double p = pi ? (*pi)[j] : 1.0 / static_cast<double>(infos.size());
              if (u < p || j + 1 == infos.size()) {
                m = static_cast<int>(j);
                break;
              }
              u -= p;
            }
          }
          const route_info& info = infos[static_cast<std::size_t>(m)];

          gt_trip gt;
          gt.day = day;
          gt.date = date;
          gt.route_index = m;
          double at = m_in;
          for (std::size_t j = 0; j < info.r->links.size(); ++j) {
            const double dur = sample(*info.link_params[j], rng);
            gt.phases.push_back({info.r->links[j].kind, info.r->links[j].anchor, at, at + dur});
            at += dur;
          }

          trip_record tr;
          tr.category = cell.cat;
          tr.origin = cell.o;
          tr.dest = cell.d;
          tr.t_in = make_timestamp(date, m_in);
          tr.t_out = make_timestamp(date, at);
          if (tr.t_out <= tr.t_in) tr.t_out.seconds = tr.t_in.seconds + 1;
          out.trips.push_back(std::move(tr));
          out.truth.trips.push_back(std::move(gt));
        }
      }
    }
    per_day[static_cast<std::size_t>(day)] = std::move(out);
  });

  generation all;
  std::size_t counter = 0;
  for (auto& day_out : per_day) {
    for (std::size_t i = 0; i < day_out.trips.size(); ++i) {
      char card[24];
      std::snprintf(card, sizeof card, "c%08zu", counter++);
      day_out.trips[i].card_id = card;
      all.trips.push_back(std::move(day_out.trips[i]));
      all.truth.trips.push_back(std::move(day_out.truth.trips[i]));
    }
  }
  return all;
}

occupancy_counts count_occupancy(const ground_truth& gt, const std::string& date, double minute) {
  occupancy_counts out;
  for (const auto& t : gt.trips) {
    if (t.date != date || t.phases.empty()) continue;
    if (minute >= t.phases.back().end_min) {
      ++out.exited;
      continue;
    }
    if (minute < t.phases.front().start_min) continue;
    for (const auto& ph : t.phases) {
      if (minute >= ph.start_min && minute < ph.end_min) {
        if (ph.kind == link_kind::travel) {
          ++out.on_edge[ph.anchor];
        } else {
          ++out.in_station[ph.anchor];
        }
        ++out.in_system;
        break;
      }
    }
  }
  return out;
}

void write_ground_truth_csv(std::ostream& out, const ground_truth& gt) {
  out << "trip,day,date,route_index,kind,anchor,start_min,end_min\n";
  for (std::size_t i = 0; i < gt.trips.size(); ++i) {
    const auto& t = gt.trips[i];
    for (const auto& ph : t.phases) {
      out << i << ',' << t.day << ',' << t.date << ',' << t.route_index << ','
          << link_kind_name(ph.kind) << ',' << ph.anchor << ',' << format_double(ph.start_min)
          << ',' << format_double(ph.end_min) << '\n';
    }
  }
}

}  // namespace pipe
