#include "pipe/network.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace pipe {

const char* link_kind_name(link_kind k) {
  switch (k) {
    case link_kind::entry: return "entry";
    case link_kind::travel: return "travel";
    case link_kind::transfer: return "transfer";
    case link_kind::exit: return "exit";
  }
  return "?";
}

link_kind link_kind_from_name(const std::string& name) {
  if (name == "entry") return link_kind::entry;
  if (name == "travel") return link_kind::travel;
  if (name == "transfer") return link_kind::transfer;
  if (name == "exit") return link_kind::exit;
  throw data_error("unknown link kind: '" + name + "'");
}

std::size_t route_link_count(const route& r, link_count_mode mode) {
  return mode == link_count_mode::all_links ? r.links.size() : r.edges.size();
}

metro_network metro_network::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("network definition is not valid JSON: ") + e.what());
  }

  metro_network net;
  try {
    for (const auto& s : doc.at("stations")) {
      net.stations_.push_back({s.at("id").get<std::string>(),
                               s.value("name", s.at("id").get<std::string>()),
                               {}});
    }
    for (const auto& l : doc.at("lines")) {
      net.lines_.push_back({l.at("id").get<std::string>(), l.at("headway_min").get<double>(),
                            l.at("vmax_kmpm").get<double>(),
                            l.value("vmin_kmpm", l.at("vmax_kmpm").get<double>())});
    }
    for (const auto& e : doc.at("edges")) {
      net.edges_.push_back({e.at("id").get<std::string>(), e.at("a").get<std::string>(),
                            e.at("b").get<std::string>(), e.at("line").get<std::string>(),
                            e.at("length_km").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("network definition schema error: ") + e.what());
  }
  net.validate_and_index();
  return net;
}

void metro_network::validate_and_index() {
  for (std::size_t i = 0; i < stations_.size(); ++i) {
    if (!station_index_.emplace(stations_[i].id, i).second) {
      throw data_error("duplicate station id '" + stations_[i].id + "'");
    }
  }
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    const line& l = lines_[i];
    if (!line_index_.emplace(l.id, i).second) {
      throw data_error("duplicate line id '" + l.id + "'");
    }
    if (!(l.headway_min > 0.0)) {
      throw data_error("line '" + l.id + "': headway_min must be positive");
    }
    if (!(l.vmax_kmpm > 0.0) || !(l.vmin_kmpm > 0.0) || l.vmin_kmpm > l.vmax_kmpm) {
      throw data_error("line '" + l.id + "': speeds must satisfy 0 < vmin_kmpm <= vmax_kmpm");
    }
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const edge& e = edges_[i];
    if (!edge_index_.emplace(e.id, i).second) {
      throw data_error("duplicate edge id '" + e.id + "'");
    }
    if (e.a == e.b) throw data_error("edge '" + e.id + "': endpoints must be distinct");
    if (!(e.length_km > 0.0)) throw data_error("edge '" + e.id + "': length_km must be positive");
    for (const auto& endp : {e.a, e.b}) {
      if (!station_index_.count(endp)) {
        throw data_error("edge '" + e.id + "' references unknown station '" + endp + "'");
      }
    }
    if (!line_index_.count(e.line)) {
      throw data_error("edge '" + e.id + "' references unknown line '" + e.line + "'");
    }
    stations_[station_index_[e.a]].lines.insert(e.line);
    stations_[station_index_[e.b]].lines.insert(e.line);
    incident_[e.a].push_back(i);
    incident_[e.b].push_back(i);
  }
  for (auto& [pair_a, pair_b] : edge_index_) {
    (void)pair_a;
    const edge& e = edges_[pair_b];
    for (std::size_t j : incident_.at(e.a)) {
      const edge& f = edges_[j];
      if (f.id != e.id && f.line == e.line &&
          std::minmax(f.a, f.b) == std::minmax(e.a, e.b)) {
        throw data_error("edges '" + e.id + "' and '" + f.id +
                         "' duplicate the same station pair on line '" + e.line + "'");
      }
    }
  }
  for (auto& [sid, idxs] : incident_) {
    (void)sid;
    std::sort(idxs.begin(), idxs.end(),
              [this](std::size_t x, std::size_t y) { return edges_[x].id < edges_[y].id; });
  }

  // connectivity
  if (stations_.empty()) throw data_error("network has no stations");
  std::set<station_id> seen{stations_.front().id};
  std::vector<station_id> frontier{stations_.front().id};
  while (!frontier.empty()) {
    station_id s = frontier.back();
    frontier.pop_back();
    auto it = incident_.find(s);
    if (it == incident_.end()) continue;
    for (std::size_t i : it->second) {
      const station_id& o = edges_[i].other(s);
      if (seen.insert(o).second) frontier.push_back(o);
    }
  }
  if (seen.size() != stations_.size()) {
    for (const auto& s : stations_) {
      if (!seen.count(s.id)) {
        throw data_error("network is disconnected: station '" + s.id +
                         "' unreachable from '" + stations_.front().id + "'");
      }
    }
  }
}

const station& metro_network::station_at(const station_id& id) const {
  auto it = station_index_.find(id);
  if (it == station_index_.end()) throw data_error("unknown station '" + id + "'");
  return stations_[it->second];
}

const line& metro_network::line_at(const line_id& id) const {
  auto it = line_index_.find(id);
  if (it == line_index_.end()) throw data_error("unknown line '" + id + "'");
  return lines_[it->second];
}

const edge& metro_network::edge_at(const edge_id& id) const {
  auto it = edge_index_.find(id);
  if (it == edge_index_.end()) throw data_error("unknown edge '" + id + "'");
  return edges_[it->second];
}

bool metro_network::has_station(const station_id& id) const {
  return station_index_.count(id) != 0;
}

const std::vector<std::size_t>& metro_network::incident(const station_id& s) const {
  static const std::vector<std::size_t> empty;
  auto it = incident_.find(s);
  return it == incident_.end() ? empty : it->second;
}

metro_network load_network_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open network file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return metro_network::from_json_text(buf.str());
}

std::vector<transit_link> route_links(const metro_network& net, const route& r) {
  std::vector<transit_link> links;
  links.push_back({link_kind::entry, r.origin});
  for (std::size_t i = 0; i < r.edges.size(); ++i) {
    if (i > 0 && net.edge_at(r.edges[i]).line != net.edge_at(r.edges[i - 1]).line) {
      links.push_back({link_kind::transfer, r.stations[i]});
    }
    links.push_back({link_kind::travel, r.edges[i]});
  }
  links.push_back({link_kind::exit, r.dest});
  return links;
}

namespace {

void finish_route(const metro_network& net, route& r) {
  r.links = route_links(net, r);
  r.transfer_stations.clear();
  for (const auto& l : r.links) {
    if (l.kind == link_kind::transfer) r.transfer_stations.push_back(l.anchor);
  }
}

}  // namespace

route_choice_set enumerate_routes(const metro_network& net, const station_id& origin,
                                  const station_id& dest, const enum_options& opts) {
  if (origin == dest) throw data_error("route enumeration needs origin != dest");
  net.station_at(origin);
  net.station_at(dest);
  if (!(opts.beta > 1.0)) throw data_error("beta must exceed 1");
  if (opts.max_transfers < 0) throw data_error("sigma must be non-negative");

  std::vector<route> all;
  std::vector<edge_id> edge_stack;
  std::vector<station_id> station_stack{origin};
  std::set<station_id> visited{origin};

  std::function<void(const station_id&)> dfs = [&](const station_id& at) {
    if (at == dest) {
      route r;
      r.origin = origin;
      r.dest = dest;
      r.edges = edge_stack;
      r.stations = station_stack;
      finish_route(net, r);
      all.push_back(std::move(r));
      return;
    }
    for (std::size_t i : net.incident(at)) {
      const edge& e = net.edges()[i];
      const station_id& next = e.other(at);
      if (visited.count(next)) continue;  // simple routes only
      visited.insert(next);
      edge_stack.push_back(e.id);
      station_stack.push_back(next);
      dfs(next);
      station_stack.pop_back();
      edge_stack.pop_back();
      visited.erase(next);
    }
  };
  dfs(origin);

  if (all.empty()) {
    throw data_error("no route between '" + origin + "' and '" + dest + "'");
  }

  std::size_t min_links = SIZE_MAX;
  for (const auto& r : all) min_links = std::min(min_links, route_link_count(r, opts.count_mode));

  route_choice_set out{origin, dest, {}};
  for (auto& r : all) {
    const std::size_t n = route_link_count(r, opts.count_mode);
    const bool is_min = n == min_links;
    if (!is_min && r.transfer_count() > static_cast<std::size_t>(opts.max_transfers)) continue;
    if (static_cast<double>(n) > opts.beta * static_cast<double>(min_links)) continue;
    out.routes.push_back(std::move(r));
  }
  std::sort(out.routes.begin(), out.routes.end(), [&](const route& x, const route& y) {
    const std::size_t nx = route_link_count(x, opts.count_mode);
    const std::size_t ny = route_link_count(y, opts.count_mode);
    if (nx != ny) return nx < ny;
    return x.edges < y.edges;
  });
  return out;
}

const route_choice_set& route_catalog::at(const station_id& origin, const station_id& dest) const {
  const auto key = std::make_pair(origin, dest);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = memo_.find(key);
  if (it == memo_.end()) {
    auto rcs = std::make_unique<route_choice_set>(enumerate_routes(net_, origin, dest, opts_));
    it = memo_.emplace(key, std::move(rcs)).first;
  }
  return *it->second;
}

}  // namespace pipe
