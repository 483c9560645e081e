#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "pipe/common.hpp"

namespace pipe {

struct station {
  station_id id;
  std::string name;
  std::set<line_id> lines;  // derived from incident edges

  bool is_interchange() const { return lines.size() >= 2; }
};

struct line {
  line_id id;
  double headway_min = 0.0;
  double vmax_kmpm = 0.0;
  double vmin_kmpm = 0.0;
};

struct edge {
  edge_id id;
  station_id a;
  station_id b;
  line_id line;
  double length_km = 0.0;

  const station_id& other(const station_id& s) const { return s == a ? b : a; }
};

enum class link_kind { entry, travel, transfer, exit };

const char* link_kind_name(link_kind k);
link_kind link_kind_from_name(const std::string& name);

// One additive component of a trip: entry/transfer/exit anchored at a station,
// travel anchored at an edge.
struct transit_link {
  link_kind kind;
  std::string anchor;

  friend bool operator==(const transit_link&, const transit_link&) = default;
  friend auto operator<=>(const transit_link&, const transit_link&) = default;
};

struct route {
  station_id origin;
  station_id dest;
  std::vector<edge_id> edges;
  std::vector<station_id> stations;  // origin .. dest, edges.size() + 1 entries
  std::vector<transit_link> links;   // entry, travel*, transfer at line changes, exit
  std::vector<station_id> transfer_stations;

  std::size_t transfer_count() const { return transfer_stations.size(); }
};

struct route_choice_set {
  station_id origin;
  station_id dest;
  std::vector<route> routes;  // sorted by (link count, lexicographic edge ids)
};

// How "number of transit links" is counted for the pruning rules. The default
// counts all four kinds so transfers penalize a route's length.
enum class link_count_mode { all_links, travel_only };

struct enum_options {
  double beta = 2.0;  // > 1
  int max_transfers = 2;  // sigma
  link_count_mode count_mode = link_count_mode::all_links;

  friend bool operator==(const enum_options&, const enum_options&) = default;
};

std::size_t route_link_count(const route& r, link_count_mode mode);

class metro_network {
 public:
  static metro_network from_json_text(const std::string& text);

  const std::vector<station>& stations() const { return stations_; }
  const std::vector<line>& lines() const { return lines_; }
  const std::vector<edge>& edges() const { return edges_; }

  const station& station_at(const station_id& id) const;
  const line& line_at(const line_id& id) const;
  const edge& edge_at(const edge_id& id) const;
  bool has_station(const station_id& id) const;

  // Incident edge indexes, sorted by edge id for deterministic traversal.
  const std::vector<std::size_t>& incident(const station_id& s) const;

 private:
  std::vector<station> stations_;
  std::vector<line> lines_;
  std::vector<edge> edges_;
  std::map<station_id, std::size_t> station_index_;
  std::map<line_id, std::size_t> line_index_;
  std::map<edge_id, std::size_t> edge_index_;
  std::map<station_id, std::vector<std::size_t>> incident_;

  void validate_and_index();
};

metro_network load_network_file(const std::string& path);

// Derives the transit-link sequence of a route from its edges. Total on valid
// routes; the result starts with entry(origin) and ends with exit(dest).
std::vector<transit_link> route_links(const metro_network& net, const route& r);

// Depth-first enumeration of simple routes followed by the pruning rules:
// drop non-minimum routes with more than sigma transfers, drop routes with
// more than beta times the minimum link count. Throws data_error when the
// pair is disconnected.
route_choice_set enumerate_routes(const metro_network& net, const station_id& origin,
                                  const station_id& dest, const enum_options& opts = {});

// Memoized enumeration; immutable network, safe for concurrent readers.
class route_catalog {
 public:
  route_catalog(const metro_network& net, enum_options opts = {})
      : net_(net), opts_(opts) {}

  const route_choice_set& at(const station_id& origin, const station_id& dest) const;
  const metro_network& network() const { return net_; }
  const enum_options& options() const { return opts_; }

 private:
  const metro_network& net_;
  enum_options opts_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<station_id, station_id>,
                   std::unique_ptr<route_choice_set>> memo_;
};

}  // namespace pipe
