#include "pipe/route_time_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "pipe/kernels.hpp"
#include "pipe/parallel.hpp"

namespace pipe {

namespace {

constexpr double k_neg_inf = -std::numeric_limits<double>::infinity();
constexpr double k_min_mass = 1e-300;
constexpr double k_sqrt1_2 = 0.70710678118654752440;

double stable_phi_diff(double lo, double hi) {
  if (lo >= 0.0) return 0.5 * (std::erfc(lo * k_sqrt1_2) - std::erfc(hi * k_sqrt1_2));
  if (hi <= 0.0) return 0.5 * (std::erfc(-hi * k_sqrt1_2) - std::erfc(-lo * k_sqrt1_2));
  return 0.5 * (std::erf(hi * k_sqrt1_2) + std::erf(-lo * k_sqrt1_2));
}

std::string link_label(const transit_link& l) {
  return std::string(link_kind_name(l.kind)) + "(" + l.anchor + ")";
}

}  // namespace

link_table link_table::build(const metro_network& net) {
  link_table t;
  for (const auto& s : net.stations()) {
    t.links.push_back({link_kind::entry, s.id});
    t.links.push_back({link_kind::exit, s.id});
    if (s.is_interchange()) t.links.push_back({link_kind::transfer, s.id});
  }
  for (const auto& e : net.edges()) t.links.push_back({link_kind::travel, e.id});
  std::sort(t.links.begin(), t.links.end());
  for (std::size_t i = 0; i < t.links.size(); ++i) t.index[t.links[i]] = static_cast<int>(i);
  return t;
}

int link_table::require(const transit_link& l) const {
  auto it = index.find(l);
  if (it == index.end()) throw data_error("no parameters for link " + link_label(l));
  return it->second;
}

truncation_table estimate_truncation(const metro_network& net,
                                     const std::vector<trip_record>& trips,
                                     const truncation_options& opts) {
  // min/max direct trip time per unordered adjacent pair
  std::map<std::pair<station_id, station_id>, std::pair<double, double>> ranges;
  std::map<std::pair<station_id, station_id>, bool> wanted;
  for (const auto& e : net.edges()) wanted[std::minmax(e.a, e.b)] = true;
  for (const auto& tr : trips) {
    const auto key = std::minmax(tr.origin, tr.dest);
    if (!wanted.count(key)) continue;
    const double t = tr.travel_minutes();
    auto [it, fresh] = ranges.try_emplace(key, t, t);
    if (!fresh) {
      it->second.first = std::min(it->second.first, t);
      it->second.second = std::max(it->second.second, t);
    }
  }

  truncation_table out;
  std::map<station_id, double> station_b;  // shared upper bound for entry and exit
  for (const auto& s : net.stations()) station_b[s.id] = 0.0;

  for (const auto& e : net.edges()) {
    const line& l = net.line_at(e.line);
    const double a = e.length_km / l.vmax_kmpm;
    double b;
    auto it = ranges.find(std::minmax(e.a, e.b));
    if (it != ranges.end()) {
      const auto [t_min, t_max] = it->second;
      b = t_min;
      station_b[e.a] = std::max(station_b[e.a], t_max - t_min);
      station_b[e.b] = std::max(station_b[e.b], t_max - t_min);
    } else if (opts.fallback) {
      b = e.length_km / l.vmin_kmpm;
    } else {
      throw data_error("no adjacent-pair trips for edge '" + e.id +
                       "' (" + e.a + "-" + e.b + ") and fallback disabled");
    }
    out.bounds[{link_kind::travel, e.id}] = {a, b};
  }

  for (const auto& s : net.stations()) {
    double b = station_b[s.id];
    double max_headway = 0.0;
    for (const auto& lid : s.lines) max_headway = std::max(max_headway, net.line_at(lid).headway_min);
    if (b == 0.0 && opts.fallback) b = 2.0 * (opts.w0_minutes + max_headway);
    out.bounds[{link_kind::entry, s.id}] = {0.0, b};
    out.bounds[{link_kind::exit, s.id}] = {0.0, b};
    if (s.is_interchange()) {
      out.bounds[{link_kind::transfer, s.id}] = {0.0, 2.0 * (opts.w0_minutes + max_headway)};
    }
  }
  return out;
}

link_param_set init_link_params(const metro_network& net, const truncation_table& trunc,
                                double sigma2_floor) {
  link_param_set set;
  set.table = link_table::build(net);
  set.params.resize(set.table.size());
  const double sigma_floor = std::sqrt(sigma2_floor);
  for (std::size_t i = 0; i < set.table.size(); ++i) {
    const transit_link& l = set.table.links[i];
    auto it = trunc.bounds.find(l);
    if (it == trunc.bounds.end()) throw data_error("truncation table missing " + link_label(l));
    const auto [a, b] = it->second;
    if (!(a < b)) {
      throw data_error("degenerate truncation [" + format_double(a) + ", " + format_double(b) +
                       "] for " + link_label(l));
    }
    set.params[i] = {(a + b) / 2.0, std::max((b - a) / 4.0, sigma_floor), a, b};
  }
  return set;
}

route_weights init_route_weights(const route_catalog& catalog,
                                 const std::vector<std::string>& categories) {
  route_weights w;
  const auto& stations = catalog.network().stations();
  for (const auto& so : stations) {
    for (const auto& sd : stations) {
      if (so.id == sd.id) continue;
      const auto& rcs = catalog.at(so.id, sd.id);
      if (rcs.routes.size() < 2) continue;
      const std::vector<double> uniform(rcs.routes.size(), 1.0 / static_cast<double>(rcs.routes.size()));
      for (const auto& c : categories) w.pi[{so.id, sd.id, c}] = uniform;
    }
  }
  return w;
}

trunc_norm_params route_time_params(const route& r, const link_param_set& params) {
  std::vector<trunc_norm_params> parts;
  parts.reserve(r.links.size());
  for (const auto& l : r.links) parts.push_back(params.at(l));
  return sum_approx(parts);
}

// ---------------------------------------------------------------------------
// EM workspace

struct em_workspace::group {
  station_id o, d;
  std::string cat;
  int m_routes = 0;
  std::vector<std::vector<int>> route_links;  // per route: link table indices
  std::vector<double> route_a, route_b;       // frozen truncation sums
  std::vector<double> t;                      // trip travel times
  std::vector<std::size_t> orig_index;
  std::vector<std::uint8_t> support;          // column-major n x M
  std::vector<std::uint8_t> zero_row;         // per trip
  std::vector<double> resp;                   // column-major n x M
  double ll = 0.0;
  std::size_t zero_count = 0;

  // scratch refreshed from current params
  mutable std::vector<double> route_mu, route_s2;
  std::vector<int> batch_members;  // reused by the SGD bucketizer

  std::size_t n() const { return t.size(); }
};

namespace {

struct route_consts {
  double mu, s2, sigma, inv_sigma, log_norm;
  double c_mu;   // (phi_b - phi_a) / (sigma * z)
  double c_s2;   // ((b-mu)phi_b - (a-mu)phi_a) / (2 s2 sigma z)
};

route_consts make_route_consts(double mu, double s2, double a, double b) {
  route_consts rc;
  rc.mu = mu;
  rc.s2 = s2;
  rc.sigma = std::sqrt(s2);
  rc.inv_sigma = 1.0 / rc.sigma;
  const double alpha = (a - mu) * rc.inv_sigma;
  const double beta = (b - mu) * rc.inv_sigma;
  const double z = stable_phi_diff(alpha, beta);
  if (!(z >= k_min_mass)) {
    throw numeric_error("degenerate route distribution: mass " + format_double(z) +
                        " on [" + format_double(a) + ", " + format_double(b) + "] for mu=" +
                        format_double(mu) + " sigma=" + format_double(rc.sigma));
  }
  const double phi_a = std_normal_pdf(alpha);
  const double phi_b = std_normal_pdf(beta);
  rc.log_norm = std::log(rc.sigma) + std::log(z) + 0.91893853320467274178;
  rc.c_mu = (phi_b - phi_a) / (rc.sigma * z);
  rc.c_s2 = ((b - mu) * phi_b - (a - mu) * phi_a) / (2.0 * s2 * rc.sigma * z);
  return rc;
}

}  // namespace

em_workspace::em_workspace(const route_catalog& catalog, const std::vector<trip_record>& trips,
                           const truncation_table& trunc, int workers)
    : workers_(workers) {
  const metro_network& net = catalog.network();
  link_table table = link_table::build(net);
  n_links_ = table.size();

  std::map<std::tuple<station_id, station_id, std::string>, int> group_of;
  for (std::size_t n = 0; n < trips.size(); ++n) {
    const trip_record& tr = trips[n];
    auto key = std::make_tuple(tr.origin, tr.dest, tr.category);
    auto it = group_of.find(key);
    if (it == group_of.end()) {
      it = group_of.emplace(key, static_cast<int>(groups_.size())).first;
      group g;
      g.o = tr.origin;
      g.d = tr.dest;
      g.cat = tr.category;
      groups_.push_back(std::move(g));
    }
    group& g = groups_[it->second];
    g.t.push_back(tr.travel_minutes());
    g.orig_index.push_back(n);
  }
  // map-ordered group ids for deterministic processing
  {
    std::vector<group> ordered;
    ordered.reserve(groups_.size());
    for (auto& [key, gi] : group_of) {
      (void)key;
      ordered.push_back(std::move(groups_[gi]));
      gi = static_cast<int>(ordered.size()) - 1;
    }
    groups_ = std::move(ordered);
  }

  link_users_.resize(n_links_);
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    group& g = groups_[gi];
    const route_choice_set& rcs = catalog.at(g.o, g.d);
    g.m_routes = static_cast<int>(rcs.routes.size());
    for (int m = 0; m < g.m_routes; ++m) {
      std::vector<int> idx;
      double a = 0.0, b = 0.0;
      for (const auto& l : rcs.routes[m].links) {
        const int li = table.require(l);
        idx.push_back(li);
        auto it = trunc.bounds.find(l);
        if (it == trunc.bounds.end()) throw data_error("truncation table missing " + link_label(l));
        a += it->second.first;
        b += it->second.second;
      }
      for (int li : idx) link_users_[li].push_back({static_cast<int>(gi), m});
      g.route_links.push_back(std::move(idx));
      g.route_a.push_back(a);
      g.route_b.push_back(b);
    }
    const std::size_t n = g.n();
    g.support.assign(n * g.m_routes, 0);
    g.resp.assign(n * g.m_routes, 0.0);
    g.zero_row.assign(n, 0);
    g.route_mu.assign(g.m_routes, 0.0);
    g.route_s2.assign(g.m_routes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      bool any = false;
      for (int m = 0; m < g.m_routes; ++m) {
        const bool in = g.t[i] >= g.route_a[m] && g.t[i] <= g.route_b[m];
        g.support[m * n + i] = in;
        any = any || in;
      }
      if (!any) {
        g.zero_row[i] = 1;
        ++zero_support_;
        for (int m = 0; m < g.m_routes; ++m) g.resp[m * n + i] = 1.0 / g.m_routes;
      }
    }
    trip_count_ += n;
  }
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    for (std::size_t i = 0; i < groups_[gi].n(); ++i) {
      trip_slots_.push_back({static_cast<int>(gi), static_cast<int>(i)});
    }
  }
}

void em_workspace::refresh_route_params(const link_param_set& params, int gi) const {
  const group& g = groups_[gi];
  for (int m = 0; m < g.m_routes; ++m) {
    double mu = 0.0, s2 = 0.0;
    for (int li : g.route_links[m]) {
      const trunc_norm_params& p = params.params[li];
      mu += p.mu;
      s2 += p.sigma * p.sigma;
    }
    g.route_mu[m] = mu;
    g.route_s2[m] = s2;
  }
}

double em_workspace::group_e_step(int gi, const link_param_set& params,
                                  const route_weights& weights) {
  group& g = groups_[gi];
  const std::size_t n = g.n();
  if (n == 0) return 0.0;
  refresh_route_params(params, gi);

  const std::vector<double>* pi = g.m_routes > 1 ? weights.find(g.o, g.d, g.cat) : nullptr;
  const double uniform_pi = 1.0 / static_cast<double>(g.m_routes);

  std::vector<double> score(n * g.m_routes);
  for (int m = 0; m < g.m_routes; ++m) {
    const route_consts rc = make_route_consts(g.route_mu[m], g.route_s2[m], g.route_a[m], g.route_b[m]);
    double* col = score.data() + m * n;
    kernels::gauss_logpdf_batch(g.t.data(), n, rc.mu, rc.inv_sigma, rc.log_norm, col);
    double lw = 0.0;
    if (g.m_routes > 1) {
      const double p = pi ? (*pi)[m] : uniform_pi;
      lw = p > 0.0 ? std::log(p) : k_neg_inf;
    }
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = g.support[m * n + i] ? col[i] + lw : k_neg_inf;
    }
  }

  std::vector<double> rowmax(n, k_neg_inf);
  for (int m = 0; m < g.m_routes; ++m) {
    const double* col = score.data() + m * n;
    for (std::size_t i = 0; i < n; ++i) rowmax[i] = std::max(rowmax[i], col[i]);
  }

  g.zero_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rowmax[i] == k_neg_inf) {
      g.zero_row[i] = 1;
      ++g.zero_count;
    } else {
      g.zero_row[i] = 0;
    }
  }

  // exp(score - rowmax) column-wise; zero rows get uniform responsibilities
  std::vector<double> arg(n);
  for (int m = 0; m < g.m_routes; ++m) {
    const double* col = score.data() + m * n;
    double* out = g.resp.data() + m * n;
    for (std::size_t i = 0; i < n; ++i) arg[i] = col[i] == k_neg_inf ? -745.0 : col[i] - rowmax[i];
    kernels::exp_batch(arg.data(), out, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (col[i] == k_neg_inf) out[i] = 0.0;
    }
  }
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (g.zero_row[i]) {
      for (int m = 0; m < g.m_routes; ++m) g.resp[m * n + i] = uniform_pi;
      continue;
    }
    double denom = 0.0;
    for (int m = 0; m < g.m_routes; ++m) denom += g.resp[m * n + i];
    for (int m = 0; m < g.m_routes; ++m) g.resp[m * n + i] /= denom;
    ll += rowmax[i] + std::log(denom);
  }
  g.ll = ll;
  return ll;
}

double em_workspace::e_step(const link_param_set& params, const route_weights& weights) {
  parallel_for_index(static_cast<int>(groups_.size()), workers_,
                     [&](int gi) { group_e_step(gi, params, weights); });
  double ll = 0.0;
  zero_support_ = 0;
  for (const auto& g : groups_) {
    ll += g.ll;
    zero_support_ += g.zero_count;
  }
  return ll;
}

std::map<std::size_t, std::vector<double>> em_workspace::responsibilities() const {
  std::map<std::size_t, std::vector<double>> out;
  for (const auto& g : groups_) {
    if (g.m_routes < 2) continue;
    const std::size_t n = g.n();
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(g.m_routes);
      for (int m = 0; m < g.m_routes; ++m) row[m] = g.resp[m * n + i];
      out[g.orig_index[i]] = std::move(row);
    }
  }
  return out;
}

double em_workspace::expected_ll(const link_param_set& params, const route_weights& weights) const {
  std::vector<double> partial(groups_.size(), 0.0);
  parallel_for_index(static_cast<int>(groups_.size()), workers_, [&](int gi) {
    const group& g = groups_[gi];
    const std::size_t n = g.n();
    if (n == 0) return;
    refresh_route_params(params, gi);
    const std::vector<double>* pi = g.m_routes > 1 ? weights.find(g.o, g.d, g.cat) : nullptr;
    std::vector<double> w(n);
    double acc = 0.0;
    for (int m = 0; m < g.m_routes; ++m) {
      const route_consts rc =
          make_route_consts(g.route_mu[m], g.route_s2[m], g.route_a[m], g.route_b[m]);
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = g.zero_row[i] ? 0.0 : (g.m_routes > 1 ? g.resp[m * n + i] : 1.0);
      }
      const auto s = kernels::weighted_sums(g.t.data(), w.data(), n);
      const double quad = s.wtt - 2.0 * rc.mu * s.wt + rc.mu * rc.mu * s.w;
      acc += -0.5 * quad / rc.s2 - rc.log_norm * s.w;
      if (g.m_routes > 1) {
        const double p = pi ? (*pi)[m] : 1.0 / g.m_routes;
        if (s.w > 0.0) acc += s.w * (p > 0.0 ? std::log(p) : k_neg_inf);
      }
    }
    partial[gi] = acc;
  });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

void em_workspace::expected_ll_gradient(const link_param_set& params, std::vector<double>& g_mu,
                                        std::vector<double>& g_sigma2) const {
  g_mu.assign(n_links_, 0.0);
  g_sigma2.assign(n_links_, 0.0);
  std::vector<double> w;
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const group& g = groups_[gi];
    const std::size_t n = g.n();
    if (n == 0) continue;
    refresh_route_params(params, static_cast<int>(gi));
    w.resize(n);
    for (int m = 0; m < g.m_routes; ++m) {
      const route_consts rc =
          make_route_consts(g.route_mu[m], g.route_s2[m], g.route_a[m], g.route_b[m]);
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = g.zero_row[i] ? 0.0 : (g.m_routes > 1 ? g.resp[m * n + i] : 1.0);
      }
      const auto s = kernels::weighted_sums(g.t.data(), w.data(), n);
      if (s.w == 0.0) continue;
      const double d_mu = (s.wt - rc.mu * s.w) / rc.s2 + rc.c_mu * s.w;
      const double quad = s.wtt - 2.0 * rc.mu * s.wt + rc.mu * rc.mu * s.w;
      const double d_s2 = quad / (2.0 * rc.s2 * rc.s2) - s.w / (2.0 * rc.s2) + rc.c_s2 * s.w;
      for (int li : g.route_links[m]) {
        g_mu[li] += d_mu;
        g_sigma2[li] += d_s2;
      }
    }
  }
}

void em_workspace::m_step_sgd(link_param_set& params, const sgd_options& opts, rng_stream& rng) {
  const std::size_t n_total = trip_slots_.size();
  if (n_total == 0) return;
  std::vector<std::size_t> order(n_total);
  for (std::size_t i = 0; i < n_total; ++i) order[i] = i;

  std::vector<double> g_mu(n_links_), g_s2(n_links_);
  std::vector<int> touched_links;
  std::vector<int> touched_groups;
  std::vector<double> tt, ww;

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    for (std::size_t i = n_total - 1; i > 0; --i) {
      const std::size_t j = rng.next_below(i + 1);
      std::swap(order[i], order[j]);
    }
    double step = opts.step / std::sqrt(static_cast<double>(epoch));

    for (std::size_t begin = 0; begin < n_total; begin += opts.batch) {
      const std::size_t end = std::min(begin + static_cast<std::size_t>(opts.batch), n_total);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);

      touched_groups.clear();
      for (std::size_t k = begin; k < end; ++k) {
        const auto [gi, local] = trip_slots_[order[k]];
        group& g = groups_[gi];
        if (g.batch_members.empty()) touched_groups.push_back(gi);
        g.batch_members.push_back(local);
      }
      std::sort(touched_groups.begin(), touched_groups.end());

      touched_links.clear();
      for (int gi : touched_groups) {
        group& g = groups_[gi];
        const std::size_t n = g.n();
        refresh_route_params(params, gi);
        for (int m = 0; m < g.m_routes; ++m) {
          const route_consts rc =
              make_route_consts(g.route_mu[m], g.route_s2[m], g.route_a[m], g.route_b[m]);
          tt.clear();
          ww.clear();
          for (int local : g.batch_members) {
            if (g.zero_row[local]) continue;
            tt.push_back(g.t[local]);
            ww.push_back(g.m_routes > 1 ? g.resp[static_cast<std::size_t>(m) * n + local] : 1.0);
          }
          if (tt.empty()) continue;
          const auto s = kernels::weighted_sums(tt.data(), ww.data(), tt.size());
          if (s.w == 0.0) continue;
          const double d_mu = (s.wt - rc.mu * s.w) / rc.s2 + rc.c_mu * s.w;
          const double quad = s.wtt - 2.0 * rc.mu * s.wt + rc.mu * rc.mu * s.w;
          const double d_s2 = quad / (2.0 * rc.s2 * rc.s2) - s.w / (2.0 * rc.s2) + rc.c_s2 * s.w;
          for (int li : g.route_links[m]) {
            if (g_mu[li] == 0.0 && g_s2[li] == 0.0) touched_links.push_back(li);
            g_mu[li] += d_mu;
            g_s2[li] += d_s2;
          }
        }
      }

      std::sort(touched_links.begin(), touched_links.end());
      touched_links.erase(std::unique(touched_links.begin(), touched_links.end()),
                          touched_links.end());
      for (int li : touched_links) {
        if (!std::isfinite(g_mu[li]) || !std::isfinite(g_s2[li])) {
          throw numeric_error("non-finite gradient for link " +
                              link_label(params.table.links[li]));
        }
      }

      // apply the batch-mean ascent step; reject proposals that squeeze any
      // affected route onto negligible mass, halving the step each time
      std::vector<std::pair<double, double>> saved(touched_links.size());
      for (int attempt = 0;; ++attempt) {
        for (std::size_t k = 0; k < touched_links.size(); ++k) {
          const int li = touched_links[k];
          trunc_norm_params& p = params.params[li];
          saved[k] = {p.mu, p.sigma};
          const double s2_new =
              std::max(p.sigma * p.sigma + step * inv_batch * g_s2[li], opts.sigma2_floor);
          p.mu += step * inv_batch * g_mu[li];
          p.sigma = std::sqrt(s2_new);
        }
        bool ok = true;
        for (int li : touched_links) {
          for (const auto& [gi, m] : link_users_[li]) {
            const group& g = groups_[gi];
            double mu = 0.0, s2 = 0.0;
            for (int lj : g.route_links[m]) {
              mu += params.params[lj].mu;
              s2 += params.params[lj].sigma * params.params[lj].sigma;
            }
            const double sigma = std::sqrt(s2);
            if (!(stable_phi_diff((g.route_a[m] - mu) / sigma, (g.route_b[m] - mu) / sigma) >=
                  k_min_mass)) {
              ok = false;
              break;
            }
          }
          if (!ok) break;
        }
        if (ok) break;
        for (std::size_t k = 0; k < touched_links.size(); ++k) {
          params.params[touched_links[k]].mu = saved[k].first;
          params.params[touched_links[k]].sigma = saved[k].second;
        }
        step *= 0.5;
        if (attempt >= 60) {
          throw numeric_error("SGD could not find a non-degenerate step");
        }
      }

      for (int li : touched_links) {
        g_mu[li] = 0.0;
        g_s2[li] = 0.0;
      }
      for (int gi : touched_groups) groups_[gi].batch_members.clear();
    }
  }
}

route_weights em_workspace::update_weights(const route_weights& prev) const {
  route_weights next = prev;
  for (const auto& g : groups_) {
    if (g.m_routes < 2) continue;
    const std::size_t n = g.n();
    std::vector<double> num(g.m_routes, 0.0);
    double denom = 0.0;
    for (int m = 0; m < g.m_routes; ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!g.zero_row[i]) num[m] += g.resp[m * n + i];
      }
      denom += num[m];
    }
    if (denom <= 0.0) continue;  // no informative trips: keep previous value
    for (auto& v : num) v /= denom;
    next.pi[{g.o, g.d, g.cat}] = std::move(num);
  }
  return next;
}

fitted_model fit(const route_catalog& catalog, const std::vector<trip_record>& trips,
                 const truncation_table& trunc, const fit_options& opts) {
  em_workspace ws(catalog, trips, trunc, opts.workers);
  fitted_model model;
  model.enumeration = catalog.options();
  model.seed = opts.seed;
  model.params = init_link_params(catalog.network(), trunc, opts.sgd.sigma2_floor);
  model.weights = init_route_weights(catalog, opts.categories);
  model.report.trips_used = ws.trip_count();

  rng_stream rng(opts.seed);
  double prev_ll = k_neg_inf;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double ll = ws.e_step(model.params, model.weights);
    model.report.ll_trace.push_back(ll);
    model.report.iterations = iter + 1;
    if (iter > 0 && std::fabs(ll - prev_ll) <
                        opts.ll_tol * static_cast<double>(std::max<std::size_t>(ws.trip_count(), 1))) {
      model.report.converged = true;
      break;
    }
    prev_ll = ll;
    ws.m_step_sgd(model.params, opts.sgd, rng);
    model.weights = ws.update_weights(model.weights);
  }
  model.report.zero_support = ws.zero_support_count();
  return model;
}

// ---------------------------------------------------------------------------
// serialization

std::string model_to_json(const fitted_model& m) {
  nlohmann::json doc;
  doc["schema_version"] = "pipe-model/1";
  doc["enumeration"] = {
      {"beta", m.enumeration.beta},
      {"sigma", m.enumeration.max_transfers},
      {"count_mode",
       m.enumeration.count_mode == link_count_mode::all_links ? "all_links" : "travel_only"}};
  nlohmann::json links = nlohmann::json::array();
  for (std::size_t i = 0; i < m.params.table.size(); ++i) {
    const auto& l = m.params.table.links[i];
    const auto& p = m.params.params[i];
    links.push_back({{"kind", link_kind_name(l.kind)},
                     {"anchor", l.anchor},
                     {"mu", p.mu},
                     {"sigma", p.sigma},
                     {"a", p.a},
                     {"b", p.b}});
  }
  doc["links"] = std::move(links);
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& [key, pi] : m.weights.pi) {
    weights.push_back({{"origin", std::get<0>(key)},
                       {"dest", std::get<1>(key)},
                       {"category", std::get<2>(key)},
                       {"pi", pi}});
  }
  doc["route_weights"] = std::move(weights);
  doc["fit"] = {{"seed", m.seed},
                {"iterations", m.report.iterations},
                {"converged", m.report.converged},
                {"trips_used", m.report.trips_used},
                {"zero_support", m.report.zero_support},
                {"final_ll", m.report.ll_trace.empty() ? 0.0 : m.report.ll_trace.back()},
                {"ll_trace", m.report.ll_trace}};
  return doc.dump(2) + "\n";
}

fitted_model model_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("model file is not valid JSON: ") + e.what());
  }
  if (doc.value("schema_version", "") != "pipe-model/1") {
    throw data_error("unsupported model schema_version '" + doc.value("schema_version", "") + "'");
  }
  fitted_model m;
  try {
    const auto& en = doc.at("enumeration");
    m.enumeration.beta = en.at("beta").get<double>();
    m.enumeration.max_transfers = en.at("sigma").get<int>();
    m.enumeration.count_mode = en.at("count_mode").get<std::string>() == "travel_only"
                                   ? link_count_mode::travel_only
                                   : link_count_mode::all_links;
    for (const auto& l : doc.at("links")) {
      transit_link link{link_kind_from_name(l.at("kind").get<std::string>()),
                        l.at("anchor").get<std::string>()};
      m.params.table.links.push_back(link);
      m.params.params.push_back({l.at("mu").get<double>(), l.at("sigma").get<double>(),
                                 l.at("a").get<double>(), l.at("b").get<double>()});
    }
    // file order is already sorted, but do not rely on it
    std::vector<std::size_t> perm(m.params.table.links.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(), [&](std::size_t x, std::size_t y) {
      return m.params.table.links[x] < m.params.table.links[y];
    });
    std::vector<transit_link> links;
    std::vector<trunc_norm_params> ps;
    for (std::size_t i : perm) {
      links.push_back(m.params.table.links[i]);
      ps.push_back(m.params.params[i]);
    }
    m.params.table.links = std::move(links);
    m.params.params = std::move(ps);
    for (std::size_t i = 0; i < m.params.table.links.size(); ++i) {
      m.params.table.index[m.params.table.links[i]] = static_cast<int>(i);
    }
    for (const auto& w : doc.at("route_weights")) {
      m.weights.pi[{w.at("origin").get<std::string>(), w.at("dest").get<std::string>(),
                    w.at("category").get<std::string>()}] =
          w.at("pi").get<std::vector<double>>();
    }
    const auto& f = doc.at("fit");
    m.seed = f.at("seed").get<std::uint64_t>();
    m.report.iterations = f.at("iterations").get<int>();
    m.report.converged = f.at("converged").get<bool>();
    m.report.trips_used = f.at("trips_used").get<std::size_t>();
    m.report.zero_support = f.at("zero_support").get<std::size_t>();
    m.report.ll_trace = f.at("ll_trace").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("model schema error: ") + e.what());
  }
  return m;
}

}  // namespace pipe
