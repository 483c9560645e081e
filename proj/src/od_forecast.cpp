#include "pipe/od_forecast.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "json.hpp"

namespace pipe {

void od_forecast_day::set(const od_pair& key, int w, double v) {
  if (!covers(w)) throw data_error("window outside forecast coverage");
  auto& cells = od[key];
  if (cells.empty()) cells.assign(static_cast<std::size_t>(last_window - first_window + 1), 0.0);
  cells[static_cast<std::size_t>(w - first_window)] = v;
}

double series_day_view::inflow(const station_id& s, int window) const {
  const int si = fs_.station_index(s);
  if (si < 0 || window < 0 || window >= fs_.windows_per_day()) return 0.0;
  return fs_.inflow[day_][si][window];
}

double series_day_view::outflow(const station_id& s, int window) const {
  const int si = fs_.station_index(s);
  if (si < 0 || window < 0 || window >= fs_.windows_per_day()) return 0.0;
  return fs_.outflow[day_][si][window];
}

double restricted_view::inflow(const station_id& s, int window) const {
  if (window > upto_) {
    throw data_error("forecaster read unresolved inflow at window " + std::to_string(window));
  }
  return base_.inflow(s, window);
}

double restricted_view::outflow(const station_id& s, int window) const {
  if (window > upto_) {
    throw data_error("forecaster read unresolved outflow at window " + std::to_string(window));
  }
  return base_.outflow(s, window);
}

void calendar_model::fit(const flow_series& history) {
  if (history.days.empty()) throw data_error("calendar model needs at least one history day");
  windows_ = history.windows_per_day();
  mean_.clear();
  const double k = static_cast<double>(history.days.size());
  for (const auto& [key, cells] : history.od) {
    std::vector<double> m(static_cast<std::size_t>(windows_), 0.0);
    for (const auto& day_cells : cells) {
      for (int w = 0; w < windows_; ++w) m[w] += day_cells[w];
    }
    for (auto& v : m) v /= k;
    mean_[key] = std::move(m);
  }
}

double calendar_model::predict(const od_pair& target, int window) const {
  if (window < 0 || window >= windows_) throw data_error("window outside the day partition");
  auto it = mean_.find(target);
  return it == mean_.end() ? 0.0 : it->second[window];
}

double calendar_model::predict_window(const od_pair& target, int window, const day_flow_view&,
                                      int, const prior_fn&) const {
  return predict(target, window);
}

std::map<station_id, std::vector<double>> calendar_outflow(const flow_series& history) {
  std::map<station_id, std::vector<double>> out;
  const double k = static_cast<double>(history.days.size());
  if (history.days.empty()) return out;
  const int nw = history.windows_per_day();
  for (std::size_t si = 0; si < history.stations.size(); ++si) {
    std::vector<double> m(static_cast<std::size_t>(nw), 0.0);
    for (std::size_t d = 0; d < history.days.size(); ++d) {
      for (int w = 0; w < nw; ++w) m[w] += history.outflow[d][si][w];
    }
    for (auto& v : m) v /= k;
    out[history.stations[si]] = std::move(m);
  }
  return out;
}

namespace {

// Symmetric positive-definite solve; throws when the matrix is singular.
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b, std::size_t n,
                                   const char* context) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 1e-12)) {
      throw data_error(std::string(context) +
                       ": singular design matrix; use a positive regularization strength");
    }
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= a[i * n + k] * b[k];
    b[i] = v / a[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= a[k * n + ii] * b[k];
    b[ii] = v / a[ii * n + ii];
  }
  return b;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

lag_regression_model fit_lag_regression(const flow_series& history,
                                        const std::vector<od_pair>& targets,
                                        const lag_regression_options& opts) {
  if (opts.max_lag < 1) throw data_error("max_lag must be at least 1");
  if (opts.exclusion < 0) throw data_error("exclusion order d must be non-negative");
  if (opts.lambda < 0.0) throw data_error("lambda must be non-negative");

  lag_regression_model model;
  model.opts_ = opts;
  model.stations_ = opts.predictor_stations.empty() ? history.stations : opts.predictor_stations;
  model.target_list_ = targets;

  const int nw = history.windows_per_day();
  const int lag_lo = opts.exclusion + 1;
  const int lag_hi = opts.exclusion + opts.max_lag;
  const std::size_t p = model.stations_.size() * static_cast<std::size_t>(opts.max_lag) * 2;

  // training rows: every (day, window) whose full lag range stays in the day
  std::vector<std::vector<double>> rows;
  std::vector<std::pair<int, int>> row_keys;  // (day, window)
  for (std::size_t day = 0; day < history.days.size(); ++day) {
    for (int w = lag_hi; w < nw; ++w) {
      std::vector<double> x(p);
      std::size_t j = 0;
      for (const auto& s : model.stations_) {
        const int si = history.station_index(s);
        for (int lag = lag_lo; lag <= lag_hi; ++lag) {
          x[j++] = si < 0 ? 0.0 : history.inflow[day][si][w - lag];
          x[j++] = si < 0 ? 0.0 : history.outflow[day][si][w - lag];
        }
      }
      rows.push_back(std::move(x));
      row_keys.push_back({static_cast<int>(day), w});
    }
  }
  const std::size_t n = rows.size();
  if (n <= 1) throw data_error("not enough windows to build lag-regression training rows");

  std::vector<double> xmean(p, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < p; ++j) xmean[j] += r[j];
  }
  for (auto& v : xmean) v /= static_cast<double>(n);
  for (auto& r : rows) {
    for (std::size_t j = 0; j < p; ++j) r[j] -= xmean[j];
  }

  // Gram matrix shared across targets
  std::vector<double> gram(p * p, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < p; ++i) {
      const double ri = r[i];
      if (ri == 0.0) continue;
      for (std::size_t j = 0; j <= i; ++j) gram[i * p + j] += ri * r[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) gram[i * p + j] = gram[j * p + i];
  }

  for (const auto& target : targets) {
    std::vector<double> y(n);
    auto it = history.od.find(target);
    double ymean = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      y[r] = it == history.od.end() ? 0.0 : it->second[row_keys[r].first][row_keys[r].second];
      ymean += y[r];
    }
    ymean /= static_cast<double>(n);
    std::vector<double> xty(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double yc = y[r] - ymean;
      for (std::size_t j = 0; j < p; ++j) xty[j] += rows[r][j] * yc;
    }

    lag_regression_model::target_fit fit;
    if (opts.penalty == penalty_kind::ridge) {
      std::vector<double> a = gram;
      for (std::size_t j = 0; j < p; ++j) a[j * p + j] += opts.lambda;
      fit.coef = cholesky_solve(std::move(a), xty, p, "ridge");
    } else {
      fit.coef.assign(p, 0.0);
      std::vector<double> gram_beta(p, 0.0);  // gram * coef, maintained incrementally
      for (int sweep = 0; sweep < 1000; ++sweep) {
        double max_delta = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
          const double gjj = gram[j * p + j];
          if (gjj <= 0.0) continue;
          const double rho = xty[j] - gram_beta[j] + gjj * fit.coef[j];
          const double next = soft_threshold(rho, opts.lambda) / gjj;
          const double delta = next - fit.coef[j];
          if (delta != 0.0) {
            for (std::size_t i = 0; i < p; ++i) gram_beta[i] += delta * gram[i * p + j];
            fit.coef[j] = next;
            max_delta = std::max(max_delta, std::fabs(delta));
          }
        }
        if (max_delta < 1e-10) break;
      }
    }
    double dot = 0.0;
    for (std::size_t j = 0; j < p; ++j) dot += fit.coef[j] * xmean[j];
    fit.intercept = ymean - dot;
    model.targets_[target] = std::move(fit);
  }
  return model;
}

double lag_regression_model::predict_window(const od_pair& target, int window,
                                            const day_flow_view& day, int available_upto,
                                            const prior_fn& prior) const {
  auto it = targets_.find(target);
  if (it == targets_.end()) throw data_error("lag regression has no fit for requested OD pair");
  const int lag_lo = opts_.exclusion + 1;
  const int lag_hi = opts_.exclusion + opts_.max_lag;

  double v = it->second.intercept;
  std::size_t j = 0;
  for (const auto& s : stations_) {
    for (int lag = lag_lo; lag <= lag_hi; ++lag) {
      const int w = window - lag;
      double in, out;
      if (w <= available_upto) {
        in = day.inflow(s, w);
        out = day.outflow(s, w);
      } else {
        // unresolved truth: fall back to flows implied by our own forecasts
        in = 0.0;
        out = 0.0;
        for (const auto& t : target_list_) {
          if (t.first == s) in += prior(t, w);
          if (t.second == s) out += prior(t, w);
        }
      }
      v += it->second.coef[j++] * in;
      v += it->second.coef[j++] * out;
    }
  }
  return v;
}

double lag_regression_model::coefficient(const od_pair& target, const station_id& s, int lag,
                                         bool inflow) const {
  auto it = targets_.find(target);
  if (it == targets_.end()) throw data_error("lag regression has no fit for requested OD pair");
  const int lag_lo = opts_.exclusion + 1;
  auto sit = std::find(stations_.begin(), stations_.end(), s);
  if (sit == stations_.end() || lag < lag_lo || lag > opts_.exclusion + opts_.max_lag) {
    throw data_error("coefficient index outside the model");
  }
  const std::size_t si = static_cast<std::size_t>(sit - stations_.begin());
  const std::size_t j =
      (si * static_cast<std::size_t>(opts_.max_lag) + static_cast<std::size_t>(lag - lag_lo)) * 2 +
      (inflow ? 0 : 1);
  return it->second.coef[j];
}

std::string lag_regression_model::to_json() const {
  nlohmann::json doc;
  doc["penalty"] = opts_.penalty == penalty_kind::ridge ? "ridge" : "lasso";
  doc["lambda"] = opts_.lambda;
  doc["max_lag"] = opts_.max_lag;
  doc["exclusion"] = opts_.exclusion;
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& [key, fit] : targets_) {
    nlohmann::json coefs = nlohmann::json::array();
    std::size_t j = 0;
    for (const auto& s : stations_) {
      for (int lag = opts_.exclusion + 1; lag <= opts_.exclusion + opts_.max_lag; ++lag) {
        for (const char* kind : {"in", "out"}) {
          const double c = fit.coef[j++];
          if (c != 0.0) {
            coefs.push_back({{"station", s}, {"lag", lag}, {"flow", kind}, {"value", c}});
          }
        }
      }
    }
    targets.push_back({{"origin", key.first},
                       {"dest", key.second},
                       {"intercept", fit.intercept},
                       {"coefficients", std::move(coefs)}});
  }
  doc["targets"] = std::move(targets);
  return doc.dump(2) + "\n";
}

walk_forward_result walk_forward_eval(
    const od_forecaster& model, const std::vector<od_pair>& targets,
    const day_flow_view& test_day,
    const std::function<double(const od_pair&, int)>& truth, int eval_first, int eval_last,
    const std::vector<int>& horizons) {
  walk_forward_result result;
  for (int m : horizons) {
    if (m < 1) throw data_error("walk-forward horizon must be at least 1");
    double sse = 0.0;
    std::size_t cells = 0;
    for (int w = eval_first; w <= eval_last; ++w) {
      const int available = w - m;
      const restricted_view view(test_day, available);

      // chain of recursive predictions for windows past the current time
      std::map<std::pair<od_pair, int>, double> chain;
      std::function<double(const od_pair&, int)> chained =
          [&](const od_pair& od, int window) -> double {
        if (window <= available) return truth(od, window);  // resolved by now
        auto it = chain.find({od, window});
        if (it != chain.end()) return it->second;
        const double raw = model.predict_window(od, window, view, available, chained);
        const double v = raw < 0.0 ? 0.0 : raw;
        chain[{od, window}] = v;
        return v;
      };

      for (const auto& od : targets) {
        const double raw = model.predict_window(od, w, view, available, chained);
        double v = raw;
        if (v < 0.0) {
          v = 0.0;
          ++result.clamped;
        }
        result.predictions[m].push_back({w, od, m, v});
        const double err = v - truth(od, w);  // truth revealed after scoring
        sse += err * err;
        ++cells;
      }
    }
    result.mse[m] = cells == 0 ? 0.0 : sse / static_cast<double>(cells);
  }
  return result;
}

void write_forecast_csv(std::ostream& out, const std::string& date,
                        const walk_forward_result& result) {
  out << "day,window,origin,dest,horizon,prediction\n";
  for (const auto& [m, rows] : result.predictions) {
    (void)m;
    for (const auto& r : rows) {
      out << date << ',' << r.window << ',' << r.od.first << ',' << r.od.second << ','
          << r.horizon << ',' << format_double(r.value) << '\n';
    }
  }
}

}  // namespace pipe
