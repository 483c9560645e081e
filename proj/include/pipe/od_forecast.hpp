#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pipe/afc_ingest.hpp"

namespace pipe {

using od_pair = std::pair<station_id, station_id>;

// One day of (possibly predicted) OD counts with explicit window coverage;
// rows absent inside the covered range mean zero.
struct od_forecast_day {
  std::string date;
  int window_minutes = 20;
  int first_window = 0;
  int last_window = -1;
  std::map<od_pair, std::vector<double>> od;  // index = window - first_window

  bool covers(int w) const { return w >= first_window && w <= last_window; }
  double at(const od_pair& key, int w) const {
    auto it = od.find(key);
    if (it == od.end()) return 0.0;
    return it->second[static_cast<std::size_t>(w - first_window)];
  }
  void set(const od_pair& key, int w, double v);
};

// Read-only view of one day's station flows; walk-forward hands models a
// restricted view so truth beyond the current time cannot leak.
class day_flow_view {
 public:
  virtual ~day_flow_view() = default;
  virtual double inflow(const station_id& s, int window) const = 0;
  virtual double outflow(const station_id& s, int window) const = 0;
};

class series_day_view : public day_flow_view {
 public:
  series_day_view(const flow_series& fs, int day) : fs_(fs), day_(day) {}
  double inflow(const station_id& s, int window) const override;
  double outflow(const station_id& s, int window) const override;

 private:
  const flow_series& fs_;
  int day_;
};

class restricted_view : public day_flow_view {
 public:
  restricted_view(const day_flow_view& base, int available_upto)
      : base_(base), upto_(available_upto) {}
  double inflow(const station_id& s, int window) const override;
  double outflow(const station_id& s, int window) const override;

 private:
  const day_flow_view& base_;
  int upto_;
};

// Predictions already made for windows past the current time, for recursive
// multi-step forecasting.
using prior_fn = std::function<double(const od_pair&, int window)>;

class od_forecaster {
 public:
  virtual ~od_forecaster() = default;
  virtual double predict_window(const od_pair& target, int window, const day_flow_view& day,
                                int available_upto, const prior_fn& prior) const = 0;
};

// Historical average per (OD, window) over the training days.
class calendar_model : public od_forecaster {
 public:
  void fit(const flow_series& history);
  double predict(const od_pair& target, int window) const;
  double predict_window(const od_pair& target, int window, const day_flow_view& day,
                        int available_upto, const prior_fn& prior) const override;
  int windows_per_day() const { return windows_; }

 private:
  int windows_ = 0;
  std::map<od_pair, std::vector<double>> mean_;
};

// Historical average outflow per (station, window): the calendar baseline for
// alighting comparisons.
std::map<station_id, std::vector<double>> calendar_outflow(const flow_series& history);

enum class penalty_kind { ridge, lasso };

struct lag_regression_options {
  int max_lag = 1;     // Delta: number of lag orders used
  int exclusion = 6;   // d: most recent windows excluded (unresolved OD truth)
  penalty_kind penalty = penalty_kind::ridge;
  double lambda = 1.0;
  std::vector<station_id> predictor_stations;  // empty = every station
};

// Per-target linear model on lagged station in/outflows, intercept
// unpenalized. Objective: 0.5*||y - Xb - b0||^2 + lambda*pen(b) with pen the
// squared norm (ridge) or l1 via coordinate descent (lasso).
class lag_regression_model : public od_forecaster {
 public:
  struct target_fit {
    std::vector<double> coef;  // [station][lag][in/out] flattened
    double intercept = 0.0;
  };

  const lag_regression_options& options() const { return opts_; }
  const std::vector<station_id>& predictor_stations() const { return stations_; }
  const std::map<od_pair, target_fit>& targets() const { return targets_; }

  double predict_window(const od_pair& target, int window, const day_flow_view& day,
                        int available_upto, const prior_fn& prior) const override;

  // coefficient for (station, lag, inflow?) of a target; lag is the actual
  // lag order in [d+1, d+max_lag]
  double coefficient(const od_pair& target, const station_id& s, int lag, bool inflow) const;

  std::string to_json() const;

  friend lag_regression_model fit_lag_regression(const flow_series&, const std::vector<od_pair>&,
                                                 const lag_regression_options&);

 private:
  lag_regression_options opts_;
  std::vector<station_id> stations_;
  std::map<od_pair, target_fit> targets_;
  std::vector<od_pair> target_list_;
};

lag_regression_model fit_lag_regression(const flow_series& history,
                                        const std::vector<od_pair>& targets,
                                        const lag_regression_options& opts);

struct forecast_row {
  int window = 0;
  od_pair od;
  int horizon = 0;
  double value = 0.0;
};

struct walk_forward_result {
  std::map<int, double> mse;                          // per horizon
  std::map<int, std::vector<forecast_row>> predictions;  // per horizon
  std::size_t clamped = 0;                            // negative raw predictions
};

// Sequential evaluation over [eval_first, eval_last]: predictions for window
// tau at horizon m see test-day truth only up to tau - m; unresolved
// predictor windows are filled from the model's own predictions. Truth is
// read for scoring only after the prediction is recorded.
walk_forward_result walk_forward_eval(
    const od_forecaster& model, const std::vector<od_pair>& targets,
    const day_flow_view& test_day,
    const std::function<double(const od_pair&, int)>& truth, int eval_first, int eval_last,
    const std::vector<int>& horizons);

void write_forecast_csv(std::ostream& out, const std::string& date,
                        const walk_forward_result& result);

}  // namespace pipe
