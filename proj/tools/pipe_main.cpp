#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pipe/afc_ingest.hpp"
#include "pipe/common.hpp"
#include "pipe/density_engine.hpp"
#include "pipe/io_util.hpp"
#include "pipe/network.hpp"
#include "pipe/od_forecast.hpp"
#include "pipe/parallel.hpp"
#include "pipe/route_time_model.hpp"
#include "pipe/synth_oracle.hpp"
#include "pipe/trunc_gauss.hpp"

namespace {

using namespace pipe;

std::vector<trip_record> load_clean_trips(const std::string& path, const metro_network& net) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open trips file '" + path + "'");
  auto [trips, report] = parse_trips(in, net);
  if (!report.rejected.empty()) {
    throw data_error("trips file '" + path + "' contains " +
                     std::to_string(report.rejected.size()) +
                     " invalid rows; run the ingest command first");
  }
  return trips;
}

enum_options enum_opts_from(double beta, int sigma, const std::string& count_mode) {
  enum_options opts;
  opts.beta = beta;
  opts.max_transfers = sigma;
  if (count_mode == "travel_only") {
    opts.count_mode = link_count_mode::travel_only;
  } else if (count_mode == "all_links") {
    opts.count_mode = link_count_mode::all_links;
  } else {
    throw data_error("count mode must be all_links or travel_only");
  }
  return opts;
}

// OD truth for one date, loaded from the od_counts CSV; full-day coverage,
// absent cells are zero.
od_forecast_day od_day_from_counts(const std::string& path, const std::string& date,
                                   int window_minutes) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open od counts file '" + path + "'");
  std::string row;
  if (!std::getline(in, row)) throw data_error("od counts file is empty");
  od_forecast_day day;
  day.date = date;
  day.window_minutes = window_minutes;
  day.first_window = 0;
  day.last_window = (1440 + window_minutes - 1) / window_minutes - 1;
  while (std::getline(in, row)) {
    if (row.empty()) continue;
    const auto f = split(row, ',');
    if (f.size() != 5) throw data_error("bad od counts row: '" + row + "'");
    if (f[0] != date) continue;
    day.set({f[2], f[3]}, std::stoi(f[1]), std::stod(f[4]));
  }
  return day;
}

// Forecast rows of one horizon from the forecast CSV.
od_forecast_day od_day_from_forecast(const std::string& path, const std::string& date, int horizon,
                                     int window_minutes) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open forecast file '" + path + "'");
  std::string row;
  if (!std::getline(in, row)) throw data_error("forecast file is empty");
  od_forecast_day day;
  day.date = date;
  day.window_minutes = window_minutes;
  day.first_window = 0;
  day.last_window = (1440 + window_minutes - 1) / window_minutes - 1;
  bool any = false;
  while (std::getline(in, row)) {
    if (row.empty()) continue;
    const auto f = split(row, ',');
    if (f.size() != 6) throw data_error("bad forecast row: '" + row + "'");
    if (f[0] != date || std::stoi(f[4]) != horizon) continue;
    day.set({f[2], f[3]}, std::stoi(f[1]), std::stod(f[5]));
    any = true;
  }
  if (!any) {
    throw data_error("forecast file has no rows for date " + date + " at horizon " +
                     std::to_string(horizon));
  }
  return day;
}

flow_series load_flows(const std::string& station_path, const std::string& od_path,
                       int window_minutes) {
  std::ifstream s(station_path), o(od_path);
  if (!s) throw data_error("cannot open '" + station_path + "'");
  if (!o) throw data_error("cannot open '" + od_path + "'");
  return read_flow_series(s, o, window_minutes);
}

std::vector<int> parse_horizons(const std::string& text) {
  std::vector<int> out;
  for (const auto& tok : split(text, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw data_error("no horizons given");
  return out;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& network_path, const std::string& trips_path,
               const std::string& out_dir, int window_minutes, std::size_t iqr_min_group) {
  const metro_network net = load_network_file(network_path);
  std::ifstream in(trips_path);
  if (!in) throw data_error("cannot open trips file '" + trips_path + "'");
  auto [trips, report] = parse_trips(in, net);
  if (report.rows_read == 0) throw data_error("trip log '" + trips_path + "' has no data rows");

  const auto split_result = remove_outliers(trips, iqr_min_group);
  const auto& kept = split_result.kept;
  const flow_series flows = aggregate_flows(kept, net, window_minutes);

  std::ostringstream trips_csv;
  write_trips_csv(trips_csv, kept);
  write_text_file_atomic(out_dir + "/trips_clean.csv", trips_csv.str());

  std::ostringstream sf, oc;
  write_station_flows_csv(sf, flows);
  write_od_counts_csv(oc, flows);
  write_text_file_atomic(out_dir + "/station_flows.csv", sf.str());
  write_text_file_atomic(out_dir + "/od_counts.csv", oc.str());

  nlohmann::json manifest;
  manifest["rows_read"] = report.rows_read;
  manifest["parsed"] = report.accepted;
  manifest["rejections"] = report.rejection_counts();
  manifest["near_duplicates"] = report.near_duplicates;
  manifest["iqr_removed"] = split_result.removed.size();
  manifest["kept"] = kept.size();
  manifest["window_minutes"] = window_minutes;
  manifest["days"] = flows.days;
  write_text_file_atomic(out_dir + "/manifest.json", manifest.dump(2) + "\n");

  std::cout << "ingest: read " << report.rows_read << " rows, kept " << kept.size() << " trips ("
            << report.rejected.size() << " rejected, " << split_result.removed.size()
            << " outliers)\n";
  return 0;
}

int cmd_routes(const std::string& network_path, const std::string& out_path, double beta,
               int sigma, const std::string& count_mode) {
  const metro_network net = load_network_file(network_path);
  const route_catalog catalog(net, enum_opts_from(beta, sigma, count_mode));
  nlohmann::json doc;
  doc["beta"] = beta;
  doc["sigma"] = sigma;
  doc["count_mode"] = count_mode;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& so : net.stations()) {
    for (const auto& sd : net.stations()) {
      if (so.id == sd.id) continue;
      const auto& rcs = catalog.at(so.id, sd.id);
      nlohmann::json routes = nlohmann::json::array();
      for (const auto& r : rcs.routes) {
        nlohmann::json links = nlohmann::json::array();
        for (const auto& l : r.links) {
          links.push_back({{"kind", link_kind_name(l.kind)}, {"anchor", l.anchor}});
        }
        routes.push_back({{"edges", r.edges},
                          {"stations", r.stations},
                          {"links", std::move(links)},
                          {"transfers", r.transfer_stations}});
      }
      pairs.push_back(
          {{"origin", so.id}, {"dest", sd.id}, {"routes", std::move(routes)}});
    }
  }
  doc["pairs"] = std::move(pairs);
  write_text_file_atomic(out_path, doc.dump(2) + "\n");
  std::cout << "routes: wrote " << out_path << "\n";
  return 0;
}

int cmd_fit(const std::string& network_path, const std::string& trips_path,
            const std::string& out_path, const std::string& report_path, double beta, int sigma,
            const std::string& count_mode, const fit_options& fopts, double w0, bool fallback) {
  const metro_network net = load_network_file(network_path);
  const route_catalog catalog(net, enum_opts_from(beta, sigma, count_mode));
  const auto trips = load_clean_trips(trips_path, net);
  if (trips.empty()) throw data_error("no trips to fit");

  truncation_options topts;
  topts.w0_minutes = w0;
  topts.fallback = fallback;
  const truncation_table trunc = estimate_truncation(net, trips, topts);
  const fitted_model model = fit(catalog, trips, trunc, fopts);
  write_text_file_atomic(out_path, model_to_json(model));

  const auto& trace = model.report.ll_trace;
  std::cout << "fit: " << model.report.iterations << " iterations, log-likelihood "
            << (trace.empty() ? 0.0 : trace.front()) << " -> "
            << (trace.empty() ? 0.0 : trace.back())
            << (model.report.converged ? " (converged)" : " (max iterations)") << "\n";
  std::cout << "fit: " << model.report.zero_support << " zero-support trips of "
            << model.report.trips_used << "\n";
  if (!report_path.empty()) {
    nlohmann::json rep;
    rep["iterations"] = model.report.iterations;
    rep["converged"] = model.report.converged;
    rep["ll_trace"] = trace;
    rep["zero_support"] = model.report.zero_support;
    rep["trips_used"] = model.report.trips_used;
    write_text_file_atomic(report_path, rep.dump(2) + "\n");
  }
  return 0;
}

int cmd_forecast(const std::string& station_csv, const std::string& od_csv, int window_minutes,
                 const std::string& test_day, const std::string& model_kind, double lambda,
                 int max_lag, int exclusion, const std::string& horizons_text,
                 const std::string& out_path, int eval_first, int eval_last,
                 const std::string& model_dump) {
  const flow_series all = load_flows(station_csv, od_csv, window_minutes);
  const int test_idx = all.day_index(test_day);
  if (test_idx < 0) throw data_error("test day " + test_day + " not present in flows");

  flow_series history = all;
  history.days.erase(history.days.begin() + test_idx);
  history.inflow.erase(history.inflow.begin() + test_idx);
  history.outflow.erase(history.outflow.begin() + test_idx);
  for (auto& [key, cells] : history.od) {
    (void)key;
    cells.erase(cells.begin() + test_idx);
  }
  if (history.days.empty()) throw data_error("no history days before the test day");

  std::vector<od_pair> targets;
  for (const auto& [key, cells] : all.od) {
    (void)cells;
    targets.push_back(key);
  }

  std::unique_ptr<od_forecaster> model;
  std::unique_ptr<lag_regression_model> lag;
  if (model_kind == "calendar") {
    auto cal = std::make_unique<calendar_model>();
    cal->fit(history);
    model = std::move(cal);
  } else if (model_kind == "ridge" || model_kind == "lasso") {
    lag_regression_options lopts;
    lopts.penalty = model_kind == "ridge" ? penalty_kind::ridge : penalty_kind::lasso;
    lopts.lambda = lambda;
    lopts.max_lag = max_lag;
    lopts.exclusion = exclusion;
    lag = std::make_unique<lag_regression_model>(fit_lag_regression(history, targets, lopts));
    if (!model_dump.empty()) write_text_file_atomic(model_dump, lag->to_json());
    model = std::make_unique<lag_regression_model>(*lag);
  } else {
    throw data_error("forecaster must be calendar, ridge or lasso");
  }

  const series_day_view test_view(all, test_idx);
  const auto truth = [&](const od_pair& od, int w) { return all.od_at(test_idx, od.first, od.second, w); };
  if (eval_last < 0) eval_last = all.windows_per_day() - 1;
  const auto result = walk_forward_eval(*model, targets, test_view, truth, eval_first, eval_last,
                                        parse_horizons(horizons_text));

  std::ostringstream csv;
  write_forecast_csv(csv, test_day, result);
  write_text_file_atomic(out_path, csv.str());
  for (const auto& [m, mse] : result.mse) {
    std::cout << "forecast: horizon " << m << " mse " << format_double(mse) << "\n";
  }
  if (result.clamped > 0) {
    std::cout << "forecast: clamped " << result.clamped << " negative predictions to 0\n";
  }
  return 0;
}

int cmd_predict(const std::string& network_path, const std::string& model_path,
                const std::string& date, const std::string& od_true_path,
                const std::string& od_forecast_path, const std::string& horizons_text,
                int window_minutes, const std::vector<std::string>& at,
                const std::string& span, const std::string& density_out,
                const std::string& snapshot_out, const std::string& alight_out,
                const std::string& alight_windows, int subq, const std::string& shares_trips,
                const std::string& line_matrix, const std::string& line_matrix_out, int workers) {
  const metro_network net = load_network_file(network_path);
  const fitted_model model = model_from_json(read_text_file(model_path));
  const route_catalog catalog(net, model.enumeration);

  category_shares shares;
  if (!shares_trips.empty()) {
    shares = category_shares::from_trips(load_clean_trips(shares_trips, net), shares.categories);
  }

  std::vector<double> instants;
  for (const auto& s : at) instants.push_back(parse_clock_minutes(s));
  if (!span.empty()) {  // "HH:MM-HH:MM/STEPMIN"
    const auto parts = split(span, '/');
    if (parts.size() != 2) throw data_error("span must be HH:MM-HH:MM/STEP");
    const auto ends = split(parts[0], '-');
    if (ends.size() != 2) throw data_error("span must be HH:MM-HH:MM/STEP");
    const double step = std::stod(parts[1]);
    if (step <= 0) throw data_error("span step must be positive");
    for (double t = parse_clock_minutes(ends[0]); t <= parse_clock_minutes(ends[1]) + 1e-9;
         t += step) {
      instants.push_back(t);
    }
  }

  density_options dopts;
  dopts.sub_quadrature = subq;
  dopts.workers = workers;

  if (od_true_path.empty() && od_forecast_path.empty()) {
    throw data_error("predict needs --od-true and/or --od-forecast");
  }

  // density + snapshots from a single forecast source (truth or one horizon)
  if (!density_out.empty() || !snapshot_out.empty() || !line_matrix.empty()) {
    if (instants.empty()) throw data_error("no instants given (use --at or --span)");
    od_forecast_day day =
        !od_true_path.empty()
            ? od_day_from_counts(od_true_path, date, window_minutes)
            : od_day_from_forecast(od_forecast_path, date,
                                   parse_horizons(horizons_text).front(), window_minutes);
    const density_field field =
        predict_density(day, catalog, model.weights, model.params, shares, instants, dopts);
    if (!density_out.empty()) {
      std::ostringstream csv;
      write_density_csv(csv, date, field);
      write_text_file_atomic(density_out, csv.str());
    }
    if (!snapshot_out.empty()) {
      for (std::size_t i = 0; i < instants.size(); ++i) {
        char suffix[32];
        std::snprintf(suffix, sizeof suffix, "_%04d.json", static_cast<int>(instants[i]));
        write_text_file_atomic(snapshot_out + suffix, density_snapshot_json(date, field, i));
      }
    }
    if (!line_matrix.empty()) {
      if (line_matrix_out.empty()) throw data_error("--line-matrix needs --line-matrix-out");
      for (const auto& m : line_matrices(net, line_matrix, field)) {
        std::ostringstream csv;
        write_line_matrix_csv(csv, m, field.instants);
        write_text_file_atomic(line_matrix_out + "_" + m.line + "_from_" + m.start + ".csv",
                               csv.str());
      }
    }
  }

  if (!alight_out.empty()) {
    if (alight_windows.empty()) throw data_error("--alight-out needs --alight-windows LO:HI");
    const auto wparts = split(alight_windows, ':');
    if (wparts.size() != 2) throw data_error("--alight-windows must be LO:HI");
    std::vector<int> windows;
    for (int w = std::stoi(wparts[0]); w <= std::stoi(wparts[1]); ++w) windows.push_back(w);

    if (!od_forecast_path.empty() && !od_true_path.empty()) {
      // walk-forward hybrid: truth up to (target - horizon), forecasts beyond
      const od_forecast_day truth_day = od_day_from_counts(od_true_path, date, window_minutes);
      for (int m : parse_horizons(horizons_text)) {
        const od_forecast_day pred_day =
            od_day_from_forecast(od_forecast_path, date, m, window_minutes);
        std::map<station_id, std::map<int, double>> merged;
        for (int target : windows) {
          od_forecast_day hybrid = truth_day;
          for (int w = target - m + 1; w <= target; ++w) {
            if (!hybrid.covers(w)) continue;
            for (const auto& [key, cells] : truth_day.od) {
              (void)cells;
              hybrid.set(key, w, pred_day.covers(w) ? pred_day.at(key, w) : 0.0);
            }
          }
          const auto part = predict_alighting(hybrid, catalog, model.weights, model.params,
                                              shares, {target}, dopts);
          for (const auto& [sid, per_window] : part) {
            for (const auto& [w, v] : per_window) merged[sid][w] = v;
          }
        }
        std::ostringstream csv;
        write_alighting_csv(csv, merged);
        write_text_file_atomic(alight_out + "_h" + std::to_string(m) + ".csv", csv.str());
      }
    } else {
      od_forecast_day day =
          !od_true_path.empty()
              ? od_day_from_counts(od_true_path, date, window_minutes)
              : od_day_from_forecast(od_forecast_path, date,
                                     parse_horizons(horizons_text).front(), window_minutes);
      const auto alight =
          predict_alighting(day, catalog, model.weights, model.params, shares, windows, dopts);
      std::ostringstream csv;
      write_alighting_csv(csv, alight);
      write_text_file_atomic(alight_out, csv.str());
    }
  }
  std::cout << "predict: done\n";
  return 0;
}

int cmd_eval(const std::string& od_pred, const std::string& od_true,
             const std::vector<std::string>& alight_pred, const std::string& alight_true,
             const std::string& date, int window_minutes, const std::string& out_path) {
  nlohmann::json report;

  if (!od_pred.empty()) {
    if (od_true.empty()) throw data_error("--od-pred needs --od-true");
    const od_forecast_day truth = od_day_from_counts(od_true, date, window_minutes);
    std::ifstream in(od_pred);
    if (!in) throw data_error("cannot open '" + od_pred + "'");
    std::string row;
    if (!std::getline(in, row)) throw data_error("forecast file is empty");
    std::map<int, std::pair<double, std::size_t>> acc;  // horizon -> (sse, n)
    while (std::getline(in, row)) {
      if (row.empty()) continue;
      const auto f = split(row, ',');
      if (f.size() != 6) throw data_error("bad forecast row: '" + row + "'");
      if (f[0] != date) continue;
      const int w = std::stoi(f[1]);
      if (!truth.covers(w)) throw data_error("prediction window outside the truth day");
      const double err = std::stod(f[5]) - truth.at({f[2], f[3]}, w);
      auto& slot = acc[std::stoi(f[4])];
      slot.first += err * err;
      slot.second += 1;
    }
    nlohmann::json od_mse;
    for (const auto& [m, slot] : acc) {
      od_mse[std::to_string(m)] = slot.first / static_cast<double>(slot.second);
    }
    report["od_mse"] = od_mse;
    std::cout << "eval: od forecast mse per horizon:\n";
    for (const auto& [m, slot] : acc) {
      std::cout << "  horizon " << m << ": " << format_double(slot.first / slot.second) << "\n";
    }
  }

  if (!alight_pred.empty()) {
    if (alight_true.empty()) throw data_error("--alight-pred needs --alight-true");
    std::ifstream sf(alight_true);
    if (!sf) throw data_error("cannot open '" + alight_true + "'");
    std::string row;
    if (!std::getline(sf, row)) throw data_error("station flow file is empty");
    std::map<std::pair<std::string, int>, double> truth_out;
    while (std::getline(sf, row)) {
      if (row.empty()) continue;
      const auto f = split(row, ',');
      if (f.size() != 5) throw data_error("bad station flow row: '" + row + "'");
      if (f[0] != date) continue;
      truth_out[{f[2], std::stoi(f[1])}] = std::stod(f[4]);
    }
    nlohmann::json alight_mse;
    std::cout << "eval: alighting mse per horizon:\n";
    for (const auto& spec : alight_pred) {
      const auto parts = split(spec, '=');
      if (parts.size() != 2) throw data_error("--alight-pred must be HORIZON=FILE");
      const int m = std::stoi(parts[0]);
      std::ifstream pf(parts[1]);
      if (!pf) throw data_error("cannot open '" + parts[1] + "'");
      if (!std::getline(pf, row)) throw data_error("alighting file is empty");
      double sse = 0.0;
      std::size_t n = 0;
      while (std::getline(pf, row)) {
        if (row.empty()) continue;
        const auto f = split(row, ',');
        if (f.size() != 3) throw data_error("bad alighting row: '" + row + "'");
        const int w = std::stoi(f[1]);
        auto it = truth_out.find({f[0], w});
        const double truth_v = it == truth_out.end() ? 0.0 : it->second;
        const double err = std::stod(f[2]) - truth_v;
        sse += err * err;
        ++n;
      }
      if (n == 0) throw data_error("no alighting predictions in '" + parts[1] + "'");
      alight_mse[std::to_string(m)] = sse / static_cast<double>(n);
      std::cout << "  horizon " << m << ": " << format_double(sse / n) << "\n";
    }
    report["alight_mse"] = alight_mse;
  }

  if (!out_path.empty()) write_text_file_atomic(out_path, report.dump(2) + "\n");
  return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 std::int64_t seed_override) {
  scenario_config cfg = scenario_from_json(read_text_file(scenario_path));
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  const metro_network net = load_network_file(sibling_path(scenario_path, cfg.network_path));
  const route_catalog catalog(net, cfg.enumeration);
  const generation gen = generate(cfg, catalog);

  std::ostringstream trips_csv;
  write_trips_csv(trips_csv, gen.trips);
  write_text_file_atomic(out_dir + "/trips.csv", trips_csv.str());

  std::ostringstream gt_csv;
  write_ground_truth_csv(gt_csv, gen.truth);
  write_text_file_atomic(out_dir + "/ground_truth.csv", gt_csv.str());

  nlohmann::json summary;
  summary["seed"] = cfg.seed;
  summary["days"] = cfg.days;
  summary["trips"] = gen.trips.size();
  std::map<std::string, std::size_t> per_day, per_category;
  for (const auto& t : gen.trips) {
    ++per_day[date_of(t.t_in)];
    ++per_category[t.category];
  }
  summary["trips_per_day"] = per_day;
  summary["trips_per_category"] = per_category;
  write_text_file_atomic(out_dir + "/summary.json", summary.dump(2) + "\n");

  std::cout << "simulate: " << gen.trips.size() << " trips over " << cfg.days << " days\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PIPE: in-situ metro passenger density prediction from smart-card data"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse, clean and aggregate a raw AFC trip log");
  std::string in_network, in_trips, in_outdir;
  int in_window = 20;
  std::size_t in_min_group = 4;
  ingest->add_option("--network", in_network, "network definition JSON")->required();
  ingest->add_option("--trips", in_trips, "raw trip CSV")->required();
  ingest->add_option("--out-dir", in_outdir, "output directory")->required();
  ingest->add_option("--window", in_window, "time window width in minutes");
  ingest->add_option("--iqr-min-group", in_min_group, "minimum OD group size for the IQR rule");

  // routes
  auto* routes = app.add_subcommand("routes", "enumerate pruned route choice sets");
  std::string ro_network, ro_out, ro_count_mode = "all_links";
  double ro_beta = 2.0;
  int ro_sigma = 2;
  routes->add_option("--network", ro_network)->required();
  routes->add_option("--out", ro_out)->required();
  routes->add_option("--beta", ro_beta, "length ratio cutoff (> 1)");
  routes->add_option("--sigma", ro_sigma, "transfer cutoff");
  routes->add_option("--count-mode", ro_count_mode, "all_links or travel_only");

  // fit
  auto* fitc = app.add_subcommand("fit", "fit link travel-time distributions and route weights");
  std::string f_network, f_trips, f_out, f_report, f_count_mode = "all_links";
  double f_beta = 2.0, f_w0 = 2.0;
  int f_sigma = 2;
  bool f_fallback = false;
  fit_options fopts;
  fitc->add_option("--network", f_network)->required();
  fitc->add_option("--trips", f_trips, "cleaned trip CSV")->required();
  fitc->add_option("--out", f_out, "model JSON output")->required();
  fitc->add_option("--report", f_report, "fit report JSON output");
  fitc->add_option("--beta", f_beta);
  fitc->add_option("--sigma", f_sigma);
  fitc->add_option("--count-mode", f_count_mode);
  fitc->add_option("--seed", fopts.seed);
  fitc->add_option("--max-iters", fopts.max_iters);
  fitc->add_option("--ll-tol", fopts.ll_tol, "convergence tolerance per trip");
  fitc->add_option("--sgd-step", fopts.sgd.step);
  fitc->add_option("--sgd-epochs", fopts.sgd.epochs);
  fitc->add_option("--sgd-batch", fopts.sgd.batch);
  fitc->add_option("--sigma2-floor", fopts.sgd.sigma2_floor);
  fitc->add_option("--workers", fopts.workers, "0 = hardware concurrency");
  fitc->add_option("--w0", f_w0, "default transfer walking time (minutes)");
  fitc->add_flag("--fallback", f_fallback, "enable truncation fallbacks for unseen edges");

  // forecast
  auto* fc = app.add_subcommand("forecast", "walk-forward OD forecasts over a test day");
  std::string fc_station, fc_od, fc_day, fc_kind = "calendar", fc_out, fc_dump;
  std::string fc_horizons = "1,4,6";
  int fc_window = 20, fc_maxlag = 1, fc_excl = 6, fc_eval_first = 0, fc_eval_last = -1;
  double fc_lambda = 1.0;
  fc->add_option("--flows-station", fc_station, "station flows CSV")->required();
  fc->add_option("--flows-od", fc_od, "od counts CSV")->required();
  fc->add_option("--window", fc_window);
  fc->add_option("--test-day", fc_day, "YYYY-MM-DD")->required();
  fc->add_option("--model", fc_kind, "calendar, ridge or lasso");
  fc->add_option("--lambda", fc_lambda);
  fc->add_option("--max-lag", fc_maxlag);
  fc->add_option("--exclusion", fc_excl, "lag exclusion order d");
  fc->add_option("--horizons", fc_horizons);
  fc->add_option("--out", fc_out)->required();
  fc->add_option("--eval-first", fc_eval_first);
  fc->add_option("--eval-last", fc_eval_last);
  fc->add_option("--model-dump", fc_dump, "write fitted coefficients JSON");

  // predict
  auto* pr = app.add_subcommand("predict", "predict density and alighting from a fitted model");
  std::string p_network, p_model, p_date, p_od_true, p_od_fc, p_horizons = "1";
  std::string p_span, p_density, p_snapshot, p_alight, p_alight_windows, p_shares;
  std::string p_line, p_line_out;
  std::vector<std::string> p_at;
  int p_window = 20, p_subq = 1, p_workers = 0;
  pr->add_option("--network", p_network)->required();
  pr->add_option("--model", p_model)->required();
  pr->add_option("--date", p_date, "prediction day YYYY-MM-DD")->required();
  pr->add_option("--od-true", p_od_true, "true od counts CSV (backtests)");
  pr->add_option("--od-forecast", p_od_fc, "forecast CSV");
  pr->add_option("--horizons", p_horizons);
  pr->add_option("--window", p_window);
  pr->add_option("--at", p_at, "instant HH:MM (repeatable)");
  pr->add_option("--span", p_span, "instants HH:MM-HH:MM/STEPMIN");
  pr->add_option("--density-out", p_density);
  pr->add_option("--snapshots-out", p_snapshot, "prefix for per-instant JSON snapshots");
  pr->add_option("--alight-out", p_alight);
  pr->add_option("--alight-windows", p_alight_windows, "LO:HI window index range");
  pr->add_option("--subq", p_subq, "sub-window quadrature points");
  pr->add_option("--shares-trips", p_shares, "trips CSV for category shares");
  pr->add_option("--line-matrix", p_line, "line id for the longitudinal density matrix");
  pr->add_option("--line-matrix-out", p_line_out, "prefix for the per-direction matrices");
  pr->add_option("--workers", p_workers);

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions against ground truth");
  std::string e_od_pred, e_od_true, e_alight_true, e_date, e_out;
  std::vector<std::string> e_alight_pred;
  int e_window = 20;
  ev->add_option("--od-pred", e_od_pred, "forecast CSV");
  ev->add_option("--od-true", e_od_true, "od counts CSV");
  ev->add_option("--alight-pred", e_alight_pred, "HORIZON=FILE (repeatable)");
  ev->add_option("--alight-true", e_alight_true, "station flows CSV");
  ev->add_option("--date", e_date)->required();
  ev->add_option("--window", e_window);
  ev->add_option("--out", e_out, "metrics JSON output");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic AFC dataset with ground truth");
  std::string s_scenario, s_outdir;
  std::int64_t s_seed = -1;
  sim->add_option("--scenario", s_scenario, "scenario JSON")->required();
  sim->add_option("--out-dir", s_outdir)->required();
  sim->add_option("--seed", s_seed, "override the scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*ingest) return cmd_ingest(in_network, in_trips, in_outdir, in_window, in_min_group);
    if (*routes) return cmd_routes(ro_network, ro_out, ro_beta, ro_sigma, ro_count_mode);
    if (*fitc) {
      return cmd_fit(f_network, f_trips, f_out, f_report, f_beta, f_sigma, f_count_mode, fopts,
                     f_w0, f_fallback);
    }
    if (*fc) {
      return cmd_forecast(fc_station, fc_od, fc_window, fc_day, fc_kind, fc_lambda, fc_maxlag,
                          fc_excl, fc_horizons, fc_out, fc_eval_first, fc_eval_last, fc_dump);
    }
    if (*pr) {
      return cmd_predict(p_network, p_model, p_date, p_od_true, p_od_fc, p_horizons, p_window,
                         p_at, p_span, p_density, p_snapshot, p_alight, p_alight_windows, p_subq,
                         p_shares, p_line, p_line_out, p_workers);
    }
    if (*ev) {
      return cmd_eval(e_od_pred, e_od_true, e_alight_pred, e_alight_true, e_date, e_window, e_out);
    }
    if (*sim) return cmd_simulate(s_scenario, s_outdir, s_seed);
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
