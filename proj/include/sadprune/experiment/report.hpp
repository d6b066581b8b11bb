#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/core/error.hpp"
#include "sadprune/data/csv.hpp"
#include "sadprune/train/trainer.hpp"

namespace sadprune {

inline constexpr const char* run_report_format = "sadprune-run-report";

/// Summary of one seed of one experiment. The ticket numbers are copied from the history
/// record they came from; energy is the sum of the per-epoch energy column plus the final
/// inference pass.
struct run_report {
  std::string label;
  std::string strategy;
  std::string dataset;
  std::string feature_group;  // movies only
  std::string metric_name;    // "accuracy" or "mse"
  std::uint64_t seed = 0;
  std::size_t epochs_completed = 0;
  bool aborted = false;
  nlohmann::json diagnostic;

  winning_ticket ticket;
  double ticket_mae = std::numeric_limits<double>::quiet_NaN();
  double final_sparsity = 0;
  std::size_t total_params = 0;
  std::size_t surviving_params = 0;
  double size_reduction = 0;

  std::string power_device;  // empty when no counter was available
  double train_energy_j = std::numeric_limits<double>::quiet_NaN();
  double inference_energy_j = std::numeric_limits<double>::quiet_NaN();
  double total_energy_j = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;

  double teacher_metric = std::numeric_limits<double>::quiet_NaN();
  double mean_predictor_mae = std::numeric_limits<double>::quiet_NaN();
  double mean_predictor_mse = std::numeric_limits<double>::quiet_NaN();

  std::vector<prune_event> events;
  std::string metrics_csv;  // relative to the report's directory
  std::string power_csv;

  bool higher_is_better() const { return metric_name == "accuracy"; }
  std::string family() const { return dataset + "/" + metric_name; }
};

namespace detail {

inline nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double from_nullable(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json to_json_value(const run_report& r) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : r.events) events.push_back(to_json_value(e));
  return {{"format", run_report_format},
          {"version", 1},
          {"label", r.label},
          {"strategy", r.strategy},
          {"dataset", r.dataset},
          {"feature_group", r.feature_group},
          {"metric", r.metric_name},
          {"seed", r.seed},
          {"epochs_completed", r.epochs_completed},
          {"aborted", r.aborted},
          {"diagnostic", r.diagnostic},
          {"winning_ticket", to_json_value(r.ticket)},
          {"winning_ticket_mae", detail::nullable(r.ticket_mae)},
          {"final_sparsity", r.final_sparsity},
          {"size", {{"total_params", r.total_params},
                    {"surviving_params", r.surviving_params},
                    {"reduction_fraction", r.size_reduction}}},
          {"energy", {{"device", r.power_device},
                      {"train_j", detail::nullable(r.train_energy_j)},
                      {"inference_j", detail::nullable(r.inference_energy_j)},
                      {"total_j", detail::nullable(r.total_energy_j)}}},
          {"warnings", r.warnings},
          {"teacher_metric", detail::nullable(r.teacher_metric)},
          {"mean_predictor", {{"mae", detail::nullable(r.mean_predictor_mae)},
                              {"mse", detail::nullable(r.mean_predictor_mse)}}},
          {"events", events},
          {"files", {{"metrics_csv", r.metrics_csv}, {"power_csv", r.power_csv}}}};
}

inline run_report run_report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != run_report_format) throw ingestion_error("not a run report");
  run_report r;
  r.label = j.at("label").get<std::string>();
  r.strategy = j.at("strategy").get<std::string>();
  r.dataset = j.at("dataset").get<std::string>();
  r.feature_group = j.at("feature_group").get<std::string>();
  r.metric_name = j.at("metric").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.epochs_completed = j.at("epochs_completed").get<std::size_t>();
  r.aborted = j.at("aborted").get<bool>();
  r.diagnostic = j.at("diagnostic");
  const auto& t = j.at("winning_ticket");
  r.ticket = {t.at("round").get<std::size_t>(), t.at("epoch").get<std::size_t>(), t.at("sparsity").get<double>(),
              t.at("metric").get<double>(), t.at("checkpoint").get<std::string>()};
  r.ticket_mae = detail::from_nullable(j, "winning_ticket_mae");
  r.final_sparsity = j.at("final_sparsity").get<double>();
  r.total_params = j.at("size").at("total_params").get<std::size_t>();
  r.surviving_params = j.at("size").at("surviving_params").get<std::size_t>();
  r.size_reduction = j.at("size").at("reduction_fraction").get<double>();
  const auto& e = j.at("energy");
  r.power_device = e.at("device").get<std::string>();
  r.train_energy_j = detail::from_nullable(e, "train_j");
  r.inference_energy_j = detail::from_nullable(e, "inference_j");
  r.total_energy_j = detail::from_nullable(e, "total_j");
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.teacher_metric = detail::from_nullable(j, "teacher_metric");
  r.mean_predictor_mae = detail::from_nullable(j.at("mean_predictor"), "mae");
  r.mean_predictor_mse = detail::from_nullable(j.at("mean_predictor"), "mse");
  for (const auto& ev : j.at("events")) r.events.push_back(prune_event_from_json(ev));
  r.metrics_csv = j.at("files").at("metrics_csv").get<std::string>();
  r.power_csv = j.at("files").at("power_csv").get<std::string>();
  return r;
}

inline void save_run_report(const std::filesystem::path& path, const run_report& r) {
  std::ofstream os(path);
  if (!os) throw ingestion_error("cannot write " + path.string());
  os << to_json_value(r).dump(2) << '\n';
}

/// Accepts a summary JSON file or a run directory containing summary.json.
inline run_report load_run_report(const std::filesystem::path& path) {
  auto p = path;
  if (std::filesystem::is_directory(p)) p /= "summary.json";
  std::ifstream is(p);
  if (!is) throw ingestion_error("cannot open report " + p.string());
  try {
    return run_report_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw ingestion_error(p.string() + ": " + e.what());
  } catch (const ingestion_error& e) {
    throw ingestion_error(p.string() + ": " + e.what());
  }
}

// ---- comparison -----------------------------------------------------------------------------

/// Relative change versus the baseline, signed so that positive means better.
inline std::optional<double> improvement_percent(double baseline, double value, bool higher_is_better) {
  if (!std::isfinite(baseline) || !std::isfinite(value) || baseline == 0.0) return std::nullopt;
  const double change = (value - baseline) / std::fabs(baseline) * 100.0;
  return higher_is_better ? change : -change;
}

inline std::string format_delta(std::optional<double> pct) {
  if (!pct) return "n/a";
  char buf[32];
  const double rounded = std::round(*pct * 10.0) / 10.0;
  if (rounded == 0.0) return "0.0%";
  std::snprintf(buf, sizeof buf, "%+.1f%%", rounded);
  return buf;
}

struct comparison_row {
  std::string quantity;
  bool higher_is_better = true;
  std::vector<double> values;                  // one per report
  std::vector<std::optional<double>> deltas;   // one per non-baseline report
};

struct comparison {
  std::vector<std::string> labels;  // baseline first
  std::vector<comparison_row> rows;
};

inline comparison compare_reports(const std::vector<run_report>& reports) {
  if (reports.size() < 2) throw input_error("compare needs at least two reports");
  for (const auto& r : reports) {
    if (r.family() != reports.front().family()) {
      throw input_error("cannot compare mixed metric families: " + reports.front().family() + " vs " + r.family());
    }
  }
  comparison c;
  for (const auto& r : reports) c.labels.push_back(r.label);
  auto add = [&](std::string name, bool higher, auto get) {
    comparison_row row{std::move(name), higher, {}, {}};
    for (const auto& r : reports) row.values.push_back(get(r));
    for (std::size_t i = 1; i < reports.size(); ++i) {
      row.deltas.push_back(improvement_percent(row.values[0], row.values[i], higher));
    }
    c.rows.push_back(std::move(row));
  };
  const bool acc = reports.front().higher_is_better();
  add(reports.front().metric_name, acc, [](const run_report& r) { return r.ticket.metric; });
  if (!acc) add("mae", false, [](const run_report& r) { return r.ticket_mae; });
  add("sparsity", true, [](const run_report& r) { return r.ticket.sparsity; });
  add("size_reduction", true, [](const run_report& r) { return r.size_reduction; });
  add("energy_j", false, [](const run_report& r) { return r.total_energy_j; });
  return c;
}

namespace detail {

inline std::string cell(double v) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace detail

/// Aligned text: one row per quantity, the baseline column, then "value (delta)" per run.
inline std::string format_comparison_text(const comparison& c) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"quantity", c.labels[0] + " (baseline)"};
  for (std::size_t i = 1; i < c.labels.size(); ++i) header.push_back(c.labels[i]);
  grid.push_back(header);
  for (const auto& row : c.rows) {
    std::vector<std::string> line{row.quantity, detail::cell(row.values[0])};
    for (std::size_t i = 1; i < row.values.size(); ++i) {
      line.push_back(detail::cell(row.values[i]) + " (" + format_delta(row.deltas[i - 1]) + ")");
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t k = 0; k < line.size(); ++k) width[k] = std::max(width[k], line[k].size());
  }
  std::ostringstream os;
  for (const auto& line : grid) {
    for (std::size_t k = 0; k < line.size(); ++k) {
      os << line[k];
      if (k + 1 < line.size()) os << std::string(width[k] - line[k].size() + 2, ' ');
    }
    os << '\n';
  }
  return os.str();
}

inline std::string format_comparison_csv(const comparison& c) {
  std::ostringstream os;
  csv::row header{"quantity", c.labels[0]};
  for (std::size_t i = 1; i < c.labels.size(); ++i) {
    header.push_back(c.labels[i]);
    header.push_back(c.labels[i] + " delta");
  }
  csv::write_row(os, header);
  for (const auto& row : c.rows) {
    csv::row line{row.quantity, detail::cell(row.values[0])};
    for (std::size_t i = 1; i < row.values.size(); ++i) {
      line.push_back(detail::cell(row.values[i]));
      line.push_back(format_delta(row.deltas[i - 1]));
    }
    csv::write_row(os, line);
  }
  return os.str();
}

}  // namespace sadprune
