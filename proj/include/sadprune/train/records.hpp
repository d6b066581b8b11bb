#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/core/error.hpp"
#include "sadprune/data/csv.hpp"
#include "sadprune/metrics/telemetry.hpp"

namespace sadprune {

/// One row of the per-epoch metrics file. Epochs are 1-based. `metric` is accuracy for
/// classification and MSE for regression (the winning-ticket criterion); `mae` is regression only.
struct epoch_record {
  std::size_t epoch = 0;
  std::size_t round = 0;
  double total_loss = 0;
  double class_loss = 0;
  double attention_loss = 0;
  double kd_loss = 0;
  double metric = 0;
  double mae = std::numeric_limits<double>::quiet_NaN();
  double cumulative_sparsity = 0;
  double learning_rate = 0;
  double wall_time_s = 0;
  double energy_j = std::numeric_limits<double>::quiet_NaN();
  std::string event;  // what happened after the epoch: "", "prune", "prune-skipped"

  friend bool operator==(const epoch_record&, const epoch_record&) = default;
};

inline const std::vector<std::string>& metrics_csv_header() {
  static const std::vector<std::string> h{"epoch",  "round",   "total_loss",         "class_loss",    "attention_loss",
                                          "kd_loss", "metric", "mae",                "cumulative_sparsity",
                                          "learning_rate", "wall_time_s", "energy_j", "event"};
  return h;
}

namespace detail {

inline std::string number_cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline double parse_number_cell(const std::string& s, const std::string& ctx) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s, ctx);
}

}  // namespace detail

inline void write_metrics_csv(std::ostream& os, const std::vector<epoch_record>& records) {
  csv::write_row(os, metrics_csv_header());
  for (const auto& r : records) {
    csv::write_row(os, {std::to_string(r.epoch), std::to_string(r.round), detail::number_cell(r.total_loss),
                        detail::number_cell(r.class_loss), detail::number_cell(r.attention_loss),
                        detail::number_cell(r.kd_loss), detail::number_cell(r.metric), detail::number_cell(r.mae),
                        detail::number_cell(r.cumulative_sparsity), detail::number_cell(r.learning_rate),
                        detail::number_cell(r.wall_time_s), detail::number_cell(r.energy_j), r.event});
  }
}

inline void save_metrics_csv(const std::filesystem::path& path, const std::vector<epoch_record>& records) {
  std::ofstream os(path);
  if (!os) throw ingestion_error("cannot write " + path.string());
  write_metrics_csv(os, records);
}

inline std::vector<epoch_record> read_metrics_csv(std::istream& is, const std::string& name = "metrics") {
  const auto rows = csv::read_all(is);
  if (rows.empty() || rows[0] != metrics_csv_header()) throw ingestion_error(name + ": unexpected metrics header");
  std::vector<epoch_record> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    const std::string ctx = name + ":" + std::to_string(i + 1);
    if (c.size() != metrics_csv_header().size()) throw ingestion_error(ctx + ": wrong field count");
    epoch_record r;
    r.epoch = static_cast<std::size_t>(parse_double(c[0], ctx));
    r.round = static_cast<std::size_t>(parse_double(c[1], ctx));
    r.total_loss = detail::parse_number_cell(c[2], ctx);
    r.class_loss = detail::parse_number_cell(c[3], ctx);
    r.attention_loss = detail::parse_number_cell(c[4], ctx);
    r.kd_loss = detail::parse_number_cell(c[5], ctx);
    r.metric = detail::parse_number_cell(c[6], ctx);
    r.mae = detail::parse_number_cell(c[7], ctx);
    r.cumulative_sparsity = detail::parse_number_cell(c[8], ctx);
    r.learning_rate = detail::parse_number_cell(c[9], ctx);
    r.wall_time_s = detail::parse_number_cell(c[10], ctx);
    r.energy_j = detail::parse_number_cell(c[11], ctx);
    r.event = c[12];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<epoch_record> load_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ingestion_error("cannot open " + path.string());
  return read_metrics_csv(is, path.string());
}

inline nlohmann::json to_json_value(const epoch_record& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"epoch", r.epoch},
          {"round", r.round},
          {"total_loss", num(r.total_loss)},
          {"class_loss", num(r.class_loss)},
          {"attention_loss", num(r.attention_loss)},
          {"kd_loss", num(r.kd_loss)},
          {"metric", num(r.metric)},
          {"mae", num(r.mae)},
          {"cumulative_sparsity", r.cumulative_sparsity},
          {"learning_rate", r.learning_rate},
          {"wall_time_s", r.wall_time_s},
          {"energy_j", num(r.energy_j)},
          {"event", r.event}};
}

inline epoch_record epoch_record_from_json(const nlohmann::json& j) {
  auto num = [&](const char* k) {
    return j.at(k).is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at(k).get<double>();
  };
  epoch_record r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.round = j.at("round").get<std::size_t>();
  r.total_loss = num("total_loss");
  r.class_loss = num("class_loss");
  r.attention_loss = num("attention_loss");
  r.kd_loss = num("kd_loss");
  r.metric = num("metric");
  r.mae = num("mae");
  r.cumulative_sparsity = j.at("cumulative_sparsity").get<double>();
  r.learning_rate = j.at("learning_rate").get<double>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.energy_j = num("energy_j");
  r.event = j.at("event").get<std::string>();
  return r;
}

}  // namespace sadprune
