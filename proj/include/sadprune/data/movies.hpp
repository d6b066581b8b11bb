#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/data/csv.hpp"
#include "sadprune/data/dataset.hpp"
#include "sadprune/data/text.hpp"

namespace sadprune {

enum class feature_group { numerical, social, categorical, textual };

inline std::string to_string(feature_group g) {
  switch (g) {
    case feature_group::numerical: return "numerical";
    case feature_group::social: return "social";
    case feature_group::categorical: return "categorical";
    case feature_group::textual: return "textual";
  }
  return "?";
}

inline feature_group parse_feature_group(const std::string& s) {
  for (auto g : {feature_group::numerical, feature_group::social, feature_group::categorical, feature_group::textual}) {
    if (s == to_string(g)) return g;
  }
  throw config_error("unknown feature group '" + s + "' (numerical, social, categorical, textual)");
}

enum class column_role { numerical, social, categorical, textual, target, id, ignore };

inline column_role parse_column_role(const std::string& s) {
  if (s == "target") return column_role::target;
  if (s == "id") return column_role::id;
  if (s == "ignore") return column_role::ignore;
  return static_cast<column_role>(parse_feature_group(s));
}

inline std::string to_string(column_role r) {
  switch (r) {
    case column_role::target: return "target";
    case column_role::id: return "id";
    case column_role::ignore: return "ignore";
    default: return to_string(static_cast<feature_group>(r));
  }
}

/// Column name -> role. Categorical cells may hold several values separated by '|'.
struct column_manifest {
  std::vector<std::pair<std::string, column_role>> entries;

  std::optional<column_role> role(const std::string& column) const {
    for (const auto& [name, r] : entries) {
      if (name == column) return r;
    }
    return std::nullopt;
  }

  void write(std::ostream& os) const {
    os << "column,group\n";
    for (const auto& [name, r] : entries) os << name << ',' << to_string(r) << '\n';
  }
};

/// Manifest for the aggregated movie table: seven numerical, four social, three categorical
/// and four textual columns plus the rating target.
inline column_manifest default_movie_manifest() {
  column_manifest m;
  for (const char* c : {"budget", "runtime", "num_companies", "release_day", "release_month", "release_year",
                        "num_languages"}) {
    m.entries.emplace_back(c, column_role::numerical);
  }
  for (const char* c : {"actor_likes", "cast_likes", "director_likes", "crew_likes"}) {
    m.entries.emplace_back(c, column_role::social);
  }
  for (const char* c : {"production_countries", "content_rating", "genres"}) {
    m.entries.emplace_back(c, column_role::categorical);
  }
  for (const char* c : {"title", "plot_keywords", "overview", "tagline"}) m.entries.emplace_back(c, column_role::textual);
  m.entries.emplace_back("movie_id", column_role::id);
  m.entries.emplace_back("vote_average", column_role::target);
  return m;
}

inline column_manifest read_manifest(std::istream& is, const std::string& name = "manifest") {
  auto rows = csv::read_all(is);
  if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "column" || rows[0][1] != "group") {
    throw ingestion_error(name + ": expected header 'column,group'");
  }
  column_manifest m;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 2) throw ingestion_error(name + ": row " + std::to_string(i + 1) + " needs 2 fields");
    if (!seen.insert(rows[i][0]).second) throw ingestion_error(name + ": column '" + rows[i][0] + "' listed twice");
    try {
      m.entries.emplace_back(rows[i][0], parse_column_role(rows[i][1]));
    } catch (const config_error& e) {
      throw ingestion_error(name + ": " + e.what());
    }
  }
  return m;
}

inline column_manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ingestion_error("cannot open manifest " + path.string());
  return read_manifest(is, path.string());
}

struct movie_column {
  std::string name;
  feature_group group = feature_group::numerical;
  std::vector<double> numbers;     // numerical/social
  std::vector<std::string> text;   // categorical/textual
  double fill_value = std::numeric_limits<double>::quiet_NaN();
  std::size_t imputed = 0;

  bool numeric() const { return group == feature_group::numerical || group == feature_group::social; }
};

struct movie_table {
  std::vector<movie_column> columns;
  std::vector<double> target;
  std::vector<int> year;

  std::size_t rows() const { return target.size(); }

  std::size_t group_columns(feature_group g) const {
    return static_cast<std::size_t>(std::count_if(columns.begin(), columns.end(), [&](const auto& c) { return c.group == g; }));
  }

  const movie_column& column(const std::string& name) const {
    for (const auto& c : columns) {
      if (c.name == name) return c;
    }
    throw input_error("movie table has no column '" + name + "'");
  }

  movie_table select(const std::vector<std::size_t>& rows_to_keep) const {
    movie_table out;
    for (const auto& c : columns) {
      movie_column nc{c.name, c.group, {}, {}, c.fill_value, c.imputed};
      for (auto r : rows_to_keep) {
        if (c.numeric()) nc.numbers.push_back(c.numbers[r]);
        else nc.text.push_back(c.text[r]);
      }
      out.columns.push_back(std::move(nc));
    }
    for (auto r : rows_to_keep) {
      out.target.push_back(target[r]);
      out.year.push_back(year[r]);
    }
    return out;
  }
};

struct movie_options {
  column_manifest manifest = default_movie_manifest();
  std::string target_column = "vote_average";
  std::string year_column = "release_year";
  int train_first_year = 2000;
  int train_last_year = 2013;
};

struct movie_load_report {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::size_t dropped_missing_target = 0;
  std::size_t dropped_missing_year = 0;
  std::map<std::string, std::size_t> group_columns;
  std::map<std::string, std::size_t> imputed;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<double> parse_cell(const std::string& raw) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Parses the delimited movie table. Rows without a numeric target or release year are dropped;
/// missing numeric cells are imputed with the column median over rows inside the training
/// year window (all rows when the window holds no value for that column).
inline movie_table load_movies(std::istream& is, const movie_options& opt = {}, movie_load_report* report = nullptr,
                               const std::string& name = "movie table") {
  movie_load_report local;
  movie_load_report& rep = report ? *report : local;
  rep = {};
  std::vector<csv::row> rows;
  try {
    rows = csv::read_all(is);
  } catch (const ingestion_error& e) {
    throw ingestion_error(name + ": " + e.what());
  }
  if (rows.empty()) throw ingestion_error(name + ": file is empty");
  const auto& header = rows[0];
  auto find = [&](const std::string& col) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == col) return i;
    }
    return std::nullopt;
  };
  const auto target_idx = find(opt.target_column);
  if (!target_idx) throw ingestion_error(name + ": target column '" + opt.target_column + "' is absent");
  const auto year_idx = find(opt.year_column);
  if (!year_idx) throw ingestion_error(name + ": year column '" + opt.year_column + "' is absent");

  movie_table table;
  std::vector<std::size_t> source_index;
  std::vector<std::string> unknown;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto role = opt.manifest.role(header[i]);
    if (!role) {
      if (i != *target_idx && i != *year_idx) unknown.push_back(header[i]);
      continue;
    }
    if (*role == column_role::target || *role == column_role::id || *role == column_role::ignore) continue;
    movie_column c;
    c.name = header[i];
    c.group = static_cast<feature_group>(*role);
    table.columns.push_back(std::move(c));
    source_index.push_back(i);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    rep.warnings.push_back("columns not in manifest (ignored): " + list);
  }
  for (const auto& [col, role] : opt.manifest.entries) {
    if (role != column_role::target && role != column_role::id && role != column_role::ignore && !find(col)) {
      rep.warnings.push_back("manifest column '" + col + "' missing from table");
    }
  }

  std::vector<std::vector<std::optional<double>>> raw_numbers(table.columns.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    ++rep.rows_read;
    if (row.size() != header.size()) {
      throw ingestion_error(name + ": record " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(header.size()));
    }
    const auto target = detail::parse_cell(row[*target_idx]);
    if (!target) {
      ++rep.dropped_missing_target;
      continue;
    }
    const auto year = detail::parse_cell(row[*year_idx]);
    if (!year) {
      ++rep.dropped_missing_year;
      continue;
    }
    table.target.push_back(*target);
    table.year.push_back(static_cast<int>(std::lround(*year)));
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      const auto& cell = row[source_index[c]];
      if (table.columns[c].numeric()) raw_numbers[c].push_back(detail::parse_cell(cell));
      else table.columns[c].text.push_back(cell);
    }
  }
  rep.rows_kept = table.rows();

  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    auto& col = table.columns[c];
    if (!col.numeric()) continue;
    std::vector<double> window, all;
    for (std::size_t r = 0; r < raw_numbers[c].size(); ++r) {
      if (!raw_numbers[c][r]) continue;
      all.push_back(*raw_numbers[c][r]);
      if (table.year[r] >= opt.train_first_year && table.year[r] <= opt.train_last_year) window.push_back(*raw_numbers[c][r]);
    }
    if (!window.empty()) col.fill_value = detail::median(window);
    else if (!all.empty()) col.fill_value = detail::median(all);
    else col.fill_value = 0.0;
    col.numbers.reserve(raw_numbers[c].size());
    for (const auto& v : raw_numbers[c]) {
      if (v) {
        col.numbers.push_back(*v);
      } else {
        col.numbers.push_back(col.fill_value);
        ++col.imputed;
      }
    }
    if (col.imputed) rep.imputed[col.name] = col.imputed;
  }
  for (auto g : {feature_group::numerical, feature_group::social, feature_group::categorical, feature_group::textual}) {
    rep.group_columns[to_string(g)] = table.group_columns(g);
  }
  if (table.rows() == 0) throw ingestion_error(name + ": no rows with a target value");
  return table;
}

inline movie_table load_movies(const std::filesystem::path& path, const movie_options& opt = {},
                               movie_load_report* report = nullptr) {
  std::ifstream is(path);
  if (!is) throw ingestion_error("cannot open movie table " + path.string());
  return load_movies(is, opt, report, path.string());
}

struct movie_split {
  movie_table train;
  movie_table test;
  std::size_t dropped_before = 0;  // films released before the training window
  std::vector<std::string> warnings;
};

/// train: first <= year <= last; test: year > last; earlier films are dropped and counted.
inline movie_split split_by_year(const movie_table& table, int first = 2000, int last = 2013) {
  std::vector<std::size_t> tr, te;
  movie_split out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (table.year[r] < first) ++out.dropped_before;
    else if (table.year[r] <= last) tr.push_back(r);
    else te.push_back(r);
  }
  out.train = table.select(tr);
  out.test = table.select(te);
  if (out.dropped_before) {
    out.warnings.push_back(std::to_string(out.dropped_before) + " films released before " + std::to_string(first) +
                           " dropped");
  }
  if (tr.empty() && te.empty()) out.warnings.push_back("no films fall inside either split window");
  return out;
}

struct feature_matrix {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<double> values;  // row-major rows x columns
  double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
};

struct encoded_group {
  feature_group group = feature_group::numerical;
  feature_matrix train;
  feature_matrix test;
};

namespace detail {

inline std::vector<std::string> split_values(const std::string& cell) {
  std::vector<std::string> out;
  std::stringstream ss(cell);
  std::string item;
  while (std::getline(ss, item, '|')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

/// Encodes one feature group with encoders fitted on `train` only: standardized numeric
/// columns, multi-hot categorical vocabularies (unseen values encode as all zeros) or TF-IDF
/// over the concatenated text columns.
inline encoded_group encode_group(const movie_table& train, const movie_table& test, feature_group group,
                                  std::size_t max_text_features = 2000) {
  std::vector<const movie_column*> train_cols, test_cols;
  for (const auto& c : train.columns) {
    if (c.group == group) {
      train_cols.push_back(&c);
      test_cols.push_back(&test.column(c.name));
    }
  }
  if (train_cols.empty()) throw config_error("feature group '" + to_string(group) + "' has no columns");
  encoded_group out;
  out.group = group;
  out.train.rows = train.rows();
  out.test.rows = test.rows();

  if (group == feature_group::numerical || group == feature_group::social) {
    const std::size_t k = train_cols.size();
    out.train.values.resize(train.rows() * k);
    out.test.values.resize(test.rows() * k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& tr = train_cols[j]->numbers;
      double mean = 0, var = 0;
      for (double v : tr) mean += v;
      mean /= std::max<std::size_t>(tr.size(), 1);
      for (double v : tr) var += (v - mean) * (v - mean);
      double sd = std::sqrt(var / std::max<std::size_t>(tr.size(), 1));
      if (!(sd > 0)) sd = 1.0;
      out.train.columns.push_back(train_cols[j]->name);
      for (std::size_t r = 0; r < train.rows(); ++r) out.train.values[r * k + j] = (tr[r] - mean) / sd;
      for (std::size_t r = 0; r < test.rows(); ++r) out.test.values[r * k + j] = (test_cols[j]->numbers[r] - mean) / sd;
    }
  } else if (group == feature_group::categorical) {
    std::vector<std::pair<std::size_t, std::string>> vocab;  // (column slot, value)
    std::map<std::pair<std::size_t, std::string>, std::size_t> index;
    for (std::size_t j = 0; j < train_cols.size(); ++j) {
      std::set<std::string> values;
      for (const auto& cell : train_cols[j]->text) {
        for (auto& v : detail::split_values(cell)) values.insert(v);
      }
      for (const auto& v : values) {
        index[{j, v}] = vocab.size();
        vocab.emplace_back(j, v);
        out.train.columns.push_back(train_cols[j]->name + "=" + v);
      }
    }
    auto encode = [&](const std::vector<const movie_column*>& cols, std::size_t rows, std::vector<double>& dst) {
      dst.assign(rows * vocab.size(), 0.0);
      for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (auto& v : detail::split_values(cols[j]->text[r])) {
            if (auto it = index.find({j, v}); it != index.end()) dst[r * vocab.size() + it->second] = 1.0;
          }
        }
      }
    };
    encode(train_cols, train.rows(), out.train.values);
    encode(test_cols, test.rows(), out.test.values);
  } else {
    auto documents = [&](const std::vector<const movie_column*>& cols, std::size_t rows) {
      std::vector<std::string> docs(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        for (const auto* c : cols) docs[r] += c->text[r] + ' ';
      }
      return docs;
    };
    const auto train_docs = documents(train_cols, train.rows());
    tfidf_vectorizer vec(max_text_features);
    vec.fit(train_docs);
    for (const auto& t : vec.terms()) out.train.columns.push_back("tfidf:" + t);
    auto fill = [&](const std::vector<std::string>& docs, std::vector<double>& dst) {
      dst.clear();
      dst.reserve(docs.size() * vec.features());
      for (const auto& d : docs) {
        auto row = vec.transform(d);
        dst.insert(dst.end(), row.begin(), row.end());
      }
    };
    fill(train_docs, out.train.values);
    fill(documents(test_cols, test.rows()), out.test.values);
  }
  out.test.columns = out.train.columns;
  return out;
}

inline dataset to_regression_dataset(const feature_matrix& features, const std::vector<double>& targets) {
  if (features.rows != targets.size()) throw structural_error("feature rows and targets disagree");
  if (features.columns.empty()) throw config_error("encoded feature group has zero columns");
  dataset d;
  d.task = task_kind::regression;
  d.sample_shape = {features.columns.size()};
  d.x.assign(features.values.begin(), features.values.end());
  d.targets.assign(targets.begin(), targets.end());
  return d;
}

}  // namespace sadprune
