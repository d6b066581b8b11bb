#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/data/movies.hpp"
#include "sadprune/distill/distiller.hpp"
#include "sadprune/model_zoo/model.hpp"
#include "sadprune/prune/ranking.hpp"
#include "sadprune/train/schedule.hpp"
#include "sadprune/train/trainer.hpp"

extern char** environ;

namespace sadprune {

// Config files are flat `key = value` lines grouped under `[section]` headers. Keys before the
// first header belong to [experiment]. `include = other.cfg` (top of file) loads a base preset
// whose keys this file then overrides. Every key can also be overridden from the environment
// as SADPRUNE_<SECTION>__<KEY>, e.g. SADPRUNE_TRAIN__EPOCHS=5.

inline constexpr const char* env_prefix = "SADPRUNE_";

enum class dataset_kind { cifar_like, movies };

inline std::string to_string(dataset_kind d) { return d == dataset_kind::cifar_like ? "cifar-like" : "movies"; }

inline dataset_kind parse_dataset_kind(const std::string& s) {
  if (s == "cifar-like" || s == "cifar") return dataset_kind::cifar_like;
  if (s == "movies") return dataset_kind::movies;
  throw config_error("unknown dataset '" + s + "' (expected cifar-like or movies)");
}

/// Raw key/value pairs keyed "section.key", in file order of first appearance.
class config_values {
 public:
  void set(const std::string& key, std::string value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = std::move(value);
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const { return values_.at(key); }
  const std::vector<std::string>& keys() const { return order_; }
  void erase(const std::string& key) {
    values_.erase(key);
    order_.erase(std::remove(order_.begin(), order_.end(), key), order_.end());
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string strip_comment(const std::string& line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if ((line[i] == '#' || line[i] == ';') && (i == 0 || std::isspace(static_cast<unsigned char>(line[i - 1])))) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace detail

inline void parse_config_text(const std::string& text, const std::string& name, const std::filesystem::path& base_dir,
                              config_values& out, int depth = 0) {
  if (depth > 8) throw config_error(name + ": include nesting too deep");
  std::istringstream is(text);
  std::string line, section = "experiment";
  std::size_t lineno = 0;
  bool seen_key = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto where = name + ":" + std::to_string(lineno);
    const auto s = detail::trim(detail::strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw config_error(where + ": malformed section header");
      section = detail::lower(detail::trim(std::string_view(s).substr(1, s.size() - 2)));
      if (section.empty()) throw config_error(where + ": empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected key = value");
    const auto key = detail::lower(detail::trim(std::string_view(s).substr(0, eq)));
    const auto value = detail::trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) throw config_error(where + ": empty key");
    if (key == "include" && section == "experiment") {
      if (seen_key) throw config_error(where + ": include must precede all keys");
      auto path = std::filesystem::path(value);
      if (path.is_relative()) path = base_dir / path;
      std::ifstream in(path);
      if (!in) throw config_error(where + ": cannot open included config " + path.string());
      std::stringstream ss;
      ss << in.rdbuf();
      parse_config_text(ss.str(), path.string(), path.parent_path(), out, depth + 1);
      continue;
    }
    seen_key = true;
    out.set(section + "." + key, value);
  }
}

/// Applies SADPRUNE_<SECTION>__<KEY> variables from `env` (NAME=value strings).
inline std::vector<std::string> apply_env_overrides(config_values& values, char** env) {
  std::vector<std::string> applied;
  const std::string prefix = env_prefix;
  for (char** e = env; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const auto name = entry.substr(prefix.size(), eq - prefix.size());
    const auto sep = name.find("__");
    if (sep == std::string::npos) continue;  // not a config key (e.g. SADPRUNE_DATA_ROOT-style helpers)
    const auto key = detail::lower(name.substr(0, sep)) + "." + detail::lower(name.substr(sep + 2));
    values.set(key, entry.substr(eq + 1));
    applied.push_back(key);
  }
  return applied;
}

struct teacher_settings {
  model_spec spec;
  std::string checkpoint;  // loaded if present, written after training otherwise
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 0.1;
  std::vector<std::size_t> lr_milestones;
  double lr_gamma = 0.1;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
};

struct experiment_config {
  std::string name = "experiment";
  strategy strat = strategy::sad;
  dataset_kind dataset = dataset_kind::cifar_like;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "runs";

  // data
  std::filesystem::path data_root = "data/cifar";
  std::filesystem::path movies_csv = "data/movies.csv";
  std::filesystem::path manifest;  // empty: built-in manifest
  std::optional<feature_group> group;
  double subset_fraction = 1.0;
  std::uint64_t data_seed = 0;
  bool synthesize = false;  // generate the synthetic corpus when the input is missing
  std::size_t synthetic_train_size = 50000;
  std::size_t synthetic_val_size = 10000;
  std::size_t synthetic_rows = 2000;
  int train_first_year = 2000;
  int train_last_year = 2013;

  // train
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::size_t eval_batch_size = 250;
  double lr = 0.05;
  std::vector<std::size_t> lr_milestones;
  double lr_gamma = 0.1;
  double weight_decay = 0.0;
  double momentum = 0.9;

  // prune (absent for SAD)
  std::optional<double> prune_rate;
  std::optional<std::size_t> prune_every;
  prune_scope scope = prune_scope::per_layer;
  double target_sparsity = 0.7;  // SS-SAD pre-sparsification target

  distill_settings distill;
  model_spec student;
  teacher_settings teacher;

  std::string power_device = "auto";
  std::size_t power_interval_ms = 200;

  bool prunes() const { return strat != strategy::sad; }
  bool regression() const { return dataset == dataset_kind::movies; }

  lr_schedule schedule() const { return lr_schedule(lr, lr_gamma, lr_milestones); }

  prune_config prune() const {
    if (!prunes()) throw config_error("strategy SAD has no prune configuration");
    return prune_config{*prune_rate, *prune_every, strat, scope};
  }

  void validate() const {
    if (seeds.empty()) throw config_error("experiment.seeds must list at least one seed");
    if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
      throw config_error("data.subset_fraction must lie in (0, 1]");
    }
    if (dataset == dataset_kind::movies && !group) throw config_error("the movies dataset requires data.feature_group");
    if (dataset == dataset_kind::cifar_like && group) throw config_error("data.feature_group applies to movies only");
    if (epochs == 0) throw config_error("train.epochs must be >= 1");
    if (batch_size == 0 || eval_batch_size == 0) throw config_error("batch sizes must be >= 1");
    schedule().validate();
    if (prunes()) {
      if (!prune_rate || !prune_every) {
        throw config_error("strategy " + to_string(strat) + " requires prune.rate and prune.every");
      }
      prune().validate();
      if (strat == strategy::ss_sad && !(target_sparsity > 0.0 && target_sparsity < 1.0)) {
        throw config_error("prune.target_sparsity must lie in (0, 1)");
      }
    }
    if (distill.beta < 0) throw config_error("distill.beta must be >= 0");
    if (distill.alpha_kd < 0 || distill.alpha_kd > 1) throw config_error("distill.alpha_kd must lie in [0, 1]");
    if (!(distill.temperature > 0)) throw config_error("distill.temperature must be > 0");
    if (distill.d == 0) throw config_error("distill.d must be >= 1");
    const auto want = dataset == dataset_kind::movies ? model_family::tabular_mlp : model_family::wide_resnet;
    for (const auto* s : {&student, &teacher.spec}) {
      if (s->family != want) {
        throw config_error("dataset " + to_string(dataset) + " needs " + to_string(want) + " models, got " +
                           to_string(s->family));
      }
      if (s->depth == 0 || s->width_factor == 0) throw config_error("model depth and width_factor must be positive");
      if (s->family == model_family::wide_resnet && (s->depth % 6 != 4 || s->depth < 10)) {
        throw config_error("wide-resnet depth must be 6k+4 and >= 10, got " + std::to_string(s->depth));
      }
      if (!s->hidden_widths.empty() && s->hidden_widths.size() != s->depth) {
        throw config_error("hidden_widths must list exactly `depth` widths");
      }
    }
    if (distill.uses_teacher() && teacher.checkpoint.empty() && teacher.epochs == 0) {
      throw config_error("distillation needs a teacher: set teacher.checkpoint or teacher.epochs");
    }
    lr_schedule(teacher.lr, teacher.lr_gamma, teacher.lr_milestones).validate();
    if (power_interval_ms == 0) throw config_error("power.interval_ms must be >= 1");
  }
};

namespace detail {

class config_reader {
 public:
  explicit config_reader(const config_values& v) : v_(v) {}

  bool has(const std::string& key) const { return v_.has(key); }

  std::string str(const std::string& key, std::string fallback) {
    used_.insert(key);
    return v_.has(key) ? v_.get(key) : fallback;
  }

  template <typename N>
  N number(const std::string& key, N fallback) {
    used_.insert(key);
    if (!v_.has(key)) return fallback;
    return parse<N>(key, v_.get(key));
  }

  bool flag(const std::string& key, bool fallback) {
    used_.insert(key);
    if (!v_.has(key)) return fallback;
    const auto s = lower(v_.get(key));
    if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
    if (s == "false" || s == "no" || s == "0" || s == "off") return false;
    throw config_error(key + ": expected a boolean, got '" + v_.get(key) + "'");
  }

  template <typename N>
  std::vector<N> list(const std::string& key, std::vector<N> fallback) {
    used_.insert(key);
    if (!v_.has(key)) return fallback;
    std::vector<N> out;
    const auto text = v_.get(key);
    if (trim(text).empty() || lower(trim(text)) == "none") return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse<N>(key, trim(item)));
    return out;
  }

  /// Keys that were present but never read: typos or fields that do not exist.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& k : v_.keys()) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

 private:
  template <typename N>
  static N parse(const std::string& key, const std::string& raw) {
    const auto s = trim(raw);
    N value{};
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end || s.empty()) {
      throw config_error(key + ": cannot parse '" + raw + "' as a number");
    }
    if constexpr (std::is_floating_point_v<N>) {
      if (!std::isfinite(value)) throw config_error(key + ": value must be finite");
    }
    return value;
  }

  const config_values& v_;
  std::set<std::string> used_;
};

inline model_spec read_model(config_reader& r, const std::string& section, model_spec s) {
  s.family = parse_family(r.str(section + ".family", to_string(s.family)));
  s.depth = r.number<std::size_t>(section + ".depth", s.depth);
  s.width_factor = r.number<std::size_t>(section + ".width_factor", s.width_factor);
  s.hidden_widths = r.list<std::size_t>(section + ".hidden_widths", s.hidden_widths);
  return s;
}

}  // namespace detail

/// Builds a typed config from raw values. Unknown keys and SAD runs carrying prune fields are
/// rejected here, before anything is computed.
inline experiment_config config_from_values(const config_values& v) {
  detail::config_reader r(v);
  experiment_config c;
  c.name = r.str("experiment.name", c.name);
  c.strat = parse_strategy(r.str("experiment.strategy", to_string(c.strat)));
  c.dataset = parse_dataset_kind(r.str("experiment.dataset", to_string(c.dataset)));
  c.seeds = r.list<std::uint64_t>("experiment.seeds", c.seeds);
  c.output_dir = r.str("experiment.output_dir", (std::filesystem::path("runs") / c.name).string());

  c.data_root = r.str("data.root", c.data_root.string());
  c.movies_csv = r.str("data.movies_csv", c.movies_csv.string());
  c.manifest = r.str("data.manifest", c.manifest.string());
  if (r.has("data.feature_group")) c.group = parse_feature_group(r.str("data.feature_group", ""));
  c.subset_fraction = r.number<double>("data.subset_fraction", c.subset_fraction);
  c.data_seed = r.number<std::uint64_t>("data.seed", c.data_seed);
  c.synthesize = r.flag("data.synthesize", c.synthesize);
  c.synthetic_train_size = r.number<std::size_t>("data.synthetic_train_size", c.synthetic_train_size);
  c.synthetic_val_size = r.number<std::size_t>("data.synthetic_val_size", c.synthetic_val_size);
  c.synthetic_rows = r.number<std::size_t>("data.synthetic_rows", c.synthetic_rows);
  c.train_first_year = r.number<int>("data.train_first_year", c.train_first_year);
  c.train_last_year = r.number<int>("data.train_last_year", c.train_last_year);

  c.epochs = r.number<std::size_t>("train.epochs", c.epochs);
  c.batch_size = r.number<std::size_t>("train.batch_size", c.batch_size);
  c.eval_batch_size = r.number<std::size_t>("train.eval_batch_size", c.eval_batch_size);
  c.lr = r.number<double>("train.lr", c.lr);
  c.lr_milestones = r.list<std::size_t>("train.lr_milestones", c.lr_milestones);
  c.lr_gamma = r.number<double>("train.lr_gamma", c.lr_gamma);
  c.weight_decay = r.number<double>("train.weight_decay", c.weight_decay);
  c.momentum = r.number<double>("train.momentum", c.momentum);
  // The single "decay" column is either the milestone factor or the weight decay.
  if (r.has("train.decay")) {
    const double decay = r.number<double>("train.decay", 0.0);
    const auto mode = r.str("train.decay_mode", "weight");
    if (mode == "lr") {
      if (r.has("train.lr_gamma")) throw config_error("train.decay with decay_mode=lr conflicts with train.lr_gamma");
      c.lr_gamma = decay;
    } else if (mode == "weight") {
      if (r.has("train.weight_decay")) {
        throw config_error("train.decay with decay_mode=weight conflicts with train.weight_decay");
      }
      c.weight_decay = decay;
    } else {
      throw config_error("train.decay_mode must be lr or weight, got '" + mode + "'");
    }
  } else if (r.has("train.decay_mode")) {
    throw config_error("train.decay_mode is set without train.decay");
  }

  std::vector<std::string> prune_keys;
  for (const auto& k : v.keys()) {
    if (k.rfind("prune.", 0) == 0) prune_keys.push_back(k);
  }
  if (c.strat == strategy::sad && !prune_keys.empty()) {
    throw config_error("strategy SAD forbids prune fields (found " + prune_keys.front() + ")");
  }
  if (c.prunes()) {
    if (r.has("prune.rate")) c.prune_rate = r.number<double>("prune.rate", 0.0);
    if (r.has("prune.every")) c.prune_every = r.number<std::size_t>("prune.every", 0);
    c.scope = parse_scope(r.str("prune.scope", to_string(c.scope)));
    c.target_sparsity = r.number<double>("prune.target_sparsity", c.target_sparsity);
  }

  c.distill.beta = r.number<double>("distill.beta", c.distill.beta);
  c.distill.temperature = r.number<double>("distill.temperature", c.distill.temperature);
  c.distill.alpha_kd = r.number<double>("distill.alpha_kd", c.distill.alpha_kd);
  c.distill.d = r.number<std::size_t>("distill.d", c.distill.d);

  model_spec student_default, teacher_default;
  if (c.dataset == dataset_kind::movies) {
    student_default.family = teacher_default.family = model_family::tabular_mlp;
    student_default.depth = 3;  // hidden widths 256, 128, 64
    teacher_default.depth = 4;  // 512, 256, 128, 64
    student_default.width_factor = 4;
    teacher_default.width_factor = 8;
    student_default.task = teacher_default.task = task_kind::regression;
    student_default.num_outputs = teacher_default.num_outputs = 1;
  } else {
    student_default.depth = 16;
    student_default.width_factor = 1;
    teacher_default.depth = 16;
    teacher_default.width_factor = 2;
  }
  c.student = detail::read_model(r, "student", student_default);
  c.teacher.spec = detail::read_model(r, "teacher", teacher_default);
  c.teacher.checkpoint = r.str("teacher.checkpoint", c.teacher.checkpoint);
  c.teacher.epochs = r.number<std::size_t>("teacher.epochs", c.teacher.epochs);
  c.teacher.batch_size = r.number<std::size_t>("teacher.batch_size", c.batch_size);
  c.teacher.lr = r.number<double>("teacher.lr", c.teacher.lr);
  c.teacher.lr_milestones = r.list<std::size_t>("teacher.lr_milestones", c.teacher.lr_milestones);
  c.teacher.lr_gamma = r.number<double>("teacher.lr_gamma", c.teacher.lr_gamma);
  c.teacher.weight_decay = r.number<double>("teacher.weight_decay", c.teacher.weight_decay);
  c.teacher.seed = r.number<std::uint64_t>("teacher.seed", c.teacher.seed);

  c.power_device = r.str("power.device", c.power_device);
  c.power_interval_ms = r.number<std::size_t>("power.interval_ms", c.power_interval_ms);

  const auto unknown = r.unused();
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw config_error("unknown config keys: " + list);
  }
  c.validate();
  return c;
}

struct load_options {
  bool use_environment = true;
  std::vector<std::pair<std::string, std::string>> overrides;  // applied last, "section.key"
};

inline experiment_config parse_config(const std::string& text, const std::string& name = "config",
                                      const std::filesystem::path& base_dir = ".", const load_options& opt = {}) {
  config_values v;
  parse_config_text(text, name, base_dir, v);
  if (opt.use_environment) apply_env_overrides(v, environ);
  for (const auto& [k, val] : opt.overrides) v.set(detail::lower(k), val);
  return config_from_values(v);
}

/// Resolves a config argument: an existing path, or the name of a bundled preset.
inline std::filesystem::path resolve_config_path(const std::string& arg) {
  std::filesystem::path p(arg);
  if (std::filesystem::exists(p)) return p;
#ifdef SADPRUNE_PRESET_DIR
  for (const auto& candidate : {std::filesystem::path(SADPRUNE_PRESET_DIR) / arg,
                                std::filesystem::path(SADPRUNE_PRESET_DIR) / (arg + ".cfg")}) {
    if (std::filesystem::exists(candidate)) return candidate;
  }
#endif
  throw config_error("config '" + arg + "' not found (neither a file nor a bundled preset)");
}

inline experiment_config load_config(const std::string& arg, const load_options& opt = {}) {
  const auto path = resolve_config_path(arg);
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path(), opt);
}

namespace detail {

inline std::string num(double v) { return format_double(v); }

template <typename N>
std::string join(const std::vector<N>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline void write_model(std::ostream& os, const char* section, const model_spec& s) {
  os << "\n[" << section << "]\n"
     << "family = " << to_string(s.family) << "\n"
     << "depth = " << s.depth << "\n"
     << "width_factor = " << s.width_factor << "\n";
  if (!s.hidden_widths.empty()) os << "hidden_widths = " << join(s.hidden_widths) << "\n";
}

}  // namespace detail

/// Fully resolved config in the input format. Parsing it back yields an equal config.
inline std::string to_config_text(const experiment_config& c) {
  std::ostringstream os;
  os << "name = " << c.name << "\n"
     << "strategy = " << to_string(c.strat) << "\n"
     << "dataset = " << to_string(c.dataset) << "\n"
     << "seeds = " << detail::join(c.seeds) << "\n"
     << "output_dir = " << c.output_dir.string() << "\n";
  os << "\n[data]\n"
     << "root = " << c.data_root.string() << "\n"
     << "movies_csv = " << c.movies_csv.string() << "\n";
  if (!c.manifest.empty()) os << "manifest = " << c.manifest.string() << "\n";
  if (c.group) os << "feature_group = " << to_string(*c.group) << "\n";
  os << "subset_fraction = " << detail::num(c.subset_fraction) << "\n"
     << "seed = " << c.data_seed << "\n"
     << "synthesize = " << (c.synthesize ? "true" : "false") << "\n"
     << "synthetic_train_size = " << c.synthetic_train_size << "\n"
     << "synthetic_val_size = " << c.synthetic_val_size << "\n"
     << "synthetic_rows = " << c.synthetic_rows << "\n"
     << "train_first_year = " << c.train_first_year << "\n"
     << "train_last_year = " << c.train_last_year << "\n";
  os << "\n[train]\n"
     << "epochs = " << c.epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "eval_batch_size = " << c.eval_batch_size << "\n"
     << "lr = " << detail::num(c.lr) << "\n"
     << "lr_milestones = " << detail::join(c.lr_milestones) << "\n"
     << "lr_gamma = " << detail::num(c.lr_gamma) << "\n"
     << "weight_decay = " << detail::num(c.weight_decay) << "\n"
     << "momentum = " << detail::num(c.momentum) << "\n";
  if (c.prunes()) {
    os << "\n[prune]\n"
       << "rate = " << detail::num(*c.prune_rate) << "\n"
       << "every = " << *c.prune_every << "\n"
       << "scope = " << to_string(c.scope) << "\n"
       << "target_sparsity = " << detail::num(c.target_sparsity) << "\n";
  }
  os << "\n[distill]\n"
     << "beta = " << detail::num(c.distill.beta) << "\n"
     << "temperature = " << detail::num(c.distill.temperature) << "\n"
     << "alpha_kd = " << detail::num(c.distill.alpha_kd) << "\n"
     << "d = " << c.distill.d << "\n";
  detail::write_model(os, "student", c.student);
  detail::write_model(os, "teacher", c.teacher.spec);
  if (!c.teacher.checkpoint.empty()) os << "checkpoint = " << c.teacher.checkpoint << "\n";
  os << "epochs = " << c.teacher.epochs << "\n"
     << "batch_size = " << c.teacher.batch_size << "\n"
     << "lr = " << detail::num(c.teacher.lr) << "\n"
     << "lr_milestones = " << detail::join(c.teacher.lr_milestones) << "\n"
     << "lr_gamma = " << detail::num(c.teacher.lr_gamma) << "\n"
     << "weight_decay = " << detail::num(c.teacher.weight_decay) << "\n"
     << "seed = " << c.teacher.seed << "\n";
  os << "\n[power]\n"
     << "device = " << c.power_device << "\n"
     << "interval_ms = " << c.power_interval_ms << "\n";
  return os.str();
}

/// Trainer options for one seed of this experiment.
inline train_options train_options_for(const experiment_config& c, std::uint64_t seed) {
  train_options o;
  o.epochs = c.epochs;
  o.batch_size = c.batch_size;
  o.eval_batch_size = c.eval_batch_size;
  o.lr = c.schedule();
  o.momentum = c.momentum;
  o.weight_decay = c.weight_decay;
  o.distill = c.distill;
  if (c.prunes()) o.prune = c.prune();
  o.seed = seed;
  return o;
}

}  // namespace sadprune
