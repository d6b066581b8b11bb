#pragma once

#include <dlfcn.h>

#include <charconv>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/core/error.hpp"

namespace sadprune {

struct power_sample {
  double timestamp_s = 0;   // seconds since sampling started (monotonic)
  double power_watts = 0;
  std::string phase;        // "train" or "inference"
};

struct power_log {
  std::string source;       // device identifier, empty when nothing was sampled
  std::vector<power_sample> samples;
  bool truncated = false;   // the device stopped answering mid-run
  std::vector<std::string> warnings;

  /// Throws input_error unless timestamps strictly increase and powers are non-negative.
  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!(samples[i].power_watts >= 0)) {
        throw input_error("power sample " + std::to_string(i) + " has negative or non-finite power");
      }
      if (i > 0 && !(samples[i].timestamp_s > samples[i - 1].timestamp_s)) {
        throw input_error("power sample " + std::to_string(i) + " does not advance the timestamp");
      }
    }
  }
};

/// Trapezoidal energy in joules. Each interval belongs to the phase of its left sample, so the
/// per-phase energies add up to the whole-log energy.
inline double energy_joules(const power_log& log, std::optional<std::string_view> phase = std::nullopt) {
  double total = 0;
  for (std::size_t i = 0; i + 1 < log.samples.size(); ++i) {
    const auto& a = log.samples[i];
    const auto& b = log.samples[i + 1];
    if (phase && a.phase != *phase) continue;
    total += 0.5 * (a.power_watts + b.power_watts) * (b.timestamp_s - a.timestamp_s);
  }
  return total;
}

/// Distinct phase tags in order of first appearance.
inline std::vector<std::string> phases(const power_log& log) {
  std::vector<std::string> out;
  for (const auto& s : log.samples) {
    if (std::find(out.begin(), out.end(), s.phase) == out.end()) out.push_back(s.phase);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// CSV: "timestamp_s,power_watts,phase" with shortest round-trip number formatting, so a
// written log reads back bit-exactly. '#' lines carry the source and the end-of-stream marker.

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ingestion_error(context + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline void write_power_csv(const power_log& log, std::ostream& os) {
  if (!log.source.empty()) os << "# source=" << log.source << '\n';
  os << "timestamp_s,power_watts,phase\n";
  for (const auto& s : log.samples) {
    os << format_double(s.timestamp_s) << ',' << format_double(s.power_watts) << ',' << s.phase << '\n';
  }
  if (log.truncated) os << "# end-of-stream\n";
}

inline void save_power_csv(const power_log& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ingestion_error("cannot write power log " + path.string());
  write_power_csv(log, os);
}

inline power_log read_power_csv(std::istream& is, const std::string& name = "power log") {
  power_log log;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# source=", 0) == 0) log.source = line.substr(9);
      if (line == "# end-of-stream") log.truncated = true;
      continue;
    }
    if (!header) {
      if (line != "timestamp_s,power_watts,phase") {
        throw ingestion_error(name + ": expected header 'timestamp_s,power_watts,phase'");
      }
      header = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ingestion_error(name + ":" + std::to_string(lineno) + ": expected 3 fields");
    const std::string ctx = name + ":" + std::to_string(lineno);
    log.samples.push_back({parse_double(std::string_view(line).substr(0, c1), ctx),
                           parse_double(std::string_view(line).substr(c1 + 1, c2 - c1 - 1), ctx), line.substr(c2 + 1)});
  }
  if (!header) throw ingestion_error(name + ": empty power log");
  try {
    log.validate();
  } catch (const input_error& e) {
    throw ingestion_error(name + ": " + e.what());
  }
  return log;
}

inline power_log load_power_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ingestion_error("cannot open power log " + path.string());
  return read_power_csv(is, path.string());
}

struct power_summary {
  std::size_t samples = 0;
  double duration_s = 0;
  double energy_j = 0;
  double mean_watts = 0;
  std::map<std::string, double> phase_energy_j;
  std::map<std::string, double> phase_duration_s;
};

inline power_summary summarize(const power_log& log) {
  power_summary s;
  s.samples = log.samples.size();
  if (s.samples >= 2) s.duration_s = log.samples.back().timestamp_s - log.samples.front().timestamp_s;
  s.energy_j = energy_joules(log);
  s.mean_watts = s.duration_s > 0 ? s.energy_j / s.duration_s : 0.0;
  for (std::size_t i = 0; i + 1 < log.samples.size(); ++i) {
    s.phase_duration_s[log.samples[i].phase] += log.samples[i + 1].timestamp_s - log.samples[i].timestamp_s;
  }
  for (const auto& p : phases(log)) s.phase_energy_j[p] = energy_joules(log, p);
  return s;
}

inline nlohmann::json to_json_value(const power_summary& s) {
  return {{"samples", s.samples},       {"duration_s", s.duration_s},
          {"energy_j", s.energy_j},     {"mean_watts", s.mean_watts},
          {"phase_energy_j", s.phase_energy_j}, {"phase_duration_s", s.phase_duration_s}};
}

// ---------------------------------------------------------------------------------------------
// Device readers.

class power_reader {
 public:
  virtual ~power_reader() = default;
  virtual std::string name() const = 0;
  /// Current draw in watts; nullopt once the device stops answering.
  virtual std::optional<double> read_watts() = 0;
};

/// NVIDIA management library, loaded at runtime so the toolkit has no link-time GPU dependency.
class nvml_reader final : public power_reader {
 public:
  static std::unique_ptr<power_reader> open(unsigned index, std::string& why) {
    void* lib = dlopen("libnvidia-ml.so.1", RTLD_NOW | RTLD_LOCAL);
    if (!lib) lib = dlopen("libnvidia-ml.so", RTLD_NOW | RTLD_LOCAL);
    if (!lib) {
      why = "NVML library not found";
      return nullptr;
    }
    auto r = std::unique_ptr<nvml_reader>(new nvml_reader(lib, index));
    if (!r->init_ || !r->handle_fn_ || !r->power_fn_) {
      why = "NVML symbols missing";
      return nullptr;
    }
    if (r->init_() != 0) {
      why = "nvmlInit failed";
      return nullptr;
    }
    r->initialized_ = true;
    if (r->handle_fn_(index, &r->device_) != 0) {
      why = "no NVML device " + std::to_string(index);
      return nullptr;
    }
    if (!r->read_watts()) {
      why = "NVML device " + std::to_string(index) + " has no power counter";
      return nullptr;
    }
    return r;
  }

  ~nvml_reader() override {
    if (initialized_ && shutdown_) shutdown_();
    if (lib_) dlclose(lib_);
  }

  std::string name() const override { return "nvml:" + std::to_string(index_); }

  std::optional<double> read_watts() override {
    unsigned int mw = 0;
    if (power_fn_(device_, &mw) != 0) return std::nullopt;
    return static_cast<double>(mw) / 1000.0;
  }

 private:
  using init_fn = int (*)();
  using handle_fn = int (*)(unsigned, void**);
  using power_fn = int (*)(void*, unsigned int*);

  nvml_reader(void* lib, unsigned index) : lib_(lib), index_(index) {
    init_ = reinterpret_cast<init_fn>(dlsym(lib, "nvmlInit_v2"));
    shutdown_ = reinterpret_cast<init_fn>(dlsym(lib, "nvmlShutdown"));
    handle_fn_ = reinterpret_cast<handle_fn>(dlsym(lib, "nvmlDeviceGetHandleByIndex_v2"));
    power_fn_ = reinterpret_cast<power_fn>(dlsym(lib, "nvmlDeviceGetPowerUsage"));
  }

  void* lib_ = nullptr;
  unsigned index_ = 0;
  bool initialized_ = false;
  void* device_ = nullptr;
  init_fn init_ = nullptr;
  init_fn shutdown_ = nullptr;
  handle_fn handle_fn_ = nullptr;
  power_fn power_fn_ = nullptr;
};

/// AMD GPUs through the hwmon sysfs power file (microwatts).
class hwmon_reader final : public power_reader {
 public:
  static std::unique_ptr<power_reader> open(const std::filesystem::path& root, std::string& why) {
    std::error_code ec;
    if (std::filesystem::is_directory(root, ec)) {
      for (const auto& entry : std::filesystem::directory_iterator(root, ec)) {
        std::ifstream name_file(entry.path() / "name");
        std::string name;
        if (!(name_file >> name) || name != "amdgpu") continue;
        for (const char* file : {"power1_average", "power1_input"}) {
          auto path = entry.path() / file;
          if (std::filesystem::exists(path, ec)) {
            auto r = std::unique_ptr<hwmon_reader>(new hwmon_reader(path));
            if (r->read_watts()) return r;
          }
        }
      }
    }
    why = "no amdgpu hwmon power file under " + root.string();
    return nullptr;
  }

  std::string name() const override { return "amdgpu:" + path_.parent_path().filename().string(); }

  std::optional<double> read_watts() override {
    std::ifstream is(path_);
    double microwatts = 0;
    if (!(is >> microwatts)) return std::nullopt;
    return microwatts / 1e6;
  }

 private:
  explicit hwmon_reader(std::filesystem::path p) : path_(std::move(p)) {}
  std::filesystem::path path_;
};

/// Replays the power column of a recorded log, one value per read, then reports end of stream.
class replay_reader final : public power_reader {
 public:
  explicit replay_reader(power_log log) : log_(std::move(log)) {}
  std::string name() const override { return "replay:" + (log_.source.empty() ? std::string("log") : log_.source); }
  std::optional<double> read_watts() override {
    if (next_ >= log_.samples.size()) return std::nullopt;
    return log_.samples[next_++].power_watts;
  }

 private:
  power_log log_;
  std::size_t next_ = 0;
};

/// Resolves a device string: "none", "auto", "nvml[:index]", "amdgpu" or "replay:<csv>".
/// Returns nullptr with `warning` set when no counter is readable.
inline std::unique_ptr<power_reader> probe_power_reader(const std::string& device, std::string& warning) {
  std::string why;
  if (device == "none") {
    warning = "power telemetry disabled";
    return nullptr;
  }
  if (device.rfind("replay:", 0) == 0) return std::make_unique<replay_reader>(load_power_csv(device.substr(7)));
  if (device == "auto" || device.rfind("nvml", 0) == 0) {
    unsigned index = 0;
    if (device.size() > 5 && device[4] == ':') index = static_cast<unsigned>(std::stoul(device.substr(5)));
    if (auto r = nvml_reader::open(index, why)) return r;
    if (device != "auto") {
      warning = why;
      return nullptr;
    }
  }
  if (device == "auto" || device == "amdgpu") {
    std::string why_amd;
    if (auto r = hwmon_reader::open("/sys/class/hwmon", why_amd)) return r;
    why = why.empty() ? why_amd : why + "; " + why_amd;
  }
  if (device != "auto" && device != "amdgpu") throw config_error("unknown power device '" + device + "'");
  warning = "no readable GPU power counter (" + why + "); power log left empty";
  return nullptr;
}

/// Periodic sampler running on its own thread. Phase tags come from set_phase(); snapshot()
/// returns a consistent copy at any time.
class power_sampler {
 public:
  power_sampler(std::unique_ptr<power_reader> reader, std::chrono::milliseconds interval,
                std::string initial_phase = "train", std::string warning = {})
      : reader_(std::move(reader)), interval_(interval), phase_(std::move(initial_phase)) {
    if (interval.count() <= 0) throw config_error("power sampling interval must be positive");
    if (reader_) log_.source = reader_->name();
    if (!warning.empty()) log_.warnings.push_back(std::move(warning));
    if (!reader_ && log_.warnings.empty()) log_.warnings.push_back("no power counter available");
  }

  power_sampler(const power_sampler&) = delete;
  power_sampler& operator=(const power_sampler&) = delete;
  ~power_sampler() { stop(); }

  bool has_device() const { return reader_ != nullptr; }

  void start() {
    if (!reader_ || thread_.joinable()) return;
    stopping_ = false;
    start_time_ = std::chrono::steady_clock::now();
    thread_ = std::thread([this] { run(); });
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    if (thread_.joinable()) thread_.join();
  }

  void set_phase(std::string phase) {
    std::lock_guard<std::mutex> lock(mutex_);
    phase_ = std::move(phase);
  }

  power_log snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
  }

 private:
  void run() {
    auto next = start_time_;
    std::unique_lock<std::mutex> lock(mutex_);
    while (!stopping_) {
      lock.unlock();
      const auto watts = reader_->read_watts();
      const auto now = std::chrono::steady_clock::now();
      lock.lock();
      if (!watts) {
        log_.truncated = true;
        log_.warnings.push_back("power device stopped answering; log truncated");
        break;
      }
      const double t = std::chrono::duration<double>(now - start_time_).count();
      if (log_.samples.empty() || t > log_.samples.back().timestamp_s) log_.samples.push_back({t, *watts, phase_});
      next += interval_;
      wake_.wait_until(lock, next, [this] { return stopping_; });
    }
  }

  std::unique_ptr<power_reader> reader_;
  std::chrono::milliseconds interval_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::thread thread_;
  bool stopping_ = false;
  std::string phase_;
  power_log log_;
  std::chrono::steady_clock::time_point start_time_;
};

}  // namespace sadprune
