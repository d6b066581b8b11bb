#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sadprune/sadprune.hpp"

namespace fs = std::filesystem;
using namespace sadprune;

namespace {

int run_command(const std::string& config_arg, bool dry_run, std::optional<std::uint64_t> seed,
                const std::string& out, bool resume, bool quiet, const std::vector<std::string>& sets) {
  load_options lo;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw config_error("--set expects section.key=value, got '" + s + "'");
    lo.overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (seed) lo.overrides.emplace_back("experiment.seeds", std::to_string(*seed));
  if (!out.empty()) lo.overrides.emplace_back("experiment.output_dir", out);
  const auto cfg = load_config(config_arg, lo);
  if (dry_run) {
    print_plan(std::cout, cfg, plan_schedule(cfg));
    return 0;
  }
  run_options ro;
  ro.resume = resume;
  ro.verbose = !quiet;
  const auto result = run_experiment(cfg, ro, std::cout);
  std::cout << "median " << (cfg.regression() ? "mse" : "accuracy") << " over " << result.runs.size()
            << " seed(s): " << format_double(result.median_metric) << "\n";
  for (const auto& r : result.runs) {
    if (r.aborted) return 4;
  }
  return 0;
}

int compare_command(const std::vector<std::string>& paths, const std::string& format) {
  std::vector<run_report> reports;
  for (const auto& p : paths) reports.push_back(load_run_report(p));
  const auto c = compare_reports(reports);
  std::cout << (format == "csv" ? format_comparison_csv(c) : format_comparison_text(c));
  return 0;
}

int power_report_command(const std::string& path, const std::string& format) {
  const auto log = load_power_csv(path);
  const auto s = summarize(log);
  if (format == "json") {
    auto j = to_json_value(s);
    j["source"] = log.source;
    j["truncated"] = log.truncated;
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  std::cout << "source: " << (log.source.empty() ? "unknown" : log.source) << (log.truncated ? " (truncated)" : "")
            << "\n"
            << "samples: " << s.samples << "\n"
            << "duration_s: " << format_double(s.duration_s) << "\n"
            << "energy_j: " << format_double(s.energy_j) << "\n"
            << "mean_watts: " << format_double(s.mean_watts) << "\n";
  for (const auto& [phase, e] : s.phase_energy_j) {
    std::cout << "phase " << phase << ": " << format_double(e) << " J over " << format_double(s.phase_duration_s.at(phase))
              << " s\n";
  }
  return 0;
}

int export_masks_command(const std::string& checkpoint, const std::string& out) {
  std::ifstream is(checkpoint, std::ios::binary);
  if (!is) throw ingestion_error("cannot open checkpoint " + checkpoint);
  const auto header = read_archive_header(is, checkpoint);
  const auto& meta = header.at("meta");
  if (!meta.contains("masks")) throw ingestion_error(checkpoint + ": checkpoint carries no masks");
  save_mask_file(out, mask_set_from_json(meta.at("masks")));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured pruning with attention distillation: experiment runner"};
  app.require_subcommand(1);

  std::string config_arg, out;
  bool dry_run = false, resume = false, quiet = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file or bundled preset");
  run->add_option("config", config_arg, "Config path or preset name")->required();
  run->add_flag("--dry-run", dry_run, "Print the resolved schedule and exit");
  run->add_option("--seed", seed, "Run a single seed instead of the configured list");
  run->add_option("--out", out, "Output directory");
  run->add_flag("--resume", resume, "Continue from checkpoints/last.ckpt where present");
  run->add_flag("--quiet", quiet, "Only print per-run summaries");
  run->add_option("--set", sets, "Override a key, e.g. --set train.epochs=5");

  std::vector<std::string> reports;
  std::string format = "text";
  auto* compare = app.add_subcommand("compare", "Compare run summaries against the first (baseline)");
  compare->add_option("reports", reports, "summary.json files or run directories")->required()->expected(2, -1);
  compare->add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "csv"}));

  std::string log_path, power_format = "text";
  auto* power = app.add_subcommand("power-report", "Summarize a power log CSV");
  power->add_option("log", log_path, "Power log")->required();
  power->add_option("--format", power_format, "Output format")->check(CLI::IsMember({"text", "json"}));

  std::string synth_dir;
  synthetic_image_options img;
  auto* synth_images = app.add_subcommand("synth-images", "Write a synthetic CIFAR-layout archive");
  synth_images->add_option("dir", synth_dir)->required();
  synth_images->add_option("--train", img.train_size);
  synth_images->add_option("--val", img.val_size);
  synth_images->add_option("--classes", img.num_classes);
  synth_images->add_option("--seed", img.seed);

  std::string movies_path;
  synthetic_movie_options mov;
  auto* synth_movies = app.add_subcommand("synth-movies", "Write a synthetic movie table");
  synth_movies->add_option("path", movies_path)->required();
  synth_movies->add_option("--rows", mov.rows);
  synth_movies->add_option("--seed", mov.seed);

  std::string manifest_path;
  auto* manifest = app.add_subcommand("manifest", "Write the built-in movie column manifest");
  manifest->add_option("path", manifest_path)->required();

  std::string ckpt, mask_out;
  auto* export_masks = app.add_subcommand("export-masks", "Extract the mask file from a checkpoint");
  export_masks->add_option("checkpoint", ckpt)->required();
  export_masks->add_option("out", mask_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_arg, dry_run, seed, out, resume, quiet, sets);
    if (*compare) return compare_command(reports, format);
    if (*power) return power_report_command(log_path, power_format);
    if (*synth_images) {
      write_synthetic_cifar(synth_dir, img);
      return 0;
    }
    if (*synth_movies) {
      write_synthetic_movies(fs::path(movies_path), mov);
      return 0;
    }
    if (*manifest) {
      std::ofstream os(manifest_path);
      if (!os) throw ingestion_error("cannot write " + manifest_path);
      default_movie_manifest().write(os);
      return 0;
    }
    if (*export_masks) return export_masks_command(ckpt, mask_out);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ingestion_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
