#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/data/dataset.hpp"

namespace sadprune {

enum class data_split { train, val };

inline constexpr std::size_t cifar_side = 32;
inline constexpr std::size_t cifar_pixels = 3 * cifar_side * cifar_side;

/// Raw decoded archive: uint8 CHW images plus labels.
struct raw_images {
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::size_t size() const { return labels.size(); }
};

struct cifar_layout {
  enum kind_t { cifar10, cifar100 } kind = cifar10;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> train_files;
  std::vector<std::filesystem::path> val_files;
  std::size_t num_classes() const { return kind == cifar10 ? 10 : 100; }
  std::size_t label_bytes() const { return kind == cifar10 ? 1 : 2; }
};

/// Finds a CIFAR-10 (data_batch_{1..5}.bin, test_batch.bin) or CIFAR-100 (train.bin, test.bin)
/// binary archive under `root`, also looking one level down in the usual extracted folder names.
inline cifar_layout detect_cifar_layout(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  for (const fs::path& dir : {root, root / "cifar-10-batches-bin", root / "cifar-100-binary"}) {
    if (fs::exists(dir / "data_batch_1.bin")) {
      cifar_layout l;
      l.kind = cifar_layout::cifar10;
      l.dir = dir;
      for (int i = 1; i <= 5; ++i) l.train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
      l.val_files.push_back(dir / "test_batch.bin");
      return l;
    }
    if (fs::exists(dir / "train.bin")) {
      cifar_layout l;
      l.kind = cifar_layout::cifar100;
      l.dir = dir;
      l.train_files.push_back(dir / "train.bin");
      l.val_files.push_back(dir / "test.bin");
      return l;
    }
  }
  throw ingestion_error("no CIFAR binary archive found under " + root.string() +
                        " (expected data_batch_1.bin or train.bin)");
}

inline void read_cifar_file(const std::filesystem::path& path, const cifar_layout& layout, raw_images& out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ingestion_error("cannot open " + path.string());
  const std::size_t record = layout.label_bytes() + cifar_pixels;
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % record != 0) {
    throw ingestion_error(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                          std::to_string(record) + "-byte record");
  }
  const std::size_t n = bytes.size() / record;
  out.pixels.reserve(out.pixels.size() + n * cifar_pixels);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data() + i * record);
    const int label = rec[layout.label_bytes() - 1];  // CIFAR-100: fine label follows the coarse one
    if (static_cast<std::size_t>(label) >= layout.num_classes()) {
      throw ingestion_error(path.string() + ": record " + std::to_string(i) + " has label " + std::to_string(label));
    }
    out.labels.push_back(label);
    out.pixels.insert(out.pixels.end(), rec + layout.label_bytes(), rec + record);
  }
}

inline raw_images read_cifar_split(const cifar_layout& layout, data_split split) {
  raw_images out;
  out.num_classes = layout.num_classes();
  for (const auto& f : split == data_split::train ? layout.train_files : layout.val_files) read_cifar_file(f, layout, out);
  return out;
}

/// Writes images in the CIFAR-10 single-label record layout (1 label byte + 3072 CHW bytes).
inline void write_cifar10_file(const std::filesystem::path& path, const raw_images& images, std::size_t begin,
                               std::size_t end) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ingestion_error("cannot write " + path.string());
  for (std::size_t i = begin; i < end; ++i) {
    const auto label = static_cast<char>(images.labels[i]);
    os.write(&label, 1);
    os.write(reinterpret_cast<const char*>(images.pixels.data() + i * cifar_pixels), cifar_pixels);
  }
}

/// Lays out a train/val pair as a CIFAR-10 archive directory (train split over five batch files).
inline void write_cifar10_archive(const std::filesystem::path& dir, const raw_images& train, const raw_images& val) {
  std::filesystem::create_directories(dir);
  const std::size_t n = train.size();
  for (std::size_t b = 0; b < 5; ++b) {
    write_cifar10_file(dir / ("data_batch_" + std::to_string(b + 1) + ".bin"), train, n * b / 5, n * (b + 1) / 5);
  }
  write_cifar10_file(dir / "test_batch.bin", val, 0, val.size());
}

struct channel_stats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

inline channel_stats compute_channel_stats(const raw_images& images) {
  channel_stats s;
  const std::size_t plane = cifar_side * cifar_side;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto* p = images.pixels.data() + i * cifar_pixels + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = p[k] / 255.0;
        sum += v;
        sq += v * v;
      }
    }
    const double count = static_cast<double>(images.size() * plane);
    s.mean[c] = sum / count;
    s.stddev[c] = std::sqrt(std::max(sq / count - s.mean[c] * s.mean[c], 1e-12));
  }
  return s;
}

inline dataset to_dataset(const raw_images& images, const channel_stats& stats, bool augment) {
  dataset d;
  d.task = task_kind::classification;
  d.sample_shape = {3, cifar_side, cifar_side};
  d.num_classes = images.num_classes;
  d.labels = images.labels;
  d.augment = augment;
  d.x.resize(images.pixels.size());
  const std::size_t plane = cifar_side * cifar_side;
  for (std::size_t i = 0; i < images.pixels.size(); ++i) {
    const std::size_t c = (i % cifar_pixels) / plane;
    d.x[i] = static_cast<float>((images.pixels[i] / 255.0 - stats.mean[c]) / stats.stddev[c]);
  }
  return d;
}

inline raw_images take(const raw_images& images, const std::vector<std::size_t>& rows) {
  raw_images out;
  out.num_classes = images.num_classes;
  out.pixels.reserve(rows.size() * cifar_pixels);
  for (auto i : rows) {
    out.labels.push_back(images.labels[i]);
    out.pixels.insert(out.pixels.end(), images.pixels.begin() + static_cast<std::ptrdiff_t>(i * cifar_pixels),
                      images.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * cifar_pixels));
  }
  return out;
}

struct image_corpus {
  dataset train;
  dataset val;
  channel_stats stats;
  std::size_t full_train_size = 0;
  std::size_t full_val_size = 0;
};

/// Loads both splits. The stratified subset is drawn independently per split from `seed`;
/// normalization statistics come from the (subset) train split only.
inline image_corpus load_image_corpus(const std::filesystem::path& root, double subset_fraction, std::uint64_t seed) {
  const auto layout = detect_cifar_layout(root);
  auto train = read_cifar_split(layout, data_split::train);
  auto val = read_cifar_split(layout, data_split::val);
  image_corpus c;
  c.full_train_size = train.size();
  c.full_val_size = val.size();
  if (subset_fraction < 1.0) {
    train = take(train, stratified_subset(train.labels, train.num_classes, subset_fraction, derive_seed(seed, 0)));
    val = take(val, stratified_subset(val.labels, val.num_classes, subset_fraction, derive_seed(seed, 1)));
  } else if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    throw config_error("subset_fraction must lie in (0, 1]");
  }
  c.stats = compute_channel_stats(train);
  c.train = to_dataset(train, c.stats, true);
  c.val = to_dataset(val, c.stats, false);
  return c;
}

inline dataset load_images(const std::filesystem::path& root, data_split split, double subset_fraction,
                           std::uint64_t seed) {
  auto c = load_image_corpus(root, subset_fraction, seed);
  return split == data_split::train ? std::move(c.train) : std::move(c.val);
}

}  // namespace sadprune
