#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sadprune/core/random.hpp"
#include "sadprune/data/csv.hpp"
#include "sadprune/data/images.hpp"
#include "sadprune/data/movies.hpp"

namespace sadprune {

// ---------------------------------------------------------------------------------------------
// CIFAR-layout image corpus. Each class is a colored, oriented grating inside a soft window.
// Classes come in hue pairs and neighbouring classes have neighbouring orientations, so the
// confusion structure is graded rather than uniform. Each image also mixes in a weaker
// pattern from a random other class, jitters the orientation and adds pixel noise. The
// defaults put neighbouring orientations in overlap, so a small network tops out well short
// of perfect accuracy on a 5,000-image subset.

struct synthetic_image_options {
  std::size_t num_classes = 10;
  std::size_t train_size = 50000;
  std::size_t val_size = 10000;
  double noise = 0.8;                // pixel noise std (image range roughly [-1, 1])
  double orientation_jitter = 1.0;   // fraction of the angular gap between classes
  double distractor = 0.9;           // maximum relative amplitude of the other-class pattern
  std::uint64_t seed = 2024;
};

namespace detail {

struct class_pattern {
  std::array<double, 3> color;
  double angle;
  double frequency;  // cycles per image
};

inline std::vector<class_pattern> class_patterns(std::size_t k) {
  std::vector<class_pattern> out;
  const std::size_t hues = (k + 1) / 2;
  for (std::size_t c = 0; c < k; ++c) {
    const double hue = 2 * std::numbers::pi * static_cast<double>(c / 2) / static_cast<double>(hues);
    class_pattern p;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      p.color[ch] = 0.55 + 0.45 * std::cos(hue + 2 * std::numbers::pi * static_cast<double>(ch) / 3.0);
    }
    p.angle = std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    p.frequency = c % 2 ? 4.0 : 2.5;
    out.push_back(p);
  }
  return out;
}

inline void render(const class_pattern& p, double angle, double phase, double cx, double cy, double amp,
                   std::vector<double>& img) {
  const double n = cifar_side;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = 0; y < cifar_side; ++y) {
    for (std::size_t x = 0; x < cifar_side; ++x) {
      const double u = (static_cast<double>(x) - cx) / n, v = (static_cast<double>(y) - cy) / n;
      const double window = std::exp(-(u * u + v * v) / (2 * 0.22 * 0.22));
      const double wave = std::sin(2 * std::numbers::pi * p.frequency * (u * ca + v * sa) + phase);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img[(ch * cifar_side + y) * cifar_side + x] += amp * window * wave * p.color[ch];
      }
    }
  }
}

inline raw_images generate_images(const synthetic_image_options& o, std::size_t count, std::uint64_t stream) {
  rng_t rng(derive_seed(o.seed, stream));
  const auto patterns = class_patterns(o.num_classes);
  raw_images out;
  out.num_classes = o.num_classes;
  out.pixels.resize(count * cifar_pixels);
  out.labels.resize(count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> cls(0, o.num_classes - 1);
  const double gap = std::numbers::pi / static_cast<double>(o.num_classes);
  std::vector<double> img(cifar_pixels);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = i % o.num_classes;  // balanced classes
    out.labels[i] = static_cast<int>(c);
    std::array<double, 3> bg;
    for (auto& b : bg) b = 0.25 * gauss(rng);
    for (std::size_t ch = 0; ch < 3; ++ch) std::fill_n(img.begin() + ch * 1024, 1024, bg[ch]);
    const double jitter = (2 * unit(rng) - 1) * o.orientation_jitter * gap;
    render(patterns[c], patterns[c].angle + jitter, 2 * std::numbers::pi * unit(rng), 10 + 12 * unit(rng),
           10 + 12 * unit(rng), 0.6 + 0.4 * unit(rng), img);
    std::size_t other = cls(rng);
    if (other == c) other = (c + 1) % o.num_classes;
    render(patterns[other], patterns[other].angle, 2 * std::numbers::pi * unit(rng), 6 + 20 * unit(rng),
           6 + 20 * unit(rng), o.distractor * unit(rng), img);
    for (std::size_t k = 0; k < cifar_pixels; ++k) {
      const double v = img[k] + o.noise * gauss(rng);
      out.pixels[i * cifar_pixels + k] = static_cast<std::uint8_t>(std::clamp(std::lround(127.5 + 127.5 * v), 0L, 255L));
    }
  }
  // Interleave classes randomly while keeping exact per-class counts.
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  return take(out, order);
}

}  // namespace detail

/// Writes a CIFAR-10-layout archive of synthetic images into `dir`.
inline void write_synthetic_cifar(const std::filesystem::path& dir, const synthetic_image_options& o) {
  if (o.num_classes < 2 || o.num_classes > 256) throw config_error("synthetic images need 2..256 classes");
  write_cifar10_archive(dir, detail::generate_images(o, o.train_size, 0), detail::generate_images(o, o.val_size, 1));
}

// ---------------------------------------------------------------------------------------------
// Movie table with the default manifest's columns. A latent film quality drives budget,
// runtime and social likes; genres, content rating and plot keywords carry their own
// additive effects on the rating, so every feature group is informative on its own.

struct synthetic_movie_options {
  std::size_t rows = 2000;
  int first_year = 1998;
  int last_year = 2016;
  double missing_rate = 0.02;
  double rating_noise = 0.45;
  std::uint64_t seed = 7;
};

inline void write_synthetic_movies(std::ostream& os, const synthetic_movie_options& o) {
  static const std::vector<std::string> genres{"Action", "Adventure", "Animation", "Comedy", "Crime", "Documentary",
                                               "Drama", "Family", "Fantasy", "Horror", "Romance", "Thriller"};
  static const std::vector<double> genre_effect{-0.2, 0.1, 0.5, -0.3, 0.2, 0.7, 0.6, 0.0, -0.1, -0.9, 0.1, -0.2};
  static const std::vector<std::string> ratings{"G", "PG", "PG-13", "R", "NC-17"};
  static const std::vector<double> rating_effect{0.2, 0.1, -0.2, 0.1, -0.4};
  static const std::vector<std::string> countries{"United States", "United Kingdom", "France", "Germany",
                                                  "Canada", "Japan", "India", "Spain"};
  static const std::vector<std::string> good_words{"masterpiece", "friendship", "journey", "courage", "acclaimed",
                                                   "heartfelt", "redemption", "family", "true", "story"};
  static const std::vector<std::string> bad_words{"sequel", "zombie", "slasher", "parody", "remake",
                                                  "explosion", "chainsaw", "cheerleader", "spoof", "shark"};
  static const std::vector<std::string> neutral{"city", "night", "love", "secret", "war", "man", "woman", "house",
                                                "world", "life", "dark", "time", "young", "team", "road", "lost"};
  rng_t rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](const auto& v) -> const auto& { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
  auto maybe_missing = [&](std::string s) { return unit(rng) < o.missing_rate ? std::string() : s; };

  csv::write_row(os, {"movie_id", "title", "budget", "runtime", "num_companies", "release_day", "release_month",
                      "release_year", "num_languages", "actor_likes", "cast_likes", "director_likes", "crew_likes",
                      "production_countries", "content_rating", "genres", "plot_keywords", "overview", "tagline",
                      "vote_average"});
  for (std::size_t r = 0; r < o.rows; ++r) {
    const double q = gauss(rng);
    const int year = o.first_year + static_cast<int>(unit(rng) * (o.last_year - o.first_year + 1));
    double rating = 6.0 + 0.55 * q;

    const double budget = std::exp(16.5 + 0.5 * q + 0.7 * gauss(rng));
    const double runtime = std::round(105 + 12 * q + 10 * gauss(rng));
    const int companies = 1 + static_cast<int>(std::max(0.0, std::round(2 + 0.8 * q + gauss(rng))));
    const int languages = 1 + static_cast<int>(unit(rng) * 3);
    auto likes = [&](double base) { return std::round(std::exp(base + 0.9 * q + 0.6 * gauss(rng))); };

    std::string genre_cell;
    for (std::size_t g = 0; g < genres.size(); ++g) {
      if (unit(rng) < 0.18) {
        genre_cell += (genre_cell.empty() ? "" : "|") + genres[g];
        rating += genre_effect[g];
      }
    }
    if (genre_cell.empty()) {
      genre_cell = genres[6];
      rating += genre_effect[6];
    }
    const std::size_t cr = std::uniform_int_distribution<std::size_t>(0, ratings.size() - 1)(rng);
    rating += rating_effect[cr];
    std::string country_cell = pick(countries);
    if (unit(rng) < 0.3) country_cell += "|" + pick(countries);

    std::vector<std::string> keywords;
    const int n_good = static_cast<int>(unit(rng) * 4), n_bad = static_cast<int>(unit(rng) * 4);
    for (int k = 0; k < n_good; ++k) keywords.push_back(pick(good_words));
    for (int k = 0; k < n_bad; ++k) keywords.push_back(pick(bad_words));
    for (int k = 0; k < 3; ++k) keywords.push_back(pick(neutral));
    std::shuffle(keywords.begin(), keywords.end(), rng);
    rating += 0.28 * (n_good - n_bad);
    std::string kw_cell, overview = "A", title = pick(neutral) + " " + pick(neutral);
    for (const auto& k : keywords) {
      kw_cell += (kw_cell.empty() ? "" : "|") + k;
      overview += " " + k + (unit(rng) < 0.3 ? "," : "");
    }
    overview += " tale.";
    const std::string tagline = "\"" + pick(neutral) + "\" meets " + pick(keywords);

    rating = std::clamp(rating + o.rating_noise * gauss(rng), 1.0, 10.0);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", rating);
    const auto n = [](double v) {
      char b[32];
      std::snprintf(b, sizeof b, "%.0f", v);
      return std::string(b);
    };
    csv::write_row(os, {std::to_string(r + 1), title, maybe_missing(n(budget)), maybe_missing(n(runtime)),
                        std::to_string(companies), std::to_string(1 + static_cast<int>(unit(rng) * 28)),
                        std::to_string(1 + static_cast<int>(unit(rng) * 12)), std::to_string(year),
                        std::to_string(languages), maybe_missing(n(likes(7.0))), maybe_missing(n(likes(8.0))),
                        maybe_missing(n(likes(5.0))), maybe_missing(n(likes(4.0))), country_cell, ratings[cr],
                        genre_cell, kw_cell, overview, tagline, buf});
  }
}

inline void write_synthetic_movies(const std::filesystem::path& path, const synthetic_movie_options& o) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ingestion_error("cannot write " + path.string());
  write_synthetic_movies(os, o);
}

}  // namespace sadprune
