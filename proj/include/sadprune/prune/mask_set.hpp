#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadprune/core/error.hpp"

namespace sadprune {

/// A layer whose output channels can be removed.
struct prunable_layer {
  std::string id;
  std::size_t channels = 0;
};

struct layer_mask {
  std::string id;
  std::vector<bool> keep;

  std::size_t surviving() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true)); }
};

/// Per-layer channel masks: the structured-sparsity state of a student.
struct mask_set {
  std::vector<layer_mask> layers;
  std::size_t round = 0;
  double cumulative_sparsity = 0.0;

  static mask_set all_ones(const std::vector<prunable_layer>& prunable) {
    mask_set m;
    for (const auto& p : prunable) m.layers.push_back({p.id, std::vector<bool>(p.channels, true)});
    return m;
  }

  const layer_mask* find(const std::string& id) const {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const layer_mask& l) { return l.id == id; });
    return it == layers.end() ? nullptr : &*it;
  }

  const std::vector<bool>& at(const std::string& id) const {
    if (const auto* l = find(id)) return l->keep;
    throw structural_error("mask set has no layer '" + id + "'");
  }

  std::size_t original_channels() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.keep.size();
    return n;
  }

  std::size_t surviving_channels() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.surviving();
    return n;
  }

  /// 1 - surviving / original over every prunable layer.
  double recompute_sparsity() const {
    const std::size_t total = original_channels();
    return total == 0 ? 0.0 : 1.0 - static_cast<double>(surviving_channels()) / static_cast<double>(total);
  }

  /// Throws unless ids and lengths match `prunable` exactly (same order).
  void require_matches(const std::vector<prunable_layer>& prunable) const {
    if (prunable.size() != layers.size()) {
      throw structural_error("mask set has " + std::to_string(layers.size()) + " layers, model has " +
                             std::to_string(prunable.size()) + " prunable layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].id != prunable[i].id || layers[i].keep.size() != prunable[i].channels) {
        throw structural_error("mask layer '" + layers[i].id + "' (" + std::to_string(layers[i].keep.size()) +
                               " channels) does not match model layer '" + prunable[i].id + "' (" +
                               std::to_string(prunable[i].channels) + " channels)");
      }
    }
  }

  /// True when every channel dropped in `earlier` is also dropped here.
  bool is_subset_of(const mask_set& earlier) const {
    if (earlier.layers.size() != layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& now = layers[i].keep;
      const auto& before = earlier.layers[i].keep;
      if (now.size() != before.size()) return false;
      for (std::size_t c = 0; c < now.size(); ++c) {
        if (now[c] && !before[c]) return false;
      }
    }
    return true;
  }
};

// Mask file: bitmaps as '0'/'1' strings keyed by layer id.
inline nlohmann::json to_json_value(const mask_set& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers) {
    std::string bits(l.keep.size(), '0');
    for (std::size_t c = 0; c < l.keep.size(); ++c) bits[c] = l.keep[c] ? '1' : '0';
    layers.push_back({{"id", l.id}, {"channels", l.keep.size()}, {"bitmap", bits}});
  }
  return {{"format", "sadprune-masks"},
          {"version", 1},
          {"round", m.round},
          {"cumulative_sparsity", m.cumulative_sparsity},
          {"layers", layers}};
}

inline mask_set mask_set_from_json(const nlohmann::json& j) {
  mask_set m;
  m.round = j.at("round").get<std::size_t>();
  m.cumulative_sparsity = j.at("cumulative_sparsity").get<double>();
  for (const auto& l : j.at("layers")) {
    const auto bits = l.at("bitmap").get<std::string>();
    layer_mask lm{l.at("id").get<std::string>(), std::vector<bool>(bits.size())};
    for (std::size_t c = 0; c < bits.size(); ++c) {
      if (bits[c] != '0' && bits[c] != '1') throw structural_error("mask bitmap for '" + lm.id + "' is not binary");
      lm.keep[c] = bits[c] == '1';
    }
    if (l.contains("channels") && l.at("channels").get<std::size_t>() != bits.size()) {
      throw structural_error("mask bitmap for '" + lm.id + "' has wrong length");
    }
    m.layers.push_back(std::move(lm));
  }
  return m;
}

}  // namespace sadprune
