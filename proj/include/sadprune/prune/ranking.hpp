#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "sadprune/core/error.hpp"
#include "sadprune/model_zoo/model.hpp"
#include "sadprune/prune/mask_set.hpp"

namespace sadprune {

enum class strategy { sad, sp_sad, lth_sad, ss_sad };
enum class prune_scope { per_layer, global };

inline std::string to_string(strategy s) {
  switch (s) {
    case strategy::sad: return "SAD";
    case strategy::sp_sad: return "SP-SAD";
    case strategy::lth_sad: return "LTH-SAD";
    case strategy::ss_sad: return "SS-SAD";
  }
  return "?";
}

inline strategy parse_strategy(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  std::replace(s.begin(), s.end(), '_', '-');
  if (s == "SAD") return strategy::sad;
  if (s == "SP-SAD") return strategy::sp_sad;
  if (s == "LTH-SAD") return strategy::lth_sad;
  if (s == "SS-SAD") return strategy::ss_sad;
  throw config_error("unknown strategy '" + s + "' (expected SAD, SP-SAD, LTH-SAD or SS-SAD)");
}

inline std::string to_string(prune_scope s) { return s == prune_scope::per_layer ? "per-layer" : "global"; }

inline prune_scope parse_scope(const std::string& s) {
  if (s == "per-layer" || s == "per_layer") return prune_scope::per_layer;
  if (s == "global") return prune_scope::global;
  throw config_error("unknown prune scope '" + s + "'");
}

struct prune_config {
  double rate = 0.1;          // fraction of each layer's original channels removed per round
  std::size_t every = 20;     // epochs between pruning events
  strategy strat = strategy::sp_sad;
  prune_scope scope = prune_scope::per_layer;

  void validate() const {
    if (!(rate > 0.0 && rate < 1.0)) throw config_error("prune rate must lie in (0, 1), got " + std::to_string(rate));
    if (every == 0) throw config_error("prune_every must be >= 1");
  }
};

using channel_scores = std::map<std::string, std::vector<double>>;

/// L1 norm of each output channel's filter; channels already pruned score -infinity.
template <typename T>
channel_scores rank_channels(const model<T>& m, const mask_set& masks) {
  const auto layers = m.prunable_layers();
  masks.require_matches(layers);
  channel_scores scores;
  for (const auto& l : layers) {
    const auto& w = m.filter_weights(l.id).value;
    const std::size_t per = w.size() / l.channels;
    const auto& keep = masks.at(l.id);
    std::vector<double> s(l.channels);
    for (std::size_t c = 0; c < l.channels; ++c) {
      if (!keep[c]) {
        s[c] = -std::numeric_limits<double>::infinity();
        continue;
      }
      double acc = 0;
      for (std::size_t j = 0; j < per; ++j) acc += std::abs(static_cast<double>(w[c * per + j]));
      s[c] = acc;
    }
    scores.emplace(l.id, std::move(s));
  }
  return scores;
}

/// Outcome details of one extract_mask call.
struct prune_report {
  std::size_t requested = 0;  // channels the rate asked for
  std::size_t removed = 0;
  bool saturated = false;     // some layer hit the one-channel floor
};

namespace detail {

/// Surviving channel indices sorted by ascending score, lower index first on ties.
inline std::vector<std::size_t> ascending_survivors(const std::vector<double>& s, const std::vector<bool>& keep) {
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < keep.size(); ++c) {
    if (keep[c]) idx.push_back(c);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  return idx;
}

inline std::size_t removal_count(double rate, std::size_t original) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(original) + 1e-9));
}

}  // namespace detail

/// Next-round masks: drops the lowest-scoring surviving channels. Per-layer scope removes
/// floor(rate * original) channels from each layer; global scope removes floor(rate * total)
/// channels ranked by mean absolute filter weight across all layers. No layer drops below one channel.
inline mask_set extract_mask(const channel_scores& scores, const mask_set& masks, const prune_config& cfg,
                             prune_report* report = nullptr) {
  cfg.validate();
  mask_set next = masks;
  next.round = masks.round + 1;
  prune_report rep;
  for (const auto& l : masks.layers) {
    auto it = scores.find(l.id);
    if (it == scores.end()) throw structural_error("scores missing prunable layer '" + l.id + "'");
    if (it->second.size() != l.keep.size()) throw structural_error("score vector for '" + l.id + "' has wrong length");
  }
  if (cfg.scope == prune_scope::per_layer) {
    for (auto& l : next.layers) {
      const std::size_t want = detail::removal_count(cfg.rate, l.keep.size());
      const std::size_t alive = l.surviving();
      const std::size_t can = alive > 0 ? alive - 1 : 0;
      const std::size_t take = std::min(want, can);
      if (want > can) rep.saturated = true;
      const auto order = detail::ascending_survivors(scores.at(l.id), l.keep);
      for (std::size_t i = 0; i < take; ++i) l.keep[order[i]] = false;
      rep.requested += want;
      rep.removed += take;
    }
  } else {
    struct candidate {
      double score;
      std::size_t layer, channel;
    };
    std::vector<candidate> all;
    std::vector<std::size_t> alive(next.layers.size());
    for (std::size_t li = 0; li < next.layers.size(); ++li) {
      const auto& l = next.layers[li];
      alive[li] = l.surviving();
      const auto& s = scores.at(l.id);
      for (std::size_t c = 0; c < l.keep.size(); ++c) {
        if (l.keep[c]) all.push_back({s[c], li, c});
      }
    }
    std::stable_sort(all.begin(), all.end(), [](const candidate& a, const candidate& b) { return a.score < b.score; });
    const std::size_t want = detail::removal_count(cfg.rate, masks.original_channels());
    rep.requested = want;
    for (const auto& cand : all) {
      if (rep.removed == want) break;
      if (alive[cand.layer] <= 1) {
        rep.saturated = true;
        continue;
      }
      next.layers[cand.layer].keep[cand.channel] = false;
      --alive[cand.layer];
      ++rep.removed;
    }
    if (rep.removed < want) rep.saturated = true;
  }
  next.cumulative_sparsity = next.recompute_sparsity();
  if (report) *report = rep;
  return next;
}

/// Scores normalized by filter size so channels of different layers are comparable under global scope.
template <typename T>
channel_scores rank_channels_normalized(const model<T>& m, const mask_set& masks) {
  auto scores = rank_channels(m, masks);
  for (const auto& l : m.prunable_layers()) {
    const double per = static_cast<double>(m.filter_weights(l.id).value.size() / l.channels);
    for (auto& v : scores.at(l.id)) v /= per;
  }
  return scores;
}

/// Ranks with the criterion matching the scope, then extracts the next masks.
template <typename T>
mask_set next_masks(const model<T>& m, const mask_set& masks, const prune_config& cfg, prune_report* report = nullptr) {
  const auto scores = cfg.scope == prune_scope::global ? rank_channels_normalized(m, masks) : rank_channels(m, masks);
  return extract_mask(scores, masks, cfg, report);
}

}  // namespace sadprune
