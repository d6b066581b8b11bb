#pragma once

#include "sadprune/model_zoo/zoo.hpp"
#include "sadprune/prune/mask_set.hpp"
#include "sadprune/train/optimizer.hpp"

namespace sadprune {

namespace detail {

template <typename T>
void rewind(model<T>& m, const weight_snapshot<T>& snap, const mask_set& masks, sgd<T>* opt) {
  masks.require_matches(m.prunable_layers());
  restore(m, snap);
  apply_mask(m, masks);
  if (opt) opt->reset();
}

}  // namespace detail

/// Carry-forward reinitialization: surviving weights take their values from the previous pruning round.
template <typename T>
void reinit_sp(model<T>& m, const weight_snapshot<T>& prev, const mask_set& masks, sgd<T>* opt = nullptr) {
  if (prev.tag() != snapshot_tag::previous_round) {
    throw structural_error("reinit_sp needs a previous_round snapshot, got " + to_string(prev.tag()));
  }
  detail::rewind(m, prev, masks, opt);
}

/// Lottery-ticket rewind: surviving weights return to their initialization values.
template <typename T>
void reinit_lth(model<T>& m, const weight_snapshot<T>& init, const mask_set& masks, sgd<T>* opt = nullptr) {
  if (init.tag() != snapshot_tag::init) {
    throw structural_error("reinit_lth needs an init snapshot, got " + to_string(init.tag()));
  }
  detail::rewind(m, init, masks, opt);
}

}  // namespace sadprune
