#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "sadprune/model_zoo/model.hpp"

namespace sadprune {

/// Pre-activation basic block: bn-relu-conv3x3-bn-relu-conv3x3 plus identity or 1x1 shortcut.
template <typename T>
class wide_block {
 public:
  wide_block(const std::string& id, std::size_t in, std::size_t out, std::size_t stride)
      : id_(id),
        bn1_(id + ".bn1", in),
        conv1_(id + ".conv1", in, out, 3, stride, 1),
        bn2_(id + ".bn2", out),
        conv2_(id + ".conv2", out, out, 3, 1, 1) {
    if (in != out || stride != 1) shortcut_.emplace(id + ".shortcut", in, out, 1, stride, 0);
  }

  void init(rng_t& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (shortcut_) shortcut_->init(rng);
  }

  const std::string& id() const { return id_; }
  bool has_shortcut() const { return shortcut_.has_value(); }
  nn::batch_norm<T>& bn1() { return bn1_; }
  nn::batch_norm<T>& bn2() { return bn2_; }
  nn::conv2d<T>& conv1() { return conv1_; }
  nn::conv2d<T>& conv2() { return conv2_; }
  nn::conv2d<T>* shortcut() { return shortcut_ ? &*shortcut_ : nullptr; }
  const nn::conv2d<T>& conv1() const { return conv1_; }
  const nn::conv2d<T>& conv2() const { return conv2_; }

  tensor<T> forward(const tensor<T>& x, bool training) {
    act1_ = nn::relu(bn1_.forward(x, training));
    act2_ = nn::relu(bn2_.forward(conv1_.forward(act1_), training));
    tensor<T> y = conv2_.forward(act2_);
    if (shortcut_) {
      y += shortcut_->forward(act1_);
    } else {
      y += x;
    }
    return y;
  }

  tensor<T> backward(const tensor<T>& dy) {
    tensor<T> d_act2 = conv2_.backward(dy);
    tensor<T> d_h = bn2_.backward(nn::relu_backward(act2_, std::move(d_act2)));
    tensor<T> d_act1 = conv1_.backward(d_h);
    if (shortcut_) {
      d_act1 += shortcut_->backward(dy);
      return bn1_.backward(nn::relu_backward(act1_, std::move(d_act1)));
    }
    tensor<T> dx = bn1_.backward(nn::relu_backward(act1_, std::move(d_act1)));
    dx += dy;
    return dx;
  }

  void collect(std::vector<nn::parameter<T>*>& ps, std::vector<nn::buffer<T>*>& bs) {
    ps.push_back(&bn1_.gamma());
    ps.push_back(&bn1_.beta());
    ps.push_back(&conv1_.weight());
    ps.push_back(&bn2_.gamma());
    ps.push_back(&bn2_.beta());
    ps.push_back(&conv2_.weight());
    if (shortcut_) ps.push_back(&shortcut_->weight());
    bs.push_back(&bn1_.running_mean());
    bs.push_back(&bn1_.running_var());
    bs.push_back(&bn2_.running_mean());
    bs.push_back(&bn2_.running_var());
  }

 private:
  std::string id_;
  nn::batch_norm<T> bn1_;
  nn::conv2d<T> conv1_;
  nn::batch_norm<T> bn2_;
  nn::conv2d<T> conv2_;
  std::optional<nn::conv2d<T>> shortcut_;
  tensor<T> act1_, act2_;
};

/// WRN-depth-k: 3x3 stem, three groups of (depth-4)/6 blocks with widths 16k, 32k, 64k,
/// then bn-relu-avgpool-linear.
///
/// Taps: the output of each group (4-axis) and the pooled pre-classifier vector (2-axis).
/// Prunable layers: conv1 and conv2 of every block; a block's 1x1 shortcut shares conv2's mask.
template <typename T>
class wide_resnet final : public model<T> {
 public:
  explicit wide_resnet(const model_spec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.family != model_family::wide_resnet) throw structural_error("wide_resnet built from non-WRN spec");
    const std::size_t per_group = (spec_.depth - 4) / 6;
    const std::array<std::size_t, 3> widths{16 * spec_.width_factor, 32 * spec_.width_factor, 64 * spec_.width_factor};
    stem_ = nn::conv2d<T>("stem", 3, 16, 3, 1, 1);
    std::size_t in = 16;
    for (std::size_t g = 0; g < 3; ++g) {
      group_end_.push_back(blocks_.size() + per_group);
      for (std::size_t b = 0; b < per_group; ++b) {
        const std::size_t stride = (g > 0 && b == 0) ? 2 : 1;
        blocks_.emplace_back("group" + std::to_string(g + 1) + ".block" + std::to_string(b + 1), in, widths[g],
                             stride);
        in = widths[g];
      }
    }
    bn_final_ = nn::batch_norm<T>("final.bn", in);
    fc_ = nn::linear<T>("fc", in, spec_.num_outputs);
  }

  void init(rng_t& rng) {
    stem_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    fc_.init(rng);
    fc_.bias().value.zero();
  }

  const model_spec& spec() const override { return spec_; }

  forward_result<T> forward(const tensor<T>& input, bool training) override {
    if (input.rank() != 4 || input.dim(1) != 3) {
      throw input_error("wide-resnet expects (N,3,H,W) images, got " + shape_string(input.shape()));
    }
    forward_result<T> r;
    tensor<T> x = stem_.forward(input);
    std::size_t g = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      x = blocks_[i].forward(x, training);
      if (i + 1 == group_end_[g]) {
        r.features.push_back({"group" + std::to_string(g + 1), x});
        ++g;
      }
    }
    final_act_ = nn::relu(bn_final_.forward(x, training));
    tensor<T> pooled = nn::global_avg_pool(final_act_);
    r.features.push_back({"pooled", pooled});
    r.outputs = fc_.forward(pooled);
    return r;
  }

  void backward(const tensor<T>& grad_outputs, const std::vector<tensor<T>>& tap_grads) override {
    this->check_tap_grads(tap_grads, 4);
    auto tap = [&](std::size_t i) -> const tensor<T>* {
      return (!tap_grads.empty() && !tap_grads[i].empty()) ? &tap_grads[i] : nullptr;
    };
    tensor<T> d_pooled = fc_.backward(grad_outputs);
    if (const auto* t = tap(3)) d_pooled += *t;
    tensor<T> d = bn_final_.backward(
        nn::relu_backward(final_act_, nn::global_avg_pool_backward(d_pooled, final_act_.shape())));
    std::size_t g = 3;
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      if (g > 0 && i + 1 == group_end_[g - 1]) {
        --g;
        if (const auto* t = tap(g)) d += *t;
      }
      d = blocks_[i].backward(d);
    }
    stem_.backward(d, false);
  }

  std::vector<nn::parameter<T>*> parameters() override {
    std::vector<nn::parameter<T>*> ps;
    std::vector<nn::buffer<T>*> bs;
    collect(ps, bs);
    return ps;
  }

  std::vector<nn::buffer<T>*> buffers() override {
    std::vector<nn::parameter<T>*> ps;
    std::vector<nn::buffer<T>*> bs;
    collect(ps, bs);
    return bs;
  }

  std::vector<std::string> tap_ids() const override { return {"group1", "group2", "group3", "pooled"}; }

  std::vector<prunable_layer> prunable_layers() const override {
    std::vector<prunable_layer> out;
    for (const auto& b : blocks_) {
      out.push_back({b.id() + ".conv1", b.conv1().out_channels()});
      out.push_back({b.id() + ".conv2", b.conv2().out_channels()});
    }
    return out;
  }

  const nn::parameter<T>& filter_weights(const std::string& layer_id) const override {
    for (const auto& b : blocks_) {
      if (layer_id == b.id() + ".conv1") return b.conv1().weight();
      if (layer_id == b.id() + ".conv2") return b.conv2().weight();
    }
    throw structural_error("wide-resnet has no prunable layer '" + layer_id + "'");
  }

  std::vector<tensor<T>> parameter_masks(const mask_set& masks) const override {
    masks.require_matches(prunable_layers());
    auto* self = const_cast<wide_resnet*>(this);
    std::vector<tensor<T>> out;
    auto channel_mask = [](const nn::parameter<T>& p, const std::vector<bool>& alive) {
      tensor<T> m(p.value.shape());
      for (std::size_t c = 0; c < alive.size(); ++c) m[c] = alive[c] ? T{1} : T{0};
      return m;
    };
    auto conv_mask = [](const nn::parameter<T>& p, const std::vector<bool>& out_alive,
                        const std::vector<bool>& in_alive) {
      tensor<T> m(p.value.shape());
      const std::size_t kk = p.value.dim(2) * p.value.dim(3);
      for (std::size_t o = 0; o < out_alive.size(); ++o) {
        for (std::size_t i = 0; i < in_alive.size(); ++i) {
          std::fill_n(m.data() + (o * in_alive.size() + i) * kk, kk, keep_value<T>(out_alive[o], in_alive[i]));
        }
      }
      return m;
    };

    out.push_back(tensor<T>(stem_.weight().value.shape(), T{1}));
    std::vector<bool> stream(16, true);
    for (auto& b : self->blocks_) {
      const auto& mid = masks.at(b.id() + ".conv1");
      const auto& blk = masks.at(b.id() + ".conv2");
      out.push_back(channel_mask(b.bn1().gamma(), stream));
      out.push_back(channel_mask(b.bn1().beta(), stream));
      out.push_back(conv_mask(b.conv1().weight(), mid, stream));
      out.push_back(channel_mask(b.bn2().gamma(), mid));
      out.push_back(channel_mask(b.bn2().beta(), mid));
      out.push_back(conv_mask(b.conv2().weight(), blk, mid));
      if (b.has_shortcut()) {
        out.push_back(conv_mask(b.shortcut()->weight(), blk, stream));
        stream = blk;
      } else {
        for (std::size_t c = 0; c < stream.size(); ++c) stream[c] = stream[c] || blk[c];
      }
    }
    out.push_back(channel_mask(bn_final_.gamma(), stream));
    out.push_back(channel_mask(bn_final_.beta(), stream));
    tensor<T> fc_mask(fc_.weight().value.shape());
    for (std::size_t o = 0; o < fc_.out_features(); ++o) {
      for (std::size_t i = 0; i < stream.size(); ++i) fc_mask.at(o, i) = stream[i] ? T{1} : T{0};
    }
    out.push_back(std::move(fc_mask));
    out.push_back(tensor<T>(fc_.bias().value.shape(), T{1}));
    return out;
  }

  std::unique_ptr<model<T>> clone() const override { return std::make_unique<wide_resnet>(*this); }

  std::size_t block_count() const { return blocks_.size(); }
  wide_block<T>& block(std::size_t i) { return blocks_.at(i); }

 private:
  void collect(std::vector<nn::parameter<T>*>& ps, std::vector<nn::buffer<T>*>& bs) {
    ps.push_back(&stem_.weight());
    for (auto& b : blocks_) b.collect(ps, bs);
    ps.push_back(&bn_final_.gamma());
    ps.push_back(&bn_final_.beta());
    ps.push_back(&fc_.weight());
    ps.push_back(&fc_.bias());
    bs.push_back(&bn_final_.running_mean());
    bs.push_back(&bn_final_.running_var());
  }

  model_spec spec_;
  nn::conv2d<T> stem_;
  std::vector<wide_block<T>> blocks_;
  std::vector<std::size_t> group_end_;
  nn::batch_norm<T> bn_final_;
  nn::linear<T> fc_;
  tensor<T> final_act_;
};

}  // namespace sadprune
