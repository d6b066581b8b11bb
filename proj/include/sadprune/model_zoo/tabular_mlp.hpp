#pragma once

#include <string>
#include <vector>

#include "sadprune/model_zoo/model.hpp"

namespace sadprune {

/// Multi-layer perceptron for tabular inputs. Every hidden layer is a tap and is prunable.
template <typename T>
class tabular_mlp final : public model<T> {
 public:
  explicit tabular_mlp(const model_spec& spec) : spec_(spec) {
    spec_.validate();
    if (spec_.family != model_family::tabular_mlp) throw structural_error("tabular_mlp built from non-MLP spec");
    std::size_t in = spec_.input_features;
    const auto widths = spec_.mlp_widths();
    for (std::size_t i = 0; i < widths.size(); ++i) {
      hidden_.emplace_back("fc" + std::to_string(i + 1), in, widths[i]);
      in = widths[i];
    }
    out_ = nn::linear<T>("out", in, spec_.num_outputs);
  }

  void init(rng_t& rng) {
    for (auto& h : hidden_) h.init(rng);
    out_.init(rng);
  }

  const model_spec& spec() const override { return spec_; }

  forward_result<T> forward(const tensor<T>& input, bool /*training*/) override {
    if (input.rank() != 2 || input.dim(1) != spec_.input_features) {
      throw input_error("tabular-mlp expects (N," + std::to_string(spec_.input_features) + ") rows, got " +
                        shape_string(input.shape()));
    }
    forward_result<T> r;
    acts_.clear();
    tensor<T> x = input;
    for (auto& h : hidden_) {
      x = nn::relu(h.forward(x));
      acts_.push_back(x);
      r.features.push_back({h.weight().name.substr(0, h.weight().name.find('.')), x});
    }
    r.outputs = out_.forward(x);
    return r;
  }

  void backward(const tensor<T>& grad_outputs, const std::vector<tensor<T>>& tap_grads) override {
    this->check_tap_grads(tap_grads, hidden_.size());
    tensor<T> d = out_.backward(grad_outputs);
    for (std::size_t i = hidden_.size(); i-- > 0;) {
      if (!tap_grads.empty() && !tap_grads[i].empty()) d += tap_grads[i];
      d = hidden_[i].backward(nn::relu_backward(acts_[i], std::move(d)), i > 0);
    }
  }

  std::vector<nn::parameter<T>*> parameters() override {
    std::vector<nn::parameter<T>*> ps;
    for (auto& h : hidden_) {
      ps.push_back(&h.weight());
      ps.push_back(&h.bias());
    }
    ps.push_back(&out_.weight());
    ps.push_back(&out_.bias());
    return ps;
  }

  std::vector<nn::buffer<T>*> buffers() override { return {}; }

  std::vector<std::string> tap_ids() const override {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < hidden_.size(); ++i) ids.push_back("fc" + std::to_string(i + 1));
    return ids;
  }

  std::vector<prunable_layer> prunable_layers() const override {
    std::vector<prunable_layer> out;
    for (std::size_t i = 0; i < hidden_.size(); ++i) out.push_back({"fc" + std::to_string(i + 1), hidden_[i].out_features()});
    return out;
  }

  const nn::parameter<T>& filter_weights(const std::string& layer_id) const override {
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      if (layer_id == "fc" + std::to_string(i + 1)) return hidden_[i].weight();
    }
    throw structural_error("tabular-mlp has no prunable layer '" + layer_id + "'");
  }

  std::vector<tensor<T>> parameter_masks(const mask_set& masks) const override {
    masks.require_matches(prunable_layers());
    std::vector<tensor<T>> out;
    std::vector<bool> in_alive(spec_.input_features, true);
    auto dense = [&](const nn::linear<T>& l, const std::vector<bool>& out_alive) {
      tensor<T> w(l.weight().value.shape());
      for (std::size_t o = 0; o < l.out_features(); ++o) {
        for (std::size_t i = 0; i < l.in_features(); ++i) w.at(o, i) = keep_value<T>(out_alive[o], in_alive[i]);
      }
      tensor<T> b(l.bias().value.shape());
      for (std::size_t o = 0; o < l.out_features(); ++o) b[o] = out_alive[o] ? T{1} : T{0};
      out.push_back(std::move(w));
      out.push_back(std::move(b));
    };
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
      const auto& keep = masks.layers[i].keep;
      dense(hidden_[i], keep);
      in_alive = keep;
    }
    dense(out_, std::vector<bool>(out_.out_features(), true));
    return out;
  }

  std::unique_ptr<model<T>> clone() const override { return std::make_unique<tabular_mlp>(*this); }

 private:
  model_spec spec_;
  std::vector<nn::linear<T>> hidden_;
  nn::linear<T> out_;
  std::vector<tensor<T>> acts_;
};

}  // namespace sadprune
