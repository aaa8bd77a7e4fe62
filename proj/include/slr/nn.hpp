// Copyright 2026 The slrkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Layers and composite blocks. Modules own their parameters and report them
// (and their buffers) through visit_state with dotted path names.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "slr/tensor.hpp"

namespace slr {

template <typename S>
struct Parameter {
  Tensor<S> value;
  std::vector<S> adam_m, adam_v;  // optimizer state, zero-initialized

  void assign(Tensor<S> v) {
    value = std::move(v);
    value.set_requires_grad(true);
    adam_m.assign(static_cast<size_t>(value.size()), S(0));
    adam_v.assign(static_cast<size_t>(value.size()), S(0));
  }
};

template <typename S>
using ParamFn = std::function<void(const std::string&, Parameter<S>&)>;
template <typename S>
using BufferFn = std::function<void(const std::string&, std::vector<S>&)>;

template <typename S>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<S> forward(const Tensor<S>& x) = 0;
  virtual void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                           const BufferFn<S>& on_buffer) = 0;
  virtual void set_train(bool) {}
};

// He-uniform fan-in initialization.
template <typename S>
Tensor<S> he_uniform(const Shape& shape, int fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<S> data(static_cast<size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<S>(dist(rng));
  return Tensor<S>::from_data(shape, std::move(data));
}

template <typename S>
class Conv1dLayer : public Module<S> {
 public:
  Conv1dLayer(int c_in, int c_out, int k, int stride, int dilation, int pad,
              std::mt19937_64& rng)
      : stride_(stride), dilation_(dilation), pad_(pad) {
    if (c_in < 1 || c_out < 1) {
      throw ConfigError("conv1d layer: channel counts must be positive");
    }
    weight_.assign(he_uniform<S>({c_out, c_in, k}, c_in * k, rng));
    bias_.assign(Tensor<S>::zeros({c_out}));
  }

  Tensor<S> forward(const Tensor<S>& x) override {
    return conv1d(x, weight_.value, bias_.value, stride_, dilation_, pad_);
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>&) override {
    on_param(prefix + ".weight", weight_);
    on_param(prefix + ".bias", bias_);
  }

 private:
  int stride_, dilation_, pad_;
  Parameter<S> weight_, bias_;
};

template <typename S>
class Conv2dLayer : public Module<S> {
 public:
  Conv2dLayer(int c_in, int c_out, int kh, int kw, std::pair<int, int> stride,
              std::pair<int, int> pad, std::mt19937_64& rng)
      : stride_(stride), pad_(pad) {
    if (c_in < 1 || c_out < 1) {
      throw ConfigError("conv2d layer: channel counts must be positive");
    }
    weight_.assign(he_uniform<S>({c_out, c_in, kh, kw}, c_in * kh * kw, rng));
    bias_.assign(Tensor<S>::zeros({c_out}));
  }

  Tensor<S> forward(const Tensor<S>& x) override {
    return conv2d(x, weight_.value, bias_.value, stride_, pad_);
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>&) override {
    on_param(prefix + ".weight", weight_);
    on_param(prefix + ".bias", bias_);
  }

 private:
  std::pair<int, int> stride_, pad_;
  Parameter<S> weight_, bias_;
};

template <typename S>
class DenseLayer : public Module<S> {
 public:
  DenseLayer(int d_in, int d_out, std::mt19937_64& rng) {
    if (d_in < 1 || d_out < 1) {
      throw ConfigError("dense layer: dimensions must be positive");
    }
    weight_.assign(he_uniform<S>({d_out, d_in}, d_in, rng));
    bias_.assign(Tensor<S>::zeros({d_out}));
  }

  Tensor<S> forward(const Tensor<S>& x) override {
    return dense(x, weight_.value, bias_.value);
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>&) override {
    on_param(prefix + ".weight", weight_);
    on_param(prefix + ".bias", bias_);
  }

 private:
  Parameter<S> weight_, bias_;
};

template <typename S>
class BatchNormLayer : public Module<S> {
 public:
  explicit BatchNormLayer(int channels) {
    gamma_.assign(Tensor<S>::full({channels}, S(1)));
    beta_.assign(Tensor<S>::zeros({channels}));
    running_mean_.assign(static_cast<size_t>(channels), S(0));
    running_var_.assign(static_cast<size_t>(channels), S(1));
  }

  Tensor<S> forward(const Tensor<S>& x) override {
    return batch_norm(x, gamma_.value, beta_.value, running_mean_, running_var_,
                      train_);
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>& on_buffer) override {
    on_param(prefix + ".gamma", gamma_);
    on_param(prefix + ".beta", beta_);
    on_buffer(prefix + ".running_mean", running_mean_);
    on_buffer(prefix + ".running_var", running_var_);
  }

  void set_train(bool train) override { train_ = train; }

 private:
  Parameter<S> gamma_, beta_;
  std::vector<S> running_mean_, running_var_;
  bool train_ = false;
};

// Temporal residual block: two k=9 convolutions with batch norm, ReLU after
// the residual add. The skip path is a strided 1x1 convolution + BN whenever
// the shape changes.
template <typename S>
class TcResBlock : public Module<S> {
 public:
  TcResBlock(int c_in, int c_out, int stride, std::mt19937_64& rng, int k = 9)
      : conv1_(c_in, c_out, k, stride, 1, k / 2, rng),
        bn1_(c_out),
        conv2_(c_out, c_out, k, 1, 1, k / 2, rng),
        bn2_(c_out) {
    if (stride != 1 || c_in != c_out) {
      skip_conv_ = std::make_unique<Conv1dLayer<S>>(c_in, c_out, 1, stride, 1, 0, rng);
      skip_bn_ = std::make_unique<BatchNormLayer<S>>(c_out);
    }
  }

  Tensor<S> forward(const Tensor<S>& x) override {
    auto h = relu(bn1_.forward(conv1_.forward(x)));
    h = bn2_.forward(conv2_.forward(h));
    auto shortcut = skip_conv_ ? skip_bn_->forward(skip_conv_->forward(x)) : x;
    return relu(add(h, shortcut));
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>& on_buffer) override {
    conv1_.visit_state(prefix + ".conv1", on_param, on_buffer);
    bn1_.visit_state(prefix + ".bn1", on_param, on_buffer);
    conv2_.visit_state(prefix + ".conv2", on_param, on_buffer);
    bn2_.visit_state(prefix + ".bn2", on_param, on_buffer);
    if (skip_conv_) {
      skip_conv_->visit_state(prefix + ".skip.conv", on_param, on_buffer);
      skip_bn_->visit_state(prefix + ".skip.bn", on_param, on_buffer);
    }
  }

  void set_train(bool train) override {
    bn1_.set_train(train);
    bn2_.set_train(train);
    if (skip_bn_) skip_bn_->set_train(train);
  }

 private:
  Conv1dLayer<S> conv1_;
  BatchNormLayer<S> bn1_;
  Conv1dLayer<S> conv2_;
  BatchNormLayer<S> bn2_;
  std::unique_ptr<Conv1dLayer<S>> skip_conv_;
  std::unique_ptr<BatchNormLayer<S>> skip_bn_;
};

// SE-Res2Net block: 1x1 conv, hierarchical dilated group convolutions, 1x1
// conv, squeeze-excitation gate, residual add. Channel count is preserved.
template <typename S>
class SeRes2NetBlock : public Module<S> {
 public:
  SeRes2NetBlock(int channels, int scale, int dilation, int se_bottleneck,
                 std::mt19937_64& rng)
      : channels_(channels),
        scale_(scale),
        tdnn1_(channels, channels, 1, 1, 1, 0, rng),
        bn1_(channels),
        tdnn2_(channels, channels, 1, 1, 1, 0, rng),
        bn2_(channels),
        se_fc1_(channels, se_bottleneck, rng),
        se_fc2_(se_bottleneck, channels, rng) {
    if (scale < 2) {
      throw ConfigError("se_res2net: scale must be >= 2, got " + std::to_string(scale));
    }
    if (channels % scale != 0) {
      throw ConfigError("se_res2net: channels " + std::to_string(channels) +
                        " not divisible by scale " + std::to_string(scale));
    }
    const int group = channels / scale;
    for (int i = 1; i < scale; ++i) {
      group_convs_.push_back(
          std::make_unique<Conv1dLayer<S>>(group, group, 3, 1, dilation, dilation, rng));
      group_bns_.push_back(std::make_unique<BatchNormLayer<S>>(group));
    }
  }

  Tensor<S> forward(const Tensor<S>& x) override {
    auto h = bn1_.forward(relu(tdnn1_.forward(x)));

    const int group = channels_ / scale_;
    std::vector<Tensor<S>> outs;
    outs.reserve(static_cast<size_t>(scale_));
    // First group passes through; group i adds the previous group's output
    // before its dilated convolution.
    outs.push_back(slice_channels(h, 0, group));
    for (int i = 1; i < scale_; ++i) {
      auto g = slice_channels(h, i * group, (i + 1) * group);
      auto mixed = add(g, outs.back());
      auto y = group_bns_[static_cast<size_t>(i) - 1]->forward(
          relu(group_convs_[static_cast<size_t>(i) - 1]->forward(mixed)));
      outs.push_back(std::move(y));
    }
    auto merged = concat_channels(outs);

    auto h2 = bn2_.forward(relu(tdnn2_.forward(merged)));

    auto squeezed = mean_time(h2);
    auto gate = sigmoid(se_fc2_.forward(relu(se_fc1_.forward(squeezed))));
    auto gated = channel_scale(h2, gate);
    return add(gated, x);
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>& on_buffer) override {
    tdnn1_.visit_state(prefix + ".tdnn1", on_param, on_buffer);
    bn1_.visit_state(prefix + ".bn1", on_param, on_buffer);
    for (size_t i = 0; i < group_convs_.size(); ++i) {
      group_convs_[i]->visit_state(prefix + ".res2." + std::to_string(i + 1) + ".conv",
                                   on_param, on_buffer);
      group_bns_[i]->visit_state(prefix + ".res2." + std::to_string(i + 1) + ".bn",
                                 on_param, on_buffer);
    }
    tdnn2_.visit_state(prefix + ".tdnn2", on_param, on_buffer);
    bn2_.visit_state(prefix + ".bn2", on_param, on_buffer);
    se_fc1_.visit_state(prefix + ".se.fc1", on_param, on_buffer);
    se_fc2_.visit_state(prefix + ".se.fc2", on_param, on_buffer);
  }

  void set_train(bool train) override {
    bn1_.set_train(train);
    bn2_.set_train(train);
    for (auto& bn : group_bns_) bn->set_train(train);
  }

 private:
  int channels_, scale_;
  Conv1dLayer<S> tdnn1_;
  BatchNormLayer<S> bn1_;
  std::vector<std::unique_ptr<Conv1dLayer<S>>> group_convs_;
  std::vector<std::unique_ptr<BatchNormLayer<S>>> group_bns_;
  Conv1dLayer<S> tdnn2_;
  BatchNormLayer<S> bn2_;
  DenseLayer<S> se_fc1_, se_fc2_;
};

// Attentive statistics pooling: per-channel frame scores through a tanh
// bottleneck, softmax over time, weighted mean/std concatenation.
template <typename S>
class AttentiveStatsPool : public Module<S> {
 public:
  AttentiveStatsPool(int channels, int attention_dim, std::mt19937_64& rng)
      : att1_(channels, attention_dim, 1, 1, 1, 0, rng),
        att2_(attention_dim, channels, 1, 1, 1, 0, rng) {}

  Tensor<S> forward(const Tensor<S>& x) override {
    auto scores = att2_.forward(tanh(att1_.forward(x)));
    auto weights = softmax(scores, 2);
    return stats_pool(x, weights);
  }

  void visit_state(const std::string& prefix, const ParamFn<S>& on_param,
                   const BufferFn<S>& on_buffer) override {
    att1_.visit_state(prefix + ".att1", on_param, on_buffer);
    att2_.visit_state(prefix + ".att2", on_param, on_buffer);
  }

 private:
  Conv1dLayer<S> att1_, att2_;
};

}  // namespace slr
