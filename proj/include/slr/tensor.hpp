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

// Dense row-major tensors with reverse-mode differentiation, scalar-templated
// (float for training/inference, double for finite-difference checks). The
// heavy ops (convolutions, dense layers) lower to Eigen GEMMs via im2col; all
// reductions use a fixed summation order so repeated runs are bit-identical.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "slr/common.hpp"

namespace slr {

using Shape = std::vector<int>;

inline int numel(const Shape& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void(Node<S>&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }
};

inline thread_local int no_grad_depth = 0;

}  // namespace detail

inline bool autograd_enabled() { return detail::no_grad_depth == 0; }

// RAII switch that disables tape recording (inference / finite differences).
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<S>>;

  Tensor() = default;

  static Tensor zeros(const Shape& shape) { return full(shape, S(0)); }

  static Tensor full(const Shape& shape, S value) {
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = shape;
    t.node_->data.assign(static_cast<size_t>(numel(shape)), value);
    return t;
  }

  static Tensor from_data(const Shape& shape, std::vector<S> values) {
    if (static_cast<int>(values.size()) != numel(shape)) {
      throw ShapeError("from_data: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    }
    Tensor t;
    t.node_ = std::make_shared<detail::Node<S>>();
    t.node_->shape = shape;
    t.node_->data = std::move(values);
    return t;
  }

  static Tensor scalar(S value) { return from_data({}, {value}); }

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return checked()->shape; }
  int rank() const { return static_cast<int>(checked()->shape.size()); }
  int dim(int i) const { return checked()->shape.at(static_cast<size_t>(i)); }
  int size() const { return static_cast<int>(checked()->data.size()); }

  const S* data() const { return checked()->data.data(); }
  S* data() { return checked()->data.data(); }
  const std::vector<S>& values() const { return checked()->data; }

  S operator[](int i) const { return checked()->data.at(static_cast<size_t>(i)); }
  S& operator[](int i) { return checked()->data.at(static_cast<size_t>(i)); }

  S item() const {
    if (size() != 1) {
      throw UsageError("item: tensor of shape " + shape_str(shape()) +
                       " is not a scalar");
    }
    return checked()->data[0];
  }

  Tensor& set_requires_grad(bool rg) {
    if (!checked()->leaf) {
      throw UsageError("set_requires_grad: only leaf tensors can be toggled");
    }
    node_->requires_grad = rg;
    return *this;
  }

  bool requires_grad() const { return checked()->requires_grad; }
  bool is_leaf() const { return checked()->leaf; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }

  const std::vector<S>& grad() const {
    if (!has_grad()) {
      throw UsageError("grad: no gradient has been accumulated");
    }
    return node_->grad;
  }

  void zero_grad() {
    if (defined() && !node_->grad.empty()) {
      std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }
  }

  // Copies the values into a fresh leaf outside any tape.
  Tensor detach() const { return from_data(shape(), checked()->data); }

  NodePtr& node() { return node_; }
  const NodePtr& node() const { return node_; }

 private:
  const NodePtr& checked() const {
    if (!node_) throw UsageError("operation on an undefined tensor");
    return node_;
  }

  NodePtr node_;
};

namespace detail {

template <typename S>
void check_finite(const std::vector<S>& data, const char* op) {
  Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> m(
      data.data(), static_cast<Eigen::Index>(data.size()));
  if (!m.allFinite()) {
    throw NonFiniteError(std::string(op) + ": produced a non-finite value");
  }
}

// Creates the output node of an op. Parents/backprop are recorded only when
// the tape is live and some input needs gradients.
template <typename S>
Tensor<S> make_result(const char* op, Shape shape, std::vector<S> data,
                      std::vector<std::shared_ptr<Node<S>>> parents,
                      std::function<void(Node<S>&)> backprop) {
  check_finite(data, op);
  Tensor<S> out = Tensor<S>::from_data(shape, std::move(data));
  auto& node = *out.node();
  node.op = op;
  bool needs = false;
  if (autograd_enabled()) {
    for (const auto& p : parents) {
      if (p && p->requires_grad) needs = true;
    }
  }
  if (needs) {
    node.leaf = false;
    node.requires_grad = true;
    node.parents = std::move(parents);
    node.backprop = std::move(backprop);
  }
  return out;
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ColMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shape " + shape_str(a.shape()) + " != shape " +
                     shape_str(b.shape()));
  }
  std::vector<S> out(a.values());
  const S* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_result<S>(
      "add", a.shape(), std::move(out), {an, bn},
      [](detail::Node<S>& self) {
        for (int k = 0; k < 2; ++k) {
          auto& p = self.parents[static_cast<size_t>(k)];
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
      });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  std::vector<S> out(x.values());
  for (S& v : out) v = v > S(0) ? v : S(0);
  return detail::make_result<S>(
      "relu", x.shape(), std::move(out), {x.node()},
      [](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          if (p->data[i] > S(0)) p->grad[i] += self.grad[i];
        }
      });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  std::vector<S> out(x.values());
  for (S& v : out) {
    if (v >= S(0)) {
      v = S(1) / (S(1) + std::exp(-v));
    } else {
      S e = std::exp(v);
      v = e / (S(1) + e);
    }
  }
  return detail::make_result<S>(
      "sigmoid", x.shape(), std::move(out), {x.node()},
      [](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          S y = self.data[i];
          p->grad[i] += self.grad[i] * y * (S(1) - y);
        }
      });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  std::vector<S> out(x.values());
  for (S& v : out) v = std::tanh(v);
  return detail::make_result<S>(
      "tanh", x.shape(), std::move(out), {x.node()},
      [](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
          S y = self.data[i];
          p->grad[i] += self.grad[i] * (S(1) - y * y);
        }
      });
}

// Softmax along `axis` with max-subtraction for stability.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const Shape& shape = x.shape();
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw UsageError("softmax: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  int axis_n = shape[static_cast<size_t>(axis)];
  int inner = 1;
  for (int i = axis + 1; i < r; ++i) inner *= shape[static_cast<size_t>(i)];
  int outer = x.size() / (axis_n * inner);

  std::vector<S> out(x.values());
  for (int o = 0; o < outer; ++o) {
    for (int in = 0; in < inner; ++in) {
      S* base = out.data() + static_cast<ptrdiff_t>(o) * axis_n * inner + in;
      S mx = base[0];
      for (int k = 1; k < axis_n; ++k) mx = std::max(mx, base[static_cast<ptrdiff_t>(k) * inner]);
      double sum = 0.0;
      for (int k = 0; k < axis_n; ++k) {
        S e = std::exp(base[static_cast<ptrdiff_t>(k) * inner] - mx);
        base[static_cast<ptrdiff_t>(k) * inner] = e;
        sum += static_cast<double>(e);
      }
      S inv = static_cast<S>(1.0 / sum);
      for (int k = 0; k < axis_n; ++k) base[static_cast<ptrdiff_t>(k) * inner] *= inv;
    }
  }

  return detail::make_result<S>(
      "softmax", shape, std::move(out), {x.node()},
      [axis_n, inner, outer](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int o = 0; o < outer; ++o) {
          for (int in = 0; in < inner; ++in) {
            ptrdiff_t off = static_cast<ptrdiff_t>(o) * axis_n * inner + in;
            double dot = 0.0;
            for (int k = 0; k < axis_n; ++k) {
              ptrdiff_t i = off + static_cast<ptrdiff_t>(k) * inner;
              dot += static_cast<double>(self.grad[static_cast<size_t>(i)]) *
                     static_cast<double>(self.data[static_cast<size_t>(i)]);
            }
            for (int k = 0; k < axis_n; ++k) {
              ptrdiff_t i = off + static_cast<ptrdiff_t>(k) * inner;
              p->grad[static_cast<size_t>(i)] +=
                  (self.grad[static_cast<size_t>(i)] - static_cast<S>(dot)) *
                  self.data[static_cast<size_t>(i)];
            }
          }
        }
      });
}

// Full-tensor dot product, returns a scalar. Used by losses and tests.
template <typename S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("dot: shape " + shape_str(a.shape()) + " != shape " +
                     shape_str(b.shape()));
  }
  double acc = 0.0;
  const S* pa = a.data();
  const S* pb = b.data();
  for (int i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(pa[i]) * static_cast<double>(pb[i]);
  }
  return detail::make_result<S>(
      "dot", Shape{}, {static_cast<S>(acc)}, {a.node(), b.node()},
      [](detail::Node<S>& self) {
        S g = self.grad[0];
        auto& a_ = self.parents[0];
        auto& b_ = self.parents[1];
        if (a_->requires_grad) {
          a_->ensure_grad();
          for (size_t i = 0; i < a_->data.size(); ++i) a_->grad[i] += g * b_->data[i];
        }
        if (b_->requires_grad) {
          b_->ensure_grad();
          for (size_t i = 0; i < b_->data.size(); ++i) b_->grad[i] += g * a_->data[i];
        }
      });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& new_shape) {
  if (numel(new_shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  }
  return detail::make_result<S>(
      "reshape", new_shape, x.values(), {x.node()},
      [](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      });
}

// Concatenation along the channel axis of [N,C,T] tensors.
template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw InvalidInputError("concat_channels: no inputs");
  for (const auto& p : parts) {
    if (p.rank() != 3) {
      throw ShapeError("concat_channels: expected rank-3 [N,C,T], got " +
                       shape_str(p.shape()));
    }
    if (p.dim(0) != parts[0].dim(0) || p.dim(2) != parts[0].dim(2)) {
      throw ShapeError("concat_channels: shape " + shape_str(p.shape()) +
                       " incompatible with " + shape_str(parts[0].shape()));
    }
  }
  int n = parts[0].dim(0), t = parts[0].dim(2);
  int c_total = 0;
  for (const auto& p : parts) c_total += p.dim(1);
  std::vector<S> out(static_cast<size_t>(n) * c_total * t);
  std::vector<std::shared_ptr<detail::Node<S>>> parents;
  std::vector<int> channels;
  for (const auto& p : parts) {
    parents.push_back(p.node());
    channels.push_back(p.dim(1));
  }
  for (int b = 0; b < n; ++b) {
    int c_off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
      int ck = channels[k];
      const S* src = parts[k].data() + static_cast<ptrdiff_t>(b) * ck * t;
      S* dst = out.data() + (static_cast<ptrdiff_t>(b) * c_total + c_off) * t;
      std::copy(src, src + static_cast<ptrdiff_t>(ck) * t, dst);
      c_off += ck;
    }
  }
  return detail::make_result<S>(
      "concat_channels", Shape{n, c_total, t}, std::move(out), std::move(parents),
      [n, t, c_total, channels](detail::Node<S>& self) {
        for (int b = 0; b < n; ++b) {
          int c_off = 0;
          for (size_t k = 0; k < channels.size(); ++k) {
            int ck = channels[k];
            auto& p = self.parents[k];
            if (p->requires_grad) {
              p->ensure_grad();
              const S* src =
                  self.grad.data() + (static_cast<ptrdiff_t>(b) * c_total + c_off) * t;
              S* dst = p->grad.data() + static_cast<ptrdiff_t>(b) * ck * t;
              for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(ck) * t; ++i) dst[i] += src[i];
            }
            c_off += ck;
          }
        }
      });
}

// Channels [begin, end) of an [N,C,T] tensor.
template <typename S>
Tensor<S> slice_channels(const Tensor<S>& x, int begin, int end) {
  if (x.rank() != 3) {
    throw ShapeError("slice_channels: expected rank-3 [N,C,T], got " +
                     shape_str(x.shape()));
  }
  int n = x.dim(0), c = x.dim(1), t = x.dim(2);
  if (begin < 0 || end > c || begin >= end) {
    throw UsageError("slice_channels: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for C=" + std::to_string(c));
  }
  int ck = end - begin;
  std::vector<S> out(static_cast<size_t>(n) * ck * t);
  for (int b = 0; b < n; ++b) {
    const S* src = x.data() + (static_cast<ptrdiff_t>(b) * c + begin) * t;
    std::copy(src, src + static_cast<ptrdiff_t>(ck) * t,
              out.data() + static_cast<ptrdiff_t>(b) * ck * t);
  }
  return detail::make_result<S>(
      "slice_channels", Shape{n, ck, t}, std::move(out), {x.node()},
      [n, c, t, begin, ck](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int b = 0; b < n; ++b) {
          const S* src = self.grad.data() + static_cast<ptrdiff_t>(b) * ck * t;
          S* dst = p->grad.data() + (static_cast<ptrdiff_t>(b) * c + begin) * t;
          for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(ck) * t; ++i) dst[i] += src[i];
        }
      });
}

// ---------------------------------------------------------------------------
// Convolutions (cross-correlation, zero padding) via im2col + Eigen GEMM
// ---------------------------------------------------------------------------

namespace detail {

// cols is K x T_out column-major with K = C_in * k.
template <typename S>
void im2col_1d(const S* x, int c_in, int t_in, int k, int stride, int dilation,
               int pad, int t_out, S* cols) {
  for (int l = 0; l < t_out; ++l) {
    S* col = cols + static_cast<ptrdiff_t>(l) * c_in * k;
    int t0 = l * stride - pad;
    for (int ci = 0; ci < c_in; ++ci) {
      const S* xc = x + static_cast<ptrdiff_t>(ci) * t_in;
      for (int j = 0; j < k; ++j) {
        int t = t0 + j * dilation;
        col[ci * k + j] = (t >= 0 && t < t_in) ? xc[t] : S(0);
      }
    }
  }
}

template <typename S>
void col2im_1d(const S* cols, int c_in, int t_in, int k, int stride,
               int dilation, int pad, int t_out, S* dx) {
  for (int l = 0; l < t_out; ++l) {
    const S* col = cols + static_cast<ptrdiff_t>(l) * c_in * k;
    int t0 = l * stride - pad;
    for (int ci = 0; ci < c_in; ++ci) {
      S* xc = dx + static_cast<ptrdiff_t>(ci) * t_in;
      for (int j = 0; j < k; ++j) {
        int t = t0 + j * dilation;
        if (t >= 0 && t < t_in) xc[t] += col[ci * k + j];
      }
    }
  }
}

// cols is K x L column-major with K = C_in * kH * kW, L = H_out * W_out.
template <typename S>
void im2col_2d(const S* x, int c_in, int h_in, int w_in, int kh, int kw,
               int sh, int sw, int ph, int pw, int h_out, int w_out, S* cols) {
  for (int oh = 0; oh < h_out; ++oh) {
    for (int ow = 0; ow < w_out; ++ow) {
      S* col = cols + (static_cast<ptrdiff_t>(oh) * w_out + ow) * c_in * kh * kw;
      int h0 = oh * sh - ph;
      int w0 = ow * sw - pw;
      for (int ci = 0; ci < c_in; ++ci) {
        const S* xc = x + static_cast<ptrdiff_t>(ci) * h_in * w_in;
        for (int jh = 0; jh < kh; ++jh) {
          int h = h0 + jh;
          for (int jw = 0; jw < kw; ++jw) {
            int w = w0 + jw;
            col[(ci * kh + jh) * kw + jw] =
                (h >= 0 && h < h_in && w >= 0 && w < w_in)
                    ? xc[static_cast<ptrdiff_t>(h) * w_in + w]
                    : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_2d(const S* cols, int c_in, int h_in, int w_in, int kh, int kw,
               int sh, int sw, int ph, int pw, int h_out, int w_out, S* dx) {
  for (int oh = 0; oh < h_out; ++oh) {
    for (int ow = 0; ow < w_out; ++ow) {
      const S* col = cols + (static_cast<ptrdiff_t>(oh) * w_out + ow) * c_in * kh * kw;
      int h0 = oh * sh - ph;
      int w0 = ow * sw - pw;
      for (int ci = 0; ci < c_in; ++ci) {
        S* xc = dx + static_cast<ptrdiff_t>(ci) * h_in * w_in;
        for (int jh = 0; jh < kh; ++jh) {
          int h = h0 + jh;
          if (h < 0 || h >= h_in) continue;
          for (int jw = 0; jw < kw; ++jw) {
            int w = w0 + jw;
            if (w >= 0 && w < w_in) {
              xc[static_cast<ptrdiff_t>(h) * w_in + w] += col[(ci * kh + jh) * kw + jw];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// input [N,C_in,T], weight [C_out,C_in,k], optional bias [C_out].
template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 int stride, int dilation, int padding) {
  if (x.rank() != 3) {
    throw ShapeError("conv1d: expected input [N,C,T], got " + shape_str(x.shape()));
  }
  if (w.rank() != 3) {
    throw ShapeError("conv1d: expected weight [C_out,C_in,k], got " +
                     shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv1d: input channels of " + shape_str(x.shape()) +
                     " do not match weight channels of " + shape_str(w.shape()));
  }
  if (stride < 1 || dilation < 1 || padding < 0) {
    throw UsageError("conv1d: stride/dilation must be >= 1 and padding >= 0");
  }
  int n = x.dim(0), c_in = x.dim(1), t_in = x.dim(2);
  int c_out = w.dim(0), k = w.dim(2);
  int eff_k = (k - 1) * dilation + 1;
  if (eff_k > t_in + 2 * padding) {
    throw ShapeError("conv1d: effective kernel " + std::to_string(eff_k) +
                     " exceeds padded input length " +
                     std::to_string(t_in + 2 * padding));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw ShapeError("conv1d: bias " + shape_str(bias.shape()) +
                     " does not match C_out=" + std::to_string(c_out));
  }
  int t_out = (t_in + 2 * padding - eff_k) / stride + 1;
  int kk = c_in * k;

  std::vector<S> out(static_cast<size_t>(n) * c_out * t_out);
  {
    std::vector<S> cols(static_cast<size_t>(kk) * t_out);
    Eigen::Map<const detail::RowMat<S>> wm(w.data(), c_out, kk);
    for (int b = 0; b < n; ++b) {
      detail::im2col_1d(x.data() + static_cast<ptrdiff_t>(b) * c_in * t_in, c_in,
                        t_in, k, stride, dilation, padding, t_out, cols.data());
      Eigen::Map<const detail::ColMat<S>> cm(cols.data(), kk, t_out);
      Eigen::Map<detail::RowMat<S>> om(
          out.data() + static_cast<ptrdiff_t>(b) * c_out * t_out, c_out, t_out);
      om.noalias() = wm * cm;
      if (bias.defined()) {
        Eigen::Map<const detail::Vec<S>> bm(bias.data(), c_out);
        om.colwise() += bm;
      }
    }
  }

  std::vector<std::shared_ptr<detail::Node<S>>> parents{x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return detail::make_result<S>(
      "conv1d", Shape{n, c_out, t_out}, std::move(out), std::move(parents),
      [n, c_in, t_in, c_out, k, kk, t_out, stride, dilation,
       padding](detail::Node<S>& self) {
        auto& xp = self.parents[0];
        auto& wp = self.parents[1];
        bool has_bias = self.parents.size() > 2;
        std::vector<S> cols(static_cast<size_t>(kk) * t_out);
        std::vector<S> dcols(static_cast<size_t>(kk) * t_out);
        Eigen::Map<const detail::RowMat<S>> wm(wp->data.data(), c_out, kk);
        if (xp->requires_grad) xp->ensure_grad();
        if (wp->requires_grad) wp->ensure_grad();
        if (has_bias && self.parents[2]->requires_grad) self.parents[2]->ensure_grad();
        for (int b = 0; b < n; ++b) {
          Eigen::Map<const detail::RowMat<S>> gm(
              self.grad.data() + static_cast<ptrdiff_t>(b) * c_out * t_out, c_out,
              t_out);
          if (wp->requires_grad) {
            detail::im2col_1d(xp->data.data() + static_cast<ptrdiff_t>(b) * c_in * t_in,
                              c_in, t_in, k, stride, dilation, padding, t_out,
                              cols.data());
            Eigen::Map<const detail::ColMat<S>> cm(cols.data(), kk, t_out);
            Eigen::Map<detail::RowMat<S>> dwm(wp->grad.data(), c_out, kk);
            dwm.noalias() += gm * cm.transpose();
          }
          if (has_bias && self.parents[2]->requires_grad) {
            // Fixed-order sums keep gradients bit-stable across allocations.
            auto& bg = self.parents[2]->grad;
            for (int co = 0; co < c_out; ++co) {
              const S* row = self.grad.data() +
                             (static_cast<ptrdiff_t>(b) * c_out + co) * t_out;
              double acc = 0.0;
              for (int l = 0; l < t_out; ++l) acc += static_cast<double>(row[l]);
              bg[static_cast<size_t>(co)] += static_cast<S>(acc);
            }
          }
          if (xp->requires_grad) {
            Eigen::Map<detail::ColMat<S>> dcm(dcols.data(), kk, t_out);
            dcm.noalias() = wm.transpose() * gm;
            detail::col2im_1d(dcols.data(), c_in, t_in, k, stride, dilation,
                              padding, t_out,
                              xp->grad.data() + static_cast<ptrdiff_t>(b) * c_in * t_in);
          }
        }
      });
}

// input [N,C_in,H,W], weight [C_out,C_in,kH,kW], optional bias [C_out].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 std::pair<int, int> stride, std::pair<int, int> padding) {
  if (x.rank() != 4) {
    throw ShapeError("conv2d: expected input [N,C,H,W], got " + shape_str(x.shape()));
  }
  if (w.rank() != 4) {
    throw ShapeError("conv2d: expected weight [C_out,C_in,kH,kW], got " +
                     shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input channels of " + shape_str(x.shape()) +
                     " do not match weight channels of " + shape_str(w.shape()));
  }
  auto [sh, sw] = stride;
  auto [ph, pw] = padding;
  if (sh < 1 || sw < 1 || ph < 0 || pw < 0) {
    throw UsageError("conv2d: strides must be >= 1 and paddings >= 0");
  }
  int n = x.dim(0), c_in = x.dim(1), h_in = x.dim(2), w_in = x.dim(3);
  int c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (kh > h_in + 2 * ph || kw > w_in + 2 * pw) {
    throw ShapeError("conv2d: kernel " + shape_str(w.shape()) +
                     " exceeds padded input " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) +
                     " does not match C_out=" + std::to_string(c_out));
  }
  int h_out = (h_in + 2 * ph - kh) / sh + 1;
  int w_out = (w_in + 2 * pw - kw) / sw + 1;
  int kk = c_in * kh * kw;
  int ll = h_out * w_out;

  std::vector<S> out(static_cast<size_t>(n) * c_out * ll);
  {
    std::vector<S> cols(static_cast<size_t>(kk) * ll);
    Eigen::Map<const detail::RowMat<S>> wm(w.data(), c_out, kk);
    for (int b = 0; b < n; ++b) {
      detail::im2col_2d(x.data() + static_cast<ptrdiff_t>(b) * c_in * h_in * w_in,
                        c_in, h_in, w_in, kh, kw, sh, sw, ph, pw, h_out, w_out,
                        cols.data());
      Eigen::Map<const detail::ColMat<S>> cm(cols.data(), kk, ll);
      Eigen::Map<detail::RowMat<S>> om(out.data() + static_cast<ptrdiff_t>(b) * c_out * ll,
                                       c_out, ll);
      om.noalias() = wm * cm;
      if (bias.defined()) {
        Eigen::Map<const detail::Vec<S>> bm(bias.data(), c_out);
        om.colwise() += bm;
      }
    }
  }

  std::vector<std::shared_ptr<detail::Node<S>>> parents{x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return detail::make_result<S>(
      "conv2d", Shape{n, c_out, h_out, w_out}, std::move(out), std::move(parents),
      [n, c_in, h_in, w_in, c_out, kh, kw, sh, sw, ph, pw, h_out, w_out, kk,
       ll](detail::Node<S>& self) {
        auto& xp = self.parents[0];
        auto& wp = self.parents[1];
        bool has_bias = self.parents.size() > 2;
        std::vector<S> cols(static_cast<size_t>(kk) * ll);
        std::vector<S> dcols(static_cast<size_t>(kk) * ll);
        Eigen::Map<const detail::RowMat<S>> wm(wp->data.data(), c_out, kk);
        if (xp->requires_grad) xp->ensure_grad();
        if (wp->requires_grad) wp->ensure_grad();
        if (has_bias && self.parents[2]->requires_grad) self.parents[2]->ensure_grad();
        for (int b = 0; b < n; ++b) {
          Eigen::Map<const detail::RowMat<S>> gm(
              self.grad.data() + static_cast<ptrdiff_t>(b) * c_out * ll, c_out, ll);
          if (wp->requires_grad) {
            detail::im2col_2d(
                xp->data.data() + static_cast<ptrdiff_t>(b) * c_in * h_in * w_in, c_in,
                h_in, w_in, kh, kw, sh, sw, ph, pw, h_out, w_out, cols.data());
            Eigen::Map<const detail::ColMat<S>> cm(cols.data(), kk, ll);
            Eigen::Map<detail::RowMat<S>> dwm(wp->grad.data(), c_out, kk);
            dwm.noalias() += gm * cm.transpose();
          }
          if (has_bias && self.parents[2]->requires_grad) {
            auto& bg = self.parents[2]->grad;
            for (int co = 0; co < c_out; ++co) {
              const S* row =
                  self.grad.data() + (static_cast<ptrdiff_t>(b) * c_out + co) * ll;
              double acc = 0.0;
              for (int l = 0; l < ll; ++l) acc += static_cast<double>(row[l]);
              bg[static_cast<size_t>(co)] += static_cast<S>(acc);
            }
          }
          if (xp->requires_grad) {
            Eigen::Map<detail::ColMat<S>> dcm(dcols.data(), kk, ll);
            dcm.noalias() = wm.transpose() * gm;
            detail::col2im_2d(dcols.data(), c_in, h_in, w_in, kh, kw, sh, sw, ph,
                              pw, h_out, w_out,
                              xp->grad.data() + static_cast<ptrdiff_t>(b) * c_in * h_in * w_in);
          }
        }
      });
}

// input [N,D_in], weight [D_out,D_in], bias [D_out] (optional).
template <typename S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  if (x.rank() != 2 || w.rank() != 2) {
    throw ShapeError("dense: expected input [N,D_in] and weight [D_out,D_in], got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("dense: input " + shape_str(x.shape()) +
                     " does not match weight " + shape_str(w.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != w.dim(0))) {
    throw ShapeError("dense: bias " + shape_str(bias.shape()) +
                     " does not match D_out=" + std::to_string(w.dim(0)));
  }
  int n = x.dim(0), d_in = x.dim(1), d_out = w.dim(0);
  std::vector<S> out(static_cast<size_t>(n) * d_out);
  {
    Eigen::Map<const detail::RowMat<S>> xm(x.data(), n, d_in);
    Eigen::Map<const detail::RowMat<S>> wm(w.data(), d_out, d_in);
    Eigen::Map<detail::RowMat<S>> om(out.data(), n, d_out);
    om.noalias() = xm * wm.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> bm(bias.data(), d_out);
      om.rowwise() += bm;
    }
  }
  std::vector<std::shared_ptr<detail::Node<S>>> parents{x.node(), w.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return detail::make_result<S>(
      "dense", Shape{n, d_out}, std::move(out), std::move(parents),
      [n, d_in, d_out](detail::Node<S>& self) {
        auto& xp = self.parents[0];
        auto& wp = self.parents[1];
        Eigen::Map<const detail::RowMat<S>> gm(self.grad.data(), n, d_out);
        if (xp->requires_grad) {
          xp->ensure_grad();
          Eigen::Map<const detail::RowMat<S>> wm(wp->data.data(), d_out, d_in);
          Eigen::Map<detail::RowMat<S>> dxm(xp->grad.data(), n, d_in);
          dxm.noalias() += gm * wm;
        }
        if (wp->requires_grad) {
          wp->ensure_grad();
          Eigen::Map<const detail::RowMat<S>> xm(xp->data.data(), n, d_in);
          Eigen::Map<detail::RowMat<S>> dwm(wp->grad.data(), d_out, d_in);
          dwm.noalias() += gm.transpose() * xm;
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& bp = self.parents[2];
          bp->ensure_grad();
          for (int o = 0; o < d_out; ++o) {
            double acc = 0.0;
            for (int b = 0; b < n; ++b) {
              acc += static_cast<double>(
                  self.grad[static_cast<size_t>(b) * d_out + o]);
            }
            bp->grad[static_cast<size_t>(o)] += static_cast<S>(acc);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization and pooling
// ---------------------------------------------------------------------------

// Batch normalization over all non-channel axes of [N,C,...]. In train mode
// the batch statistics (biased variance) normalize the batch and update the
// running buffers with `momentum`; in eval mode the running buffers are used.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, std::vector<S>& running_mean,
                     std::vector<S>& running_var, bool train_mode,
                     S momentum = S(0.1), S eps = S(1e-5)) {
  if (x.rank() < 2) {
    throw ShapeError("batch_norm: expected input [N,C,...], got " +
                     shape_str(x.shape()));
  }
  int n = x.dim(0), c = x.dim(1);
  int spatial = x.size() / (n * c);
  if (gamma.size() != c || beta.size() != c ||
      static_cast<int>(running_mean.size()) != c ||
      static_cast<int>(running_var.size()) != c) {
    throw ShapeError("batch_norm: parameter size does not match C=" +
                     std::to_string(c) + " for input " + shape_str(x.shape()));
  }
  int m = n * spatial;
  if (train_mode && m <= 1) {
    throw DegenerateBatchError(
        "batch_norm: train mode needs more than one element per channel, got " +
        shape_str(x.shape()));
  }

  std::vector<S> mean(static_cast<size_t>(c)), inv_std(static_cast<size_t>(c));
  if (train_mode) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const S* p = x.data() + (static_cast<ptrdiff_t>(b) * c + ch) * spatial;
        for (int s = 0; s < spatial; ++s) acc += static_cast<double>(p[s]);
      }
      double mu = acc / m;
      double var_acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const S* p = x.data() + (static_cast<ptrdiff_t>(b) * c + ch) * spatial;
        for (int s = 0; s < spatial; ++s) {
          double d = static_cast<double>(p[s]) - mu;
          var_acc += d * d;
        }
      }
      double var = var_acc / m;
      mean[static_cast<size_t>(ch)] = static_cast<S>(mu);
      inv_std[static_cast<size_t>(ch)] =
          static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      running_mean[static_cast<size_t>(ch)] = static_cast<S>(
          (1.0 - static_cast<double>(momentum)) *
              static_cast<double>(running_mean[static_cast<size_t>(ch)]) +
          static_cast<double>(momentum) * mu);
      running_var[static_cast<size_t>(ch)] = static_cast<S>(
          (1.0 - static_cast<double>(momentum)) *
              static_cast<double>(running_var[static_cast<size_t>(ch)]) +
          static_cast<double>(momentum) * var);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[static_cast<size_t>(ch)] = running_mean[static_cast<size_t>(ch)];
      inv_std[static_cast<size_t>(ch)] = static_cast<S>(
          1.0 / std::sqrt(static_cast<double>(running_var[static_cast<size_t>(ch)]) +
                          static_cast<double>(eps)));
    }
  }

  std::vector<S> out(x.values());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      S* p = out.data() + (static_cast<ptrdiff_t>(b) * c + ch) * spatial;
      S mu = mean[static_cast<size_t>(ch)];
      S is = inv_std[static_cast<size_t>(ch)];
      S g = gamma[ch], bt = beta[ch];
      for (int s = 0; s < spatial; ++s) p[s] = (p[s] - mu) * is * g + bt;
    }
  }

  return detail::make_result<S>(
      "batch_norm", x.shape(), std::move(out),
      {x.node(), gamma.node(), beta.node()},
      [n, c, spatial, m, train_mode, mean, inv_std](detail::Node<S>& self) {
        auto& xp = self.parents[0];
        auto& gp = self.parents[1];
        auto& bp = self.parents[2];
        // Per channel: dbeta = sum(dy), dgamma = sum(dy * xhat).
        std::vector<double> sum_dy(static_cast<size_t>(c), 0.0);
        std::vector<double> sum_dy_xhat(static_cast<size_t>(c), 0.0);
        for (int b = 0; b < n; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            ptrdiff_t off = (static_cast<ptrdiff_t>(b) * c + ch) * spatial;
            double mu = static_cast<double>(mean[static_cast<size_t>(ch)]);
            double is = static_cast<double>(inv_std[static_cast<size_t>(ch)]);
            for (int s = 0; s < spatial; ++s) {
              double dy = static_cast<double>(self.grad[static_cast<size_t>(off + s)]);
              double xh =
                  (static_cast<double>(xp->data[static_cast<size_t>(off + s)]) - mu) * is;
              sum_dy[static_cast<size_t>(ch)] += dy;
              sum_dy_xhat[static_cast<size_t>(ch)] += dy * xh;
            }
          }
        }
        if (gp->requires_grad) {
          gp->ensure_grad();
          for (int ch = 0; ch < c; ++ch) {
            gp->grad[static_cast<size_t>(ch)] +=
                static_cast<S>(sum_dy_xhat[static_cast<size_t>(ch)]);
          }
        }
        if (bp->requires_grad) {
          bp->ensure_grad();
          for (int ch = 0; ch < c; ++ch) {
            bp->grad[static_cast<size_t>(ch)] +=
                static_cast<S>(sum_dy[static_cast<size_t>(ch)]);
          }
        }
        if (xp->requires_grad) {
          xp->ensure_grad();
          for (int b = 0; b < n; ++b) {
            for (int ch = 0; ch < c; ++ch) {
              ptrdiff_t off = (static_cast<ptrdiff_t>(b) * c + ch) * spatial;
              double mu = static_cast<double>(mean[static_cast<size_t>(ch)]);
              double is = static_cast<double>(inv_std[static_cast<size_t>(ch)]);
              double g = static_cast<double>(gp->data[static_cast<size_t>(ch)]);
              double mean_dy = sum_dy[static_cast<size_t>(ch)] / m;
              double mean_dy_xhat = sum_dy_xhat[static_cast<size_t>(ch)] / m;
              for (int s = 0; s < spatial; ++s) {
                double dy = static_cast<double>(self.grad[static_cast<size_t>(off + s)]);
                double xh =
                    (static_cast<double>(xp->data[static_cast<size_t>(off + s)]) - mu) *
                    is;
                double dx = train_mode
                                ? g * is * (dy - mean_dy - xh * mean_dy_xhat)
                                : g * is * dy;
                xp->grad[static_cast<size_t>(off + s)] += static_cast<S>(dx);
              }
            }
          }
        }
      });
}

// Mean over the trailing time axis: [N,C,T] -> [N,C].
template <typename S>
Tensor<S> mean_time(const Tensor<S>& x) {
  if (x.rank() != 3) {
    throw ShapeError("mean_time: expected [N,C,T], got " + shape_str(x.shape()));
  }
  int n = x.dim(0), c = x.dim(1), t = x.dim(2);
  if (t == 0) throw InvalidInputError("mean_time: empty time axis");
  std::vector<S> out(static_cast<size_t>(n) * c);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const S* p = x.data() + (static_cast<ptrdiff_t>(b) * c + ch) * t;
      double acc = 0.0;
      for (int s = 0; s < t; ++s) acc += static_cast<double>(p[s]);
      out[static_cast<size_t>(b) * c + ch] = static_cast<S>(acc / t);
    }
  }
  return detail::make_result<S>(
      "mean_time", Shape{n, c}, std::move(out), {x.node()},
      [n, c, t](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        for (int b = 0; b < n; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            S g = self.grad[static_cast<size_t>(b) * c + ch] / static_cast<S>(t);
            S* dst = p->grad.data() + (static_cast<ptrdiff_t>(b) * c + ch) * t;
            for (int s = 0; s < t; ++s) dst[s] += g;
          }
        }
      });
}

// Per-channel gate: out[n,c,t] = x[n,c,t] * g[n,c].
template <typename S>
Tensor<S> channel_scale(const Tensor<S>& x, const Tensor<S>& gate) {
  if (x.rank() != 3 || gate.rank() != 2 || gate.dim(0) != x.dim(0) ||
      gate.dim(1) != x.dim(1)) {
    throw ShapeError("channel_scale: input " + shape_str(x.shape()) +
                     " incompatible with gate " + shape_str(gate.shape()));
  }
  int n = x.dim(0), c = x.dim(1), t = x.dim(2);
  std::vector<S> out(x.values());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      S g = gate[b * c + ch];
      S* p = out.data() + (static_cast<ptrdiff_t>(b) * c + ch) * t;
      for (int s = 0; s < t; ++s) p[s] *= g;
    }
  }
  return detail::make_result<S>(
      "channel_scale", x.shape(), std::move(out), {x.node(), gate.node()},
      [n, c, t](detail::Node<S>& self) {
        auto& xp = self.parents[0];
        auto& gp = self.parents[1];
        for (int b = 0; b < n; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            ptrdiff_t off = (static_cast<ptrdiff_t>(b) * c + ch) * t;
            if (xp->requires_grad) {
              xp->ensure_grad();
              S g = gp->data[static_cast<size_t>(b) * c + ch];
              for (int s = 0; s < t; ++s) {
                xp->grad[static_cast<size_t>(off + s)] +=
                    self.grad[static_cast<size_t>(off + s)] * g;
              }
            }
            if (gp->requires_grad) {
              gp->ensure_grad();
              double acc = 0.0;
              for (int s = 0; s < t; ++s) {
                acc += static_cast<double>(self.grad[static_cast<size_t>(off + s)]) *
                       static_cast<double>(xp->data[static_cast<size_t>(off + s)]);
              }
              gp->grad[static_cast<size_t>(b) * c + ch] += static_cast<S>(acc);
            }
          }
        }
      });
}

// Weighted mean/std pooling over time: [N,C,T] -> [N,2C]. Weights may be
// [N,T] (shared across channels) or [N,C,T] (per-channel attention); each
// weight row must sum to 1. Without weights, uniform 1/T is used. The
// variance is floored at 1e-8 before the square root.
template <typename S>
Tensor<S> stats_pool(const Tensor<S>& x, const Tensor<S>& weights = Tensor<S>()) {
  if (x.rank() != 3) {
    throw ShapeError("stats_pool: expected [N,C,T], got " + shape_str(x.shape()));
  }
  int n = x.dim(0), c = x.dim(1), t = x.dim(2);
  if (t == 0) throw InvalidInputError("stats_pool: empty time axis");
  bool per_channel = false;
  if (weights.defined()) {
    if (weights.rank() == 2 && weights.dim(0) == n && weights.dim(1) == t) {
      per_channel = false;
    } else if (weights.rank() == 3 && weights.dim(0) == n && weights.dim(1) == c &&
               weights.dim(2) == t) {
      per_channel = true;
    } else {
      throw ShapeError("stats_pool: weights " + shape_str(weights.shape()) +
                       " incompatible with input " + shape_str(x.shape()));
    }
    int rows = per_channel ? n * c : n;
    for (int r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (int s = 0; s < t; ++s) sum += static_cast<double>(weights[r * t + s]);
      if (std::abs(sum - 1.0) > 1e-6) {
        throw InvalidInputError("stats_pool: weight row " + std::to_string(r) +
                                " sums to " + std::to_string(sum) + ", expected 1");
      }
    }
  }

  const double var_floor = 1e-8;
  std::vector<S> out(static_cast<size_t>(n) * 2 * c);
  std::vector<S> means(static_cast<size_t>(n) * c), stds(static_cast<size_t>(n) * c);
  std::vector<char> floored(static_cast<size_t>(n) * c);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const S* p = x.data() + (static_cast<ptrdiff_t>(b) * c + ch) * t;
      const S* w = nullptr;
      if (weights.defined()) {
        w = weights.data() +
            (per_channel ? (static_cast<ptrdiff_t>(b) * c + ch) * t
                         : static_cast<ptrdiff_t>(b) * t);
      }
      double mu = 0.0;
      for (int s = 0; s < t; ++s) {
        double ws = w ? static_cast<double>(w[s]) : 1.0 / t;
        mu += ws * static_cast<double>(p[s]);
      }
      double var = 0.0;
      for (int s = 0; s < t; ++s) {
        double ws = w ? static_cast<double>(w[s]) : 1.0 / t;
        double d = static_cast<double>(p[s]) - mu;
        var += ws * d * d;
      }
      bool fl = var < var_floor;
      double sd = std::sqrt(fl ? var_floor : var);
      means[static_cast<size_t>(b) * c + ch] = static_cast<S>(mu);
      stds[static_cast<size_t>(b) * c + ch] = static_cast<S>(sd);
      floored[static_cast<size_t>(b) * c + ch] = fl ? 1 : 0;
      out[static_cast<size_t>(b) * 2 * c + ch] = static_cast<S>(mu);
      out[static_cast<size_t>(b) * 2 * c + c + ch] = static_cast<S>(sd);
    }
  }

  std::vector<std::shared_ptr<detail::Node<S>>> parents{x.node()};
  if (weights.defined()) parents.push_back(weights.node());
  return detail::make_result<S>(
      "stats_pool", Shape{n, 2 * c}, std::move(out), std::move(parents),
      [n, c, t, per_channel, means, stds, floored](detail::Node<S>& self) {
        auto& xp = self.parents[0];
        bool has_w = self.parents.size() > 1;
        auto* wp = has_w ? self.parents[1].get() : nullptr;
        if (xp->requires_grad) xp->ensure_grad();
        if (has_w && wp->requires_grad) wp->ensure_grad();
        for (int b = 0; b < n; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            size_t mc = static_cast<size_t>(b) * c + ch;
            double mu = static_cast<double>(means[mc]);
            double sd = static_cast<double>(stds[mc]);
            bool fl = floored[mc] != 0;
            double dmu = static_cast<double>(self.grad[static_cast<size_t>(b) * 2 * c + ch]);
            double dsd =
                static_cast<double>(self.grad[static_cast<size_t>(b) * 2 * c + c + ch]);
            ptrdiff_t xoff = (static_cast<ptrdiff_t>(b) * c + ch) * t;
            ptrdiff_t woff = has_w ? (per_channel
                                          ? (static_cast<ptrdiff_t>(b) * c + ch) * t
                                          : static_cast<ptrdiff_t>(b) * t)
                                   : 0;
            for (int s = 0; s < t; ++s) {
              double ws = has_w
                              ? static_cast<double>(wp->data[static_cast<size_t>(woff + s)])
                              : 1.0 / t;
              double xv = static_cast<double>(xp->data[static_cast<size_t>(xoff + s)]);
              if (xp->requires_grad) {
                // d mu / d x = w_s; d sd / d x = w_s (x - mu) / sd (0 if floored).
                double g = dmu * ws;
                if (!fl) g += dsd * ws * (xv - mu) / sd;
                xp->grad[static_cast<size_t>(xoff + s)] += static_cast<S>(g);
              }
              if (has_w && wp->requires_grad) {
                // d mu / d w_s = x_s; d sd / d w_s = (x_s - mu)^2 / (2 sd).
                double g = dmu * xv;
                if (!fl) g += dsd * (xv - mu) * (xv - mu) / (2.0 * sd);
                wp->grad[static_cast<size_t>(woff + s)] += static_cast<S>(g);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses (produce rank-0 scalars)
// ---------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[target], log-sum-exp form.
template <typename S>
Tensor<S> categorical_ce(const Tensor<S>& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) {
    throw ShapeError("categorical_ce: expected logits [N,K], got " +
                     shape_str(logits.shape()));
  }
  int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(targets.size()) != n) {
    throw ShapeError("categorical_ce: " + std::to_string(targets.size()) +
                     " targets for batch of " + std::to_string(n));
  }
  for (int t : targets) {
    if (t < 0 || t >= k) {
      throw InvalidInputError("categorical_ce: target " + std::to_string(t) +
                              " out of range [0," + std::to_string(k) + ")");
    }
  }
  std::vector<S> probs(static_cast<size_t>(n) * k);
  double loss = 0.0;
  for (int b = 0; b < n; ++b) {
    const S* z = logits.data() + static_cast<ptrdiff_t>(b) * k;
    double mx = static_cast<double>(z[0]);
    for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double sum = 0.0;
    for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(z[j]) - mx);
    double lse = mx + std::log(sum);
    loss += lse - static_cast<double>(z[targets[static_cast<size_t>(b)]]);
    for (int j = 0; j < k; ++j) {
      probs[static_cast<size_t>(b) * k + j] =
          static_cast<S>(std::exp(static_cast<double>(z[j]) - lse));
    }
  }
  loss /= n;
  return detail::make_result<S>(
      "categorical_ce", Shape{}, {static_cast<S>(loss)}, {logits.node()},
      [n, k, probs, targets](detail::Node<S>& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        S g = self.grad[0] / static_cast<S>(n);
        for (int b = 0; b < n; ++b) {
          for (int j = 0; j < k; ++j) {
            S q = probs[static_cast<size_t>(b) * k + j];
            if (j == targets[static_cast<size_t>(b)]) q -= S(1);
            p->grad[static_cast<size_t>(b) * k + j] += g * q;
          }
        }
      });
}

// Mean over all N*L elements of the stable BCE-with-logits. All-zero target
// rows are valid inputs.
template <typename S>
Tensor<S> binary_ce(const Tensor<S>& logits, const Tensor<S>& targets) {
  if (logits.rank() != 2 || targets.rank() != 2 ||
      logits.shape() != targets.shape()) {
    throw ShapeError("binary_ce: logits " + shape_str(logits.shape()) +
                     " and targets " + shape_str(targets.shape()) +
                     " must both be [N,L]");
  }
  int total = logits.size();
  double loss = 0.0;
  for (int i = 0; i < total; ++i) {
    double z = static_cast<double>(logits[i]);
    double y = static_cast<double>(targets[i]);
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= total;
  return detail::make_result<S>(
      "binary_ce", Shape{}, {static_cast<S>(loss)}, {logits.node(), targets.node()},
      [total](detail::Node<S>& self) {
        auto& zp = self.parents[0];
        auto& yp = self.parents[1];
        if (!zp->requires_grad) return;
        zp->ensure_grad();
        S g = self.grad[0] / static_cast<S>(total);
        for (int i = 0; i < total; ++i) {
          double z = static_cast<double>(zp->data[static_cast<size_t>(i)]);
          double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                              : std::exp(z) / (1.0 + std::exp(z));
          zp->grad[static_cast<size_t>(i)] +=
              g * static_cast<S>(sig - static_cast<double>(yp->data[static_cast<size_t>(i)]));
        }
      });
}

// ---------------------------------------------------------------------------
// Reverse-mode engine
// ---------------------------------------------------------------------------

// Accumulates d(loss)/d(leaf) into every reachable grad-requiring leaf.
// Repeated calls on the same graph accumulate; pass retain_graph=true when
// the graph will be walked again, otherwise intermediate buffers are freed.
template <typename S>
void backward(const Tensor<S>& loss, bool retain_graph = false) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward: loss must be a defined scalar tensor");
  }
  auto root = loss.node();
  if (!root->requires_grad) {
    throw UsageError("backward: tensor is detached from any gradient tape");
  }

  // Iterative post-order DFS; fixed parent order keeps traversal
  // deterministic. The order holds owning pointers so intermediate nodes
  // outlive the sweep even when the graph is being torn down.
  using NodePtr = std::shared_ptr<detail::Node<S>>;
  std::vector<NodePtr> order;
  std::unordered_set<detail::Node<S>*> visited;
  struct Frame {
    NodePtr node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{root, 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      NodePtr p = f.node->parents[f.next_parent++];
      if (p->requires_grad && !visited.count(p.get())) {
        visited.insert(p.get());
        stack.push_back({std::move(p), 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<S>* node = it->get();
    if (!node->backprop) continue;
    node->ensure_grad();
    node->backprop(*node);
    // Non-leaf grads are scoped to one invocation; only leaves accumulate
    // across repeated backward calls.
    node->grad.clear();
    node->grad.shrink_to_fit();
    if (!retain_graph) {
      node->data.clear();
      node->data.shrink_to_fit();
      node->backprop = nullptr;
      node->parents.clear();
    }
  }
}

}  // namespace slr
