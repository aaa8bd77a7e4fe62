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

// Independent reference implementations used as test oracles. Everything
// here is deliberately naive (straight loops, textbook formulas) and shares
// no code with the library paths it checks.

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "slr/tensor.hpp"

namespace oracle {

// Naive sextuple-loop 2D cross-correlation.
inline std::vector<double> conv2d_ref(const std::vector<double>& x, int n,
                                      int c_in, int h, int w,
                                      const std::vector<double>& k, int c_out,
                                      int kh, int kw, int sh, int sw, int ph,
                                      int pw, const std::vector<double>* bias) {
  int ho = (h + 2 * ph - kh) / sh + 1;
  int wo = (w + 2 * pw - kw) / sw + 1;
  std::vector<double> out(static_cast<size_t>(n) * c_out * ho * wo, 0.0);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < c_out; ++co)
      for (int oh = 0; oh < ho; ++oh)
        for (int ow = 0; ow < wo; ++ow) {
          double acc = bias ? (*bias)[co] : 0.0;
          for (int ci = 0; ci < c_in; ++ci)
            for (int jh = 0; jh < kh; ++jh)
              for (int jw = 0; jw < kw; ++jw) {
                int ih = oh * sh - ph + jh;
                int iw = ow * sw - pw + jw;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                acc += x[((static_cast<size_t>(b) * c_in + ci) * h + ih) * w + iw] *
                       k[((static_cast<size_t>(co) * c_in + ci) * kh + jh) * kw + jw];
              }
          out[((static_cast<size_t>(b) * c_out + co) * ho + oh) * wo + ow] = acc;
        }
  return out;
}

// Naive dilated 1D cross-correlation.
inline std::vector<double> conv1d_ref(const std::vector<double>& x, int n,
                                      int c_in, int t,
                                      const std::vector<double>& k, int c_out,
                                      int kw, int stride, int dilation, int pad,
                                      const std::vector<double>* bias) {
  int to = (t + 2 * pad - (kw - 1) * dilation - 1) / stride + 1;
  std::vector<double> out(static_cast<size_t>(n) * c_out * to, 0.0);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < c_out; ++co)
      for (int l = 0; l < to; ++l) {
        double acc = bias ? (*bias)[co] : 0.0;
        for (int ci = 0; ci < c_in; ++ci)
          for (int j = 0; j < kw; ++j) {
            int it = l * stride - pad + j * dilation;
            if (it < 0 || it >= t) continue;
            acc += x[(static_cast<size_t>(b) * c_in + ci) * t + it] *
                   k[(static_cast<size_t>(co) * c_in + ci) * kw + j];
          }
        out[(static_cast<size_t>(b) * c_out + co) * to + l] = acc;
      }
  return out;
}

inline std::vector<double> dense_ref(const std::vector<double>& x, int n,
                                     int d_in, const std::vector<double>& w,
                                     int d_out, const std::vector<double>& bias) {
  std::vector<double> out(static_cast<size_t>(n) * d_out, 0.0);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < d_out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (int i = 0; i < d_in; ++i)
        acc += x[static_cast<size_t>(b) * d_in + i] * w[static_cast<size_t>(o) * d_in + i];
      out[static_cast<size_t>(b) * d_out + o] = acc;
    }
  return out;
}

// Weighted mean/std pooling, straight loops.
inline std::vector<double> stats_pool_ref(const std::vector<double>& x, int n,
                                          int c, int t,
                                          const std::vector<double>& w,
                                          bool per_channel) {
  std::vector<double> out(static_cast<size_t>(n) * 2 * c, 0.0);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      double mu = 0.0, var = 0.0;
      for (int s = 0; s < t; ++s) {
        double ws = w.empty() ? 1.0 / t
                              : (per_channel
                                     ? w[(static_cast<size_t>(b) * c + ch) * t + s]
                                     : w[static_cast<size_t>(b) * t + s]);
        mu += ws * x[(static_cast<size_t>(b) * c + ch) * t + s];
      }
      for (int s = 0; s < t; ++s) {
        double ws = w.empty() ? 1.0 / t
                              : (per_channel
                                     ? w[(static_cast<size_t>(b) * c + ch) * t + s]
                                     : w[static_cast<size_t>(b) * t + s]);
        double d = x[(static_cast<size_t>(b) * c + ch) * t + s] - mu;
        var += ws * d * d;
      }
      out[static_cast<size_t>(b) * 2 * c + ch] = mu;
      out[static_cast<size_t>(b) * 2 * c + c + ch] =
          std::sqrt(var < 1e-8 ? 1e-8 : var);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Front-end references: straight-line mel formula and an O(T * n_fft^2)
// DFT-based log-mel pipeline.
// ---------------------------------------------------------------------------

// HTK mel triangles evaluated bin by bin from the closed-form formula.
inline std::vector<std::vector<double>> mel_fb_ref(int n_mels = 64,
                                                   int n_fft = 1024,
                                                   int sr = 16000) {
  auto to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const int bins = n_fft / 2 + 1;
  const double top = to_mel(sr / 2.0);
  std::vector<std::vector<double>> fb(static_cast<size_t>(n_mels),
                                      std::vector<double>(static_cast<size_t>(bins), 0.0));
  for (int m = 0; m < n_mels; ++m) {
    double lo = to_hz(top * m / (n_mels + 1));
    double mid = to_hz(top * (m + 1) / (n_mels + 1));
    double hi = to_hz(top * (m + 2) / (n_mels + 1));
    for (int k = 0; k < bins; ++k) {
      double f = static_cast<double>(k) * sr / n_fft;
      double w = 0.0;
      if (f > lo && f < mid) w = (f - lo) / (mid - lo);
      if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
      fb[static_cast<size_t>(m)][static_cast<size_t>(k)] = w < 0.0 ? 0.0 : w;
    }
  }
  return fb;
}

// Mirror-bounce reflection (edge sample not repeated), explicit loop form.
inline std::int64_t reflect_ref(std::int64_t i, std::int64_t len) {
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
  }
  return i;
}

// Log-mel via naive per-bin DFT sums: 400-sample periodic Hann frames
// centered at t*160 over the reflected signal, zero-padded to 1024 points,
// power spectrum through the triangle bank, floor 1e-10, natural log.
inline std::vector<std::vector<double>> log_mel_ref(const std::vector<float>& x) {
  const int sr = 16000, n_fft = 1024, win = 400, hop = 160, n_mels = 64;
  const double pi = 3.14159265358979323846;
  const auto len = static_cast<std::int64_t>(x.size());
  const int frames = static_cast<int>(len / hop) + 1;
  const int bins = n_fft / 2 + 1;
  const auto fb = mel_fb_ref(n_mels, n_fft, sr);

  std::vector<std::vector<double>> out(static_cast<size_t>(frames),
                                       std::vector<double>(n_mels, 0.0));
  for (int t = 0; t < frames; ++t) {
    std::vector<double> frame(static_cast<size_t>(win));
    for (int j = 0; j < win; ++j) {
      std::int64_t idx = static_cast<std::int64_t>(t) * hop - win / 2 + j;
      double w = 0.5 - 0.5 * std::cos(2.0 * pi * j / win);
      frame[static_cast<size_t>(j)] =
          static_cast<double>(x[static_cast<size_t>(reflect_ref(idx, len))]) * w;
    }
    std::vector<double> power(static_cast<size_t>(bins));
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int j = 0; j < win; ++j) {  // remaining n_fft-win points are zero
        double ang = 2.0 * pi * k * j / n_fft;
        re += frame[static_cast<size_t>(j)] * std::cos(ang);
        im -= frame[static_cast<size_t>(j)] * std::sin(ang);
      }
      power[static_cast<size_t>(k)] = re * re + im * im;
    }
    for (int m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) {
        e += fb[static_cast<size_t>(m)][static_cast<size_t>(k)] * power[static_cast<size_t>(k)];
      }
      out[static_cast<size_t>(t)][static_cast<size_t>(m)] =
          std::log(e < 1e-10 ? 1e-10 : e);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Central finite differences against the autograd engine (64-bit only).
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

// `forward` must rebuild the graph from the leaves on every call and return a
// scalar tensor. Elements are subsampled deterministically when a leaf is
// large.
inline GradCheckResult grad_check(
    const std::function<slr::Tensor<double>()>& forward,
    std::vector<slr::Tensor<double>> leaves, double step = 1e-4,
    int max_elems_per_leaf = 80, std::uint64_t seed = 1234) {
  for (auto& l : leaves) l.zero_grad();
  slr::Tensor<double> loss = forward();
  slr::backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& l : leaves) {
    analytic.push_back(l.has_grad() ? l.grad() : std::vector<double>(l.size(), 0.0));
  }

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    int n = leaf.size();
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    if (n > max_elems_per_leaf) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<size_t>(max_elems_per_leaf));
    }
    for (int i : idx) {
      double saved = leaf[i];
      double lp, lm;
      {
        slr::NoGradGuard ng;
        leaf[i] = saved + step;
        lp = forward().item();
        leaf[i] = saved - step;
        lm = forward().item();
        leaf[i] = saved;
      }
      double numeric = (lp - lm) / (2.0 * step);
      double a = analytic[li][static_cast<size_t>(i)];
      double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      double rel = std::abs(a - numeric) / denom;
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace oracle
