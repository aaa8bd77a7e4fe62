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

// Balanced-epoch training: augment -> random 10 s subclip -> log-mel ->
// forward -> loss -> Adam, with per-epoch validation and early stopping on
// validation loss.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "slr/features.hpp"
#include "slr/models.hpp"
#include "slr/nn.hpp"

namespace slr {

enum class LossKind { kCategoricalCe, kBinaryCe };

std::string to_string(LossKind loss);
LossKind parse_loss(const std::string& name);

struct TrainConfig {
  double lr = 3e-4;     // default within the [1e-5, 1e-3] search bounds
  int batch_size = 64;  // default within the [32, 128] search bounds
  int max_epochs = 50;
  int patience = 5;  // early stopping on validation loss
  LossKind loss = LossKind::kCategoricalCe;
  std::uint64_t seed = 0;
  AugmentationConfig augmentation;
  int samples_per_class_per_epoch = 24;
  int num_threads = 0;  // 0 -> hardware concurrency (features/augmentation)
  double decision_threshold = 0.5;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_err = 0.0;  // 100 * (1 - accuracy)
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based epoch with minimal validation loss
};

// One balanced epoch: exactly `samples_per_class` entry indices per class,
// shuffled. Classes are the target languages, plus the "other" pool when the
// head trains on it (multiclass_plus_other and multilabel); plain multiclass
// ignores non-target entries. Classes short on files draw every file
// floor(n/k) times plus a random remainder.
std::vector<int> balanced_epoch(const DatasetManifest& manifest, HeadKind head,
                                int samples_per_class, std::mt19937_64& rng);

// Standard Adam with bias correction; consumes accumulated grads (the caller
// resets them afterwards). `t` is the 1-based step count.
template <typename S>
void adam_step(const std::vector<std::pair<std::string, Parameter<S>*>>& params,
               double lr, int t, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
  if (t < 1) throw UsageError("adam_step: step count is 1-based");
  const double bc1 = 1.0 - std::pow(beta1, t);
  const double bc2 = 1.0 - std::pow(beta2, t);
  for (auto& [name, p] : params) {
    if (!p->value.has_grad()) continue;
    const auto& g = p->value.grad();
    for (int i = 0; i < p->value.size(); ++i) {
      double gi = static_cast<double>(g[static_cast<size_t>(i)]);
      double m = beta1 * static_cast<double>(p->adam_m[static_cast<size_t>(i)]) +
                 (1.0 - beta1) * gi;
      double v = beta2 * static_cast<double>(p->adam_v[static_cast<size_t>(i)]) +
                 (1.0 - beta2) * gi * gi;
      p->adam_m[static_cast<size_t>(i)] = static_cast<S>(m);
      p->adam_v[static_cast<size_t>(i)] = static_cast<S>(v);
      const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      p->value[i] -= static_cast<S>(update);
    }
  }
}

struct ValStats {
  double loss = 0.0;
  double err = 0.0;
  int n = 0;
};

// Center-fitted, unaugmented validation pass (loss + decision error).
ValStats validate_model(Model<float>& model, const DatasetManifest& manifest,
                        const TrainConfig& cfg);

struct TrainResult {
  Model<float> model;  // parameters from the best epoch
  TrainHistory history;
};

// Runs the full loop and returns the best-epoch model (checkpointed to
// temporary weight files, best promoted at the end).
TrainResult train(Model<float> model, const DatasetManifest& train_manifest,
                  const DatasetManifest& val_manifest, const TrainConfig& cfg);

// One history record per line, machine-readable.
std::string history_to_jsonl(const TrainHistory& history);

}  // namespace slr
