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

#include "slr/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <unordered_map>

#include "slr/inference.hpp"

namespace slr {

namespace fs = std::filesystem;

std::string to_string(LossKind loss) {
  return loss == LossKind::kCategoricalCe ? "categorical_ce" : "binary_ce";
}

LossKind parse_loss(const std::string& name) {
  if (name == "categorical_ce") return LossKind::kCategoricalCe;
  if (name == "binary_ce") return LossKind::kBinaryCe;
  throw ConfigError("unknown loss '" + name +
                    "' (expected categorical_ce or binary_ce)");
}

std::vector<int> balanced_epoch(const DatasetManifest& manifest, HeadKind head,
                                int samples_per_class, std::mt19937_64& rng) {
  if (samples_per_class < 1) {
    throw ConfigError("balanced_epoch: samples_per_class must be >= 1");
  }
  const int num_languages = static_cast<int>(manifest.languages.size());
  const bool uses_other = head != HeadKind::kMulticlass;

  // Pools per class, in manifest order. Class key kOtherLabel is the pool of
  // non-target entries.
  std::map<int, std::vector<int>> pools;
  for (int c = 0; c < num_languages; ++c) pools[c] = {};
  if (uses_other) pools[kOtherLabel] = {};
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    int label = manifest.entries[i].label;
    if (label == kOtherLabel && !uses_other) continue;
    pools[label].push_back(static_cast<int>(i));
  }

  std::vector<int> epoch;
  epoch.reserve(pools.size() * static_cast<size_t>(samples_per_class));
  for (auto& [label, pool] : pools) {
    if (pool.empty()) {
      const std::string name =
          label == kOtherLabel ? "other" : manifest.languages[static_cast<size_t>(label)];
      throw ConfigError("balanced_epoch: class '" + name +
                        "' has no entries in the manifest");
    }
    // Every file appears floor(n/k) times; the remainder is drawn without
    // replacement so coverage stays as even as possible.
    const int k = static_cast<int>(pool.size());
    const int rounds = samples_per_class / k;
    const int rem = samples_per_class % k;
    for (int r = 0; r < rounds; ++r) {
      epoch.insert(epoch.end(), pool.begin(), pool.end());
    }
    if (rem > 0) {
      std::vector<int> extras(pool);
      std::shuffle(extras.begin(), extras.end(), rng);
      epoch.insert(epoch.end(), extras.begin(), extras.begin() + rem);
    }
  }
  std::shuffle(epoch.begin(), epoch.end(), rng);
  return epoch;
}

namespace {

void check_loss_head(LossKind loss, HeadKind head) {
  const bool multilabel = head == HeadKind::kMultilabel;
  if (multilabel && loss != LossKind::kBinaryCe) {
    throw ConfigError("train: multilabel heads require binary_ce");
  }
  if (!multilabel && loss != LossKind::kCategoricalCe) {
    throw ConfigError("train: multiclass heads require categorical_ce");
  }
}

// Decoded-audio cache shared across epochs.
class ClipStore {
 public:
  void preload(const DatasetManifest& manifest, int num_threads) {
    std::vector<std::string> missing;
    for (const auto& e : manifest.entries) {
      if (!clips_.count(e.path)) {
        clips_.emplace(e.path, AudioClip{});
        missing.push_back(e.path);
      }
    }
    parallel_for(static_cast<int>(missing.size()), num_threads, [&](int i) {
      clips_.at(missing[static_cast<size_t>(i)]) = load_wav(missing[static_cast<size_t>(i)]);
    });
  }

  const AudioClip& get(const std::string& path) const { return clips_.at(path); }

 private:
  std::unordered_map<std::string, AudioClip> clips_;
};

// Scalar loss for a batch, per head kind.
Tensor<float> batch_loss(const Tensor<float>& logits,
                         const std::vector<int>& labels, HeadKind head,
                         LossKind loss, int num_languages) {
  if (loss == LossKind::kCategoricalCe) {
    std::vector<int> targets(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
      // The explicit Other unit sits at index L.
      targets[i] = labels[i] == kOtherLabel ? num_languages : labels[i];
    }
    return categorical_ce(logits, targets);
  }
  // Multilabel: one-hot rows; non-target entries train as all-zero rows.
  const int n = static_cast<int>(labels.size());
  auto targets = Tensor<float>::zeros({n, num_languages});
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<size_t>(i)] != kOtherLabel) {
      targets[i * num_languages + labels[static_cast<size_t>(i)]] = 1.0f;
    }
  }
  return binary_ce(logits, targets);
}

struct FeaturizedBatch {
  Tensor<float> input;
  std::vector<int> labels;
};

// Training-path featurization: augment, random 10 s subclip, log-mel.
// Per-sample RNG streams make the result independent of the worker count.
FeaturizedBatch featurize_train_batch(const ClipStore& store,
                                      const DatasetManifest& manifest,
                                      const std::vector<int>& entry_indices,
                                      int epoch, int base_offset,
                                      const TrainConfig& cfg, Architecture arch,
                                      int num_threads) {
  const int n = static_cast<int>(entry_indices.size());
  std::vector<LogMelSpectrogram> specs(static_cast<size_t>(n));
  std::vector<int> labels(static_cast<size_t>(n));
  parallel_for(n, num_threads, [&](int i) {
    const auto& entry =
        manifest.entries[static_cast<size_t>(entry_indices[static_cast<size_t>(i)])];
    labels[static_cast<size_t>(i)] = entry.label;
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(base_offset + i)));
    auto clip = augment(store.get(entry.path), cfg.augmentation, rng);
    clip = fit_to_duration(clip, 10.0, FitMode::kRandomSubclip, rng);
    specs[static_cast<size_t>(i)] = log_mel(clip);
  });
  std::vector<const LogMelSpectrogram*> ptrs;
  ptrs.reserve(static_cast<size_t>(n));
  for (const auto& s : specs) ptrs.push_back(&s);
  return {pack_model_input<float>(arch, ptrs), std::move(labels)};
}

}  // namespace

ValStats validate_model(Model<float>& model, const DatasetManifest& manifest,
                        const TrainConfig& cfg) {
  if (manifest.entries.empty()) {
    throw ConfigError("validate: empty manifest");
  }
  const int threads = cfg.num_threads > 0 ? cfg.num_threads : default_num_threads();
  ClipStore store;
  store.preload(manifest, threads);

  const auto head = model.config().head;
  const auto arch = model.config().architecture;
  const int L = model.config().num_languages;
  model.set_train(false);
  NoGradGuard no_grad;

  ValStats stats;
  double loss_sum = 0.0;
  int correct = 0;
  const int n = static_cast<int>(manifest.entries.size());
  const int bs = std::max(1, cfg.batch_size);
  for (int begin = 0; begin < n; begin += bs) {
    const int end = std::min(n, begin + bs);
    const int m = end - begin;
    std::vector<LogMelSpectrogram> specs(static_cast<size_t>(m));
    std::vector<int> labels(static_cast<size_t>(m));
    parallel_for(m, threads, [&](int i) {
      const auto& entry = manifest.entries[static_cast<size_t>(begin + i)];
      labels[static_cast<size_t>(i)] = entry.label;
      specs[static_cast<size_t>(i)] =
          log_mel(fit_to_duration(store.get(entry.path), 10.0));
    });
    std::vector<const LogMelSpectrogram*> ptrs;
    for (const auto& s : specs) ptrs.push_back(&s);
    auto logits = model.forward(pack_model_input<float>(arch, ptrs));
    loss_sum += static_cast<double>(batch_loss(logits, labels, head, cfg.loss, L).item()) * m;

    auto activations = apply_head(logits, head);
    const int units = model.config().output_units();
    for (int i = 0; i < m; ++i) {
      std::vector<float> row(activations.data() + static_cast<ptrdiff_t>(i) * units,
                             activations.data() + static_cast<ptrdiff_t>(i + 1) * units);
      auto decision = decide(row, head, cfg.decision_threshold);
      if (decision.outcome == labels[static_cast<size_t>(i)]) ++correct;
    }
  }
  stats.n = n;
  stats.loss = loss_sum / n;
  stats.err = 100.0 * (1.0 - static_cast<double>(correct) / n);
  return stats;
}

TrainResult train(Model<float> model, const DatasetManifest& train_manifest,
                  const DatasetManifest& val_manifest, const TrainConfig& cfg) {
  check_loss_head(cfg.loss, model.config().head);
  cfg.augmentation.validate();
  if (cfg.batch_size < 2) {
    throw ConfigError("train: batch_size must be >= 2 for batch statistics");
  }
  if (cfg.max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (cfg.patience < 1) throw ConfigError("train: patience must be >= 1");
  if (val_manifest.entries.empty()) {
    throw ConfigError("train: early stopping needs a non-empty validation manifest");
  }
  if (static_cast<int>(train_manifest.languages.size()) !=
      model.config().num_languages) {
    throw ConfigError("train: manifest has " +
                      std::to_string(train_manifest.languages.size()) +
                      " languages but the model expects " +
                      std::to_string(model.config().num_languages));
  }

  const int threads = cfg.num_threads > 0 ? cfg.num_threads : default_num_threads();
  const auto arch = model.config().architecture;
  const auto head = model.config().head;
  const int L = model.config().num_languages;

  ClipStore store;
  store.preload(train_manifest, threads);

  // Temporary checkpoint directory; the best epoch is promoted at the end.
  std::mt19937_64 dir_rng(std::random_device{}());
  const fs::path ckpt_dir =
      fs::temp_directory_path() /
      ("slrkit_ckpt_" + std::to_string(dir_rng() & 0xffffffffULL));
  fs::create_directories(ckpt_dir);
  auto ckpt_path = [&](int epoch) {
    return (ckpt_dir / ("epoch_" + std::to_string(epoch) + ".slrw")).string();
  };

  TrainHistory history;
  auto params = model.named_params();
  int adam_t = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  try {
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      std::mt19937_64 epoch_rng(derive_seed(cfg.seed, 0xE90C4, static_cast<std::uint64_t>(epoch)));
      auto plan = balanced_epoch(train_manifest, head, cfg.samples_per_class_per_epoch,
                                 epoch_rng);

      model.set_train(true);
      double loss_sum = 0.0;
      int seen = 0;
      int batch_index = 0;
      for (size_t begin = 0; begin < plan.size(); begin += static_cast<size_t>(cfg.batch_size)) {
        size_t end = std::min(plan.size(), begin + static_cast<size_t>(cfg.batch_size));
        if (end - begin < 2) {
          log_warn("train: dropping trailing batch of size 1");
          break;
        }
        std::vector<int> indices(plan.begin() + static_cast<ptrdiff_t>(begin),
                                 plan.begin() + static_cast<ptrdiff_t>(end));
        auto batch = featurize_train_batch(store, train_manifest, indices, epoch,
                                           static_cast<int>(begin), cfg, arch, threads);
        ++batch_index;
        double loss_value;
        try {
          auto logits = model.forward(batch.input);
          auto loss = batch_loss(logits, batch.labels, head, cfg.loss, L);
          loss_value = static_cast<double>(loss.item());
          backward(loss);
        } catch (const NonFiniteError& e) {
          throw NonFiniteError("train: diverged at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index) +
                               " (lr=" + std::to_string(cfg.lr) + "): " + e.what());
        }
        if (!std::isfinite(loss_value)) {
          throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index) +
                               " (lr=" + std::to_string(cfg.lr) + ")");
        }
        adam_step(params, cfg.lr, ++adam_t);
        model.zero_grad();
        loss_sum += loss_value * static_cast<double>(end - begin);
        seen += static_cast<int>(end - begin);
      }

      auto val = validate_model(model, val_manifest, cfg);

      EpochStats stats;
      stats.epoch = epoch;
      stats.train_loss = seen > 0 ? loss_sum / seen : 0.0;
      stats.val_loss = val.loss;
      stats.val_err = val.err;
      history.epochs.push_back(stats);

      save_model(model, ckpt_path(epoch));
      if (val.loss < best_val_loss) {
        best_val_loss = val.loss;
        best_epoch = epoch;
      }
      if (epoch - best_epoch >= cfg.patience) break;
    }

    history.best_epoch = best_epoch;
    Model<float> best = load_model(ckpt_path(best_epoch));
    fs::remove_all(ckpt_dir);
    return {std::move(best), std::move(history)};
  } catch (...) {
    fs::remove_all(ckpt_dir);
    throw;
  }
}

std::string history_to_jsonl(const TrainHistory& history) {
  std::ostringstream os;
  for (const auto& e : history.epochs) {
    os << "{\"epoch\": " << e.epoch << ", \"train_loss\": " << e.train_loss
       << ", \"val_loss\": " << e.val_loss << ", \"val_err\": " << e.val_err
       << (e.epoch == history.best_epoch ? ", \"best\": true" : "") << "}\n";
  }
  return os.str();
}

}  // namespace slr
