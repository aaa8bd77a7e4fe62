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

#include "slr/inference.hpp"

#include <algorithm>

#include "slr/features.hpp"

namespace slr {

namespace {

constexpr std::int64_t kWindowSamples = 10 * kSampleRate;  // 10 s
constexpr std::int64_t kHopSamples = 5 * kSampleRate;      // 5 s

}  // namespace

Decision decide(const std::vector<float>& activations, HeadKind head,
                double threshold) {
  if (activations.empty()) {
    throw InvalidInputError("decide: empty activation vector");
  }
  // First maximum wins: ties break to the lowest index.
  int argmax = 0;
  for (size_t i = 1; i < activations.size(); ++i) {
    if (activations[i] > activations[static_cast<size_t>(argmax)]) {
      argmax = static_cast<int>(i);
    }
  }

  Decision d;
  d.activations = activations;
  d.head = head;
  switch (head) {
    case HeadKind::kMultilabel:
      d.outcome = static_cast<double>(activations[static_cast<size_t>(argmax)]) >= threshold
                      ? argmax
                      : kOtherLabel;
      break;
    case HeadKind::kMulticlass:
      d.outcome = argmax;
      break;
    case HeadKind::kMulticlassPlusOther:
      // The Other unit sits at the last index.
      d.outcome = argmax == static_cast<int>(activations.size()) - 1 ? kOtherLabel
                                                                     : argmax;
      break;
  }
  return d;
}

std::vector<std::int64_t> window_offsets(std::int64_t num_samples) {
  std::vector<std::int64_t> offsets;
  if (num_samples <= kWindowSamples) {
    offsets.push_back(0);
    return offsets;
  }
  for (std::int64_t off = 0; off + kWindowSamples <= num_samples; off += kHopSamples) {
    offsets.push_back(off);
  }
  // Flush the tail with the last full window ending at the clip end.
  const std::int64_t last = num_samples - kWindowSamples;
  if (offsets.back() != last) offsets.push_back(last);
  return offsets;
}

std::vector<float> predict_activations(Model<float>& model, const AudioClip& clip) {
  if (model.training()) {
    throw UsageError("predict: model must be in eval mode");
  }
  if (clip.samples.empty()) throw InvalidInputError("predict: empty clip");

  NoGradGuard no_grad;
  const auto arch = model.config().architecture;
  const auto head = model.config().head;
  const auto len = static_cast<std::int64_t>(clip.samples.size());

  std::vector<double> sum;
  int windows = 0;
  for (std::int64_t off : window_offsets(len)) {
    AudioClip window;
    window.sample_rate = clip.sample_rate;
    if (len < kWindowSamples) {
      window = fit_to_duration(clip, 10.0);
    } else {
      window.samples.assign(clip.samples.begin() + off,
                            clip.samples.begin() + off + kWindowSamples);
    }
    auto spec = log_mel(window);
    auto logits = model.forward(pack_model_input<float>(arch, spec));
    auto activations = apply_head(logits, head);
    if (sum.empty()) sum.assign(static_cast<size_t>(activations.size()), 0.0);
    for (int i = 0; i < activations.size(); ++i) {
      sum[static_cast<size_t>(i)] += static_cast<double>(activations[i]);
    }
    ++windows;
  }
  std::vector<float> mean(sum.size());
  for (size_t i = 0; i < sum.size(); ++i) {
    mean[i] = static_cast<float>(sum[i] / windows);
  }
  return mean;
}

Decision predict_clip(Model<float>& model, const AudioClip& clip, double threshold) {
  return decide(predict_activations(model, clip), model.config().head, threshold);
}

std::vector<PredictionRecord> predict_batch(Model<float>& model,
                                            const DatasetManifest& manifest,
                                            double threshold, int num_threads) {
  std::vector<PredictionRecord> records(manifest.entries.size());
  parallel_for(static_cast<int>(manifest.entries.size()), num_threads, [&](int i) {
    auto& rec = records[static_cast<size_t>(i)];
    rec.path = manifest.entries[static_cast<size_t>(i)].path;
    try {
      auto clip = load_wav(rec.path);
      rec.decision = predict_clip(model, clip, threshold);
      rec.ok = true;
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
  });
  return records;
}

}  // namespace slr
