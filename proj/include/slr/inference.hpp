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

// Clip-level prediction: 10 s windowing with a 5 s hop, activation
// averaging, and the multiclass/multilabel decision rules including "Other".

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slr/audio.hpp"
#include "slr/models.hpp"

namespace slr {

// Inference verdict. `outcome` is a target-language index or kOtherLabel;
// activations are post-softmax (multiclass heads) or post-sigmoid
// (multilabel), over L or L+1 units.
struct Decision {
  int outcome = kOtherLabel;
  std::vector<float> activations;
  HeadKind head = HeadKind::kMulticlass;

  bool is_other() const { return outcome == kOtherLabel; }
};

constexpr double kDecisionThreshold = 0.5;

// Multilabel: argmax if the maximum activation clears the threshold
// (boundary inclusive), otherwise Other; ties break to the lowest index.
// Multiclass heads: plain argmax; the explicit Other unit (last index of a
// multiclass_plus_other head) maps to the Other outcome.
Decision decide(const std::vector<float>& activations, HeadKind head,
                double threshold = kDecisionThreshold);

// Window start offsets in samples: 0, 5 s, 10 s, ... plus a final window
// flush with the clip end when the hop grid does not reach it. Clips shorter
// than 10 s get a single (center-fitted) window.
std::vector<std::int64_t> window_offsets(std::int64_t num_samples);

// Averages post-nonlinearity activations over the clip's 10 s windows and
// decides on the mean. The model must be in eval mode.
Decision predict_clip(Model<float>& model, const AudioClip& clip,
                      double threshold = kDecisionThreshold);

// Activations only (no decision); used by evaluation and benchmarking.
std::vector<float> predict_activations(Model<float>& model, const AudioClip& clip);

struct PredictionRecord {
  std::string path;
  bool ok = false;
  Decision decision;
  std::string error;  // set when ok == false
};

// Per-clip failures are recorded, not fatal. Results follow manifest order
// regardless of the worker count.
std::vector<PredictionRecord> predict_batch(Model<float>& model,
                                            const DatasetManifest& manifest,
                                            double threshold = kDecisionThreshold,
                                            int num_threads = 1);

}  // namespace slr
