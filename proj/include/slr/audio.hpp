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

#pragma once

#include <random>
#include <string>
#include <vector>

#include "slr/common.hpp"

namespace slr {

// Everything downstream assumes this rate; inputs at other rates are
// rejected rather than resampled.
constexpr int kSampleRate = 16000;

// Mono PCM audio in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a RIFF/WAVE file: PCM s16le or f32le, mono, 16 kHz. 16-bit samples
// are scaled by 1/32768. Anything else is rejected with an error naming the
// offending field.
AudioClip load_wav(const std::string& path);

// Writes mono PCM s16le at 16 kHz (samples clamped to [-1, 1]).
void write_wav(const AudioClip& clip, const std::string& path);

enum class FitMode {
  kCenter,         // center-pad shorter clips / center-crop longer ones
  kRandomSubclip,  // longer clips: uniformly random start offset
};

// Returns a clip of exactly round(target_s * 16000) samples. Shorter inputs
// are centered between zero pads (left pad gets the smaller half when the
// total is odd); longer inputs are center-cropped or, in kRandomSubclip mode,
// cropped at a random offset drawn from `rng`.
AudioClip fit_to_duration(const AudioClip& clip, double target_s, FitMode mode,
                          std::mt19937_64& rng);

// Center-mode convenience (no randomness involved).
AudioClip fit_to_duration(const AudioClip& clip, double target_s = 10.0);

// Label value for non-target ("other") entries.
constexpr int kOtherLabel = -1;

struct ManifestEntry {
  std::string path;
  int label = kOtherLabel;  // index into languages, or kOtherLabel
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> languages;  // configured code list; index == label
};

// Reads a tab-separated manifest: `<path>\t<label>` per line, `#` comments.
// Labels must be one of `languages` or the literal `other`. Relative paths
// are resolved against the manifest's directory.
DatasetManifest read_manifest(const std::string& path,
                              const std::vector<std::string>& languages);

void write_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace slr
