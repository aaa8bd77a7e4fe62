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

// Log-mel front-end shared by all models, plus waveform-domain training
// augmentation. DSP runs in double precision; spectrogram files store f32.

#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>

#include "slr/audio.hpp"
#include "slr/common.hpp"

namespace slr {

using SpectrogramMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kNumMelBands = 64;
constexpr int kFftSize = 1024;    // 64 ms at 16 kHz
constexpr int kWindowSize = 400;  // 25 ms
constexpr int kHopSize = 160;     // 10 ms
constexpr double kLogFloor = 1e-10;

// T x 64 matrix of natural-log mel-band energies.
struct LogMelSpectrogram {
  SpectrogramMatrix values;  // frames x bands, row-major

  int frames() const { return static_cast<int>(values.rows()); }
  int bands() const { return static_cast<int>(values.cols()); }

  static constexpr double kFrameHopS = 0.010;
  static constexpr double kFrameWindowS = 0.025;
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filterbank, n_mels x (n_fft/2 + 1), mel-spaced edges spanning
// 0..sample_rate/2. Every row has at least one strictly positive weight.
Eigen::MatrixXd mel_filterbank(int n_mels = kNumMelBands, int n_fft = kFftSize,
                               int sample_rate = kSampleRate);

// Power spectrogram |STFT|^2: T x (n_fft/2 + 1), periodic Hann window of 400
// samples zero-padded to 1024, hop 160, centered frames over a
// reflection-padded signal. T = floor(len / 160) + 1.
SpectrogramMatrix stft_power(const AudioClip& clip);

// The model front-end: stft_power projected through mel_filterbank, floored
// at 1e-10, natural log.
LogMelSpectrogram log_mel(const AudioClip& clip);

struct AugmentationConfig {
  double noise_snr_db_min = 5.0;
  double noise_snr_db_max = 30.0;
  double reverb_decay_s_min = 0.1;
  double reverb_decay_s_max = 0.5;
  double eq_gain_db_min = -6.0;
  double eq_gain_db_max = 6.0;
  int eq_bands = 8;
  double noise_prob = 0.5;
  double reverb_prob = 0.5;
  double eq_prob = 0.5;

  void validate() const;  // throws ConfigError
};

// Applies, each with its configured probability: additive white Gaussian
// noise at a uniformly drawn SNR, synthetic reverb (exponentially decaying
// noise impulse response), and random equalization in the frequency domain.
// Length is preserved and the output peak is kept <= 1. With no transform
// applied the input comes back unchanged.
AudioClip augment(const AudioClip& clip, const AugmentationConfig& cfg,
                  std::mt19937_64& rng);

// SLRF spectrogram container: magic `SLRF`, version u16, T u32, F u32, then
// T*F little-endian f32 row-major.
void write_spectrogram(const LogMelSpectrogram& spec, const std::string& path);
LogMelSpectrogram read_spectrogram(const std::string& path);

}  // namespace slr
