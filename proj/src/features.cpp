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

#include "slr/features.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

namespace slr {

namespace {

constexpr double kPi = std::numbers::pi;

// Index into a reflection-padded view of x (mirror without repeating the
// edge sample), valid for any offset.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t len) {
  if (len == 1) return 0;
  const std::int64_t period = 2 * (len - 1);
  i = ((i % period) + period) % period;
  return i < len ? i : period - i;
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Eigen::MatrixXd mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  if (n_mels < 1) throw ConfigError("mel_filterbank: n_mels must be >= 1");
  if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) {
    throw ConfigError("mel_filterbank: n_fft must be a power of two, got " +
                      std::to_string(n_fft));
  }
  const int bins = n_fft / 2 + 1;
  const double nyquist = sample_rate / 2.0;

  // Mel-spaced edges: n_mels + 2 points from 0 Hz to Nyquist.
  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  const double mel_max = hz_to_mel(nyquist);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
  }

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double center = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f < center) {
        w = (f - lo) / (center - lo);
      } else if (f >= center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      if (w > 0.0) {
        fb(m, k) = w;
        any = true;
      }
    }
    if (!any) {
      throw ConfigError("mel_filterbank: filter row " + std::to_string(m) +
                        " is empty; n_mels=" + std::to_string(n_mels) +
                        " too large for n_fft=" + std::to_string(n_fft));
    }
  }
  return fb;
}

SpectrogramMatrix stft_power(const AudioClip& clip) {
  const auto len = static_cast<std::int64_t>(clip.samples.size());
  if (len < kHopSize) {
    throw InvalidInputError("stft_power: clip of " + std::to_string(len) +
                            " samples is shorter than one hop (" +
                            std::to_string(kHopSize) + ")");
  }
  const int frames = static_cast<int>(len / kHopSize) + 1;
  const int bins = kFftSize / 2 + 1;

  // Periodic Hann.
  std::array<double, kWindowSize> window;
  for (int j = 0; j < kWindowSize; ++j) {
    window[static_cast<size_t>(j)] =
        0.5 - 0.5 * std::cos(2.0 * kPi * j / kWindowSize);
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  SpectrogramMatrix power(frames, bins);
  std::vector<double> frame(static_cast<size_t>(kFftSize), 0.0);
  std::vector<std::complex<double>> spectrum;
  for (int t = 0; t < frames; ++t) {
    const std::int64_t center = static_cast<std::int64_t>(t) * kHopSize;
    for (int j = 0; j < kWindowSize; ++j) {
      const std::int64_t idx = center - kWindowSize / 2 + j;
      frame[static_cast<size_t>(j)] =
          static_cast<double>(clip.samples[static_cast<size_t>(reflect_index(idx, len))]) *
          window[static_cast<size_t>(j)];
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k < bins; ++k) {
      power(t, k) = std::norm(spectrum[static_cast<size_t>(k)]);
    }
  }
  return power;
}

LogMelSpectrogram log_mel(const AudioClip& clip) {
  static const Eigen::MatrixXd fb = mel_filterbank();
  SpectrogramMatrix power = stft_power(clip);

  LogMelSpectrogram spec;
  spec.values.noalias() = power * fb.transpose();  // T x 64
  spec.values = spec.values.cwiseMax(kLogFloor).array().log().matrix();
  if (!spec.values.allFinite()) {
    throw NonFiniteError("log_mel: non-finite value in spectrogram");
  }
  return spec;
}

void AugmentationConfig::validate() const {
  auto check_range = [](double lo, double hi, const char* name) {
    if (!(lo <= hi)) {
      throw ConfigError(std::string("augment: empty range for ") + name);
    }
  };
  check_range(noise_snr_db_min, noise_snr_db_max, "noise_snr_db");
  check_range(reverb_decay_s_min, reverb_decay_s_max, "reverb_decay_s");
  check_range(eq_gain_db_min, eq_gain_db_max, "eq_gain_db");
  if (reverb_decay_s_min <= 0) {
    throw ConfigError("augment: reverb decay must be positive");
  }
  if (eq_bands < 2) throw ConfigError("augment: eq_bands must be >= 2");
  for (double p : {noise_prob, reverb_prob, eq_prob}) {
    if (p < 0.0 || p > 1.0) {
      throw ConfigError("augment: probabilities must lie in [0,1]");
    }
  }
}

namespace {

// y = x (*) ir, truncated to the length of x. FFT-based; exact up to
// round-off.
std::vector<double> convolve_truncated(const std::vector<double>& x,
                                       const std::vector<double>& ir) {
  const int n = static_cast<int>(x.size());
  const int fft_n = next_pow2(n + static_cast<int>(ir.size()) - 1);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  std::vector<double> xp(x);
  xp.resize(static_cast<size_t>(fft_n), 0.0);
  std::vector<double> hp(ir);
  hp.resize(static_cast<size_t>(fft_n), 0.0);

  std::vector<std::complex<double>> fx, fh;
  fft.fwd(fx, xp);
  fft.fwd(fh, hp);
  for (size_t i = 0; i < fx.size(); ++i) fx[i] *= fh[i];
  std::vector<double> y;
  fft.inv(y, fx);
  y.resize(static_cast<size_t>(n));
  return y;
}

}  // namespace

AudioClip augment(const AudioClip& clip, const AugmentationConfig& cfg,
                  std::mt19937_64& rng) {
  if (clip.samples.empty()) throw InvalidInputError("augment: empty clip");
  cfg.validate();

  const size_t n = clip.samples.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) y[i] = static_cast<double>(clip.samples[i]);
  bool applied = false;

  // Fixed transform order keeps a given (clip, cfg, seed) reproducible.
  if (unit(rng) < cfg.noise_prob) {
    double signal_power = 0.0;
    for (double v : y) signal_power += v * v;
    signal_power /= static_cast<double>(n);
    if (signal_power > 0.0) {
      std::uniform_real_distribution<double> snr_dist(cfg.noise_snr_db_min,
                                                      cfg.noise_snr_db_max);
      const double snr_db = snr_dist(rng);
      const double sigma =
          std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (double& v : y) v += sigma * gauss(rng);
      applied = true;
    }
  }

  if (unit(rng) < cfg.reverb_prob) {
    std::uniform_real_distribution<double> decay_dist(cfg.reverb_decay_s_min,
                                                      cfg.reverb_decay_s_max);
    const double decay_s = decay_dist(rng);
    // Noise IR with a -60 dB point at `decay_s`; unit direct path kept.
    const auto ir_len = std::max<std::int64_t>(
        2, std::min<std::int64_t>(static_cast<std::int64_t>(n),
                                  std::llround(1.5 * decay_s * clip.sample_rate)));
    std::vector<double> ir(static_cast<size_t>(ir_len));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double rate = 6.9077552789821368 / (decay_s * clip.sample_rate);
    for (std::int64_t i = 0; i < ir_len; ++i) {
      ir[static_cast<size_t>(i)] =
          gauss(rng) * std::exp(-rate * static_cast<double>(i));
    }
    ir[0] = 1.0;
    double norm = 0.0;
    for (double v : ir) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : ir) v /= norm;
    y = convolve_truncated(y, ir);
    applied = true;
  }

  if (unit(rng) < cfg.eq_prob) {
    std::uniform_real_distribution<double> gain_dist(cfg.eq_gain_db_min,
                                                     cfg.eq_gain_db_max);
    std::vector<double> gains_db(static_cast<size_t>(cfg.eq_bands));
    for (double& g : gains_db) g = gain_dist(rng);

    // Band centers log-spaced over [100, 7500] Hz; gains interpolated
    // linearly in (log f, dB) and applied on the full-clip spectrum.
    const double f_lo = 100.0, f_hi = 7500.0;
    const int bands = cfg.eq_bands;
    auto center_log = [&](int b) {
      return std::log(f_lo) +
             (std::log(f_hi) - std::log(f_lo)) * b / (bands - 1);
    };

    const int fft_n = next_pow2(static_cast<int>(n));
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> yp(y);
    yp.resize(static_cast<size_t>(fft_n), 0.0);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, yp);
    for (size_t k = 0; k < spec.size(); ++k) {
      const double f = static_cast<double>(k) * clip.sample_rate / fft_n;
      double db;
      if (f <= f_lo) {
        db = gains_db.front();
      } else if (f >= f_hi) {
        db = gains_db.back();
      } else {
        const double lf = std::log(f);
        int b = 0;
        while (b + 1 < bands - 1 && center_log(b + 1) < lf) ++b;
        const double t = (lf - center_log(b)) / (center_log(b + 1) - center_log(b));
        db = gains_db[static_cast<size_t>(b)] * (1.0 - t) +
             gains_db[static_cast<size_t>(b) + 1] * t;
      }
      spec[k] *= std::pow(10.0, db / 20.0);
    }
    std::vector<double> out;
    fft.inv(out, spec);
    out.resize(n);
    y = std::move(out);
    applied = true;
  }

  if (!applied) return clip;

  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::abs(v));
  const double scale = peak > 1.0 ? 1.0 / peak : 1.0;

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(y[i] * scale);
    if (!std::isfinite(out.samples[i])) {
      throw NonFiniteError("augment: non-finite sample produced");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// SLRF container
// ---------------------------------------------------------------------------

namespace {
constexpr char kSpectrogramMagic[4] = {'S', 'L', 'R', 'F'};
constexpr std::uint16_t kSpectrogramVersion = 1;
}  // namespace

void write_spectrogram(const LogMelSpectrogram& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_spectrogram: cannot open '" + path + "'");
  out.write(kSpectrogramMagic, 4);
  auto put = [&](const void* p, size_t bytes) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(bytes));
  };
  std::uint16_t version = kSpectrogramVersion;
  std::uint32_t t = static_cast<std::uint32_t>(spec.frames());
  std::uint32_t f = static_cast<std::uint32_t>(spec.bands());
  put(&version, 2);
  put(&t, 4);
  put(&f, 4);
  for (int i = 0; i < spec.frames(); ++i) {
    for (int j = 0; j < spec.bands(); ++j) {
      float v = static_cast<float>(spec.values(i, j));
      put(&v, 4);
    }
  }
  if (!out) throw FormatError("write_spectrogram: failed writing '" + path + "'");
}

LogMelSpectrogram read_spectrogram(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_spectrogram: cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSpectrogramMagic, 4) != 0) {
    throw CorruptionError("read_spectrogram: '" + path + "' is not an SLRF file");
  }
  std::uint16_t version = 0;
  std::uint32_t t = 0, f = 0;
  in.read(reinterpret_cast<char*>(&version), 2);
  in.read(reinterpret_cast<char*>(&t), 4);
  in.read(reinterpret_cast<char*>(&f), 4);
  if (!in || version != kSpectrogramVersion) {
    throw CorruptionError("read_spectrogram: bad header in '" + path + "'");
  }
  LogMelSpectrogram spec;
  spec.values.resize(t, f);
  for (std::uint32_t i = 0; i < t; ++i) {
    for (std::uint32_t j = 0; j < f; ++j) {
      float v;
      in.read(reinterpret_cast<char*>(&v), 4);
      if (!in) {
        throw CorruptionError("read_spectrogram: truncated payload in '" + path + "'");
      }
      spec.values(i, j) = static_cast<double>(v);
    }
  }
  return spec;
}

}  // namespace slr
