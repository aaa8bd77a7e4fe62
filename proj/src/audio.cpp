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

#include "slr/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace slr {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatIeeeFloat = 3;

template <typename T>
T read_le(std::istream& in) {
  // Little-endian on-disk layout; byte assembly keeps this host-independent.
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  std::uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  T out;
  std::memcpy(&out, &v, sizeof(T));
  return out;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::uint64_t v = 0;
  std::memcpy(&v, &value, sizeof(T));
  for (size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_wav: cannot open '" + path + "'");

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    throw FormatError("load_wav: '" + path + "' is not a RIFF container");
  }
  read_le<std::uint32_t>(in);  // container size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    throw FormatError("load_wav: '" + path + "' is not a WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> payload;

  while (in.read(tag, 4)) {
    std::uint32_t chunk_size = read_le<std::uint32_t>(in);
    if (!in) throw FormatError("load_wav: truncated chunk header in '" + path + "'");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) {
        throw FormatError("load_wav: fmt chunk too small in '" + path + "'");
      }
      format = read_le<std::uint16_t>(in);
      channels = read_le<std::uint16_t>(in);
      rate = read_le<std::uint32_t>(in);
      read_le<std::uint32_t>(in);  // byte rate
      read_le<std::uint16_t>(in);  // block align
      bits = read_le<std::uint16_t>(in);
      in.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      payload.resize(chunk_size);
      in.read(payload.data(), chunk_size);
      if (static_cast<std::uint32_t>(in.gcount()) != chunk_size) {
        throw FormatError("load_wav: truncated data chunk in '" + path + "'");
      }
    } else {
      in.ignore(chunk_size);
    }
    if (chunk_size % 2 == 1) in.ignore(1);  // RIFF chunks are word-aligned
  }

  if (!have_fmt) throw FormatError("load_wav: missing fmt chunk in '" + path + "'");
  if (format != kFormatPcm && format != kFormatIeeeFloat) {
    throw UnsupportedInputError("load_wav: audio_format=" + std::to_string(format) +
                                " in '" + path + "', expected PCM (1) or IEEE float (3)");
  }
  if (channels != 1) {
    throw UnsupportedInputError("load_wav: channels=" + std::to_string(channels) +
                                " in '" + path + "', expected mono");
  }
  if (rate != static_cast<std::uint32_t>(kSampleRate)) {
    throw UnsupportedInputError("load_wav: sample_rate=" + std::to_string(rate) +
                                " in '" + path + "', expected 16000");
  }
  if (format == kFormatPcm && bits != 16) {
    throw UnsupportedInputError("load_wav: bits_per_sample=" + std::to_string(bits) +
                                " in '" + path + "', expected 16 for PCM");
  }
  if (format == kFormatIeeeFloat && bits != 32) {
    throw UnsupportedInputError("load_wav: bits_per_sample=" + std::to_string(bits) +
                                " in '" + path + "', expected 32 for IEEE float");
  }
  if (payload.empty()) {
    throw FormatError("load_wav: empty data chunk in '" + path + "'");
  }

  AudioClip clip;
  clip.sample_rate = kSampleRate;
  if (format == kFormatPcm) {
    size_t n = payload.size() / 2;
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      std::uint16_t u = static_cast<unsigned char>(payload[2 * i]) |
                        (static_cast<std::uint16_t>(static_cast<unsigned char>(payload[2 * i + 1])) << 8);
      std::int16_t s;
      std::memcpy(&s, &u, 2);
      clip.samples[i] = static_cast<float>(s) / 32768.0f;
    }
  } else {
    size_t n = payload.size() / 4;
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[4 * i + b])) << (8 * b);
      }
      float f;
      std::memcpy(&f, &u, 4);
      if (!std::isfinite(f)) {
        throw FormatError("load_wav: non-finite sample at index " +
                          std::to_string(i) + " in '" + path + "'");
      }
      clip.samples[i] = f;
    }
  }
  if (clip.samples.empty()) {
    throw FormatError("load_wav: no samples in '" + path + "'");
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_wav: cannot open '" + path + "' for writing");

  std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, kFormatPcm);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
  write_le<std::uint16_t>(out, 2);
  write_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (float s : clip.samples) {
    double v = std::lround(static_cast<double>(std::clamp(s, -1.0f, 1.0f)) * 32768.0);
    std::int16_t q = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
    write_le<std::int16_t>(out, q);
  }
  if (!out) throw FormatError("write_wav: failed writing '" + path + "'");
}

AudioClip fit_to_duration(const AudioClip& clip, double target_s, FitMode mode,
                          std::mt19937_64& rng) {
  if (clip.samples.empty()) {
    throw InvalidInputError("fit_to_duration: empty clip");
  }
  if (!(target_s > 0)) {
    throw InvalidInputError("fit_to_duration: target_s must be positive, got " +
                            std::to_string(target_s));
  }
  const std::int64_t target =
      std::llround(target_s * static_cast<double>(clip.sample_rate));
  const std::int64_t len = static_cast<std::int64_t>(clip.samples.size());

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(static_cast<size_t>(target), 0.0f);

  if (len == target) {
    out.samples = clip.samples;
  } else if (len < target) {
    // Left pad gets the smaller half when the pad count is odd.
    std::int64_t pad = target - len;
    std::int64_t left = pad / 2;
    std::copy(clip.samples.begin(), clip.samples.end(),
              out.samples.begin() + left);
  } else {
    std::int64_t start;
    if (mode == FitMode::kCenter) {
      start = (len - target) / 2;
    } else {
      std::uniform_int_distribution<std::int64_t> dist(0, len - target);
      start = dist(rng);
    }
    std::copy(clip.samples.begin() + start,
              clip.samples.begin() + start + target, out.samples.begin());
  }
  return out;
}

AudioClip fit_to_duration(const AudioClip& clip, double target_s) {
  std::mt19937_64 unused(0);
  return fit_to_duration(clip, target_s, FitMode::kCenter, unused);
}

DatasetManifest read_manifest(const std::string& path,
                              const std::vector<std::string>& languages) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_manifest: cannot open '" + path + "'");

  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < languages.size(); ++i) {
    index[languages[i]] = static_cast<int>(i);
  }

  DatasetManifest manifest;
  manifest.languages = languages;
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::unordered_set<std::string> seen;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("read_manifest: line " + std::to_string(line_no) +
                        " of '" + path + "' has no tab separator");
    }
    std::string entry_path = line.substr(0, tab);
    std::string label = line.substr(tab + 1);

    ManifestEntry entry;
    if (label == "other") {
      entry.label = kOtherLabel;
    } else {
      auto it = index.find(label);
      if (it == index.end()) {
        throw FormatError("read_manifest: line " + std::to_string(line_no) +
                          " of '" + path + "': unknown label '" + label + "'");
      }
      entry.label = it->second;
    }
    std::filesystem::path p(entry_path);
    entry.path = p.is_absolute() ? p.string() : (base / p).string();
    if (!seen.insert(entry.path).second) {
      log_warn("read_manifest: duplicate path '" + entry.path + "' at line " +
               std::to_string(line_no));
    }
    manifest.entries.push_back(std::move(entry));
  }

  if (manifest.entries.empty()) {
    log_warn("read_manifest: '" + path + "' contains no entries");
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("write_manifest: cannot open '" + path + "'");
  for (const auto& e : manifest.entries) {
    const std::string label =
        e.label == kOtherLabel ? "other" : manifest.languages.at(static_cast<size_t>(e.label));
    out << e.path << "\t" << label << "\n";
  }
}

}  // namespace slr
