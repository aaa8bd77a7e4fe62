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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "slr/audio.hpp"

namespace fs = std::filesystem;

namespace {

// Independent minimal WAV writer used as the round-trip oracle.
void oracle_write_wav_s16(const std::string& path,
                          const std::vector<std::int16_t>& samples,
                          std::uint16_t channels = 1, std::uint32_t rate = 16000) {
  std::ofstream out(path, std::ios::binary);
  auto u16 = [&](std::uint16_t v) {
    out.put(static_cast<char>(v & 0xff));
    out.put(static_cast<char>(v >> 8));
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(channels);
  u32(rate);
  u32(rate * channels * 2);
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  for (std::int16_t s : samples) u16(static_cast<std::uint16_t>(s));
}

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("load_wav: constant 16384 decodes to 0.5 everywhere") {
  auto path = temp_path("slrkit_const.wav");
  oracle_write_wav_s16(path, std::vector<std::int16_t>(16000, 16384));
  auto clip = slr::load_wav(path);
  CHECK(clip.samples.size() == 16000);
  CHECK(clip.sample_rate == 16000);
  for (float s : clip.samples) CHECK(s == 0.5f);
  fs::remove(path);
}

TEST_CASE("load_wav: stereo input is rejected, naming the field") {
  auto path = temp_path("slrkit_stereo.wav");
  oracle_write_wav_s16(path, std::vector<std::int16_t>(200, 0), /*channels=*/2);
  try {
    slr::load_wav(path);
    FAIL("expected UnsupportedInputError");
  } catch (const slr::UnsupportedInputError& e) {
    CHECK(std::string(e.what()).find("channels") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("load_wav: wrong sample rate is rejected, naming the field") {
  auto path = temp_path("slrkit_rate.wav");
  oracle_write_wav_s16(path, std::vector<std::int16_t>(200, 0), 1, 44100);
  try {
    slr::load_wav(path);
    FAIL("expected UnsupportedInputError");
  } catch (const slr::UnsupportedInputError& e) {
    CHECK(std::string(e.what()).find("sample_rate") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("load_wav: malformed header raises a format error") {
  auto path = temp_path("slrkit_garbage.wav");
  std::ofstream(path) << "definitely not a wav file";
  CHECK_THROWS_AS(slr::load_wav(path), slr::FormatError);
  fs::remove(path);
  CHECK_THROWS_AS(slr::load_wav(temp_path("slrkit_does_not_exist.wav")),
                  slr::FormatError);
}

TEST_CASE("load_wav: a generated sine round-trips within 1/32768") {
  auto path = temp_path("slrkit_sine.wav");
  std::vector<std::int16_t> quantized(8000);
  std::vector<double> exact(8000);
  for (size_t i = 0; i < exact.size(); ++i) {
    exact[i] = 0.7 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
    quantized[i] = static_cast<std::int16_t>(std::lround(exact[i] * 32768.0));
  }
  oracle_write_wav_s16(path, quantized);
  auto clip = slr::load_wav(path);
  REQUIRE(clip.samples.size() == exact.size());
  for (size_t i = 0; i < exact.size(); ++i) {
    CHECK(std::abs(clip.samples[i] - exact[i]) <= 1.0 / 32768.0);
  }
  fs::remove(path);
}

TEST_CASE("write_wav -> load_wav recovers samples within quantization error") {
  slr::AudioClip clip;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  clip.samples.resize(5000);
  for (auto& s : clip.samples) s = dist(rng);
  auto path = temp_path("slrkit_rt.wav");
  slr::write_wav(clip, path);
  auto back = slr::load_wav(path);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0f / 32768.0f);
  }
  fs::remove(path);
}

TEST_CASE("fit_to_duration: 4 s clip is centered between equal zero pads") {
  slr::AudioClip clip;
  clip.samples.assign(64000, 0.25f);
  auto out = slr::fit_to_duration(clip);
  REQUIRE(out.samples.size() == 160000);
  for (size_t i = 0; i < 48000; ++i) CHECK(out.samples[i] == 0.0f);
  for (size_t i = 48000; i < 112000; ++i) CHECK(out.samples[i] == 0.25f);
  for (size_t i = 112000; i < 160000; ++i) CHECK(out.samples[i] == 0.0f);
}

TEST_CASE("fit_to_duration: odd pad puts the smaller half on the left") {
  slr::AudioClip clip;
  clip.samples.assign(7, 1.0f);
  std::mt19937_64 rng(0);
  auto out = slr::fit_to_duration(clip, 10.0 / 16000.0, slr::FitMode::kCenter, rng);
  REQUIRE(out.samples.size() == 10);
  // pad = 3 -> left 1, right 2
  CHECK(out.samples[0] == 0.0f);
  CHECK(out.samples[1] == 1.0f);
  CHECK(out.samples[7] == 1.0f);
  CHECK(out.samples[8] == 0.0f);
  CHECK(out.samples[9] == 0.0f);
}

TEST_CASE("fit_to_duration: exact-length clip passes through unchanged") {
  slr::AudioClip clip;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  clip.samples.resize(160000);
  for (auto& s : clip.samples) s = dist(rng);
  std::mt19937_64 r1(1);
  auto center = slr::fit_to_duration(clip, 10.0, slr::FitMode::kCenter, r1);
  auto random = slr::fit_to_duration(clip, 10.0, slr::FitMode::kRandomSubclip, r1);
  CHECK(center.samples == clip.samples);
  CHECK(random.samples == clip.samples);
}

TEST_CASE("fit_to_duration: random subclip is reproducible per seed") {
  slr::AudioClip clip;
  clip.samples.resize(192000);  // 12 s
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    clip.samples[i] = static_cast<float>(i % 1000) / 1000.0f;
  }
  std::mt19937_64 r1(41), r2(41), r3(42);
  auto a = slr::fit_to_duration(clip, 10.0, slr::FitMode::kRandomSubclip, r1);
  auto b = slr::fit_to_duration(clip, 10.0, slr::FitMode::kRandomSubclip, r2);
  CHECK(a.samples == b.samples);
  auto c = slr::fit_to_duration(clip, 10.0, slr::FitMode::kRandomSubclip, r3);
  CHECK(a.samples.size() == c.samples.size());
}

TEST_CASE("fit_to_duration: center mode is idempotent and always 160000 long") {
  std::mt19937_64 rng(51);
  for (size_t len : {1UL, 159UL, 160UL, 79999UL, 160000UL, 160001UL, 400000UL}) {
    slr::AudioClip clip;
    clip.samples.resize(len);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& s : clip.samples) s = dist(rng);
    auto once = slr::fit_to_duration(clip);
    CHECK(once.samples.size() == 160000);
    auto twice = slr::fit_to_duration(once);
    CHECK(twice.samples == once.samples);
  }
}

TEST_CASE("fit_to_duration: degenerate inputs raise invalid-input errors") {
  slr::AudioClip empty;
  CHECK_THROWS_AS(slr::fit_to_duration(empty), slr::InvalidInputError);
  slr::AudioClip ok;
  ok.samples.assign(10, 0.0f);
  CHECK_THROWS_AS(slr::fit_to_duration(ok, 0.0), slr::InvalidInputError);
}

TEST_CASE("read_manifest: labels resolve against the configured language list") {
  auto path = temp_path("slrkit_manifest.tsv");
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "a.wav\tsw\n";
    out << "\n";
    out << "sub/b.wav\tyo\n";
    out << "c.wav\tother\n";
  }
  auto manifest = slr::read_manifest(path, {"sw", "ar", "cy", "yo"});
  REQUIRE(manifest.entries.size() == 3);
  CHECK(manifest.entries[0].label == 0);
  CHECK(manifest.entries[1].label == 3);
  CHECK(manifest.entries[2].label == slr::kOtherLabel);
  // Relative paths resolve against the manifest directory.
  CHECK(manifest.entries[1].path ==
        (fs::path(path).parent_path() / "sub/b.wav").string());
  fs::remove(path);
}

TEST_CASE("read_manifest: unknown labels name the line number") {
  auto path = temp_path("slrkit_manifest_bad.tsv");
  {
    std::ofstream out(path);
    out << "a.wav\tsw\n";
    out << "b.wav\tklingon\n";
  }
  try {
    slr::read_manifest(path, {"sw"});
    FAIL("expected FormatError");
  } catch (const slr::FormatError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("klingon") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("read_manifest: empty file yields an empty manifest") {
  auto path = temp_path("slrkit_manifest_empty.tsv");
  std::ofstream(path).close();
  auto manifest = slr::read_manifest(path, {"sw"});
  CHECK(manifest.entries.empty());
  fs::remove(path);
}

TEST_CASE("manifest round-trips through write_manifest") {
  slr::DatasetManifest m;
  m.languages = {"sw", "ar"};
  m.entries = {{"/tmp/x.wav", 1}, {"/tmp/y.wav", slr::kOtherLabel}};
  auto path = temp_path("slrkit_manifest_rt.tsv");
  slr::write_manifest(m, path);
  auto back = slr::read_manifest(path, m.languages);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].label == 1);
  CHECK(back.entries[1].label == slr::kOtherLabel);
  fs::remove(path);
}
