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

#include "slr/models.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace slr {

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kTcResNet10:
      return "tc_resnet10";
    case Architecture::kTcResNet14:
      return "tc_resnet14";
    case Architecture::kLecapat:
      return "lecapat";
  }
  return "unknown";
}

std::string to_string(HeadKind head) {
  switch (head) {
    case HeadKind::kMulticlass:
      return "multiclass";
    case HeadKind::kMulticlassPlusOther:
      return "multiclass_plus_other";
    case HeadKind::kMultilabel:
      return "multilabel";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "tc_resnet10") return Architecture::kTcResNet10;
  if (name == "tc_resnet14") return Architecture::kTcResNet14;
  if (name == "lecapat") return Architecture::kLecapat;
  throw ConfigError("unknown architecture '" + name +
                    "' (expected tc_resnet10, tc_resnet14, or lecapat)");
}

HeadKind parse_head(const std::string& name) {
  if (name == "multiclass") return HeadKind::kMulticlass;
  if (name == "multiclass_plus_other") return HeadKind::kMulticlassPlusOther;
  if (name == "multilabel") return HeadKind::kMultilabel;
  throw ConfigError("unknown head '" + name +
                    "' (expected multiclass, multiclass_plus_other, or multilabel)");
}

std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "architecture=" << to_string(cfg.architecture) << "\n";
  os << "num_languages=" << cfg.num_languages << "\n";
  os << "head=" << to_string(cfg.head) << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cfg.width_multiplier);
  os << "width_multiplier=" << buf << "\n";
  os << "lecapat_channels=" << cfg.lecapat.channels << "\n";
  os << "lecapat_res2net_scale=" << cfg.lecapat.res2net_scale << "\n";
  os << "lecapat_dilation=" << cfg.lecapat.dilation << "\n";
  os << "lecapat_se_bottleneck=" << cfg.lecapat.se_bottleneck << "\n";
  os << "lecapat_attention_dim=" << cfg.lecapat.attention_dim << "\n";
  os << "lecapat_post_channels=" << cfg.lecapat.post_channels << "\n";
  os << "languages=";
  for (size_t i = 0; i < cfg.languages.size(); ++i) {
    if (i) os << ",";
    os << cfg.languages[i];
  }
  os << "\n";
  return os.str();
}

ModelConfig config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CorruptionError("model config: malformed line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw CorruptionError("model config: missing key '" + key + "'");
    }
    return it->second;
  };
  ModelConfig cfg;
  cfg.architecture = parse_architecture(need("architecture"));
  cfg.num_languages = std::stoi(need("num_languages"));
  cfg.head = parse_head(need("head"));
  cfg.width_multiplier = std::stod(need("width_multiplier"));
  cfg.lecapat.channels = std::stoi(need("lecapat_channels"));
  cfg.lecapat.res2net_scale = std::stoi(need("lecapat_res2net_scale"));
  cfg.lecapat.dilation = std::stoi(need("lecapat_dilation"));
  cfg.lecapat.se_bottleneck = std::stoi(need("lecapat_se_bottleneck"));
  cfg.lecapat.attention_dim = std::stoi(need("lecapat_attention_dim"));
  cfg.lecapat.post_channels = std::stoi(need("lecapat_post_channels"));
  std::string langs = need("languages");
  cfg.languages.clear();
  std::istringstream ls(langs);
  std::string code;
  while (std::getline(ls, code, ',')) {
    if (!code.empty()) cfg.languages.push_back(code);
  }
  return cfg;
}

namespace {

constexpr char kWeightsMagic[4] = {'S', 'L', 'R', 'W'};
constexpr std::uint16_t kWeightsVersion = 1;

struct Record {
  std::string name;
  std::uint8_t kind;  // 0 = parameter, 1 = buffer
  Shape dims;
  std::vector<float> data;
};

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw CorruptionError("load_model: truncated file '" + path + "'");
  }
}

}  // namespace

void save_model(Model<float>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("save_model: cannot open '" + path + "'");

  const std::string config = config_to_text(model.config());
  out.write(kWeightsMagic, 4);
  write_bytes(out, &kWeightsVersion, 2);
  std::uint32_t config_len = static_cast<std::uint32_t>(config.size());
  write_bytes(out, &config_len, 4);
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  std::vector<Record> records;
  model.visit_state(
      [&](const std::string& name, Parameter<float>& p) {
        records.push_back({name, 0, p.value.shape(), p.value.values()});
      },
      [&](const std::string& name, std::vector<float>& b) {
        records.push_back({name, 1, Shape{static_cast<int>(b.size())}, b});
      });

  std::uint32_t count = static_cast<std::uint32_t>(records.size());
  write_bytes(out, &count, 4);
  for (const auto& r : records) {
    std::uint16_t name_len = static_cast<std::uint16_t>(r.name.size());
    write_bytes(out, &name_len, 2);
    out.write(r.name.data(), name_len);
    write_bytes(out, &r.kind, 1);
    std::uint8_t rank = static_cast<std::uint8_t>(r.dims.size());
    write_bytes(out, &rank, 1);
    for (int d : r.dims) {
      std::uint32_t dim = static_cast<std::uint32_t>(d);
      write_bytes(out, &dim, 4);
    }
    write_bytes(out, r.data.data(), r.data.size() * sizeof(float));
  }
  if (!out) throw FormatError("save_model: failed writing '" + path + "'");
}

Model<float> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_model: cannot open '" + path + "'");

  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, kWeightsMagic, 4) != 0) {
    throw CorruptionError("load_model: '" + path + "' is not an SLRW weight file");
  }
  std::uint16_t version = 0;
  read_bytes(in, &version, 2, path);
  if (version != kWeightsVersion) {
    throw CorruptionError("load_model: unsupported version " +
                          std::to_string(version) + " in '" + path + "'");
  }
  std::uint32_t config_len = 0;
  read_bytes(in, &config_len, 4, path);
  if (config_len > (1u << 20)) {
    throw CorruptionError("load_model: implausible config size in '" + path + "'");
  }
  std::string config_text(config_len, '\0');
  read_bytes(in, config_text.data(), config_len, path);
  ModelConfig cfg = config_from_text(config_text);

  Model<float> model = build_model<float>(cfg);

  std::uint32_t count = 0;
  read_bytes(in, &count, 4, path);
  std::map<std::string, Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    std::uint16_t name_len = 0;
    read_bytes(in, &name_len, 2, path);
    r.name.resize(name_len);
    read_bytes(in, r.name.data(), name_len, path);
    read_bytes(in, &r.kind, 1, path);
    std::uint8_t rank = 0;
    read_bytes(in, &rank, 1, path);
    std::int64_t total = 1;
    for (int d = 0; d < rank; ++d) {
      std::uint32_t dim = 0;
      read_bytes(in, &dim, 4, path);
      r.dims.push_back(static_cast<int>(dim));
      total *= dim;
    }
    if (total < 0 || total > (1ll << 30)) {
      throw CorruptionError("load_model: implausible record size for '" + r.name +
                            "' in '" + path + "'");
    }
    r.data.resize(static_cast<size_t>(total));
    read_bytes(in, r.data.data(), r.data.size() * sizeof(float), path);
    records[r.name] = std::move(r);
  }

  auto take = [&](const std::string& name, const Shape& expected,
                  std::uint8_t kind) -> std::vector<float> {
    auto it = records.find(name);
    if (it == records.end()) {
      throw CorruptionError("load_model: '" + path + "' is missing record '" +
                            name + "'");
    }
    if (it->second.kind != kind) {
      throw CorruptionError("load_model: record '" + name + "' in '" + path +
                            "' has the wrong kind");
    }
    if (it->second.dims != expected) {
      throw CorruptionError("load_model: record '" + name + "' has shape " +
                            shape_str(it->second.dims) + ", expected " +
                            shape_str(expected));
    }
    auto data = std::move(it->second.data);
    records.erase(it);
    return data;
  };

  model.visit_state(
      [&](const std::string& name, Parameter<float>& p) {
        auto data = take(name, p.value.shape(), 0);
        std::copy(data.begin(), data.end(), p.value.data());
      },
      [&](const std::string& name, std::vector<float>& b) {
        auto data = take(name, Shape{static_cast<int>(b.size())}, 1);
        b = std::move(data);
      });

  if (!records.empty()) {
    throw CorruptionError("load_model: '" + path + "' carries unknown record '" +
                          records.begin()->first + "'");
  }
  return model;
}

Model<float> load_model(const std::string& path, Architecture expected) {
  Model<float> model = load_model(path);
  if (model.config().architecture != expected) {
    throw ArchitectureMismatchError(
        "load_model: '" + path + "' holds " + to_string(model.config().architecture) +
        " weights, expected " + to_string(expected));
  }
  return model;
}

std::string describe_model(Model<float>& model) {
  std::ostringstream os;
  const auto& cfg = model.config();
  os << "architecture: " << to_string(cfg.architecture) << "\n";
  os << "head: " << to_string(cfg.head) << " (" << cfg.output_units()
     << " output units, L=" << cfg.num_languages << ")\n";
  os << "width_multiplier: " << cfg.width_multiplier << "\n";
  if (!cfg.languages.empty()) {
    os << "languages:";
    for (const auto& l : cfg.languages) os << " " << l;
    os << "\n";
  }
  os << "\n";
  std::int64_t total = 0;
  char line[160];
  model.visit_state(
      [&](const std::string& name, Parameter<float>& p) {
        std::snprintf(line, sizeof(line), "%-56s %-14s %8d\n", name.c_str(),
                      shape_str(p.value.shape()).c_str(), p.value.size());
        os << line;
        total += p.value.size();
      },
      [&](const std::string& name, std::vector<float>& b) {
        std::snprintf(line, sizeof(line), "%-56s %-14s %8zu (buffer)\n",
                      name.c_str(),
                      shape_str({static_cast<int>(b.size())}).c_str(), b.size());
        os << line;
      });
  os << "\ntrainable parameters: " << total << "\n";
  return os.str();
}

}  // namespace slr
