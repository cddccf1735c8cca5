// Copyright 2026 The u2stream Authors
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

#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "u2s/model.h"

namespace u2s {

namespace {

constexpr const char* kFormat = "u2s-checkpoint-v1";

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},       {"heads", c.heads},
          {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
          {"ffn_dim", c.ffn_dim},       {"feature_bins", c.feature_bins},
          {"stack_factor", c.stack_factor}, {"ctc_vocab", c.ctc_vocab},
          {"dec_vocab", c.dec_vocab},   {"hop_s", c.hop_s},
          {"encoder_frame_s", c.encoder_frame_s()}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<size_t>();
  c.heads = j.at("heads").get<size_t>();
  c.enc_layers = j.at("enc_layers").get<size_t>();
  c.dec_layers = j.at("dec_layers").get<size_t>();
  c.ffn_dim = j.at("ffn_dim").get<size_t>();
  c.feature_bins = j.at("feature_bins").get<size_t>();
  c.stack_factor = j.at("stack_factor").get<size_t>();
  c.ctc_vocab = j.at("ctc_vocab").get<size_t>();
  c.dec_vocab = j.at("dec_vocab").get<size_t>();
  c.hop_s = j.at("hop_s").get<double>();
  return c;
}

void append_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float read_f32(const std::string& in, size_t at) {
  uint32_t bits = 0;
  for (int i = 0; i < 4; ++i)
    bits |= static_cast<uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ModelError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::pair<std::string, std::vector<size_t>>> Checkpoint::layout(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<size_t>>> out;
  size_t d = c.d_model;
  auto lin = [&](const std::string& n, size_t o, size_t i) {
    out.push_back({n + ".w", {o, i}});
    out.push_back({n + ".b", {o}});
  };
  auto norm = [&](const std::string& n) {
    out.push_back({n + ".g", {d}});
    out.push_back({n + ".b", {d}});
  };
  auto attn = [&](const std::string& p) {
    for (const char* s : {".q", ".k", ".v", ".o"}) lin(p + s, d, d);
  };
  lin("enc.in", d, c.feature_bins * c.stack_factor);
  for (size_t i = 0; i < c.enc_layers; ++i) {
    std::string p = "enc." + std::to_string(i);
    norm(p + ".ln1");
    attn(p + ".attn");
    norm(p + ".ln2");
    lin(p + ".ff1", c.ffn_dim, d);
    lin(p + ".ff2", d, c.ffn_dim);
  }
  norm("enc.ln");
  lin("ctc", c.ctc_vocab, d);
  out.push_back({"dec.embed", {c.dec_vocab, d}});
  for (size_t i = 0; i < c.dec_layers; ++i) {
    std::string p = "dec." + std::to_string(i);
    norm(p + ".ln1");
    attn(p + ".self");
    norm(p + ".ln2");
    attn(p + ".cross");
    norm(p + ".ln3");
    lin(p + ".ff1", c.ffn_dim, d);
    lin(p + ".ff2", d, c.ffn_dim);
  }
  norm("dec.ln");
  lin("dec.out", c.dec_vocab, d);
  return out;
}

Checkpoint Checkpoint::init_toy(uint64_t seed, const ModelConfig& config, std::string tokenizer_hash) {
  config.validate();
  Checkpoint ck;
  ck.config = config;
  ck.tokenizer_hash = std::move(tokenizer_hash);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  for (const auto& [name, shape] : layout(config)) {
    Tensor t(shape);
    bool is_norm_gain = name.ends_with(".g");
    bool is_bias = shape.size() == 1 && !is_norm_gain;
    if (is_norm_gain)
      std::fill(t.data().begin(), t.data().end(), 1.0f);
    else if (!is_bias)
      for (float& v : t.data()) v = normal(rng);
    ck.params.emplace(name, std::move(t));
  }
  return ck;
}

const Tensor& Checkpoint::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ModelError("checkpoint has no tensor " + name);
  return it->second;
}

Tensor& Checkpoint::param(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw ModelError("checkpoint has no tensor " + name);
  return it->second;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["config"] = config_to_json(config);
  manifest["tokenizer_hash"] = tokenizer_hash;
  manifest["tensors"] = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, shape] : layout(config)) {
    const Tensor& t = param(name);
    if (t.shape() != shape) throw ModelError("tensor " + name + " has shape " + t.shape_string());
    manifest["tensors"].push_back({{"name", name}, {"shape", shape}, {"offset", blob.size()}});
    for (float v : t.data()) append_f32(blob, v);
  }
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ModelError("cannot write manifest in " + dir.string());
    out << manifest.dump(1) << '\n';
  }
  std::ofstream out(dir / "weights.bin", std::ios::binary);
  if (!out) throw ModelError("cannot write weights in " + dir.string());
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_all(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  std::string blob = read_all(dir / "weights.bin");

  Checkpoint ck;
  try {
    if (manifest.at("format").get<std::string>() != kFormat)
      throw ModelError("unknown checkpoint format in " + dir.string());
    ck.config = config_from_json(manifest.at("config"));
    ck.tokenizer_hash = manifest.value("tokenizer_hash", std::string());
    ck.config.validate();

    std::map<std::string, const nlohmann::json*> entries;
    for (const auto& t : manifest.at("tensors")) entries[t.at("name").get<std::string>()] = &t;

    for (const auto& [name, shape] : layout(ck.config)) {
      auto it = entries.find(name);
      if (it == entries.end()) throw ModelError("checkpoint manifest is missing tensor " + name);
      const auto& e = *it->second;
      auto declared = e.at("shape").get<std::vector<size_t>>();
      if (declared != shape)
        throw ModelError("tensor " + name + " has unexpected shape in manifest");
      size_t offset = e.at("offset").get<size_t>();
      Tensor t(shape);
      if (offset % 4 != 0 || offset + t.size() * 4 > blob.size())
        throw ModelError("weights.bin is truncated or corrupt at tensor " + name);
      for (size_t i = 0; i < t.size(); ++i) t.data()[i] = read_f32(blob, offset + 4 * i);
      ck.params.emplace(name, std::move(t));
      entries.erase(it);
    }
    if (!entries.empty())
      throw ModelError("checkpoint manifest has unexpected tensor " + entries.begin()->first);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  return ck;
}

std::string Checkpoint::content_hash() const {
  std::string bytes = config_to_json(config).dump();
  bytes += tokenizer_hash;
  for (const auto& [name, t] : params) {
    bytes += name;
    for (float v : t.data()) append_f32(bytes, v);
  }
  return hash_hex(fnv1a64(bytes));
}

}  // namespace u2s
