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

#include "u2s/model.h"

#include <algorithm>
#include <cmath>

namespace u2s {

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw ModelError("d_model must be a positive multiple of heads");
  if (stack_factor < 1) throw ModelError("stack_factor must be at least 1");
  if (feature_bins == 0 || ffn_dim == 0) throw ModelError("feature_bins and ffn_dim must be positive");
  if (ctc_vocab < 2) throw ModelError("ctc_vocab must include blank and at least one token");
  if (dec_vocab < 1) throw ModelError("dec_vocab must be positive");
}

ModelConfig toy_config(const HybridTokenizer& tok) {
  ModelConfig cfg;
  cfg.ctc_vocab = tok.ctc_dim();
  cfg.dec_vocab = tok.full().size();
  return cfg;
}

AttentionMask build_chunk_mask(size_t total_frames, const ChunkMaskSpec& spec) {
  if (total_frames == 0) throw ModelError("chunk mask needs at least one frame");
  return build_chunk_mask(0, total_frames, total_frames, spec);
}

AttentionMask build_chunk_mask(size_t query_begin, size_t query_count, size_t key_count,
                               const ChunkMaskSpec& spec) {
  if (spec.chunk_frames == 0) throw ModelError("chunk_frames must be at least 1");
  if (spec.right_context != 0) throw ModelError("right context is not supported");
  AttentionMask mask(query_count, key_count, false);
  for (size_t i = 0; i < query_count; ++i) {
    size_t ci = (query_begin + i) / spec.chunk_frames;
    for (size_t j = 0; j < key_count; ++j) {
      size_t cj = j / spec.chunk_frames;
      bool ok = cj <= ci && (!spec.left_chunks || ci - cj <= *spec.left_chunks);
      mask.set(i, j, ok);
    }
  }
  return mask;
}

size_t seconds_to_encoder_frames(double seconds, const ModelConfig& cfg) {
  double frames = seconds / cfg.encoder_frame_s();
  return static_cast<size_t>(std::ceil(frames - 1e-9));
}

size_t sample_chunk_frames(std::mt19937_64& rng, const ModelConfig& cfg) {
  size_t lo = std::max<size_t>(1, seconds_to_encoder_frames(kMinTrainChunkS, cfg));
  size_t hi = std::max(lo, seconds_to_encoder_frames(kMaxTrainChunkS, cfg));
  return std::uniform_int_distribution<size_t>(lo, hi)(rng);
}

void KVCache::clear() {
  keys.clear();
  values.clear();
  frames_cached = 0;
}

Tensor sinusoidal_positions(size_t begin, size_t count, size_t d_model) {
  Tensor pe(count, d_model);
  for (size_t r = 0; r < count; ++r) {
    double pos = static_cast<double>(begin + r);
    for (size_t i = 0; i < d_model; i += 2) {
      double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      pe.at(r, i) = static_cast<float>(std::sin(pos * freq));
      if (i + 1 < d_model) pe.at(r, i + 1) = static_cast<float>(std::cos(pos * freq));
    }
  }
  return pe;
}

Model::Model(const Checkpoint& ckpt, bool quantized) : config_(ckpt.config), quantized_(quantized) {
  config_.validate();
  auto lin = [&](const std::string& name) {
    Linear l{name, ckpt.param(name + ".w"), ckpt.param(name + ".b"), std::nullopt};
    if (quantized_) l.q = quantize(l.w);
    return l;
  };
  auto norm = [&](const std::string& name) {
    return Norm{ckpt.param(name + ".g"), ckpt.param(name + ".b")};
  };
  auto attn = [&](const std::string& p) {
    return Attention{lin(p + ".q"), lin(p + ".k"), lin(p + ".v"), lin(p + ".o")};
  };

  in_proj_ = lin("enc.in");
  for (size_t i = 0; i < config_.enc_layers; ++i) {
    std::string p = "enc." + std::to_string(i);
    enc_.push_back({norm(p + ".ln1"), norm(p + ".ln2"), attn(p + ".attn"), lin(p + ".ff1"),
                    lin(p + ".ff2")});
  }
  enc_norm_ = norm("enc.ln");
  ctc_ = lin("ctc");
  embed_ = ckpt.param("dec.embed");
  for (size_t i = 0; i < config_.dec_layers; ++i) {
    std::string p = "dec." + std::to_string(i);
    dec_.push_back({norm(p + ".ln1"), norm(p + ".ln2"), norm(p + ".ln3"), attn(p + ".self"),
                    attn(p + ".cross"), lin(p + ".ff1"), lin(p + ".ff2")});
  }
  dec_norm_ = norm("dec.ln");
  out_ = lin("dec.out");
}

Tensor Model::run(const Linear& l, const Tensor& x) const {
  if (trace_) trace_(l.name, x);
  return l.q ? quantized_linear(x, *l.q, l.b) : linear(x, l.w, l.b);
}

Tensor Model::feed_forward(const Linear& ff1, const Linear& ff2, const Tensor& x) const {
  return run(ff2, gelu(run(ff1, x)));
}

Tensor Model::stack_frames(const FeatureMatrix& features) const {
  if (features.bins() != config_.feature_bins)
    throw ModelError("feature bins " + std::to_string(features.bins()) + " != model's " +
                     std::to_string(config_.feature_bins));
  size_t s = config_.stack_factor;
  size_t out_frames = features.frames() / s;
  size_t width = config_.feature_bins * s;
  Tensor out(out_frames, width);
  for (size_t t = 0; t < out_frames; ++t)
    std::copy_n(features.values.data().begin() + static_cast<std::ptrdiff_t>(t * width), width,
                out.data().begin() + static_cast<std::ptrdiff_t>(t * width));
  return out;
}

Tensor Model::encode_full(const FeatureMatrix& features, const ChunkMaskSpec& spec) const {
  if (features.frames() < config_.stack_factor)
    throw ModelError("input too short: " + std::to_string(features.frames()) +
                     " feature frames, need at least " + std::to_string(config_.stack_factor));
  Tensor x = run(in_proj_, stack_frames(features));
  size_t T = x.rows();
  add_inplace(x, sinusoidal_positions(0, T, config_.d_model));
  AttentionMask mask = build_chunk_mask(T, spec);
  for (const auto& layer : enc_) {
    Tensor h = layer_norm(x, layer.ln1.g, layer.ln1.b);
    Tensor q = run(layer.attn.q, h), k = run(layer.attn.k, h), v = run(layer.attn.v, h);
    add_inplace(x, run(layer.attn.o, masked_attention(q, k, v, mask, config_.heads)));
    add_inplace(x, feed_forward(layer.ff1, layer.ff2, layer_norm(x, layer.ln2.g, layer.ln2.b)));
  }
  return layer_norm(x, enc_norm_.g, enc_norm_.b);
}

Tensor Model::encode_incremental(KVCache& cache, const FeatureMatrix& chunk_features,
                                 const ChunkMaskSpec& spec) const {
  if (spec.chunk_frames == 0) throw ModelError("chunk_frames must be at least 1");
  if (chunk_features.frames() == 0 || chunk_features.frames() % config_.stack_factor != 0)
    throw ModelError("chunk feature frames (" + std::to_string(chunk_features.frames()) +
                     ") must be a positive multiple of the stack factor");
  if (cache.keys.empty() && cache.values.empty()) {
    if (cache.frames_cached != 0) throw ModelError("stale cache: frame count without tensors");
    cache.keys.assign(config_.enc_layers, Tensor(std::vector<size_t>{0, config_.d_model}));
    cache.values = cache.keys;
  }
  if (cache.keys.size() != config_.enc_layers || cache.values.size() != config_.enc_layers)
    throw ModelError("stale cache: layer count mismatch");
  for (size_t l = 0; l < config_.enc_layers; ++l)
    if (cache.keys[l].rows() != cache.frames_cached || cache.values[l].rows() != cache.frames_cached)
      throw ModelError("stale cache: layer " + std::to_string(l) + " holds " +
                       std::to_string(cache.keys[l].rows()) + " frames, expected " +
                       std::to_string(cache.frames_cached));
  if (cache.frames_cached % spec.chunk_frames != 0)
    throw ModelError("stale cache: previous call ended mid-chunk");

  size_t begin = cache.frames_cached;
  Tensor x = run(in_proj_, stack_frames(chunk_features));
  size_t c = x.rows();
  add_inplace(x, sinusoidal_positions(begin, c, config_.d_model));
  AttentionMask mask = build_chunk_mask(begin, c, begin + c, spec);
  for (size_t l = 0; l < enc_.size(); ++l) {
    const auto& layer = enc_[l];
    Tensor h = layer_norm(x, layer.ln1.g, layer.ln1.b);
    Tensor q = run(layer.attn.q, h);
    cache.keys[l].append_rows(run(layer.attn.k, h));
    cache.values[l].append_rows(run(layer.attn.v, h));
    add_inplace(x, run(layer.attn.o,
                       masked_attention(q, cache.keys[l], cache.values[l], mask, config_.heads)));
    add_inplace(x, feed_forward(layer.ff1, layer.ff2, layer_norm(x, layer.ln2.g, layer.ln2.b)));
  }
  cache.frames_cached += c;
  return layer_norm(x, enc_norm_.g, enc_norm_.b);
}

Tensor Model::ctc_logits(const Tensor& enc_out) const { return run(ctc_, enc_out); }

Tensor Model::ctc_log_probs(const Tensor& enc_out) const {
  return log_softmax_rows(ctc_logits(enc_out));
}

Tensor Model::decoder_hidden_batch(const std::vector<TokenIds>& inputs, size_t max_len,
                                   const Tensor& enc_out) const {
  size_t B = inputs.size(), d = config_.d_model;
  if (enc_out.rows() == 0) throw ModelError("decoder needs at least one encoder frame");
  Tensor x(B * max_len, d);
  Tensor pe = sinusoidal_positions(0, max_len, d);
  for (size_t b = 0; b < B; ++b) {
    for (size_t t = 0; t < max_len; ++t) {
      // Padding repeats the last real token; causal masking keeps it out of real positions.
      TokenId tok = inputs[b][std::min(t, inputs[b].size() - 1)];
      if (tok < 0 || static_cast<size_t>(tok) >= config_.dec_vocab)
        throw ModelError("decoder token " + std::to_string(tok) + " out of range");
      for (size_t c = 0; c < d; ++c) x.at(b * max_len + t, c) = embed_.at(tok, c) + pe.at(t, c);
    }
  }

  // Block-diagonal causal mask: one batched self-attention call.
  AttentionMask self_mask(B * max_len, B * max_len, false);
  for (size_t b = 0; b < B; ++b)
    for (size_t i = 0; i < max_len; ++i)
      for (size_t j = 0; j <= i; ++j) self_mask.set(b * max_len + i, b * max_len + j, true);
  AttentionMask cross_mask = AttentionMask::all(B * max_len, enc_out.rows());

  for (const auto& layer : dec_) {
    Tensor h = layer_norm(x, layer.ln1.g, layer.ln1.b);
    Tensor q = run(layer.self_attn.q, h), k = run(layer.self_attn.k, h),
           v = run(layer.self_attn.v, h);
    add_inplace(x, run(layer.self_attn.o, masked_attention(q, k, v, self_mask, config_.heads)));
    h = layer_norm(x, layer.ln2.g, layer.ln2.b);
    Tensor cq = run(layer.cross_attn.q, h);
    Tensor ck = run(layer.cross_attn.k, enc_out), cv = run(layer.cross_attn.v, enc_out);
    add_inplace(x, run(layer.cross_attn.o, masked_attention(cq, ck, cv, cross_mask, config_.heads)));
    add_inplace(x, feed_forward(layer.ff1, layer.ff2, layer_norm(x, layer.ln3.g, layer.ln3.b)));
  }
  return layer_norm(x, dec_norm_.g, dec_norm_.b);
}

Tensor Model::decoder_hidden(const TokenIds& inputs, const Tensor& enc_out) const {
  if (inputs.empty()) throw ModelError("decoder input is empty");
  return decoder_hidden_batch({inputs}, inputs.size(), enc_out);
}

Tensor Model::decoder_logits(const Tensor& hidden) const { return run(out_, hidden); }

std::vector<double> Model::decoder_score_batch(const std::vector<TokenIds>& hyps,
                                               const Tensor& enc_out, const TokenIds& prompt,
                                               TokenId eot) const {
  if (hyps.empty()) throw ModelError("decoder_score_batch: empty hypothesis list");
  size_t P = prompt.size();
  size_t max_len = 0;
  std::vector<TokenIds> inputs;
  inputs.reserve(hyps.size());
  for (const auto& h : hyps) {
    if (h.size() < P + 1 || !std::equal(prompt.begin(), prompt.end(), h.begin()))
      throw ModelError("hypothesis does not start with the prompt");
    if (h.back() != eot) throw ModelError("hypothesis does not end with eot");
    if (P == 0) throw ModelError("decoder scoring needs a non-empty prompt");
    inputs.emplace_back(h.begin(), h.end() - 1);
    max_len = std::max(max_len, inputs.back().size());
  }

  Tensor logits = decoder_logits(decoder_hidden_batch(inputs, max_len, enc_out));
  std::vector<double> scores(hyps.size(), 0.0);
  for (size_t b = 0; b < hyps.size(); ++b) {
    // Input position t predicts hyps[b][t + 1]; the first scored target is
    // the first token after the prompt.
    for (size_t t = P - 1; t + 1 < hyps[b].size(); ++t) {
      auto ls = log_softmax(logits.row(b * max_len + t));
      scores[b] += ls[hyps[b][t + 1]];
    }
  }
  return scores;
}

std::vector<std::string> Model::linear_names() const {
  std::vector<std::string> names{in_proj_.name};
  auto add_attn = [&](const Attention& a) {
    for (const Linear* l : {&a.q, &a.k, &a.v, &a.o}) names.push_back(l->name);
  };
  for (const auto& l : enc_) {
    add_attn(l.attn);
    names.push_back(l.ff1.name);
    names.push_back(l.ff2.name);
  }
  names.push_back(ctc_.name);
  for (const auto& l : dec_) {
    add_attn(l.self_attn);
    add_attn(l.cross_attn);
    names.push_back(l.ff1.name);
    names.push_back(l.ff2.name);
  }
  names.push_back(out_.name);
  return names;
}

const Model::Linear& Model::find_linear(const std::string& name) const {
  if (name == in_proj_.name) return in_proj_;
  if (name == ctc_.name) return ctc_;
  if (name == out_.name) return out_;
  auto match_attn = [&](const Attention& a) -> const Linear* {
    for (const Linear* l : {&a.q, &a.k, &a.v, &a.o})
      if (l->name == name) return l;
    return nullptr;
  };
  for (const auto& l : enc_) {
    if (auto* m = match_attn(l.attn)) return *m;
    if (l.ff1.name == name) return l.ff1;
    if (l.ff2.name == name) return l.ff2;
  }
  for (const auto& l : dec_) {
    if (auto* m = match_attn(l.self_attn)) return *m;
    if (auto* m = match_attn(l.cross_attn)) return *m;
    if (l.ff1.name == name) return l.ff1;
    if (l.ff2.name == name) return l.ff2;
  }
  throw ModelError("no linear layer named " + name);
}

Tensor Model::apply_linear(const std::string& name, const Tensor& x, bool use_quantized) const {
  const Linear& l = find_linear(name);
  if (use_quantized) return quantized_linear(x, l.q ? *l.q : quantize(l.w), l.b);
  return linear(x, l.w, l.b);
}

}  // namespace u2s
