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

#ifndef U2S_MODEL_H_
#define U2S_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "u2s/frontend.h"
#include "u2s/tensor.h"
#include "u2s/tokenizer.h"

namespace u2s {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  size_t d_model = 64;
  size_t heads = 4;
  size_t enc_layers = 2;
  size_t dec_layers = 2;
  size_t ffn_dim = 256;
  size_t feature_bins = kMelBins;
  size_t stack_factor = 4;
  size_t ctc_vocab = 0;  // subset size + 1 (blank)
  size_t dec_vocab = 0;  // full vocabulary size
  double hop_s = kFrameHopSeconds;

  double encoder_frame_s() const { return hop_s * static_cast<double>(stack_factor); }
  size_t subset_size() const { return ctc_vocab - 1; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Config sized for `tok` with the toy-scale defaults above.
ModelConfig toy_config(const HybridTokenizer& tok);

struct ChunkMaskSpec {
  size_t chunk_frames = 1;
  std::optional<size_t> left_chunks;  // nullopt: full history
  size_t right_context = 0;           // reserved, must be 0
};

// Frame i sees frame j iff chunk(j) <= chunk(i) and, when bounded,
// chunk(i) - chunk(j) <= left_chunks.
AttentionMask build_chunk_mask(size_t total_frames, const ChunkMaskSpec& spec);
// Rows for query positions [query_begin, query_begin + query_count) against
// keys [0, key_count).
AttentionMask build_chunk_mask(size_t query_begin, size_t query_count, size_t key_count,
                               const ChunkMaskSpec& spec);

// Encoder frames for a chunk duration, rounded up.
size_t seconds_to_encoder_frames(double seconds, const ModelConfig& cfg);
// Uniform over the encoder-frame counts spanning 0.1 s to 1.0 s.
size_t sample_chunk_frames(std::mt19937_64& rng, const ModelConfig& cfg);

inline constexpr double kMinTrainChunkS = 0.1;
inline constexpr double kMaxTrainChunkS = 1.0;

// Named float32 parameters plus config; stored on disk as a directory with
// manifest.json and little-endian weights.bin.
class Checkpoint {
 public:
  ModelConfig config;
  std::map<std::string, Tensor> params;
  std::string tokenizer_hash;

  static Checkpoint init_toy(uint64_t seed, const ModelConfig& config,
                             std::string tokenizer_hash = {});
  // Expected (name, shape) list in canonical order.
  static std::vector<std::pair<std::string, std::vector<size_t>>> layout(const ModelConfig& config);

  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);

  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);

  // Hash over config and tensor bytes.
  std::string content_hash() const;

  bool operator==(const Checkpoint& other) const = default;
};

inline const std::vector<std::string> kCtcHeadParams = {"ctc.w", "ctc.b"};
inline const std::vector<std::string> kDecoderHeadParams = {"dec.out.w", "dec.out.b"};

struct KVCache {
  std::vector<Tensor> keys;    // per encoder layer, [frames_cached x d_model]
  std::vector<Tensor> values;
  size_t frames_cached = 0;

  void clear();
};

// Called with (linear layer name, layer input) for every linear application.
using LinearTrace = std::function<void(const std::string&, const Tensor&)>;

class Model {
 public:
  Model(const Checkpoint& ckpt, bool quantized = false);

  const ModelConfig& config() const { return config_; }
  bool quantized() const { return quantized_; }

  // [frames x bins] -> [frames/stack x bins*stack]
  Tensor stack_frames(const FeatureMatrix& features) const;

  Tensor encode_full(const FeatureMatrix& features, const ChunkMaskSpec& spec) const;
  // Encodes the next chunk(s) of a stream, extending `cache`. The cache must
  // end on a chunk boundary; the call may end mid-chunk only if it is the last.
  Tensor encode_incremental(KVCache& cache, const FeatureMatrix& chunk_features,
                            const ChunkMaskSpec& spec) const;

  Tensor ctc_logits(const Tensor& enc_out) const;
  Tensor ctc_log_probs(const Tensor& enc_out) const;

  // Final decoder states for teacher-forced inputs (one row per input token).
  Tensor decoder_hidden(const TokenIds& inputs, const Tensor& enc_out) const;
  Tensor decoder_logits(const Tensor& hidden) const;

  // Sum of log P(h_t | h_<t, enc) over the content and eot positions of each
  // hypothesis, computed in one batched teacher-forced pass.
  std::vector<double> decoder_score_batch(const std::vector<TokenIds>& hyps, const Tensor& enc_out,
                                          const TokenIds& prompt, TokenId eot) const;

  std::vector<std::string> linear_names() const;
  Tensor apply_linear(const std::string& name, const Tensor& x, bool use_quantized) const;
  void set_linear_trace(LinearTrace trace) { trace_ = std::move(trace); }

 private:
  struct Linear {
    std::string name;
    Tensor w, b;
    std::optional<QuantizedMatrix> q;
  };
  struct Norm {
    Tensor g, b;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention attn;
    Linear ff1, ff2;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self_attn, cross_attn;
    Linear ff1, ff2;
  };

  Tensor run(const Linear& l, const Tensor& x) const;
  Tensor feed_forward(const Linear& ff1, const Linear& ff2, const Tensor& x) const;
  Tensor decoder_hidden_batch(const std::vector<TokenIds>& inputs, size_t max_len,
                              const Tensor& enc_out) const;
  const Linear& find_linear(const std::string& name) const;

  ModelConfig config_;
  bool quantized_;
  Linear in_proj_;
  std::vector<EncoderLayer> enc_;
  Norm enc_norm_;
  Linear ctc_;
  Tensor embed_;
  std::vector<DecoderLayer> dec_;
  Norm dec_norm_;
  Linear out_;
  LinearTrace trace_;
};

// Sinusoidal absolute position rows [begin, begin + count).
Tensor sinusoidal_positions(size_t begin, size_t count, size_t d_model);

}  // namespace u2s

#endif  // U2S_MODEL_H_
