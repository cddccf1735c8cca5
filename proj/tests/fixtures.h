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

// Shared test fixtures: the toy tokenizer, small checkpoints and random
// generators.

#ifndef U2S_TESTS_FIXTURES_H_
#define U2S_TESTS_FIXTURES_H_

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "u2s/frontend.h"
#include "u2s/model.h"
#include "u2s/tensor.h"
#include "u2s/tokenizer.h"

#ifndef U2S_DATA_DIR
#error "U2S_DATA_DIR must point at the repository data directory"
#endif

namespace fixtures {

inline constexpr size_t kToyVocabSize = 512;
inline constexpr size_t kToySubset = 384;

inline const u2s::BpeVocab& toy_vocab() {
  static const u2s::BpeVocab vocab = [] {
    std::ifstream in(std::filesystem::path(U2S_DATA_DIR) / "corpus.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    return u2s::train_bpe(ss.str(), kToyVocabSize);
  }();
  return vocab;
}

inline std::shared_ptr<const u2s::HybridTokenizer> toy_tokenizer() {
  static const auto tok = std::make_shared<const u2s::HybridTokenizer>(toy_vocab(), kToySubset);
  return tok;
}

// Smaller than the CLI default so unit tests stay fast.
inline u2s::ModelConfig small_config() {
  u2s::ModelConfig cfg = u2s::toy_config(*toy_tokenizer());
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.ffn_dim = 64;
  return cfg;
}

inline u2s::Checkpoint small_checkpoint(uint64_t seed) {
  return u2s::Checkpoint::init_toy(seed, small_config(), u2s::vocab_hash(toy_vocab()));
}

inline u2s::Tensor random_tensor(std::mt19937_64& rng, size_t rows, size_t cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  u2s::Tensor t(rows, cols);
  for (float& v : t.data()) v = static_cast<float>(n(rng));
  return t;
}

inline u2s::FeatureMatrix random_features(std::mt19937_64& rng, size_t frames) {
  return u2s::FeatureMatrix(random_tensor(rng, frames, u2s::kMelBins, 2.0));
}

inline std::string random_bytes(std::mt19937_64& rng, size_t max_len) {
  std::uniform_int_distribution<size_t> len(0, max_len);
  std::uniform_int_distribution<int> byte(0, 255);
  std::string s(len(rng), '\0');
  for (char& c : s) c = static_cast<char>(byte(rng));
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("u2s_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures

#endif  // U2S_TESTS_FIXTURES_H_
