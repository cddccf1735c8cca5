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

#ifndef U2S_TOKENIZER_H_
#define U2S_TOKENIZER_H_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace u2s {

class TokenizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TokenId = int32_t;
using TokenIds = std::vector<TokenId>;

inline constexpr size_t kUnlimited = std::numeric_limits<size_t>::max();

inline constexpr const char* kSpecialSot = "sot";
inline constexpr const char* kSpecialTranscribe = "transcribe";
inline constexpr const char* kSpecialEot = "eot";

// Byte-level BPE vocabulary. Ids 0..255 are the single bytes; merge i fuses
// an adjacent pair and its rank is i. Merge results are ordered by rank, so
// restricting to ids below k is the same as keeping the first k-256 merges.
class BpeVocab {
 public:
  BpeVocab() = default;
  BpeVocab(std::vector<std::string> tokens, std::vector<std::pair<TokenId, TokenId>> merges,
           std::map<std::string, TokenId> specials);

  size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
  const std::map<std::string, TokenId>& specials() const { return specials_; }
  TokenId special(const std::string& name) const;
  bool is_special(TokenId id) const;

  TokenIds encode(std::string_view text, size_t max_id = kUnlimited) const;
  std::string decode(const TokenIds& ids) const;

  std::string to_json() const;
  static BpeVocab from_json(std::string_view json);
  static BpeVocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  struct PairHash {
    size_t operator()(uint64_t key) const { return std::hash<uint64_t>()(key); }
  };
  static uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
  }

  std::vector<std::string> tokens_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::map<std::string, TokenId> specials_;
  std::vector<bool> special_mask_;
  // pair -> (rank, result id)
  std::unordered_map<uint64_t, std::pair<size_t, TokenId>, PairHash> merge_lookup_;
};

// Learns a byte-level BPE vocabulary of `target_size` non-special tokens from
// a text corpus, then appends the sot/transcribe/eot specials.
BpeVocab train_bpe(std::string_view corpus, size_t target_size);

// Restricted CTC space over the first `subset_size` vocabulary ids plus a
// blank at index 0; CTC id = full id + 1.
class HybridTokenizer {
 public:
  static constexpr TokenId kBlank = 0;

  HybridTokenizer(BpeVocab full, size_t subset_size = 8000);

  const BpeVocab& full() const { return full_; }
  size_t subset_size() const { return subset_size_; }
  size_t ctc_dim() const { return subset_size_ + 1; }

  TokenId to_ctc(TokenId full_id) const;
  TokenId to_full(TokenId ctc_id) const;

  // CTC-space encoding of text (blank-free).
  TokenIds encode_ctc(std::string_view text) const;
  std::string decode_ctc(const TokenIds& ctc_ids) const;

  // [sot, transcribe]
  TokenIds default_prompt() const;
  TokenId eot() const { return full_.special(kSpecialEot); }

  // prompt ++ full-vocabulary encoding of the decoded CTC text ++ eot.
  TokenIds retokenize(const TokenIds& ctc_ids, const TokenIds& prompt) const;
  TokenIds retokenize(const TokenIds& ctc_ids) const { return retokenize(ctc_ids, default_prompt()); }

 private:
  BpeVocab full_;
  size_t subset_size_;
};

// 64-bit FNV-1a, used to pair checkpoints with tokenizer files.
uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(uint64_t h);
std::string file_hash(const std::filesystem::path& path);
// Hash of the canonical JSON form; stored in checkpoints to pair them with a vocabulary.
std::string vocab_hash(const BpeVocab& vocab);

}  // namespace u2s

#endif  // U2S_TOKENIZER_H_
