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

#include "u2s/tokenizer.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

namespace u2s {

namespace {

std::string to_hex(const std::string& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 15]);
  }
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  throw TokenizerError(std::string("invalid hex digit '") + c + "'");
}

std::string from_hex(const std::string& hex) {
  if (hex.size() % 2) throw TokenizerError("odd-length hex token: " + hex);
  std::string out;
  for (size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<char>(hex_value(hex[i]) * 16 + hex_value(hex[i + 1])));
  return out;
}

}  // namespace

BpeVocab::BpeVocab(std::vector<std::string> tokens,
                   std::vector<std::pair<TokenId, TokenId>> merges,
                   std::map<std::string, TokenId> specials)
    : tokens_(std::move(tokens)), merges_(std::move(merges)), specials_(std::move(specials)) {
  if (tokens_.size() < 256) throw TokenizerError("vocabulary must contain the 256 byte tokens");
  for (int b = 0; b < 256; ++b)
    if (tokens_[b] != std::string(1, static_cast<char>(b)))
      throw TokenizerError("token " + std::to_string(b) + " is not the byte it indexes");

  special_mask_.assign(tokens_.size(), false);
  for (const auto& [name, id] : specials_) {
    if (id < 256 || static_cast<size_t>(id) >= tokens_.size())
      throw TokenizerError("special '" + name + "' id " + std::to_string(id) + " out of range");
    special_mask_[id] = true;
  }

  std::unordered_map<std::string, TokenId> by_bytes;
  for (size_t i = 0; i < tokens_.size(); ++i)
    if (!special_mask_[i]) by_bytes.emplace(tokens_[i], static_cast<TokenId>(i));

  TokenId last_result = 255;
  for (size_t rank = 0; rank < merges_.size(); ++rank) {
    auto [a, b] = merges_[rank];
    auto valid = [&](TokenId id) {
      return id >= 0 && static_cast<size_t>(id) < tokens_.size() && !special_mask_[id];
    };
    if (!valid(a) || !valid(b))
      throw TokenizerError("merge " + std::to_string(rank) + " references a missing token");
    auto it = by_bytes.find(tokens_[a] + tokens_[b]);
    if (it == by_bytes.end())
      throw TokenizerError("merge " + std::to_string(rank) + " has no result token");
    TokenId result = it->second;
    if (result <= last_result || result <= a || result <= b)
      throw TokenizerError("merge " + std::to_string(rank) +
                           " result id is not ordered after earlier merges and its operands");
    last_result = result;
    merge_lookup_.emplace(pair_key(a, b), std::make_pair(rank, result));
  }
}

const std::string& BpeVocab::token(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
    throw TokenizerError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenId BpeVocab::special(const std::string& name) const {
  auto it = specials_.find(name);
  if (it == specials_.end()) throw TokenizerError("vocabulary has no special '" + name + "'");
  return it->second;
}

bool BpeVocab::is_special(TokenId id) const {
  return id >= 0 && static_cast<size_t>(id) < special_mask_.size() && special_mask_[id];
}

TokenIds BpeVocab::encode(std::string_view text, size_t max_id) const {
  TokenIds ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);

  while (ids.size() > 1) {
    size_t best_rank = merges_.size();
    TokenId best_a = -1, best_b = -1, best_result = -1;
    for (size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = merge_lookup_.find(pair_key(ids[i], ids[i + 1]));
      if (it == merge_lookup_.end()) continue;
      auto [rank, result] = it->second;
      if (static_cast<size_t>(result) >= max_id) continue;
      if (rank < best_rank) {
        best_rank = rank;
        best_a = ids[i];
        best_b = ids[i + 1];
        best_result = result;
      }
    }
    if (best_rank == merges_.size()) break;
    TokenIds next;
    next.reserve(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
      if (i + 1 < ids.size() && ids[i] == best_a && ids[i + 1] == best_b) {
        next.push_back(best_result);
        ++i;
      } else {
        next.push_back(ids[i]);
      }
    }
    ids = std::move(next);
  }
  return ids;
}

std::string BpeVocab::decode(const TokenIds& ids) const {
  std::string out;
  for (TokenId id : ids) {
    const std::string& t = token(id);
    if (!special_mask_[id]) out += t;
  }
  return out;
}

std::string BpeVocab::to_json() const {
  nlohmann::json j;
  j["tokens"] = nlohmann::json::array();
  for (const auto& t : tokens_) j["tokens"].push_back(to_hex(t));
  j["merges"] = nlohmann::json::array();
  for (const auto& [a, b] : merges_) j["merges"].push_back({a, b});
  j["specials"] = nlohmann::json::object();
  for (const auto& [name, id] : specials_) j["specials"][name] = id;
  return j.dump(1);
}

BpeVocab BpeVocab::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::vector<std::string> tokens;
    for (const auto& t : j.at("tokens")) tokens.push_back(from_hex(t.get<std::string>()));
    std::vector<std::pair<TokenId, TokenId>> merges;
    for (const auto& m : j.at("merges")) {
      if (!m.is_array() || m.size() != 2) throw TokenizerError("merge entry is not an id pair");
      merges.emplace_back(m[0].get<TokenId>(), m[1].get<TokenId>());
    }
    std::map<std::string, TokenId> specials;
    for (const auto& [name, id] : j.at("specials").items()) specials[name] = id.get<TokenId>();
    return BpeVocab(std::move(tokens), std::move(merges), std::move(specials));
  } catch (const nlohmann::json::exception& e) {
    throw TokenizerError(std::string("malformed tokenizer JSON: ") + e.what());
  }
}

BpeVocab BpeVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TokenizerError("cannot open tokenizer file " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return from_json(text);
}

void BpeVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TokenizerError("cannot write tokenizer file " + path.string());
  out << to_json() << '\n';
}

BpeVocab train_bpe(std::string_view corpus, size_t target_size) {
  if (target_size < 256) throw TokenizerError("target vocabulary size must be at least 256");

  // Pieces start at whitespace so that learned tokens carry a leading space.
  std::map<std::string, size_t> piece_counts;
  size_t start = 0;
  for (size_t i = 1; i <= corpus.size(); ++i) {
    bool boundary = i == corpus.size() || corpus[i] == ' ' || corpus[i] == '\n' || corpus[i] == '\t';
    if (boundary) {
      if (i > start) ++piece_counts[std::string(corpus.substr(start, i - start))];
      start = i;
    }
  }

  std::vector<std::pair<TokenIds, size_t>> pieces;
  for (const auto& [p, n] : piece_counts) {
    TokenIds ids;
    for (unsigned char c : p) ids.push_back(c);
    pieces.emplace_back(std::move(ids), n);
  }

  std::vector<std::string> tokens;
  for (int b = 0; b < 256; ++b) tokens.emplace_back(1, static_cast<char>(b));
  std::set<std::string> known(tokens.begin(), tokens.end());
  std::vector<std::pair<TokenId, TokenId>> merges;
  std::set<std::pair<TokenId, TokenId>> banned;

  while (tokens.size() < target_size) {
    std::map<std::pair<TokenId, TokenId>, size_t> counts;
    for (const auto& [ids, n] : pieces)
      for (size_t i = 0; i + 1 < ids.size(); ++i) counts[{ids[i], ids[i + 1]}] += n;
    std::pair<TokenId, TokenId> best{-1, -1};
    size_t best_count = 0;
    for (const auto& [pair, n] : counts) {
      if (banned.count(pair)) continue;
      if (n > best_count) {  // map order breaks ties toward the smallest pair
        best = pair;
        best_count = n;
      }
    }
    if (best_count < 2) break;
    std::string merged = tokens[best.first] + tokens[best.second];
    if (known.count(merged)) {
      banned.insert(best);
      continue;
    }
    TokenId id = static_cast<TokenId>(tokens.size());
    tokens.push_back(merged);
    known.insert(merged);
    merges.push_back(best);
    for (auto& [ids, n] : pieces) {
      TokenIds next;
      for (size_t i = 0; i < ids.size(); ++i) {
        if (i + 1 < ids.size() && ids[i] == best.first && ids[i + 1] == best.second) {
          next.push_back(id);
          ++i;
        } else {
          next.push_back(ids[i]);
        }
      }
      ids = std::move(next);
    }
  }

  std::map<std::string, TokenId> specials;
  for (const char* name : {kSpecialEot, kSpecialSot, kSpecialTranscribe}) {
    specials[name] = static_cast<TokenId>(tokens.size());
    tokens.push_back(std::string("<|") + name + "|>");
  }
  return BpeVocab(std::move(tokens), std::move(merges), std::move(specials));
}

HybridTokenizer::HybridTokenizer(BpeVocab full, size_t subset_size)
    : full_(std::move(full)), subset_size_(subset_size) {
  if (subset_size_ < 256)
    throw TokenizerError("CTC subset must cover the 256 byte tokens");
  if (subset_size_ > full_.size())
    throw TokenizerError("CTC subset size " + std::to_string(subset_size_) +
                         " exceeds vocabulary size " + std::to_string(full_.size()));
  for (const auto& [name, id] : full_.specials())
    if (static_cast<size_t>(id) < subset_size_)
      throw TokenizerError("special '" + name + "' falls inside the CTC subset");
}

TokenId HybridTokenizer::to_ctc(TokenId full_id) const {
  if (full_id < 0 || static_cast<size_t>(full_id) >= subset_size_)
    throw TokenizerError("full id " + std::to_string(full_id) + " is outside the CTC subset");
  return full_id + 1;
}

TokenId HybridTokenizer::to_full(TokenId ctc_id) const {
  if (ctc_id == kBlank) throw TokenizerError("blank has no full-vocabulary id");
  if (ctc_id < 0 || static_cast<size_t>(ctc_id) > subset_size_)
    throw TokenizerError("CTC id " + std::to_string(ctc_id) + " out of range");
  return ctc_id - 1;
}

TokenIds HybridTokenizer::encode_ctc(std::string_view text) const {
  TokenIds ids = full_.encode(text, subset_size_);
  for (TokenId& id : ids) id += 1;
  return ids;
}

std::string HybridTokenizer::decode_ctc(const TokenIds& ctc_ids) const {
  TokenIds full_ids;
  full_ids.reserve(ctc_ids.size());
  for (TokenId id : ctc_ids) full_ids.push_back(to_full(id));
  return full_.decode(full_ids);
}

TokenIds HybridTokenizer::default_prompt() const {
  return {full_.special(kSpecialSot), full_.special(kSpecialTranscribe)};
}

TokenIds HybridTokenizer::retokenize(const TokenIds& ctc_ids, const TokenIds& prompt) const {
  for (TokenId p : prompt)
    if (!full_.is_special(p)) throw TokenizerError("prompt token " + std::to_string(p) + " is not special");
  std::string text = decode_ctc(ctc_ids);
  TokenIds out = prompt;
  TokenIds body = full_.encode(text);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(eot());
  return out;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TokenizerError("cannot open " + path.string());
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return hash_hex(fnv1a64(bytes));
}

std::string vocab_hash(const BpeVocab& vocab) { return hash_hex(fnv1a64(vocab.to_json())); }

}  // namespace u2s
