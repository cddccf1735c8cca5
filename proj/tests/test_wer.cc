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


#include <random>

#include "doctest.h"
#include "u2s/wer.h"

using namespace u2s;

namespace {

// Plain recursion over every alignment; only for short inputs.
size_t brute_distance(const std::vector<std::string>& r, size_t i, const std::vector<std::string>& h, size_t j) {
  if (i == r.size()) return h.size() - j;
  if (j == h.size()) return r.size() - i;
  size_t sub = brute_distance(r, i + 1, h, j + 1) + (r[i] == h[j] ? 0 : 1);
  size_t del = brute_distance(r, i + 1, h, j) + 1;
  size_t ins = brute_distance(r, i, h, j + 1) + 1;
  return std::min({sub, del, ins});
}

}  // namespace

TEST_CASE("word error rate examples") {
  CHECK(wer("the cat sat", "the cat sat") == 0.0);
  CHECK(wer("a b c", "a x c d") == doctest::Approx(2.0 / 3.0));
  CHECK(wer("a", "") == 1.0);
  CHECK(wer("", "a b") == 2.0);
  CHECK(wer("", "") == 0.0);
  CHECK(wer("  a\tb \n", "a b") == 0.0);
  ErrorStats s = word_errors("a b c", "a x c d");
  CHECK(s.substitutions == 1);
  CHECK(s.insertions == 1);
  CHECK(s.deletions == 0);
  CHECK(s.ref_length == 3);
  ErrorStats d = word_errors("a b c d", "a d");
  CHECK(d.deletions == 2);
  CHECK(d.errors() == 2);
  s += d;
  CHECK(s.ref_length == 7);
  CHECK(s.errors() == 4);
  CHECK(split_words(" x  y ") == std::vector<std::string>{"x", "y"});
}

TEST_CASE("edit distance matches exhaustive alignment") {
  std::mt19937_64 rng(61);
  const std::vector<std::string> words{"a", "b", "c"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> r, h;
    for (size_t n = rng() % 7; n > 0; --n) r.push_back(words[rng() % 3]);
    for (size_t n = rng() % 7; n > 0; --n) h.push_back(words[rng() % 3]);
    ErrorStats s = edit_stats(r, h);
    CHECK(s.errors() == brute_distance(r, 0, h, 0));
    // Alignment bookkeeping: every reference word is matched, substituted or deleted.
    CHECK(s.ref_length == r.size());
    CHECK(s.deletions + s.substitutions <= r.size());
    CHECK(r.size() - s.deletions + s.insertions == h.size());
  }
}
