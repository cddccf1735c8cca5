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

#ifndef U2S_WER_H_
#define U2S_WER_H_

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

namespace u2s {

struct ErrorStats {
  size_t substitutions = 0;
  size_t insertions = 0;
  size_t deletions = 0;
  size_t ref_length = 0;

  size_t errors() const { return substitutions + insertions + deletions; }
  // Errors over max(1, reference length).
  double rate() const {
    return static_cast<double>(errors()) / static_cast<double>(std::max<size_t>(1, ref_length));
  }
  ErrorStats& operator+=(const ErrorStats& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    ref_length += o.ref_length;
    return *this;
  }
};

// Levenshtein alignment with unit costs. Among equal-cost alignments the
// backtrace prefers substitution, then deletion, then insertion.
template <typename T>
ErrorStats edit_stats(const std::vector<T>& ref, const std::vector<T>& hyp) {
  size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<size_t>> d(n + 1, std::vector<size_t>(m + 1));
  for (size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i - 1][j] + 1,
                          d[i][j - 1] + 1});
  ErrorStats s;
  s.ref_length = n;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++s.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++s.deletions;
      --i;
    } else {
      ++s.insertions;
      --j;
    }
  }
  return s;
}

std::vector<std::string> split_words(std::string_view text);

ErrorStats word_errors(std::string_view reference, std::string_view hypothesis);
double wer(std::string_view reference, std::string_view hypothesis);

}  // namespace u2s

#endif  // U2S_WER_H_
