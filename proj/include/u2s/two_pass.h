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

#ifndef U2S_TWO_PASS_H_
#define U2S_TWO_PASS_H_

#include <functional>
#include <string_view>
#include <vector>

#include "u2s/ctc.h"
#include "u2s/model.h"
#include "u2s/tokenizer.h"

namespace u2s {

struct EndpointConfig {
  double silence_s = 0.5;
  double max_delay_s = 12.0;
  double encoder_frame_s = 0.04;

  void validate() const;
};

enum class Endpoint { kNone, kSilence, kMaxDelay };

std::string_view endpoint_name(Endpoint e);

Endpoint detect_endpoint(double trailing_blank_s, double segment_elapsed_s, bool has_content,
                         const EndpointConfig& cfg);

struct RescoreConfig {
  double ctc_weight = 0.5;
  size_t top_k = 6;
  size_t beam = 10;

  void validate() const;
};

// Scores full-vocabulary hypotheses (prompt ... eot) with the attention
// decoder; one call per rescoring pass.
using AttentionScorer = std::function<std::vector<double>(const std::vector<TokenIds>&)>;

struct RescoreResult {
  Hypothesis best;
  size_t best_index = 0;
  std::vector<double> attention_scores;
  std::vector<double> fused_scores;
};

RescoreResult rescore(const std::vector<Hypothesis>& hyps, const HybridTokenizer& tok,
                      const AttentionScorer& scorer, const RescoreConfig& cfg);

RescoreResult rescore(const std::vector<Hypothesis>& hyps, const Tensor& enc_out,
                      const HybridTokenizer& tok, const Model& model, const RescoreConfig& cfg);

}  // namespace u2s

#endif  // U2S_TWO_PASS_H_
