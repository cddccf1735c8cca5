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

#include "u2s/two_pass.h"

#include <stdexcept>

namespace u2s {

void EndpointConfig::validate() const {
  if (!(silence_s > 0.0)) throw std::invalid_argument("silence_s must be positive");
  if (!(max_delay_s >= silence_s)) throw std::invalid_argument("max_delay_s must be >= silence_s");
  if (!(encoder_frame_s > 0.0)) throw std::invalid_argument("encoder_frame_s must be positive");
}

std::string_view endpoint_name(Endpoint e) {
  switch (e) {
    case Endpoint::kNone: return "none";
    case Endpoint::kSilence: return "silence";
    case Endpoint::kMaxDelay: return "max_delay";
  }
  return "none";
}

Endpoint detect_endpoint(double trailing_blank_s, double segment_elapsed_s, bool has_content,
                         const EndpointConfig& cfg) {
  // Small slack so that frame-count products like 25 * 0.04 hit 1.0.
  constexpr double kEps = 1e-9;
  if (segment_elapsed_s + kEps >= cfg.max_delay_s) return Endpoint::kMaxDelay;
  if (has_content && trailing_blank_s + kEps >= cfg.silence_s) return Endpoint::kSilence;
  return Endpoint::kNone;
}

void RescoreConfig::validate() const {
  if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0))
    throw std::invalid_argument("ctc_weight must lie in [0, 1]");
  if (beam == 0 || top_k == 0) throw std::invalid_argument("beam and top_k must be positive");
  if (top_k > beam) throw std::invalid_argument("top_k must not exceed beam");
}

RescoreResult rescore(const std::vector<Hypothesis>& hyps, const HybridTokenizer& tok,
                      const AttentionScorer& scorer, const RescoreConfig& cfg) {
  if (hyps.empty()) throw std::invalid_argument("rescore: empty hypothesis list");
  if (hyps.size() > cfg.top_k)
    throw std::invalid_argument("rescore: more hypotheses than top_k");
  RescoreResult r;
  if (hyps.size() == 1) {
    r.best = hyps.front();
    r.fused_scores = {hyps.front().ctc_score};
    return r;
  }

  std::vector<TokenIds> full;
  full.reserve(hyps.size());
  for (const auto& h : hyps) full.push_back(tok.retokenize(h.ids));
  r.attention_scores = scorer(full);
  if (r.attention_scores.size() != hyps.size())
    throw std::logic_error("rescore: scorer returned the wrong number of scores");

  r.fused_scores.resize(hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i)
    r.fused_scores[i] = r.attention_scores[i] + cfg.ctc_weight * hyps[i].ctc_score;

  auto text_of = [&](size_t i) { return tok.decode_ctc(hyps[i].ids); };
  size_t best = 0;
  for (size_t i = 1; i < hyps.size(); ++i) {
    const double fi = r.fused_scores[i], fb = r.fused_scores[best];
    bool better = fi > fb;
    if (fi == fb) {
      if (hyps[i].ctc_score != hyps[best].ctc_score) {
        better = hyps[i].ctc_score > hyps[best].ctc_score;
      } else {
        std::string ti = text_of(i), tb = text_of(best);
        better = ti.size() != tb.size() ? ti.size() < tb.size() : ti < tb;
      }
    }
    if (better) best = i;
  }
  r.best_index = best;
  r.best = hyps[best];
  return r;
}

RescoreResult rescore(const std::vector<Hypothesis>& hyps, const Tensor& enc_out,
                      const HybridTokenizer& tok, const Model& model, const RescoreConfig& cfg) {
  TokenIds prompt = tok.default_prompt();
  TokenId eot = tok.eot();
  AttentionScorer scorer = [&](const std::vector<TokenIds>& batch) {
    return model.decoder_score_batch(batch, enc_out, prompt, eot);
  };
  return rescore(hyps, tok, scorer, cfg);
}

}  // namespace u2s
