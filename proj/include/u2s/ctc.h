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

#ifndef U2S_CTC_H_
#define U2S_CTC_H_

#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "u2s/tensor.h"
#include "u2s/tokenizer.h"

namespace u2s {

class CtcError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();
inline constexpr TokenId kCtcBlank = 0;

// Minimum frames needed to align `target`: one per label plus a separating
// blank between each adjacent repeat.
size_t ctc_min_frames(const TokenIds& target);

// Negative log of the total mass of all alignments of `target`, with the
// posteriors given as unnormalized logits [T x V].
double ctc_loss(const Tensor& logits, const TokenIds& target);
// Gradient of ctc_loss with respect to the logits.
Tensor ctc_grad(const Tensor& logits, const TokenIds& target);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

LossAndGrad ctc_loss_and_grad(const Tensor& logits, const TokenIds& target);

// Mean token negative log-likelihood where row t of `logits` predicts
// targets[t]; gradient is (softmax - onehot) / rows.
LossAndGrad attention_ce_loss(const Tensor& logits, const TokenIds& targets);

double hybrid_loss(double ctc, double attention, double alpha);

struct PrefixScore {
  double pb = kLogZero;   // ends in blank
  double pnb = kLogZero;  // ends in a label
  double total() const { return log_add(pb, pnb); }
};

struct Hypothesis {
  TokenIds ids;  // CTC space, blank-free
  double ctc_score = kLogZero;
  std::string text;
};

struct BeamState {
  std::map<TokenIds, PrefixScore> prefixes;
  size_t frames_processed = 0;
  size_t trailing_blank_frames = 0;

  // Fresh search: only the empty prefix, all mass ending in blank.
  static BeamState initial();
};

// One frame of CTC prefix beam search over a log-posterior row.
BeamState prefix_beam_step(const BeamState& state, std::span<const double> log_probs, size_t beam);
BeamState prefix_beam_step(const BeamState& state, std::span<const float> log_probs, size_t beam);

// Best k prefixes by combined mass, ties to shorter then lexicographically smaller.
std::vector<Hypothesis> top_k(const BeamState& state, size_t k);

// Argmax per frame, collapse repeats, drop blanks.
TokenIds greedy_decode(const Tensor& log_probs);

}  // namespace u2s

#endif  // U2S_CTC_H_
