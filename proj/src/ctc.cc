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

#include "u2s/ctc.h"

#include <algorithm>
#include <cmath>

namespace u2s {

namespace {

std::vector<std::vector<double>> row_log_softmax(const Tensor& logits) {
  std::vector<std::vector<double>> out(logits.rows());
  for (size_t t = 0; t < logits.rows(); ++t) out[t] = log_softmax(logits.row(t));
  return out;
}

void check_target(const Tensor& logits, const TokenIds& target) {
  size_t V = logits.cols();
  for (TokenId id : target) {
    if (id == kCtcBlank) throw CtcError("CTC target contains the blank label");
    if (id < 0 || static_cast<size_t>(id) >= V)
      throw CtcError("CTC target label " + std::to_string(id) + " outside posterior width " +
                     std::to_string(V));
  }
  size_t need = ctc_min_frames(target);
  if (logits.rows() < need)
    throw CtcError("CTC target needs " + std::to_string(need) + " frames, have " +
                   std::to_string(logits.rows()));
  if (logits.rows() == 0) throw CtcError("CTC needs at least one frame");
}

struct Lattice {
  std::vector<TokenId> labels;  // blank-interleaved target
  std::vector<std::vector<double>> alpha, beta;
  double log_total = kLogZero;
};

// Forward-backward over the blank-interleaved target; alpha and beta both
// include the emission at their own frame.
Lattice forward_backward(const std::vector<std::vector<double>>& lp, const TokenIds& target,
                         bool with_beta) {
  Lattice lat;
  lat.labels.push_back(kCtcBlank);
  for (TokenId id : target) {
    lat.labels.push_back(id);
    lat.labels.push_back(kCtcBlank);
  }
  size_t T = lp.size(), S = lat.labels.size();
  const auto& l = lat.labels;
  auto skip_ok = [&](size_t s) { return s >= 2 && l[s] != kCtcBlank && l[s] != l[s - 2]; };

  lat.alpha.assign(T, std::vector<double>(S, kLogZero));
  lat.alpha[0][0] = lp[0][l[0]];
  if (S > 1) lat.alpha[0][1] = lp[0][l[1]];
  for (size_t t = 1; t < T; ++t) {
    for (size_t s = 0; s < S; ++s) {
      double a = lat.alpha[t - 1][s];
      if (s >= 1) a = log_add(a, lat.alpha[t - 1][s - 1]);
      if (skip_ok(s)) a = log_add(a, lat.alpha[t - 1][s - 2]);
      lat.alpha[t][s] = a == kLogZero ? kLogZero : a + lp[t][l[s]];
    }
  }
  lat.log_total = lat.alpha[T - 1][S - 1];
  if (S > 1) lat.log_total = log_add(lat.log_total, lat.alpha[T - 1][S - 2]);

  if (with_beta) {
    lat.beta.assign(T, std::vector<double>(S, kLogZero));
    lat.beta[T - 1][S - 1] = lp[T - 1][l[S - 1]];
    if (S > 1) lat.beta[T - 1][S - 2] = lp[T - 1][l[S - 2]];
    for (size_t t = T - 1; t-- > 0;) {
      for (size_t s = 0; s < S; ++s) {
        double b = lat.beta[t + 1][s];
        if (s + 1 < S) b = log_add(b, lat.beta[t + 1][s + 1]);
        if (s + 2 < S && skip_ok(s + 2)) b = log_add(b, lat.beta[t + 1][s + 2]);
        lat.beta[t][s] = b == kLogZero ? kLogZero : b + lp[t][l[s]];
      }
    }
  }
  return lat;
}

bool ranks_before(const std::pair<const TokenIds*, double>& a,
                  const std::pair<const TokenIds*, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  if (a.first->size() != b.first->size()) return a.first->size() < b.first->size();
  return *a.first < *b.first;
}

std::vector<std::pair<const TokenIds*, double>> ranked(const BeamState& state) {
  std::vector<std::pair<const TokenIds*, double>> v;
  v.reserve(state.prefixes.size());
  for (const auto& [p, sc] : state.prefixes) v.emplace_back(&p, sc.total());
  std::sort(v.begin(), v.end(), ranks_before);
  return v;
}

}  // namespace

size_t ctc_min_frames(const TokenIds& target) {
  size_t n = target.size();
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

double ctc_loss(const Tensor& logits, const TokenIds& target) {
  check_target(logits, target);
  auto lp = row_log_softmax(logits);
  return -forward_backward(lp, target, false).log_total;
}

LossAndGrad ctc_loss_and_grad(const Tensor& logits, const TokenIds& target) {
  check_target(logits, target);
  auto lp = row_log_softmax(logits);
  Lattice lat = forward_backward(lp, target, true);
  size_t T = logits.rows(), V = logits.cols();
  LossAndGrad out;
  out.loss = -lat.log_total;
  out.grad = Tensor(T, V);
  std::vector<double> occ(V);
  for (size_t t = 0; t < T; ++t) {
    std::fill(occ.begin(), occ.end(), kLogZero);
    for (size_t s = 0; s < lat.labels.size(); ++s) {
      double a = lat.alpha[t][s], b = lat.beta[t][s];
      if (a == kLogZero || b == kLogZero) continue;
      TokenId v = lat.labels[s];
      occ[v] = log_add(occ[v], a + b - lp[t][v]);
    }
    for (size_t v = 0; v < V; ++v) {
      double gamma = occ[v] == kLogZero ? 0.0 : std::exp(occ[v] - lat.log_total);
      out.grad.at(t, v) = static_cast<float>(std::exp(lp[t][v]) - gamma);
    }
  }
  return out;
}

Tensor ctc_grad(const Tensor& logits, const TokenIds& target) {
  return ctc_loss_and_grad(logits, target).grad;
}

LossAndGrad attention_ce_loss(const Tensor& logits, const TokenIds& targets) {
  size_t L = logits.rows(), V = logits.cols();
  if (L != targets.size())
    throw CtcError("attention loss: " + std::to_string(L) + " logit rows for " +
                   std::to_string(targets.size()) + " targets");
  if (L == 0) throw CtcError("attention loss: no positions");
  LossAndGrad out;
  out.grad = Tensor(L, V);
  double inv = 1.0 / static_cast<double>(L);
  for (size_t t = 0; t < L; ++t) {
    TokenId y = targets[t];
    if (y < 0 || static_cast<size_t>(y) >= V)
      throw CtcError("attention target " + std::to_string(y) + " out of range");
    auto ls = log_softmax(logits.row(t));
    out.loss -= ls[y];
    for (size_t v = 0; v < V; ++v)
      out.grad.at(t, v) = static_cast<float>((std::exp(ls[v]) - (static_cast<TokenId>(v) == y)) * inv);
  }
  out.loss *= inv;
  return out;
}

double hybrid_loss(double ctc, double attention, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw CtcError("hybrid loss weight must lie in [0, 1], got " + std::to_string(alpha));
  return alpha * ctc + (1.0 - alpha) * attention;
}

BeamState BeamState::initial() {
  BeamState s;
  s.prefixes[{}] = PrefixScore{0.0, kLogZero};
  return s;
}

BeamState prefix_beam_step(const BeamState& state, std::span<const double> lp, size_t beam) {
  if (beam == 0) throw CtcError("beam must be at least 1");
  if (lp.size() < 2) throw CtcError("posterior frame must cover blank and at least one label");
  // A default-constructed state behaves like a fresh search.
  BeamState seeded;
  const BeamState* src = &state;
  if (state.prefixes.empty()) {
    seeded = BeamState::initial();
    src = &seeded;
  }
  const BeamState& cur = *src;

  BeamState next;
  next.frames_processed = state.frames_processed + 1;
  auto& out = next.prefixes;
  TokenIds ext;
  for (const auto& [prefix, sc] : cur.prefixes) {
    double total = sc.total();
    auto& same = out[prefix];
    same.pb = log_add(same.pb, total + lp[kCtcBlank]);
    TokenId last = prefix.empty() ? kCtcBlank : prefix.back();
    for (size_t v = 1; v < lp.size(); ++v) {
      double p = lp[v];
      if (p == kLogZero) continue;
      TokenId id = static_cast<TokenId>(v);
      ext = prefix;
      ext.push_back(id);
      auto& grown = out[ext];
      if (id == last) {
        same.pnb = log_add(same.pnb, sc.pnb + p);
        grown.pnb = log_add(grown.pnb, sc.pb + p);
      } else {
        grown.pnb = log_add(grown.pnb, total + p);
      }
    }
  }

  // Repeat labels can create extensions that received no mass.
  std::erase_if(out, [](const auto& kv) { return kv.second.total() == kLogZero; });
  if (out.empty()) out[{}] = PrefixScore{};

  if (out.size() > beam) {
    auto order = ranked(next);
    std::map<TokenIds, PrefixScore> kept;
    for (size_t i = 0; i < beam; ++i) kept.emplace(*order[i].first, out.at(*order[i].first));
    out = std::move(kept);
  }

  size_t best = static_cast<size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  next.trailing_blank_frames = best == kCtcBlank ? state.trailing_blank_frames + 1 : 0;
  return next;
}

BeamState prefix_beam_step(const BeamState& state, std::span<const float> log_probs, size_t beam) {
  std::vector<double> lp(log_probs.begin(), log_probs.end());
  return prefix_beam_step(state, lp, beam);
}

std::vector<Hypothesis> top_k(const BeamState& state, size_t k) {
  if (k == 0) throw CtcError("top_k needs k >= 1");
  if (state.prefixes.empty()) throw CtcError("top_k on an empty beam");
  auto order = ranked(state);
  std::vector<Hypothesis> out;
  for (size_t i = 0; i < order.size() && i < k; ++i)
    out.push_back(Hypothesis{*order[i].first, order[i].second, {}});
  return out;
}

TokenIds greedy_decode(const Tensor& log_probs) {
  TokenIds out;
  TokenId prev = kCtcBlank;
  for (size_t t = 0; t < log_probs.rows(); ++t) {
    auto row = log_probs.row(t);
    TokenId best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != kCtcBlank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

}  // namespace u2s
