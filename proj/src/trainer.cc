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

#include "u2s/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "u2s/ctc.h"
#include "u2s/wer.h"

namespace u2s {
namespace {

constexpr uint64_t kTrainSalt = 0;
constexpr uint64_t kValSalt = 1;
constexpr uint64_t kOrderSalt = 2;

std::set<std::string> head_set(Stage stage) {
  std::set<std::string> s;
  if (stage != Stage::kAttentionOnly) s.insert(kCtcHeadParams.begin(), kCtcHeadParams.end());
  if (stage != Stage::kCtcOnly) s.insert(kDecoderHeadParams.begin(), kDecoderHeadParams.end());
  return s;
}

double ctc_weight(const TrainPlan& plan) {
  switch (plan.stage) {
    case Stage::kCtcOnly: return 1.0;
    case Stage::kAttentionOnly: return 0.0;
    case Stage::kHybrid: return plan.alpha;
  }
  return 0.0;
}

// acc[o][i] += scale * sum_t g[t][o] * h[t][i]; bias[o] += scale * sum_t g[t][o]
void add_outer(const Tensor& g, const Tensor& h, double scale, Tensor& dw, Tensor& db) {
  size_t out = g.cols(), in = h.cols();
  std::vector<double> wacc(out * in, 0.0), bacc(out, 0.0);
  for (size_t t = 0; t < g.rows(); ++t) {
    auto gr = g.row(t);
    auto hr = h.row(t);
    for (size_t o = 0; o < out; ++o) {
      double go = gr[o];
      if (go == 0.0) continue;
      bacc[o] += go;
      double* w = &wacc[o * in];
      for (size_t i = 0; i < in; ++i) w[i] += go * hr[i];
    }
  }
  for (size_t k = 0; k < wacc.size(); ++k) dw.data()[k] += static_cast<float>(scale * wacc[k]);
  for (size_t o = 0; o < out; ++o) db.data()[o] += static_cast<float>(scale * bacc[o]);
}

void sgd(Tensor& param, const Tensor& grad, double lr) {
  for (size_t k = 0; k < param.size(); ++k)
    param.data()[k] = static_cast<float>(param.data()[k] - lr * grad.data()[k]);
}

void check_finite(const Losses& l, const TrainPlan& plan, std::string_view where) {
  if (std::isfinite(l.stage)) return;
  std::ostringstream msg;
  msg << "non-finite " << stage_name(plan.stage) << " loss " << where << " (ctc=" << l.ctc
      << ", attention=" << l.attention << ", lr=" << plan.learning_rate << ")";
  throw TrainError(msg.str());
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kAttentionOnly: return "attention_only";
    case Stage::kCtcOnly: return "ctc_only";
    case Stage::kHybrid: return "hybrid";
  }
  return "unknown";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::kAttentionOnly, Stage::kCtcOnly, Stage::kHybrid})
    if (stage_name(s) == name) return s;
  throw std::invalid_argument("unknown stage '" + std::string(name) +
                              "' (expected attention_only, ctc_only or hybrid)");
}

TrainPlan TrainPlan::for_stage(Stage stage) {
  TrainPlan p;
  p.stage = stage;
  p.trainable = head_set(stage);
  return p;
}

void TrainPlan::validate() const {
  if (trainable != head_set(stage)) {
    std::string got;
    for (const auto& n : trainable) got += (got.empty() ? "" : ",") + n;
    throw TrainError("trainable set {" + got + "} does not match stage " +
                     std::string(stage_name(stage)));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw TrainError("alpha must lie in [0, 1]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw TrainError("learning rate must be finite and non-negative");
  if (batch_size == 0) throw TrainError("batch size must be positive");
  if (train_examples == 0 || val_examples == 0) throw TrainError("example counts must be positive");
  if (val_chunk_frames == 0) throw TrainError("validation chunk must be positive");
}

HeadTrainer::HeadTrainer(Checkpoint ckpt, std::shared_ptr<const HybridTokenizer> tok)
    : ckpt_(std::move(ckpt)), tok_(std::move(tok)), body_(ckpt_, false) {
  if (ckpt_.config.ctc_vocab != tok_->ctc_dim() || ckpt_.config.dec_vocab != tok_->full().size())
    throw ModelError("checkpoint vocabulary does not match tokenizer");
}

PreparedExample HeadTrainer::prepare(const SynthExample& ex, size_t chunk_frames) const {
  PreparedExample p;
  p.enc_out = body_.encode_full(ex.features, ChunkMaskSpec{chunk_frames, std::nullopt, 0});
  for (TokenId w : ex.words) p.ctc_target.push_back(tok_->to_ctc(w));
  TokenIds prompt = tok_->default_prompt();
  TokenIds seq = tok_->retokenize(p.ctc_target, prompt);
  TokenIds inputs(seq.begin(), seq.end() - 1);
  p.dec_hidden = body_.decoder_hidden(inputs, p.enc_out);
  p.first_scored = prompt.size() - 1;
  p.att_targets.assign(seq.begin() + static_cast<std::ptrdiff_t>(prompt.size()), seq.end());
  return p;
}

Losses HeadTrainer::accumulate(std::span<const PreparedExample> batch, const TrainPlan& plan,
                               Grads* grads) const {
  const Tensor& cw = ckpt_.param("ctc.w");
  const Tensor& cb = ckpt_.param("ctc.b");
  const Tensor& ow = ckpt_.param("dec.out.w");
  const Tensor& ob = ckpt_.param("dec.out.b");
  double wc = ctc_weight(plan), wa = 1.0 - wc;
  double inv = 1.0 / static_cast<double>(batch.size());
  double ctc_sum = 0.0, att_sum = 0.0;
  for (const auto& ex : batch) {
    LossAndGrad c = ctc_loss_and_grad(linear(ex.enc_out, cw, cb), ex.ctc_target);
    ctc_sum += c.loss;
    Tensor scored = ex.dec_hidden.slice_rows(ex.first_scored, ex.dec_hidden.rows());
    LossAndGrad a = attention_ce_loss(linear(scored, ow, ob), ex.att_targets);
    att_sum += a.loss;
    if (grads) {
      if (wc > 0.0) add_outer(c.grad, ex.enc_out, wc * inv, grads->ctc_w, grads->ctc_b);
      if (wa > 0.0) add_outer(a.grad, scored, wa * inv, grads->out_w, grads->out_b);
    }
  }
  Losses l;
  l.ctc = ctc_sum * inv;
  l.attention = att_sum * inv;
  l.hybrid = hybrid_loss(l.ctc, l.attention, plan.alpha);
  switch (plan.stage) {
    case Stage::kCtcOnly: l.stage = l.ctc; break;
    case Stage::kAttentionOnly: l.stage = l.attention; break;
    case Stage::kHybrid: l.stage = l.hybrid; break;
  }
  return l;
}

Losses HeadTrainer::evaluate(std::span<const PreparedExample> batch, const TrainPlan& plan) const {
  if (batch.empty()) throw TrainError("empty batch");
  return accumulate(batch, plan, nullptr);
}

Losses HeadTrainer::step(std::span<const PreparedExample> batch, const TrainPlan& plan) {
  if (batch.empty()) throw TrainError("empty batch");
  Grads g{Tensor(ckpt_.param("ctc.w").shape()), Tensor(ckpt_.param("ctc.b").shape()),
          Tensor(ckpt_.param("dec.out.w").shape()), Tensor(ckpt_.param("dec.out.b").shape())};
  Losses l = accumulate(batch, plan, &g);
  check_finite(l, plan, "during step");
  if (plan.learning_rate == 0.0) return l;
  const std::pair<const char*, const Tensor*> updates[] = {
      {"ctc.w", &g.ctc_w}, {"ctc.b", &g.ctc_b}, {"dec.out.w", &g.out_w}, {"dec.out.b", &g.out_b}};
  for (const auto& [name, grad] : updates)
    if (plan.trainable.count(name)) sgd(ckpt_.param(name), *grad, plan.learning_rate);
  return l;
}

double HeadTrainer::token_error_rate(std::span<const PreparedExample> batch) const {
  const Tensor& cw = ckpt_.param("ctc.w");
  const Tensor& cb = ckpt_.param("ctc.b");
  ErrorStats total;
  for (const auto& ex : batch)
    total += edit_stats(ex.ctc_target, greedy_decode(log_softmax_rows(linear(ex.enc_out, cw, cb))));
  return total.rate();
}

TrainResult train(const Checkpoint& ckpt, const SynthTask& task,
                  std::shared_ptr<const HybridTokenizer> tok, const TrainPlan& plan,
                  const EpochCallback& on_epoch) {
  plan.validate();
  HeadTrainer trainer(ckpt, tok);

  std::vector<SynthExample> train_set;
  train_set.reserve(plan.train_examples);
  for (size_t i = 0; i < plan.train_examples; ++i) train_set.push_back(task.generate(i, kTrainSalt));
  std::vector<PreparedExample> val_set;
  val_set.reserve(plan.val_examples);
  for (size_t i = 0; i < plan.val_examples; ++i)
    val_set.push_back(trainer.prepare(task.generate(i, kValSalt), plan.val_chunk_frames));

  TrainResult result;
  auto record = [&](size_t epoch, double train_loss) {
    EpochLog e;
    e.epoch = epoch;
    e.stage = plan.stage;
    e.train_loss = train_loss;
    e.val = trainer.evaluate(val_set, plan);
    check_finite(e.val, plan, "on validation at epoch " + std::to_string(epoch));
    e.val_loss = e.val.stage;
    e.val_token_error_rate = trainer.token_error_rate(val_set);
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  };

  // Epoch 0: the starting point, training loss measured without updates.
  {
    double sum = 0.0;
    for (size_t begin = 0; begin < train_set.size(); begin += plan.batch_size) {
      size_t end = std::min(train_set.size(), begin + plan.batch_size);
      std::vector<PreparedExample> batch;
      for (size_t i = begin; i < end; ++i)
        batch.push_back(trainer.prepare(train_set[i], plan.val_chunk_frames));
      sum += trainer.evaluate(batch, plan).stage * static_cast<double>(batch.size());
    }
    record(0, sum / static_cast<double>(train_set.size()));
  }

  std::vector<size_t> order(train_set.size());
  const ModelConfig& cfg = trainer.checkpoint().config;
  for (size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng = derive_rng(plan.seed, epoch, kOrderSalt);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (size_t begin = 0; begin < order.size(); begin += plan.batch_size) {
      size_t end = std::min(order.size(), begin + plan.batch_size);
      std::vector<PreparedExample> batch;
      for (size_t i = begin; i < end; ++i)
        batch.push_back(trainer.prepare(train_set[order[i]], sample_chunk_frames(rng, cfg)));
      Losses l = trainer.step(batch, plan);
      sum += l.stage * static_cast<double>(batch.size());
    }
    record(epoch, sum / static_cast<double>(order.size()));
  }
  result.checkpoint = trainer.checkpoint();
  return result;
}

std::string training_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,stage,train_loss,val_loss,val_token_error_rate\n";
  for (const auto& e : log)
    out << e.epoch << ',' << stage_name(e.stage) << ',' << e.train_loss << ',' << e.val_loss << ','
        << e.val_token_error_rate << '\n';
  return out.str();
}

}  // namespace u2s
