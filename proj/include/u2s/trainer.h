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

#ifndef U2S_TRAINER_H_
#define U2S_TRAINER_H_

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "u2s/model.h"
#include "u2s/synth_task.h"
#include "u2s/tokenizer.h"

namespace u2s {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { kAttentionOnly, kCtcOnly, kHybrid };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

struct TrainPlan {
  Stage stage = Stage::kCtcOnly;
  std::set<std::string> trainable;
  double alpha = 0.3;
  double learning_rate = 0.05;
  size_t epochs = 2;
  size_t batch_size = 16;
  size_t train_examples = 2000;
  size_t val_examples = 200;
  uint64_t seed = 7;
  // Encoder chunk size used for validation, in encoder frames.
  size_t val_chunk_frames = 25;

  // Plan with the head set that `stage` trains.
  static TrainPlan for_stage(Stage stage);
  void validate() const;
};

struct Losses {
  double ctc = 0.0;
  double attention = 0.0;
  double hybrid = 0.0;
  double stage = 0.0;  // the value the stage optimizes
};

struct EpochLog {
  size_t epoch = 0;  // 0 = before training
  Stage stage = Stage::kCtcOnly;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_token_error_rate = 0.0;
  Losses val;
};

// One example with the frozen body already evaluated.
struct PreparedExample {
  Tensor enc_out;     // [T x d_model]
  Tensor dec_hidden;  // [L-1 x d_model], teacher-forced decoder states
  TokenIds ctc_target;
  TokenIds att_targets;  // tokens predicted by the scored decoder rows
  size_t first_scored = 0;  // first decoder row that is scored
};

// Trains the CTC and decoder output projections over a frozen body.
class HeadTrainer {
 public:
  HeadTrainer(Checkpoint ckpt, std::shared_ptr<const HybridTokenizer> tok);

  const Checkpoint& checkpoint() const { return ckpt_; }

  PreparedExample prepare(const SynthExample& ex, size_t chunk_frames) const;
  Losses evaluate(std::span<const PreparedExample> batch, const TrainPlan& plan) const;
  // One SGD step over `batch`; returns the losses before the update.
  Losses step(std::span<const PreparedExample> batch, const TrainPlan& plan);
  double token_error_rate(std::span<const PreparedExample> batch) const;

 private:
  struct Grads {
    Tensor ctc_w, ctc_b, out_w, out_b;
  };
  Losses accumulate(std::span<const PreparedExample> batch, const TrainPlan& plan,
                    Grads* grads) const;

  Checkpoint ckpt_;
  std::shared_ptr<const HybridTokenizer> tok_;
  Model body_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

TrainResult train(const Checkpoint& ckpt, const SynthTask& task,
                  std::shared_ptr<const HybridTokenizer> tok, const TrainPlan& plan,
                  const EpochCallback& on_epoch = {});

std::string training_csv(const std::vector<EpochLog>& log);

}  // namespace u2s

#endif  // U2S_TRAINER_H_
