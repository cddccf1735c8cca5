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

#ifndef U2S_SYNTH_TASK_H_
#define U2S_SYNTH_TASK_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "u2s/frontend.h"
#include "u2s/tokenizer.h"

namespace u2s {

// Synthetic transcription task. Each "word" is one subset token whose sound
// is a pair of steady tones; its mean feature vector is the log-mel spectrum
// of that sound. Utterances are words separated by short silences.
struct SynthTaskConfig {
  uint64_t seed = 7;
  size_t num_words = 24;
  size_t min_words = 3;
  size_t max_words = 8;
  size_t min_frames = 8;   // feature frames per word
  size_t max_frames = 16;
  size_t max_gap = 6;      // silence frames between words
  size_t edge_silence = 8; // leading and trailing silence frames
  double noise_std = 1.0;
  float tone_amplitude = 0.25f;
  float background_std = 1e-3f;
};

struct SynthExample {
  FeatureMatrix features;
  TokenIds words;  // full-vocabulary ids, all inside the CTC subset
  std::string text;
  // Per-frame word index into `words`, or -1 for silence.
  std::vector<int> frame_labels;
};

// Sequence of words and silences to render; duration in feature frames.
struct SynthSpan {
  int word = -1;  // inventory index, -1 = silence
  size_t frames = 0;
};

class SynthTask {
 public:
  SynthTask(const HybridTokenizer& tok, SynthTaskConfig config = {});

  const SynthTaskConfig& config() const { return config_; }
  const TokenIds& inventory() const { return inventory_; }
  // [num_words x bins]
  const Tensor& means() const { return means_; }
  std::span<const float> silence() const { return silence_; }
  const std::vector<std::pair<double, double>>& tones() const { return tones_; }

  // Example `index` of the stream seeded by (config.seed, salt).
  SynthExample generate(uint64_t index, uint64_t salt = 0) const;
  SynthExample generate(std::mt19937_64& rng) const;
  // Random utterance layout.
  std::vector<SynthSpan> sample_layout(std::mt19937_64& rng) const;
  SynthExample render_features(const std::vector<SynthSpan>& layout, std::mt19937_64& rng) const;
  AudioBuffer render_audio(const std::vector<SynthSpan>& layout, std::mt19937_64& rng) const;

  double min_pairwise_distance() const;

 private:
  std::vector<float> tone_pair_spectrum(double f1, double f2) const;

  const HybridTokenizer* tok_;
  SynthTaskConfig config_;
  TokenIds inventory_;
  std::vector<std::pair<double, double>> tones_;
  Tensor means_;
  std::vector<float> silence_;
};

std::mt19937_64 derive_rng(uint64_t seed, uint64_t index, uint64_t salt = 0);

}  // namespace u2s

#endif  // U2S_SYNTH_TASK_H_
