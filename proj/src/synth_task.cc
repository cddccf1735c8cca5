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

#include "u2s/synth_task.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace u2s {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool word_like(const std::string& s, size_t min_len) {
  if (s.size() < min_len || s[0] != ' ') return false;
  return std::all_of(s.begin() + 1, s.end(),
                     [](char c) { return std::islower(static_cast<unsigned char>(c)); });
}

constexpr size_t kSpectrumSamples = 4800;
constexpr size_t kLowestBin = 4;
constexpr size_t kHighestBin = kMelBins - 4;

}  // namespace

std::mt19937_64 derive_rng(uint64_t seed, uint64_t index, uint64_t salt) {
  uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ salt);
  return std::mt19937_64(h);
}

SynthTask::SynthTask(const HybridTokenizer& tok, SynthTaskConfig config)
    : tok_(&tok), config_(config) {
  if (config_.num_words < 2) throw std::invalid_argument("synthetic task needs at least 2 words");
  if (config_.min_words < 1 || config_.min_words > config_.max_words)
    throw std::invalid_argument("invalid words-per-utterance range");
  if (config_.min_frames < 1 || config_.min_frames > config_.max_frames)
    throw std::invalid_argument("invalid word duration range");
  if (!(config_.noise_std >= 0.0)) throw std::invalid_argument("noise_std must be non-negative");

  // Words are subset tokens that encode to themselves.
  const BpeVocab& full = tok.full();
  auto canonical = [&](TokenId id) {
    if (full.is_special(id)) return false;
    return full.encode(full.token(id), tok.subset_size()) == TokenIds{id};
  };
  std::mt19937_64 rng = derive_rng(config_.seed, 0, 0x776f726473ULL);
  for (size_t min_len : {3u, 2u}) {
    TokenIds candidates;
    for (size_t id = 256; id < tok.subset_size(); ++id) {
      auto tid = static_cast<TokenId>(id);
      if (word_like(full.token(tid), min_len) && canonical(tid)) candidates.push_back(tid);
    }
    if (candidates.size() >= config_.num_words) {
      std::shuffle(candidates.begin(), candidates.end(), rng);
      candidates.resize(config_.num_words);
      std::sort(candidates.begin(), candidates.end());
      inventory_ = candidates;
      break;
    }
  }
  if (inventory_.empty())
    throw std::invalid_argument("tokenizer subset has fewer than " +
                                std::to_string(config_.num_words) + " word tokens");

  // Each word is a pair of tones centered on distinct mel bands.
  std::vector<double> centers = mel_filter_centers();
  std::vector<std::pair<size_t, size_t>> all_pairs;
  for (size_t a = kLowestBin; a < kHighestBin; a += 2)
    for (size_t b = a + 6; b < kHighestBin; b += 2) all_pairs.emplace_back(a, b);
  std::shuffle(all_pairs.begin(), all_pairs.end(), rng);
  if (all_pairs.size() < config_.num_words) throw std::invalid_argument("too many words");

  means_ = Tensor(config_.num_words, kMelBins);
  for (size_t w = 0; w < config_.num_words; ++w) {
    auto [a, b] = all_pairs[w];
    tones_.emplace_back(centers[a], centers[b]);
    auto spec = tone_pair_spectrum(centers[a], centers[b]);
    std::copy(spec.begin(), spec.end(), means_.row(w).begin());
  }
  silence_ = tone_pair_spectrum(0.0, 0.0);

  double min_dist = min_pairwise_distance();
  if (!(min_dist > 4.0 * config_.noise_std))
    throw std::invalid_argument("word means are not separable at noise_std " +
                                std::to_string(config_.noise_std));
}

std::vector<float> SynthTask::tone_pair_spectrum(double f1, double f2) const {
  std::mt19937_64 rng = derive_rng(config_.seed, static_cast<uint64_t>(f1 * 1000 + f2), 0x6e6f697365ULL);
  std::normal_distribution<float> noise(0.0f, config_.background_std);
  AudioBuffer audio;
  audio.samples.resize(kSpectrumSamples);
  for (size_t n = 0; n < kSpectrumSamples; ++n) {
    double t = static_cast<double>(n) / kSampleRate;
    double v = 0.0;
    if (f1 > 0.0) v += std::sin(2.0 * std::numbers::pi * f1 * t);
    if (f2 > 0.0) v += std::sin(2.0 * std::numbers::pi * f2 * t);
    audio.samples[n] = static_cast<float>(config_.tone_amplitude * v) + noise(rng);
  }
  FeatureMatrix f = log_mel(audio);
  std::vector<double> acc(kMelBins, 0.0);
  for (size_t r = 0; r < f.frames(); ++r)
    for (size_t c = 0; c < kMelBins; ++c) acc[c] += f.values.at(r, c);
  std::vector<float> out(kMelBins);
  for (size_t c = 0; c < kMelBins; ++c)
    out[c] = static_cast<float>(acc[c] / static_cast<double>(f.frames()));
  return out;
}

double SynthTask::min_pairwise_distance() const {
  double best = std::numeric_limits<double>::infinity();
  size_t n = means_.rows();
  auto dist = [](std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    return std::sqrt(s);
  };
  for (size_t i = 0; i < n; ++i) {
    best = std::min(best, dist(means_.row(i), silence_));
    for (size_t j = i + 1; j < n; ++j) best = std::min(best, dist(means_.row(i), means_.row(j)));
  }
  return best;
}

std::vector<SynthSpan> SynthTask::sample_layout(std::mt19937_64& rng) const {
  std::uniform_int_distribution<size_t> count(config_.min_words, config_.max_words);
  std::uniform_int_distribution<size_t> dur(config_.min_frames, config_.max_frames);
  std::uniform_int_distribution<size_t> gap(0, config_.max_gap);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(config_.num_words) - 1);
  std::vector<SynthSpan> layout;
  size_t n = count(rng);
  if (config_.edge_silence > 0) layout.push_back({-1, config_.edge_silence});
  int prev = -1;
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) {
      size_t g = gap(rng);
      if (g > 0) layout.push_back({-1, g});
    }
    int w = pick(rng);
    while (w == prev) w = pick(rng);
    layout.push_back({w, dur(rng)});
    prev = w;
  }
  if (config_.edge_silence > 0) layout.push_back({-1, config_.edge_silence});
  return layout;
}

SynthExample SynthTask::render_features(const std::vector<SynthSpan>& layout,
                                        std::mt19937_64& rng) const {
  size_t total = 0;
  for (const auto& s : layout) total += s.frames;
  SynthExample ex;
  ex.features = FeatureMatrix(Tensor(total, kMelBins));
  ex.frame_labels.reserve(total);
  std::normal_distribution<double> noise(0.0, 1.0);
  size_t r = 0;
  int prev_word = -1;
  for (const auto& s : layout) {
    std::span<const float> mean = s.word < 0 ? silence_ : means_.row(static_cast<size_t>(s.word));
    if (s.word >= 0) {
      // Adjacent spans of one word collapse into a single token.
      if (s.word != prev_word || ex.frame_labels.empty() || ex.frame_labels.back() < 0)
        ex.words.push_back(inventory_[static_cast<size_t>(s.word)]);
    }
    for (size_t f = 0; f < s.frames; ++f, ++r) {
      auto row = ex.features.values.row(r);
      for (size_t c = 0; c < kMelBins; ++c)
        row[c] = config_.noise_std == 0.0
                     ? mean[c]
                     : static_cast<float>(mean[c] + config_.noise_std * noise(rng));
      ex.frame_labels.push_back(s.word < 0 ? -1 : static_cast<int>(ex.words.size()) - 1);
    }
    if (s.frames > 0) prev_word = s.word;
  }
  ex.text = tok_->full().decode(ex.words);
  return ex;
}

AudioBuffer SynthTask::render_audio(const std::vector<SynthSpan>& layout,
                                    std::mt19937_64& rng) const {
  AudioBuffer audio;
  std::normal_distribution<float> noise(0.0f, config_.background_std);
  size_t n = 0;
  for (const auto& s : layout) {
    size_t samples = s.frames * kHopSamples;
    for (size_t i = 0; i < samples; ++i, ++n) {
      double v = 0.0;
      if (s.word >= 0) {
        double t = static_cast<double>(n) / kSampleRate;
        auto [f1, f2] = tones_[static_cast<size_t>(s.word)];
        v = config_.tone_amplitude *
            (std::sin(2.0 * std::numbers::pi * f1 * t) + std::sin(2.0 * std::numbers::pi * f2 * t));
      }
      audio.samples.push_back(static_cast<float>(v) + noise(rng));
    }
  }
  return audio;
}

SynthExample SynthTask::generate(std::mt19937_64& rng) const {
  auto layout = sample_layout(rng);
  return render_features(layout, rng);
}

SynthExample SynthTask::generate(uint64_t index, uint64_t salt) const {
  std::mt19937_64 rng = derive_rng(config_.seed, index, salt);
  return generate(rng);
}

}  // namespace u2s
