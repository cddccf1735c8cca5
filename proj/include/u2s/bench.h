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

#ifndef U2S_BENCH_H_
#define U2S_BENCH_H_

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "u2s/frontend.h"
#include "u2s/model.h"
#include "u2s/session.h"
#include "u2s/tokenizer.h"
#include "u2s/wer.h"

namespace u2s {

struct Transcript {
  std::vector<TranscriptEvent> events;
  Metrics metrics;
  std::string text;  // concatenated final texts
};

using EventSink = std::function<void(const TranscriptEvent&)>;

// Streams audio through `session` in pieces of `feed_samples` and closes it.
Transcript transcribe_audio(Session& session, std::span<const float> samples, size_t feed_samples,
                            const EventSink& sink = {});
Transcript transcribe_features(Session& session, const FeatureMatrix& features, size_t feed_frames,
                               const EventSink& sink = {});

struct BenchItem {
  std::string name;
  std::optional<AudioBuffer> audio;
  std::optional<FeatureMatrix> features;
  std::string reference;
};

// Every *.wav in `dir` paired with the *.txt of the same stem.
std::vector<BenchItem> load_bench_dir(const std::filesystem::path& dir);

struct FileResult {
  std::string name;
  std::string reference;
  std::string hypothesis;
  ErrorStats errors;
  Metrics metrics;
};

struct BenchRow {
  std::string setting = "default";  // "chunk_s", "max_delay_s" or "default"
  double value = 0.0;
  SessionConfig config;
  std::vector<FileResult> files;
  ErrorStats errors;
  Metrics metrics;  // pooled over files

  double wer() const { return errors.rate(); }
  std::string to_json(bool per_file) const;
};

inline const std::vector<double> kChunkSweep = {0.1, 0.24, 0.5, 1.0, 1.5};
inline const std::vector<double> kMaxDelaySweep = {8.0, 12.0, 16.0, 20.0};

enum class Sweep { kNone, kChunk, kMaxDelay };

BenchRow run_bench(const std::vector<BenchItem>& items, std::shared_ptr<const Model> model,
                   std::shared_ptr<const HybridTokenizer> tok, const SessionConfig& config,
                   size_t jobs = 1);

std::vector<BenchRow> run_sweep(const std::vector<BenchItem>& items,
                                std::shared_ptr<const Model> model,
                                std::shared_ptr<const HybridTokenizer> tok,
                                const SessionConfig& base, Sweep sweep, size_t jobs = 1);

std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace u2s

#endif  // U2S_BENCH_H_
