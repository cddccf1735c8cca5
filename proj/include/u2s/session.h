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

#ifndef U2S_SESSION_H_
#define U2S_SESSION_H_

#include <chrono>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "u2s/ctc.h"
#include "u2s/frontend.h"
#include "u2s/model.h"
#include "u2s/tokenizer.h"
#include "u2s/two_pass.h"

namespace u2s {

class SessionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct SessionConfig {
  double chunk_size_s = 1.0;
  EndpointConfig endpoint;  // 0.5 s silence, 12 s max delay
  RescoreConfig rescore;    // beam 10, top-k 6
  bool quantized = true;
  double alpha = 0.3;  // training-time CTC weight, echoed for reference

  // Encoder frames per streaming chunk.
  size_t chunk_frames() const;
  void validate() const;
};

enum class EventKind { kPartial, kFinal };

struct TranscriptEvent {
  EventKind kind = EventKind::kPartial;
  size_t segment_index = 0;
  std::string text;
  double audio_time_s = 0.0;  // stream position when emitted
  double wall_time_s = 0.0;   // since session start, monotonic clock
  double compute_ms = 0.0;    // processing attributed to this event
  double segment_start_s = 0.0;
  double segment_end_s = 0.0;  // encoder-frame extent of the segment so far

  // {kind, segment, text, audio_time_s, wall_time_ms, compute_ms}
  std::string to_json() const;
};

struct Metrics {
  double audio_s = 0.0;
  double processing_ms = 0.0;
  double rtf = 0.0;
  double avg_finalize_latency_ms = 0.0;
  double avg_partial_latency_ms = 0.0;
  size_t partials = 0;
  size_t finals = 0;

  // Aggregates the compute_ms of an event log.
  static Metrics from_events(const std::vector<TranscriptEvent>& events, double audio_s);
};

// Acoustic side of a streaming session: encoder + CTC head for the current
// segment, and the attention decoder for rescoring it.
class StreamingBackend {
 public:
  virtual ~StreamingBackend() = default;
  virtual size_t stack_factor() const = 0;
  virtual double encoder_frame_s() const = 0;
  // Encodes whole stacked frames and returns CTC log-posteriors, one row per
  // encoder frame.
  virtual Tensor advance(const FeatureMatrix& features, size_t chunk_frames) = 0;
  virtual std::vector<double> attention_scores(const std::vector<TokenIds>& hyps) = 0;
  virtual void reset_segment() = 0;
};

class ModelBackend : public StreamingBackend {
 public:
  ModelBackend(std::shared_ptr<const Model> model, std::shared_ptr<const HybridTokenizer> tok);

  size_t stack_factor() const override { return model_->config().stack_factor; }
  double encoder_frame_s() const override { return model_->config().encoder_frame_s(); }
  Tensor advance(const FeatureMatrix& features, size_t chunk_frames) override;
  std::vector<double> attention_scores(const std::vector<TokenIds>& hyps) override;
  void reset_segment() override;

  const Tensor& segment_encoder_output() const { return enc_out_; }
  const KVCache& cache() const { return cache_; }

 private:
  std::shared_ptr<const Model> model_;
  std::shared_ptr<const HybridTokenizer> tok_;
  KVCache cache_;
  Tensor enc_out_;
};

class Session {
 public:
  Session(std::unique_ptr<StreamingBackend> backend, std::shared_ptr<const HybridTokenizer> tok,
          SessionConfig config);

  // 16 kHz mono samples.
  std::vector<TranscriptEvent> feed(std::span<const float> audio);
  // Log-mel frames, bypassing the audio frontend.
  std::vector<TranscriptEvent> feed_features(const FeatureMatrix& features);
  // Flushes buffered frames and finalizes any pending content.
  std::pair<std::optional<TranscriptEvent>, Metrics> close();

  const std::vector<TranscriptEvent>& events() const { return events_; }
  const BeamState& beam_state() const { return beam_; }
  const SessionConfig& config() const { return config_; }
  bool closed() const { return closed_; }

 private:
  using Clock = std::chrono::steady_clock;

  void process_chunk(const FeatureMatrix& chunk, std::vector<TranscriptEvent>& out);
  void finalize_segment(std::vector<TranscriptEvent>& out);
  void reset_segment();
  TranscriptEvent make_event(EventKind kind, std::string text);
  std::string best_text() const;
  void drain(std::vector<TranscriptEvent>& out, bool flush);
  std::vector<TranscriptEvent> ingest(const FeatureMatrix& features, double audio_delta_s);

  std::unique_ptr<StreamingBackend> backend_;
  std::shared_ptr<const HybridTokenizer> tok_;
  SessionConfig config_;
  size_t chunk_frames_;
  StreamingFeaturizer featurizer_;
  FeatureMatrix pending_;
  BeamState beam_;

  size_t segment_index_ = 0;
  size_t stream_frames_ = 0;   // encoder frames decoded in the stream
  size_t segment_start_ = 0;   // encoder frame where the segment began
  double audio_s_ = 0.0;
  bool closed_ = false;

  Clock::time_point start_;
  Clock::time_point mark_;
  std::vector<TranscriptEvent> events_;
};

// Convenience constructor for a model-backed session.
Session make_model_session(std::shared_ptr<const Model> model,
                           std::shared_ptr<const HybridTokenizer> tok, SessionConfig config);

std::string metrics_json(const Metrics& m, const SessionConfig& cfg);

}  // namespace u2s

#endif  // U2S_SESSION_H_
