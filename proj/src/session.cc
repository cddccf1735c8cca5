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

#include "u2s/session.h"

#include <cmath>

#include "json.hpp"

namespace u2s {

size_t SessionConfig::chunk_frames() const {
  return static_cast<size_t>(std::ceil(chunk_size_s / endpoint.encoder_frame_s - 1e-9));
}

void SessionConfig::validate() const {
  if (!(chunk_size_s > 0.0)) throw std::invalid_argument("chunk size must be positive");
  if (chunk_size_s + 1e-9 < endpoint.encoder_frame_s)
    throw std::invalid_argument("chunk size " + std::to_string(chunk_size_s) +
                                " s is shorter than one encoder frame");
  endpoint.validate();
  rescore.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
}

std::string TranscriptEvent::to_json() const {
  nlohmann::json j{{"kind", kind == EventKind::kFinal ? "final" : "partial"},
                   {"segment", segment_index},
                   {"text", text},
                   {"audio_time_s", audio_time_s},
                   {"wall_time_ms", wall_time_s * 1000.0},
                   {"compute_ms", compute_ms}};
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

Metrics Metrics::from_events(const std::vector<TranscriptEvent>& events, double audio_s) {
  Metrics m;
  m.audio_s = audio_s;
  double partial_ms = 0.0, final_ms = 0.0;
  for (const auto& e : events) {
    m.processing_ms += e.compute_ms;
    if (e.kind == EventKind::kFinal) {
      ++m.finals;
      final_ms += e.compute_ms;
    } else {
      ++m.partials;
      partial_ms += e.compute_ms;
    }
  }
  m.rtf = audio_s > 0.0 ? m.processing_ms / 1000.0 / audio_s : 0.0;
  m.avg_finalize_latency_ms = m.finals ? final_ms / static_cast<double>(m.finals) : 0.0;
  m.avg_partial_latency_ms = m.partials ? partial_ms / static_cast<double>(m.partials) : 0.0;
  return m;
}

ModelBackend::ModelBackend(std::shared_ptr<const Model> model,
                           std::shared_ptr<const HybridTokenizer> tok)
    : model_(std::move(model)), tok_(std::move(tok)) {
  if (model_->config().ctc_vocab != tok_->ctc_dim())
    throw ModelError("model CTC width " + std::to_string(model_->config().ctc_vocab) +
                     " does not match tokenizer subset " + std::to_string(tok_->ctc_dim()));
  if (model_->config().dec_vocab != tok_->full().size())
    throw ModelError("model decoder vocabulary does not match tokenizer");
  reset_segment();
}

Tensor ModelBackend::advance(const FeatureMatrix& features, size_t chunk_frames) {
  ChunkMaskSpec spec{chunk_frames, std::nullopt, 0};
  Tensor out = model_->encode_incremental(cache_, features, spec);
  enc_out_.append_rows(out);
  return model_->ctc_log_probs(out);
}

std::vector<double> ModelBackend::attention_scores(const std::vector<TokenIds>& hyps) {
  return model_->decoder_score_batch(hyps, enc_out_, tok_->default_prompt(), tok_->eot());
}

void ModelBackend::reset_segment() {
  cache_.clear();
  enc_out_ = Tensor(std::vector<size_t>{0, model_->config().d_model});
}

Session::Session(std::unique_ptr<StreamingBackend> backend,
                 std::shared_ptr<const HybridTokenizer> tok, SessionConfig config)
    : backend_(std::move(backend)), tok_(std::move(tok)), config_(config) {
  config_.endpoint.encoder_frame_s = backend_->encoder_frame_s();
  config_.validate();
  chunk_frames_ = config_.chunk_frames();
  beam_ = BeamState::initial();
  start_ = mark_ = Clock::now();
}

TranscriptEvent Session::make_event(EventKind kind, std::string text) {
  auto now = Clock::now();
  TranscriptEvent e;
  e.kind = kind;
  e.segment_index = segment_index_;
  e.text = std::move(text);
  e.audio_time_s = audio_s_;
  e.wall_time_s = std::chrono::duration<double>(now - start_).count();
  e.compute_ms = std::chrono::duration<double, std::milli>(now - mark_).count();
  double fs = config_.endpoint.encoder_frame_s;
  e.segment_start_s = static_cast<double>(segment_start_) * fs;
  e.segment_end_s = static_cast<double>(stream_frames_) * fs;
  mark_ = now;
  events_.push_back(e);
  return e;
}

std::string Session::best_text() const {
  auto best = top_k(beam_, 1);
  return tok_->decode_ctc(best.front().ids);
}

void Session::reset_segment() {
  backend_->reset_segment();
  beam_ = BeamState::initial();
  segment_start_ = stream_frames_;
}

void Session::finalize_segment(std::vector<TranscriptEvent>& out) {
  auto hyps = top_k(beam_, config_.rescore.top_k);
  AttentionScorer scorer = [this](const std::vector<TokenIds>& batch) {
    return backend_->attention_scores(batch);
  };
  RescoreResult r = rescore(hyps, *tok_, scorer, config_.rescore);
  out.push_back(make_event(EventKind::kFinal, tok_->decode_ctc(r.best.ids)));
  ++segment_index_;
  reset_segment();
}

void Session::process_chunk(const FeatureMatrix& chunk, std::vector<TranscriptEvent>& out) {
  Tensor posteriors = backend_->advance(chunk, chunk_frames_);
  const double fs = config_.endpoint.encoder_frame_s;
  Endpoint latched = Endpoint::kNone;
  for (size_t t = 0; t < posteriors.rows(); ++t) {
    beam_ = prefix_beam_step(beam_, posteriors.row(t), config_.rescore.beam);
    ++stream_frames_;
    if (latched != Endpoint::kNone) continue;
    bool has_content = !top_k(beam_, 1).front().ids.empty();
    double elapsed = static_cast<double>(stream_frames_ - segment_start_) * fs;
    double trailing = static_cast<double>(beam_.trailing_blank_frames) * fs;
    latched = detect_endpoint(trailing, elapsed, has_content, config_.endpoint);
  }
  if (latched == Endpoint::kNone) return;

  if (top_k(beam_, 1).front().ids.empty()) {
    // Max delay reached without content: drop the empty segment silently.
    reset_segment();
    return;
  }
  out.push_back(make_event(EventKind::kPartial, best_text()));
  finalize_segment(out);
}

void Session::drain(std::vector<TranscriptEvent>& out, bool flush) {
  size_t per_chunk = chunk_frames_ * backend_->stack_factor();
  while (pending_.frames() >= per_chunk) {
    FeatureMatrix chunk = pending_.slice(0, per_chunk);
    pending_ = pending_.slice(per_chunk, pending_.frames());
    process_chunk(chunk, out);
  }
  if (flush) {
    size_t usable = pending_.frames() / backend_->stack_factor() * backend_->stack_factor();
    if (usable > 0) process_chunk(pending_.slice(0, usable), out);
    pending_ = FeatureMatrix();
  }
}

std::vector<TranscriptEvent> Session::ingest(const FeatureMatrix& features, double audio_delta_s) {
  audio_s_ += audio_delta_s;
  if (features.frames() > 0) pending_.append(features);
  std::vector<TranscriptEvent> out;
  drain(out, false);
  if (out.empty() || out.back().kind != EventKind::kFinal)
    out.push_back(make_event(EventKind::kPartial, best_text()));
  return out;
}

std::vector<TranscriptEvent> Session::feed_features(const FeatureMatrix& features) {
  if (closed_) throw SessionError("feed after close");
  mark_ = Clock::now();
  return ingest(features, static_cast<double>(features.frames()) * features.hop_s);
}

std::vector<TranscriptEvent> Session::feed(std::span<const float> audio) {
  if (closed_) throw SessionError("feed after close");
  mark_ = Clock::now();
  FeatureMatrix f = featurizer_.accept(audio);
  return ingest(f, static_cast<double>(audio.size()) / kSampleRate);
}

std::pair<std::optional<TranscriptEvent>, Metrics> Session::close() {
  if (closed_) throw SessionError("session already closed");
  mark_ = Clock::now();
  std::vector<TranscriptEvent> out;
  size_t before = stream_frames_;
  drain(out, true);
  bool processed = stream_frames_ != before;
  if (processed && (out.empty() || out.back().kind != EventKind::kFinal))
    out.push_back(make_event(EventKind::kPartial, best_text()));
  if (!top_k(beam_, 1).front().ids.empty()) finalize_segment(out);

  std::optional<TranscriptEvent> final_event;
  for (const auto& e : out)
    if (e.kind == EventKind::kFinal) final_event = e;
  closed_ = true;
  return {final_event, Metrics::from_events(events_, audio_s_)};
}

Session make_model_session(std::shared_ptr<const Model> model,
                           std::shared_ptr<const HybridTokenizer> tok, SessionConfig config) {
  auto backend = std::make_unique<ModelBackend>(std::move(model), tok);
  return Session(std::move(backend), std::move(tok), config);
}

std::string metrics_json(const Metrics& m, const SessionConfig& cfg) {
  nlohmann::json j{
      {"rtf", m.rtf},
      {"avg_finalize_latency_ms", m.avg_finalize_latency_ms},
      {"avg_partial_latency_ms", m.avg_partial_latency_ms},
      {"audio_s", m.audio_s},
      {"processing_ms", m.processing_ms},
      {"partials", m.partials},
      {"finals", m.finals},
      {"config",
       {{"chunk_s", cfg.chunk_size_s},
        {"beam", cfg.rescore.beam},
        {"top_k", cfg.rescore.top_k},
        {"ctc_weight", cfg.rescore.ctc_weight},
        {"max_delay_s", cfg.endpoint.max_delay_s},
        {"silence_s", cfg.endpoint.silence_s},
        {"quantized", cfg.quantized},
        {"alpha", cfg.alpha}}}};
  return j.dump();
}

}  // namespace u2s
