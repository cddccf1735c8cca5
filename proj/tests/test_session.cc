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


#include <deque>
#include <random>

#include "doctest.h"
#include "fixtures.h"
#include "json.hpp"
#include "u2s/session.h"

using namespace u2s;

namespace {

// Replays a fixed posterior stream, one row per encoder frame, and blanks once
// the script runs out.
class ScriptedBackend : public StreamingBackend {
 public:
  ScriptedBackend(std::vector<std::vector<float>> rows, size_t width) : rows_(rows.begin(), rows.end()), width_(width) {}

  size_t stack_factor() const override { return 4; }
  double encoder_frame_s() const override { return 0.04; }
  Tensor advance(const FeatureMatrix& features, size_t) override {
    size_t n = features.frames() / 4;
    Tensor out(n, width_);
    for (size_t t = 0; t < n; ++t) {
      std::vector<float> row = rows_.empty() ? one_hot(0) : rows_.front();
      if (!rows_.empty()) rows_.pop_front();
      std::copy(row.begin(), row.end(), out.row(t).begin());
    }
    frames_ += n;
    return out;
  }
  std::vector<double> attention_scores(const std::vector<TokenIds>& hyps) override {
    return std::vector<double>(hyps.size(), 0.0);
  }
  void reset_segment() override { ++resets_; }

  std::vector<float> one_hot(size_t id) const {
    std::vector<float> r(width_, -30.0f);
    r[id] = 0.0f;
    return r;
  }

  size_t frames_ = 0;
  size_t resets_ = 0;

 private:
  std::deque<std::vector<float>> rows_;
  size_t width_;
};

std::vector<std::vector<float>> script(const std::vector<TokenId>& ids, size_t width) {
  std::vector<std::vector<float>> rows;
  for (TokenId id : ids) {
    std::vector<float> r(width, -30.0f);
    r[size_t(id)] = 0.0f;
    rows.push_back(r);
  }
  return rows;
}

Session scripted_session(const std::vector<TokenId>& ids, SessionConfig cfg, ScriptedBackend** raw = nullptr) {
  auto tok = fixtures::toy_tokenizer();
  auto backend = std::make_unique<ScriptedBackend>(script(ids, tok->ctc_dim()), tok->ctc_dim());
  if (raw) *raw = backend.get();
  return Session(std::move(backend), tok, cfg);
}

FeatureMatrix zeros(size_t frames) { return FeatureMatrix(Tensor(frames, kMelBins)); }

std::vector<TranscriptEvent> feed_in_chunks(Session& s, size_t total_frames, size_t per_feed) {
  std::vector<TranscriptEvent> all;
  for (size_t pos = 0; pos < total_frames; pos += per_feed) {
    auto ev = s.feed_features(zeros(std::min(per_feed, total_frames - pos)));
    all.insert(all.end(), ev.begin(), ev.end());
  }
  return all;
}

std::vector<TranscriptEvent> finals(const std::vector<TranscriptEvent>& ev) {
  std::vector<TranscriptEvent> out;
  for (const auto& e : ev)
    if (e.kind == EventKind::kFinal) out.push_back(e);
  return out;
}

// A label run that never contains a blank: alternate two ids.
std::vector<TokenId> unbroken(size_t frames, TokenId a, TokenId b) {
  std::vector<TokenId> ids;
  for (size_t t = 0; t < frames; ++t) ids.push_back(t % 2 ? b : a);
  return ids;
}

}  // namespace

TEST_CASE("session config") {
  SessionConfig cfg;
  CHECK(cfg.chunk_frames() == 25);
  cfg.chunk_size_s = 0.1;
  CHECK(cfg.chunk_frames() == 3);
  cfg.chunk_size_s = 0.01;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.chunk_size_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.alpha = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("silence only never finalizes") {
  Session s = scripted_session({}, {});
  auto ev = feed_in_chunks(s, 400, 100);
  CHECK(ev.size() == 4);
  for (const auto& e : ev) {
    CHECK(e.kind == EventKind::kPartial);
    CHECK(e.text.empty());
  }
  auto [fin, m] = s.close();
  CHECK(!fin);
  CHECK(m.finals == 0);
}

TEST_CASE("constructed posterior stream") {
  auto tok = fixtures::toy_tokenizer();
  TokenId a = tok->encode_ctc("a")[0], b = tok->encode_ctc("b")[0];
  SessionConfig cfg;
  cfg.chunk_size_s = 0.04;
  std::vector<TokenId> ids{a, b};
  ids.resize(2 + 20, kCtcBlank);
  ScriptedBackend* raw = nullptr;
  Session s = scripted_session(ids, cfg, &raw);
  auto ev = feed_in_chunks(s, 4 * 22, 4);
  REQUIRE(ev.size() >= 3);
  CHECK(ev[0].text == "a");
  CHECK(ev[1].text == "ab");
  auto f = finals(ev);
  REQUIRE(f.size() == 1);
  CHECK(f[0].text == "ab");
  // Thirteen blank frames reach 0.5 s; the final follows the 15th frame.
  CHECK(f[0].segment_end_s == doctest::Approx(15 * 0.04));
  for (size_t i = 0; i + 1 < ev.size() && ev[i].kind == EventKind::kPartial; ++i)
    CHECK(ev[i].audio_time_s <= ev[i + 1].audio_time_s);
  CHECK(raw->resets_ == 1);
  auto [fin, m] = s.close();
  CHECK(!fin);
  CHECK(m.finals == 1);
}

TEST_CASE("max delay forces a final") {
  auto tok = fixtures::toy_tokenizer();
  TokenId a = tok->encode_ctc("a")[0], b = tok->encode_ctc("b")[0];
  SessionConfig cfg;  // 1 s chunks, 12 s max delay
  Session s = scripted_session(unbroken(13 * 25, a, b), cfg);
  auto ev = feed_in_chunks(s, 13 * 100, 100);
  auto f = finals(ev);
  REQUIRE(f.size() == 1);
  CHECK(f[0].segment_start_s == 0.0);
  CHECK(f[0].segment_end_s <= 12.0 + 1.0 + 1e-9);
  CHECK(f[0].audio_time_s <= 13.0);
  CHECK(f[0].text.size() == 300);
  auto [fin, m] = s.close();
  REQUIRE(fin);
  CHECK(fin->segment_index == 1);
  CHECK(fin->text.size() == 25);
}

TEST_CASE("every final spans at most max delay plus one chunk") {
  auto tok = fixtures::toy_tokenizer();
  TokenId a = tok->encode_ctc("a")[0], b = tok->encode_ctc("b")[0];
  for (double chunk : {0.1, 0.24, 0.5, 1.0, 1.5})
    for (double delay : {1.0, 2.0, 3.0}) {
      SessionConfig cfg;
      cfg.chunk_size_s = chunk;
      cfg.endpoint.max_delay_s = delay;
      Session s = scripted_session(unbroken(250, a, b), cfg);
      auto ev = feed_in_chunks(s, 1000, 37);
      auto [fin, m] = s.close();
      auto f = finals(s.events());
      CHECK(f.size() >= 3);
      for (const auto& e : f) CHECK(e.segment_end_s - e.segment_start_s <= delay + chunk + 1e-9);
      // Segment spans tile the stream.
      double covered = 0;
      for (const auto& e : f) covered += e.segment_end_s - e.segment_start_s;
      CHECK(covered == doctest::Approx(10.0));
    }
}

TEST_CASE("split chunks give the same beam as one chunk") {
  std::mt19937_64 rng(71);
  auto tok = fixtures::toy_tokenizer();
  std::normal_distribution<float> n(0.0f, 3.0f);
  std::vector<std::vector<float>> rows;
  for (int t = 0; t < 24; ++t) {
    std::vector<float> r(tok->ctc_dim());
    for (float& v : r) v = n(rng);
    auto lp = log_softmax(r);
    for (size_t i = 0; i < r.size(); ++i) r[i] = float(lp[i]);
    rows.push_back(r);
  }
  auto run = [&](double chunk_s, size_t per_feed) {
    SessionConfig cfg;
    cfg.chunk_size_s = chunk_s;
    cfg.endpoint.max_delay_s = 100;
    cfg.endpoint.silence_s = 100;
    Session s(std::make_unique<ScriptedBackend>(rows, tok->ctc_dim()), tok, cfg);
    feed_in_chunks(s, 96, per_feed);
    return s.beam_state();
  };
  BeamState halves = run(0.48, 48), whole = run(0.96, 96);
  CHECK(halves.frames_processed == 24);
  REQUIRE(halves.prefixes.size() == whole.prefixes.size());
  for (const auto& [p, sc] : whole.prefixes) {
    CHECK(halves.prefixes.at(p).pb == sc.pb);
    CHECK(halves.prefixes.at(p).pnb == sc.pnb);
  }
}

TEST_CASE("session lifecycle and metrics") {
  Session s = scripted_session({}, {});
  auto [fin, m] = s.close();
  CHECK(!fin);
  CHECK(m.rtf == 0.0);
  CHECK(m.partials == 0);
  CHECK_THROWS_AS(s.close(), SessionError);
  CHECK_THROWS_AS(s.feed_features(zeros(4)), SessionError);
  std::vector<float> audio(160, 0.0f);
  CHECK_THROWS_AS(s.feed(audio), SessionError);

  auto tok = fixtures::toy_tokenizer();
  TokenId a = tok->encode_ctc("a")[0];
  std::vector<TokenId> ids;
  for (int k = 0; k < 5; ++k) {
    ids.push_back(a);
    ids.resize(ids.size() + 20, kCtcBlank);
  }
  SessionConfig cfg;
  cfg.chunk_size_s = 0.2;
  Session t = scripted_session(ids, cfg);
  feed_in_chunks(t, 4 * 110 + 2, 30);
  auto [f2, m2] = t.close();
  Metrics replay = Metrics::from_events(t.events(), m2.audio_s);
  CHECK(m2.finals == 5);
  CHECK(m2.audio_s == doctest::Approx((4 * 110 + 2) * 0.01));
  CHECK(m2.rtf == replay.rtf);
  CHECK(m2.processing_ms == replay.processing_ms);
  CHECK(m2.avg_finalize_latency_ms == replay.avg_finalize_latency_ms);
  CHECK(m2.partials + m2.finals == t.events().size());
  double ms = 0;
  for (const auto& e : t.events()) {
    CHECK(e.compute_ms >= 0.0);
    ms += e.compute_ms;
  }
  CHECK(ms == doctest::Approx(m2.processing_ms));
  CHECK(m2.rtf == doctest::Approx(ms / 1000.0 / m2.audio_s));
  for (size_t i = 1; i < t.events().size(); ++i) CHECK(t.events()[i].wall_time_s >= t.events()[i - 1].wall_time_s);

  auto j = nlohmann::json::parse(t.events().front().to_json());
  CHECK(j.contains("kind"));
  CHECK(j.contains("segment"));
  CHECK(j.contains("text"));
  CHECK(j.contains("audio_time_s"));
  CHECK(j.contains("wall_time_ms"));
  auto mj = nlohmann::json::parse(metrics_json(m2, cfg));
  CHECK(mj["finals"] == 5);
  CHECK(mj["config"]["chunk_s"] == 0.2);
}

TEST_CASE("model-backed session") {
  auto tok = fixtures::toy_tokenizer();
  auto model = std::make_shared<const Model>(fixtures::small_checkpoint(12));
  std::mt19937_64 rng(72);
  FeatureMatrix a = fixtures::random_features(rng, 600), b = fixtures::random_features(rng, 200);
  SessionConfig cfg;
  cfg.endpoint.max_delay_s = 2.0;
  cfg.endpoint.silence_s = 2.0;  // boundaries fall exactly every 2 s

  auto run = [&](const FeatureMatrix& head) {
    Session s = make_model_session(model, tok, cfg);
    s.feed_features(head);
    s.feed_features(a.slice(200, 600));
    s.close();
    std::vector<std::string> after;
    for (const auto& e : s.events())
      if (e.segment_start_s >= 2.0 - 1e-9) after.push_back(e.text);
    std::vector<std::string> all;
    for (const auto& e : s.events()) all.push_back(e.text);
    return std::make_pair(after, all);
  };
  auto one = run(a.slice(0, 200)), again = run(a.slice(0, 200)), other = run(b);
  CHECK(one.second == again.second);
  CHECK(!one.first.empty());
  CHECK(one.first == other.first);

  auto wide = std::make_shared<const Model>(fixtures::small_checkpoint(12));
  auto bad_tok = std::make_shared<const HybridTokenizer>(fixtures::toy_vocab(), 300);
  CHECK_THROWS_AS(make_model_session(wide, bad_tok, cfg), ModelError);
}

TEST_CASE("audio input goes through the featurizer") {
  auto tok = fixtures::toy_tokenizer();
  auto model = std::make_shared<const Model>(fixtures::small_checkpoint(13));
  std::mt19937_64 rng(73);
  std::normal_distribution<float> n(0.0f, 0.1f);
  std::vector<float> audio(24000);
  for (float& v : audio) v = n(rng);
  Session s = make_model_session(model, tok, {});
  Session t = make_model_session(model, tok, {});
  s.feed(audio);
  for (size_t pos = 0; pos < audio.size(); pos += 1234)
    t.feed(std::span<const float>(audio).subspan(pos, std::min<size_t>(1234, audio.size() - pos)));
  auto [fs, ms] = s.close();
  auto [ft, mt] = t.close();
  CHECK(ms.audio_s == doctest::Approx(1.5));
  CHECK(mt.audio_s == doctest::Approx(1.5));
  CHECK(fs.has_value() == ft.has_value());
  if (fs) CHECK(fs->text == ft->text);
  CHECK(s.beam_state().frames_processed == t.beam_state().frames_processed);
}
