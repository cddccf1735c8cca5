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


#include <random>

#include "doctest.h"
#include "fixtures.h"
#include "json.hpp"
#include "u2s/bench.h"
#include "u2s/synth_task.h"

using namespace u2s;

namespace {

std::vector<BenchItem> feature_items(size_t n) {
  SynthTask task(*fixtures::toy_tokenizer());
  std::vector<BenchItem> items;
  for (size_t i = 0; i < n; ++i) {
    SynthExample ex = task.generate(i, 9);
    BenchItem item;
    item.name = "utt" + std::to_string(i);
    item.features = ex.features;
    item.reference = ex.text;
    items.push_back(item);
  }
  return items;
}

}  // namespace

TEST_CASE("bench runs are independent of worker count") {
  auto tok = fixtures::toy_tokenizer();
  auto model = std::make_shared<const Model>(fixtures::small_checkpoint(31));
  auto items = feature_items(5);
  SessionConfig cfg;
  cfg.chunk_size_s = 0.24;
  BenchRow one = run_bench(items, model, tok, cfg, 1);
  BenchRow many = run_bench(items, model, tok, cfg, 3);
  REQUIRE(one.files.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(one.files[i].name == items[i].name);
    CHECK(many.files[i].name == items[i].name);
    CHECK(one.files[i].hypothesis == many.files[i].hypothesis);
    CHECK(one.files[i].reference == items[i].reference);
  }
  CHECK(one.errors.errors() == many.errors.errors());
  size_t ref_words = 0;
  double audio = 0;
  for (const auto& f : one.files) {
    ref_words += split_words(f.reference).size();
    audio += f.metrics.audio_s;
  }
  CHECK(one.errors.ref_length == ref_words);
  CHECK(one.metrics.audio_s == doctest::Approx(audio));
  CHECK(one.metrics.rtf == doctest::Approx(one.metrics.processing_ms / 1000.0 / audio));

  auto j = nlohmann::json::parse(one.to_json(true));
  CHECK(j["files"] == 5);
  CHECK(j["per_file"].size() == 5);
  CHECK(j["config"]["chunk_s"] == 0.24);
  CHECK(!nlohmann::json::parse(one.to_json(false)).contains("per_file"));
  CHECK_THROWS_AS(run_bench({}, model, tok, cfg), AudioError);
}

TEST_CASE("sweep grids") {
  CHECK(kChunkSweep == std::vector<double>{0.1, 0.24, 0.5, 1.0, 1.5});
  CHECK(kMaxDelaySweep == std::vector<double>{8.0, 12.0, 16.0, 20.0});
  auto tok = fixtures::toy_tokenizer();
  auto model = std::make_shared<const Model>(fixtures::small_checkpoint(32));
  auto items = feature_items(1);
  auto chunk = run_sweep(items, model, tok, {}, Sweep::kChunk);
  REQUIRE(chunk.size() == 5);
  for (size_t i = 0; i < 5; ++i) {
    CHECK(chunk[i].setting == "chunk_s");
    CHECK(chunk[i].value == kChunkSweep[i]);
    CHECK(chunk[i].config.chunk_size_s == kChunkSweep[i]);
  }
  auto delay = run_sweep(items, model, tok, {}, Sweep::kMaxDelay);
  REQUIRE(delay.size() == 4);
  for (size_t i = 0; i < 4; ++i) CHECK(delay[i].config.endpoint.max_delay_s == kMaxDelaySweep[i]);
  auto none = run_sweep(items, model, tok, {}, Sweep::kNone);
  CHECK(none.size() == 1);
  CHECK(none[0].setting == "default");
  std::string table = bench_table(chunk);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
  CHECK(table.find("chunk_s") != std::string::npos);
}

TEST_CASE("transcription helpers") {
  auto tok = fixtures::toy_tokenizer();
  auto model = std::make_shared<const Model>(fixtures::small_checkpoint(33));
  auto items = feature_items(1);
  Session a = make_model_session(model, tok, {});
  size_t sunk = 0;
  Transcript t = transcribe_features(a, *items[0].features, 37, [&](const TranscriptEvent&) { ++sunk; });
  CHECK(sunk == t.events.size());
  CHECK(t.events.size() == a.events().size());
  std::string finals;
  for (const auto& e : t.events)
    if (e.kind == EventKind::kFinal) finals += e.text;
  CHECK(t.text == finals);
  CHECK(a.closed());
  Session b = make_model_session(model, tok, {});
  CHECK_THROWS_AS(transcribe_features(b, *items[0].features, 0), std::invalid_argument);
}

TEST_CASE("bench directory loading") {
  auto dir = fixtures::temp_dir("bench");
  CHECK_THROWS_AS(load_bench_dir(dir / "absent"), AudioError);
  CHECK_THROWS_AS(load_bench_dir(dir), AudioError);
  AudioBuffer audio;
  audio.samples.assign(8000, 0.0f);
  write_wav(dir / "b.wav", audio);
  write_wav(dir / "a.wav", audio);
  std::ofstream(dir / "a.txt") << " the cat";
  CHECK_THROWS_AS(load_bench_dir(dir), AudioError);
  std::ofstream(dir / "b.txt") << " the dog";
  auto items = load_bench_dir(dir);
  REQUIRE(items.size() == 2);
  CHECK(items[0].name == "a.wav");
  CHECK(items[0].reference == " the cat");
  CHECK(items[1].audio->samples.size() == 8000);
}
