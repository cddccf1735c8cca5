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

#include "u2s/bench.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace u2s {
namespace {

void collect(std::vector<TranscriptEvent> batch, Transcript& t, const EventSink& sink) {
  for (auto& e : batch) {
    if (sink) sink(e);
    if (e.kind == EventKind::kFinal) t.text += e.text;
    t.events.push_back(std::move(e));
  }
}

void finish(Session& session, Transcript& t, const EventSink& sink) {
  auto [final_event, metrics] = session.close();
  // close() returns at most the last final; earlier ones from the flush are in the log.
  std::vector<TranscriptEvent> tail(session.events().begin() + static_cast<std::ptrdiff_t>(t.events.size()),
                                    session.events().end());
  collect(std::move(tail), t, sink);
  t.metrics = metrics;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw AudioError("cannot read reference " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FileResult run_item(const BenchItem& item, std::shared_ptr<const Model> model,
                    std::shared_ptr<const HybridTokenizer> tok, const SessionConfig& config) {
  Session session = make_model_session(std::move(model), tok, config);
  Transcript t;
  if (item.features) {
    size_t feed = std::max<size_t>(1, static_cast<size_t>(std::lround(config.chunk_size_s / kFrameHopSeconds)));
    t = transcribe_features(session, *item.features, feed);
  } else if (item.audio) {
    size_t feed = std::max<size_t>(1, static_cast<size_t>(std::lround(config.chunk_size_s * kSampleRate)));
    t = transcribe_audio(session, item.audio->samples, feed);
  } else {
    throw AudioError("bench item " + item.name + " has no input");
  }
  FileResult r;
  r.name = item.name;
  r.reference = item.reference;
  r.hypothesis = t.text;
  r.errors = word_errors(item.reference, t.text);
  r.metrics = t.metrics;
  return r;
}

}  // namespace

Transcript transcribe_audio(Session& session, std::span<const float> samples, size_t feed_samples,
                            const EventSink& sink) {
  if (feed_samples == 0) throw std::invalid_argument("feed size must be positive");
  Transcript t;
  for (size_t begin = 0; begin < samples.size(); begin += feed_samples) {
    size_t n = std::min(feed_samples, samples.size() - begin);
    collect(session.feed(samples.subspan(begin, n)), t, sink);
  }
  finish(session, t, sink);
  return t;
}

Transcript transcribe_features(Session& session, const FeatureMatrix& features, size_t feed_frames,
                               const EventSink& sink) {
  if (feed_frames == 0) throw std::invalid_argument("feed size must be positive");
  Transcript t;
  for (size_t begin = 0; begin < features.frames(); begin += feed_frames) {
    size_t end = std::min(features.frames(), begin + feed_frames);
    collect(session.feed_features(features.slice(begin, end)), t, sink);
  }
  finish(session, t, sink);
  return t;
}

std::vector<BenchItem> load_bench_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw AudioError("not a directory: " + dir.string());
  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  if (wavs.empty()) throw AudioError("no .wav files in " + dir.string());
  std::sort(wavs.begin(), wavs.end());
  std::vector<BenchItem> items;
  for (const auto& wav : wavs) {
    fs::path ref = wav;
    ref.replace_extension(".txt");
    if (!fs::exists(ref)) throw AudioError("missing reference " + ref.string());
    BenchItem item;
    item.name = wav.filename().string();
    item.audio = read_wav(wav);
    item.reference = read_text(ref);
    items.push_back(std::move(item));
  }
  return items;
}

std::string BenchRow::to_json(bool per_file) const {
  nlohmann::json j{{"setting", setting},
                   {"value", value},
                   {"wer", wer()},
                   {"rtf", metrics.rtf},
                   {"avg_finalize_latency_ms", metrics.avg_finalize_latency_ms},
                   {"avg_partial_latency_ms", metrics.avg_partial_latency_ms},
                   {"audio_s", metrics.audio_s},
                   {"files", files.size()},
                   {"config", nlohmann::json::parse(metrics_json(metrics, config))["config"]}};
  if (per_file) {
    auto arr = nlohmann::json::array();
    for (const auto& f : files)
      arr.push_back({{"name", f.name},
                     {"wer", f.errors.rate()},
                     {"rtf", f.metrics.rtf},
                     {"avg_finalize_latency_ms", f.metrics.avg_finalize_latency_ms},
                     {"avg_partial_latency_ms", f.metrics.avg_partial_latency_ms},
                     {"reference", f.reference},
                     {"hypothesis", f.hypothesis}});
    j["per_file"] = arr;
  }
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

BenchRow run_bench(const std::vector<BenchItem>& items, std::shared_ptr<const Model> model,
                   std::shared_ptr<const HybridTokenizer> tok, const SessionConfig& config,
                   size_t jobs) {
  if (items.empty()) throw AudioError("no bench items");
  config.validate();
  BenchRow row;
  row.config = config;
  row.files.resize(items.size());
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(items.size());
  auto worker = [&] {
    for (size_t i = next++; i < items.size(); i = next++) {
      try {
        row.files[i] = run_item(items[i], model, tok, config);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  size_t n = std::clamp<size_t>(jobs, 1, items.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  double audio = 0.0, processing = 0.0, final_ms = 0.0, partial_ms = 0.0;
  for (const auto& f : row.files) {
    row.errors += f.errors;
    audio += f.metrics.audio_s;
    processing += f.metrics.processing_ms;
    final_ms += f.metrics.avg_finalize_latency_ms * static_cast<double>(f.metrics.finals);
    partial_ms += f.metrics.avg_partial_latency_ms * static_cast<double>(f.metrics.partials);
    row.metrics.finals += f.metrics.finals;
    row.metrics.partials += f.metrics.partials;
  }
  row.metrics.audio_s = audio;
  row.metrics.processing_ms = processing;
  row.metrics.rtf = audio > 0.0 ? processing / 1000.0 / audio : 0.0;
  if (row.metrics.finals) row.metrics.avg_finalize_latency_ms = final_ms / row.metrics.finals;
  if (row.metrics.partials) row.metrics.avg_partial_latency_ms = partial_ms / row.metrics.partials;
  return row;
}

std::vector<BenchRow> run_sweep(const std::vector<BenchItem>& items,
                                std::shared_ptr<const Model> model,
                                std::shared_ptr<const HybridTokenizer> tok,
                                const SessionConfig& base, Sweep sweep, size_t jobs) {
  std::vector<BenchRow> rows;
  if (sweep == Sweep::kNone) {
    rows.push_back(run_bench(items, model, tok, base, jobs));
    return rows;
  }
  const auto& grid = sweep == Sweep::kChunk ? kChunkSweep : kMaxDelaySweep;
  for (double v : grid) {
    SessionConfig cfg = base;
    if (sweep == Sweep::kChunk)
      cfg.chunk_size_s = v;
    else
      cfg.endpoint.max_delay_s = v;
    BenchRow row = run_bench(items, model, tok, cfg, jobs);
    row.setting = sweep == Sweep::kChunk ? "chunk_s" : "max_delay_s";
    row.value = v;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %14s %14s\n", "setting", "value", "WER%",
                "RTF", "finalize_ms", "partial_ms");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s %8.2f %8.2f %8.3f %14.2f %14.2f\n", r.setting.c_str(),
                  r.value, 100.0 * r.wer(), r.metrics.rtf, r.metrics.avg_finalize_latency_ms,
                  r.metrics.avg_partial_latency_ms);
    out << line;
  }
  return out.str();
}

}  // namespace u2s
