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

// u2s: streaming transcription, benchmarking and toy-model tooling.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "u2s/bench.h"
#include "u2s/frontend.h"
#include "u2s/model.h"
#include "u2s/session.h"
#include "u2s/synth_task.h"
#include "u2s/tokenizer.h"
#include "u2s/trainer.h"

namespace fs = std::filesystem;
using namespace u2s;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Errors in user-supplied values that CLI11 cannot check by itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SessionFlags {
  double chunk_s = 1.0;
  size_t beam = 10;
  size_t top_k = 6;
  double max_delay = 12.0;
  double silence = 0.5;
  double ctc_weight = 0.5;
  bool no_quantize = false;

  void add(CLI::App* app) {
    app->add_option("--chunk-s", chunk_s, "Streaming chunk size in seconds")->capture_default_str();
    app->add_option("--beam", beam, "CTC prefix beam size")->capture_default_str();
    app->add_option("--top-k", top_k, "Hypotheses passed to attention rescoring")
        ->capture_default_str();
    app->add_option("--max-delay", max_delay, "Maximum segment length before a forced final (s)")
        ->capture_default_str();
    app->add_option("--silence", silence, "Trailing silence that ends a segment (s)")
        ->capture_default_str();
    app->add_option("--ctc-weight", ctc_weight, "Weight of the CTC score in rescoring")
        ->capture_default_str();
    app->add_flag("--no-quantize", no_quantize, "Run float32 weights instead of int8 (default: int8)");
  }

  SessionConfig config() const {
    SessionConfig c;
    c.chunk_size_s = chunk_s;
    c.rescore.beam = beam;
    c.rescore.top_k = top_k;
    c.rescore.ctc_weight = ctc_weight;
    c.endpoint.max_delay_s = max_delay;
    c.endpoint.silence_s = silence;
    c.quantized = !no_quantize;
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct ModelFiles {
  std::string checkpoint;
  std::string tokenizer;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    app->add_option("--tokenizer", tokenizer, "Tokenizer JSON")->required();
  }
};

struct Loaded {
  Checkpoint ckpt;
  std::shared_ptr<const HybridTokenizer> tok;
};

Loaded load_pair(const ModelFiles& files) {
  Loaded l;
  BpeVocab vocab = BpeVocab::load(files.tokenizer);
  l.ckpt = Checkpoint::load(files.checkpoint);
  std::string h = vocab_hash(vocab);
  if (l.ckpt.tokenizer_hash != h)
    throw ModelError("tokenizer " + files.tokenizer + " (hash " + h +
                     ") does not match checkpoint (hash " + l.ckpt.tokenizer_hash + ")");
  l.tok = std::make_shared<const HybridTokenizer>(std::move(vocab), l.ckpt.config.subset_size());
  return l;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_transcribe(const std::string& audio_path, const ModelFiles& files, const SessionFlags& flags,
                   bool feature_input) {
  SessionConfig cfg = flags.config();
  Loaded l = load_pair(files);
  auto model = std::make_shared<const Model>(l.ckpt, cfg.quantized);
  Session session = make_model_session(model, l.tok, cfg);
  auto sink = [](const TranscriptEvent& e) { std::cout << e.to_json() << '\n' << std::flush; };
  Transcript t;
  if (feature_input) {
    FeatureMatrix f = load_features(audio_path);
    size_t feed = std::max<size_t>(1, static_cast<size_t>(std::lround(cfg.chunk_size_s / kFrameHopSeconds)));
    t = transcribe_features(session, f, feed, sink);
  } else {
    AudioBuffer audio = read_wav(audio_path);
    size_t feed = std::max<size_t>(1, static_cast<size_t>(std::lround(cfg.chunk_size_s * kSampleRate)));
    t = transcribe_audio(session, audio.samples, feed, sink);
  }
  std::cout << metrics_json(t.metrics, cfg) << '\n';
  std::cerr << "transcript:" << t.text << '\n';
  return 0;
}

int cmd_bench(const std::string& dir, const ModelFiles& files, const SessionFlags& flags,
              const std::string& sweep_name, size_t jobs, bool per_file) {
  Sweep sweep = Sweep::kNone;
  if (sweep_name == "chunk")
    sweep = Sweep::kChunk;
  else if (sweep_name == "max-delay")
    sweep = Sweep::kMaxDelay;
  else if (sweep_name != "none")
    throw UsageError("--sweep must be none, chunk or max-delay");
  SessionConfig cfg = flags.config();
  Loaded l = load_pair(files);
  auto items = load_bench_dir(dir);
  auto model = std::make_shared<const Model>(l.ckpt, cfg.quantized);
  std::cerr << "bench: " << items.size() << " files, " << jobs << " job(s)\n";
  auto rows = run_sweep(items, model, l.tok, cfg, sweep, jobs);
  for (const auto& r : rows) std::cout << r.to_json(per_file) << '\n';
  std::cerr << bench_table(rows);
  return 0;
}

int cmd_vocab_gen(const std::string& corpus, size_t size, const std::string& out) {
  BpeVocab vocab = train_bpe(read_file(corpus), size);
  vocab.save(out);
  std::cerr << "wrote " << out << ": " << vocab.size() << " tokens, " << vocab.merges().size()
            << " merges, hash " << vocab_hash(vocab) << '\n';
  return 0;
}

size_t resolve_subset(const BpeVocab& vocab, size_t requested) {
  size_t limit = vocab.size();
  for (const auto& [name, id] : vocab.specials()) limit = std::min(limit, static_cast<size_t>(id));
  if (requested > limit) {
    std::cerr << "subset " << requested << " clipped to " << limit << " (first special id)\n";
    return limit;
  }
  return requested;
}

int cmd_init_model(const std::string& tokenizer, size_t subset, uint64_t seed, ModelConfig cfg,
                   const std::string& out) {
  BpeVocab vocab = BpeVocab::load(tokenizer);
  std::string h = vocab_hash(vocab);
  HybridTokenizer tok(vocab, resolve_subset(vocab, subset));
  ModelConfig base = toy_config(tok);
  cfg.ctc_vocab = base.ctc_vocab;
  cfg.dec_vocab = base.dec_vocab;
  cfg.validate();
  Checkpoint ckpt = Checkpoint::init_toy(seed, cfg, h);
  ckpt.save(out);
  std::cout << ckpt.content_hash() << '\n';
  std::cerr << "wrote " << out << " (ctc width " << cfg.ctc_vocab << ", decoder vocab "
            << cfg.dec_vocab << ")\n";
  return 0;
}

int cmd_features(const std::string& in, const std::string& out) {
  AudioBuffer audio = read_wav(in);
  FeatureMatrix f = log_mel(audio);
  save_features(out, f);
  std::cout << f.frames() << '\n';
  std::cerr << "wrote " << out << ": " << f.frames() << " frames x " << f.bins() << " bins\n";
  return 0;
}

struct TrainFlags {
  std::string stage = "ctc_only";
  size_t epochs = 2;
  double lr = 0.05;
  double alpha = 0.3;
  size_t batch = 16;
  size_t train_examples = 2000;
  size_t val_examples = 200;
  uint64_t seed = 7;
  uint64_t task_seed = 7;
  double noise_std = 1.0;
  std::string out;
  std::string log;
};

int cmd_train_toy(const ModelFiles& files, const TrainFlags& f) {
  Stage stage;
  try {
    stage = parse_stage(f.stage);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Loaded l = load_pair(files);
  SynthTaskConfig task_cfg;
  task_cfg.seed = f.task_seed;
  task_cfg.noise_std = f.noise_std;
  SynthTask task(*l.tok, task_cfg);
  TrainPlan plan = TrainPlan::for_stage(stage);
  plan.epochs = f.epochs;
  plan.learning_rate = f.lr;
  plan.alpha = f.alpha;
  plan.batch_size = f.batch;
  plan.train_examples = f.train_examples;
  plan.val_examples = f.val_examples;
  plan.seed = f.seed;
  auto progress = [](const EpochLog& e) {
    std::fprintf(stderr, "epoch %zu %s train %.5f val %.5f ter %.4f\n", e.epoch,
                 std::string(stage_name(e.stage)).c_str(), e.train_loss, e.val_loss,
                 e.val_token_error_rate);
  };
  TrainResult r = train(l.ckpt, task, l.tok, plan, progress);
  r.checkpoint.save(f.out);
  std::string csv = training_csv(r.log);
  if (!f.log.empty()) {
    std::ofstream out(f.log);
    if (!out) throw AudioError("cannot write " + f.log);
    out << csv;
  }
  std::cout << csv;
  return 0;
}

int cmd_synth_data(const std::string& tokenizer, size_t subset, uint64_t seed, size_t count,
                   const std::string& out_dir) {
  BpeVocab vocab = BpeVocab::load(tokenizer);
  HybridTokenizer tok(vocab, resolve_subset(vocab, subset));
  SynthTaskConfig cfg;
  cfg.seed = seed;
  SynthTask task(tok, cfg);
  fs::create_directories(out_dir);
  for (size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng = derive_rng(seed, i, 3);
    auto layout = task.sample_layout(rng);
    SynthExample ex = task.render_features(layout, rng);
    char stem[32];
    std::snprintf(stem, sizeof stem, "utt%04zu", i);
    write_wav(fs::path(out_dir) / (std::string(stem) + ".wav"), task.render_audio(layout, rng));
    std::ofstream(fs::path(out_dir) / (std::string(stem) + ".txt")) << ex.text << '\n';
  }
  std::cerr << "wrote " << count << " utterances to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"u2s: chunked streaming speech recognition with CTC partials and attention rescoring"};
  app.require_subcommand(1);

  SessionFlags session_flags;
  ModelFiles files;

  std::string audio;
  bool feature_input = false;
  auto* transcribe = app.add_subcommand("transcribe", "Stream a WAV file and print JSONL events");
  transcribe->add_option("audio", audio, "Input WAV (or feature file with --features)")->required();
  transcribe->add_flag("--features", feature_input, "Input is a feature file from `u2s features`");
  files.add(transcribe);
  session_flags.add(transcribe);

  std::string bench_dir, sweep = "none";
  size_t jobs = 1;
  bool per_file = false;
  auto* bench = app.add_subcommand("bench", "WER, RTF and latency over a directory of WAV+TXT pairs");
  bench->add_option("audio_dir", bench_dir, "Directory with NAME.wav and NAME.txt pairs")->required();
  bench->add_option("--sweep", sweep, "none, chunk (0.1 0.24 0.5 1.0 1.5 s) or max-delay (8 12 16 20 s)")
      ->capture_default_str();
  bench->add_option("--jobs", jobs, "Files processed concurrently")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_flag("--per-file", per_file, "Include per-file results in each row");
  files.add(bench);
  session_flags.add(bench);

  std::string corpus = "data/corpus.txt", vocab_out;
  size_t vocab_size = 512;
  auto* vocab_gen = app.add_subcommand("vocab-gen", "Learn a byte-level BPE vocabulary");
  vocab_gen->add_option("--corpus", corpus, "Training text")->capture_default_str();
  vocab_gen->add_option("--size", vocab_size, "Vocabulary size before specials")->capture_default_str();
  vocab_gen->add_option("--out", vocab_out, "Output tokenizer JSON")->required();

  std::string init_tokenizer, init_out;
  size_t subset = 8000;
  uint64_t init_seed = 7;
  ModelConfig mcfg;
  auto* init_model = app.add_subcommand("init-model", "Write a seeded toy checkpoint");
  init_model->add_option("--tokenizer", init_tokenizer, "Tokenizer JSON")->required();
  init_model->add_option("--subset", subset, "CTC subset size (clipped to the first special id)")
      ->capture_default_str();
  init_model->add_option("--seed", init_seed, "Initialization seed")->capture_default_str();
  init_model->add_option("--d-model", mcfg.d_model)->capture_default_str();
  init_model->add_option("--heads", mcfg.heads)->capture_default_str();
  init_model->add_option("--enc-layers", mcfg.enc_layers)->capture_default_str();
  init_model->add_option("--dec-layers", mcfg.dec_layers)->capture_default_str();
  init_model->add_option("--ffn", mcfg.ffn_dim)->capture_default_str();
  init_model->add_option("--out", init_out, "Checkpoint directory")->required();

  std::string feat_in, feat_out;
  auto* features = app.add_subcommand("features", "Compute log-mel features of a WAV file");
  features->add_option("audio", feat_in, "Input WAV")->required();
  features->add_option("--out", feat_out, "Output feature file")->required();

  TrainFlags tf;
  ModelFiles train_files;
  auto* train_toy = app.add_subcommand("train-toy", "Train the model heads on the synthetic task");
  train_files.add(train_toy);
  train_toy->add_option("--stage", tf.stage, "attention_only, ctc_only or hybrid")->capture_default_str();
  train_toy->add_option("--epochs", tf.epochs)->capture_default_str();
  train_toy->add_option("--lr", tf.lr, "SGD learning rate")->capture_default_str();
  train_toy->add_option("--alpha", tf.alpha, "CTC weight of the hybrid loss")->capture_default_str();
  train_toy->add_option("--batch", tf.batch)->capture_default_str()->check(CLI::PositiveNumber);
  train_toy->add_option("--train-examples", tf.train_examples)->capture_default_str();
  train_toy->add_option("--val-examples", tf.val_examples)->capture_default_str();
  train_toy->add_option("--seed", tf.seed, "Shuffling and chunk-sampling seed")->capture_default_str();
  train_toy->add_option("--task-seed", tf.task_seed, "Synthetic task seed")->capture_default_str();
  train_toy->add_option("--noise-std", tf.noise_std)->capture_default_str();
  train_toy->add_option("--out", tf.out, "Output checkpoint directory")->required();
  train_toy->add_option("--log", tf.log, "CSV training log");

  std::string synth_tokenizer, synth_out;
  size_t synth_subset = 8000, synth_count = 20;
  uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand("synth-data", "Render synthetic WAV+TXT utterances for bench");
  synth->add_option("--tokenizer", synth_tokenizer, "Tokenizer JSON")->required();
  synth->add_option("--subset", synth_subset)->capture_default_str();
  synth->add_option("--seed", synth_seed, "Task seed")->capture_default_str();
  synth->add_option("--count", synth_count)->capture_default_str();
  synth->add_option("--out-dir", synth_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*transcribe) return cmd_transcribe(audio, files, session_flags, feature_input);
    if (*bench) return cmd_bench(bench_dir, files, session_flags, sweep, jobs, per_file);
    if (*vocab_gen) return cmd_vocab_gen(corpus, vocab_size, vocab_out);
    if (*init_model) return cmd_init_model(init_tokenizer, subset, init_seed, mcfg, init_out);
    if (*features) return cmd_features(feat_in, feat_out);
    if (*train_toy) return cmd_train_toy(train_files, tf);
    if (*synth) return cmd_synth_data(synth_tokenizer, synth_subset, synth_seed, synth_count, synth_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
