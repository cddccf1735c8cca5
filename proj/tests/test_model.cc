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


#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "fixtures.h"
#include "oracles.h"
#include "u2s/model.h"

using namespace u2s;

namespace {

double max_diff(const Tensor& a, const oracle::Mat& b) {
  double m = 0;
  for (size_t r = 0; r < b.size(); ++r)
    for (size_t c = 0; c < b[r].size(); ++c) m = std::max(m, std::abs(a.at(r, c) - b[r][c]));
  return m;
}

double max_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a.data()[i] - b.data()[i])));
  return m;
}

TokenIds random_hyp(std::mt19937_64& rng, const HybridTokenizer& tok, size_t max_len) {
  std::uniform_int_distribution<size_t> len(0, max_len);
  std::uniform_int_distribution<TokenId> id(0, TokenId(tok.subset_size()) - 1);
  TokenIds h = tok.default_prompt();
  for (size_t n = len(rng); n > 0; --n) h.push_back(id(rng));
  h.push_back(tok.eot());
  return h;
}

}  // namespace

TEST_CASE("chunk mask") {
  AttentionMask m = build_chunk_mask(4, {2});
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j) CHECK(m(i, j) == (i >= 2 || j < 2));
  AttentionMask full = build_chunk_mask(5, {7});
  CHECK(full.allowed == AttentionMask::all(5, 5).allowed);
  AttentionMask tri = build_chunk_mask(6, {1});
  CHECK(tri.allowed == AttentionMask::causal(6, 6).allowed);
  AttentionMask left = build_chunk_mask(6, {2, 1});
  CHECK(!left(5, 0));
  CHECK(!left(5, 1));
  CHECK(left(5, 2));
  CHECK(left(3, 0));
  CHECK_THROWS_AS(build_chunk_mask(0, {2}), ModelError);
  CHECK_THROWS_AS(build_chunk_mask(4, {0}), ModelError);
  CHECK_THROWS_AS(build_chunk_mask(4, {2, std::nullopt, 1}), ModelError);
  // Offset rows agree with the corresponding rows of the square mask.
  AttentionMask square = build_chunk_mask(9, {3});
  AttentionMask tail = build_chunk_mask(5, 4, 9, {3});
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 9; ++j) CHECK(tail(i, j) == square(5 + i, j));
}

TEST_CASE("chunk sizes sampled for training") {
  ModelConfig cfg = fixtures::small_config();
  CHECK(cfg.encoder_frame_s() == doctest::Approx(0.04));
  CHECK(seconds_to_encoder_frames(0.1, cfg) == 3);
  CHECK(seconds_to_encoder_frames(1.0, cfg) == 25);
  CHECK(seconds_to_encoder_frames(0.24, cfg) == 6);
  std::mt19937_64 rng(31), again(31);
  std::vector<size_t> hist(26, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    size_t c = sample_chunk_frames(rng, cfg);
    REQUIRE(c >= 3);
    REQUIRE(c <= 25);
    ++hist[c];
  }
  double expected = double(n) / 23.0, chi2 = 0;
  for (size_t c = 3; c <= 25; ++c) chi2 += (hist[c] - expected) * (hist[c] - expected) / expected;
  // 99th percentile of chi-square with 22 degrees of freedom.
  CHECK(chi2 < 40.289);
  std::mt19937_64 a(5), b(5);
  for (int i = 0; i < 20; ++i) CHECK(sample_chunk_frames(a, cfg) == sample_chunk_frames(b, cfg));
  (void)again;
}

TEST_CASE("config validation") {
  ModelConfig cfg = fixtures::small_config();
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.ctc_vocab == fixtures::kToySubset + 1);
  CHECK(cfg.dec_vocab == fixtures::toy_vocab().size());
  ModelConfig bad = cfg;
  bad.heads = 5;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg;
  bad.stack_factor = 0;
  CHECK_THROWS_AS(bad.validate(), ModelError);
  bad = cfg;
  bad.ctc_vocab = 1;
  CHECK_THROWS_AS(bad.validate(), ModelError);
}

TEST_CASE("checkpoint init, save and load") {
  Checkpoint a = fixtures::small_checkpoint(3), b = fixtures::small_checkpoint(3);
  CHECK(a == b);
  CHECK(a.content_hash() == b.content_hash());
  Checkpoint c = fixtures::small_checkpoint(4);
  CHECK(!(a == c));
  CHECK(a.content_hash() != c.content_hash());
  for (const auto& [name, shape] : Checkpoint::layout(a.config)) CHECK(a.param(name).shape() == shape);
  // Weight scale 0.02, norms at identity.
  double sq = 0;
  const Tensor& w = a.param("enc.0.ff1.w");
  for (float v : w.data()) sq += double(v) * v;
  CHECK(std::sqrt(sq / double(w.size())) == doctest::Approx(0.02).epsilon(0.1));
  for (float v : a.param("enc.0.ln1.g").data()) CHECK(v == 1.0f);

  auto dir = fixtures::temp_dir("ckpt");
  a.save(dir / "a");
  Checkpoint back = Checkpoint::load(dir / "a");
  CHECK(back == a);
  CHECK(back.tokenizer_hash == vocab_hash(fixtures::toy_vocab()));

  SUBCASE("missing tensor is named") {
    auto m = nlohmann::json::parse(std::ifstream(dir / "a" / "manifest.json"));
    auto& ts = m["tensors"];
    for (size_t i = 0; i < ts.size(); ++i)
      if (ts[i]["name"] == "dec.out.b") {
        ts.erase(i);
        break;
      }
    std::ofstream(dir / "a" / "manifest.json") << m.dump();
    try {
      Checkpoint::load(dir / "a");
      FAIL("load should fail");
    } catch (const ModelError& e) {
      CHECK(std::string(e.what()).find("dec.out.b") != std::string::npos);
    }
  }
  SUBCASE("truncated weights") {
    std::filesystem::resize_file(dir / "a" / "weights.bin", 100);
    CHECK_THROWS_AS(Checkpoint::load(dir / "a"), ModelError);
  }
  SUBCASE("corrupt manifest") {
    std::ofstream(dir / "a" / "manifest.json") << "{ not json";
    CHECK_THROWS_AS(Checkpoint::load(dir / "a"), ModelError);
  }
  SUBCASE("missing directory") { CHECK_THROWS_AS(Checkpoint::load(dir / "nope"), ModelError); }
  CHECK_THROWS_AS(a.param("no.such"), ModelError);
}

TEST_CASE("encoder matches the reference implementation") {
  Checkpoint ck = fixtures::small_checkpoint(5);
  Model model(ck);
  oracle::RefModel ref(ck);
  std::mt19937_64 rng(32);
  for (size_t frames : {4, 7, 40, 61}) {
    FeatureMatrix f = fixtures::random_features(rng, frames);
    Tensor full = model.encode_full(f, {1000});
    CHECK(full.rows() == frames / 4);
    CHECK(full.cols() == ck.config.d_model);
    CHECK(max_diff(full, ref.encode(f.values, 0)) < 1e-5);
    for (size_t chunk : {1, 3}) CHECK(max_diff(model.encode_full(f, {chunk}), ref.encode(f.values, chunk)) < 1e-5);
    CHECK(model.encode_full(f, {frames / 4}) == full);
  }
  CHECK_THROWS_AS(model.encode_full(fixtures::random_features(rng, 3), {2}), ModelError);
  FeatureMatrix narrow(Tensor(8, 40));
  CHECK_THROWS_AS(model.encode_full(narrow, {2}), ModelError);
}

TEST_CASE("incremental encoding equals full encoding") {
  Checkpoint ck = fixtures::small_checkpoint(6);
  Model model(ck);
  std::mt19937_64 rng(33);
  FeatureMatrix f = fixtures::random_features(rng, 100);  // 25 encoder frames
  for (size_t chunk : {1, 2, 5, 8, 25}) {
    Tensor full = model.encode_full(f, {chunk});
    // Feed 1..4 chunks per call.
    std::uniform_int_distribution<size_t> per_call(1, 4);
    KVCache cache;
    Tensor joined(std::vector<size_t>{0, ck.config.d_model});
    size_t pos = 0;
    while (pos < 25) {
      size_t n = std::min(per_call(rng) * chunk, 25 - pos);
      joined.append_rows(model.encode_incremental(cache, f.slice(pos * 4, (pos + n) * 4), {chunk}));
      pos += n;
      CHECK(cache.frames_cached == pos);
      CHECK(cache.keys[0].rows() == pos);
    }
    CHECK(max_diff(joined, full) <= 1e-5);
  }
  SUBCASE("first chunk alone") {
    KVCache cache;
    FeatureMatrix head = f.slice(0, 20);
    CHECK(max_diff(model.encode_incremental(cache, head, {5}), model.encode_full(head, {5})) == 0.0);
  }
  SUBCASE("stale caches") {
    KVCache cache;
    model.encode_incremental(cache, f.slice(0, 12), {5});  // 3 of 5 frames
    CHECK_THROWS_AS(model.encode_incremental(cache, f.slice(12, 32), {5}), ModelError);
    KVCache bogus;
    bogus.frames_cached = 4;
    CHECK_THROWS_AS(model.encode_incremental(bogus, f.slice(0, 20), {5}), ModelError);
    KVCache good;
    model.encode_incremental(good, f.slice(0, 20), {5});
    good.frames_cached = 10;
    CHECK_THROWS_AS(model.encode_incremental(good, f.slice(20, 40), {5}), ModelError);
    KVCache c2;
    CHECK_THROWS_AS(model.encode_incremental(c2, f.slice(0, 6), {5}), ModelError);
    c2.clear();
    CHECK(c2.frames_cached == 0);
  }
}

TEST_CASE("future frames never reach earlier chunks") {
  Checkpoint ck = fixtures::small_checkpoint(7);
  Model model(ck);
  std::mt19937_64 rng(34);
  FeatureMatrix f = fixtures::random_features(rng, 96);  // 24 encoder frames
  const size_t chunk = 4;
  Tensor base = model.encode_full(f, {chunk});
  for (size_t t = 0; t < 96; t += 13) {
    FeatureMatrix g = f;
    for (size_t b = 0; b < kMelBins; ++b) g.values.at(t, b) += 5.0f;
    Tensor out = model.encode_full(g, {chunk});
    size_t first_touched = (t / 4) / chunk * chunk;
    for (size_t r = 0; r < first_touched; ++r)
      for (size_t c = 0; c < out.cols(); ++c) REQUIRE(out.at(r, c) == base.at(r, c));
    bool changed = false;
    for (size_t c = 0; c < out.cols(); ++c) changed |= out.at(t / 4, c) != base.at(t / 4, c);
    CHECK(changed);
  }
}

TEST_CASE("batched decoder scoring") {
  Checkpoint ck = fixtures::small_checkpoint(8);
  auto tok = fixtures::toy_tokenizer();
  Model model(ck);
  oracle::RefModel ref(ck);
  std::mt19937_64 rng(35);
  FeatureMatrix f = fixtures::random_features(rng, 48);
  Tensor enc = model.encode_full(f, {1000});
  oracle::Mat enc_ref = oracle::to_mat(enc);
  std::vector<TokenIds> hyps;
  for (int i = 0; i < 5; ++i) hyps.push_back(random_hyp(rng, *tok, 6));
  hyps.push_back(hyps[1]);
  auto scores = model.decoder_score_batch(hyps, enc, tok->default_prompt(), tok->eot());
  REQUIRE(scores.size() == hyps.size());
  for (size_t i = 0; i < hyps.size(); ++i) {
    CHECK(scores[i] <= 0.0);
    CHECK(std::abs(scores[i] - ref.score(hyps[i], 2, enc_ref)) <= 1e-5);
  }
  CHECK(scores[5] == scores[1]);
  // Permutation equivariance.
  std::vector<TokenIds> rev(hyps.rbegin(), hyps.rend());
  auto rs = model.decoder_score_batch(rev, enc, tok->default_prompt(), tok->eot());
  for (size_t i = 0; i < hyps.size(); ++i) CHECK(std::abs(rs[i] - scores[hyps.size() - 1 - i]) <= 1e-9);
  // Single hypothesis scored alone matches its batched score.
  auto one = model.decoder_score_batch({hyps[0]}, enc, tok->default_prompt(), tok->eot());
  CHECK(std::abs(one[0] - scores[0]) <= 1e-5);

  CHECK_THROWS_AS(model.decoder_score_batch({}, enc, tok->default_prompt(), tok->eot()), ModelError);
  TokenIds no_eot = hyps[0];
  no_eot.pop_back();
  CHECK_THROWS_AS(model.decoder_score_batch({no_eot}, enc, tok->default_prompt(), tok->eot()), ModelError);
  TokenIds no_prompt(hyps[0].begin() + 1, hyps[0].end());
  CHECK_THROWS_AS(model.decoder_score_batch({no_prompt}, enc, tok->default_prompt(), tok->eot()), ModelError);
}

TEST_CASE("decoder hidden states and logits") {
  Checkpoint ck = fixtures::small_checkpoint(9);
  auto tok = fixtures::toy_tokenizer();
  Model model(ck);
  oracle::RefModel ref(ck);
  std::mt19937_64 rng(36);
  Tensor enc = model.encode_full(fixtures::random_features(rng, 32), {1000});
  TokenIds in = random_hyp(rng, *tok, 5);
  Tensor logits = model.decoder_logits(model.decoder_hidden(in, enc));
  CHECK(logits.rows() == in.size());
  CHECK(logits.cols() == ck.config.dec_vocab);
  auto lp = log_softmax(logits.row(in.size() - 1));
  auto want = ref.next_log_probs(in, oracle::to_mat(enc));
  double worst = 0;
  for (size_t v = 0; v < lp.size(); ++v) worst = std::max(worst, std::abs(lp[v] - want[v]));
  CHECK(worst < 1e-5);
  CHECK_THROWS_AS(model.decoder_hidden({}, enc), ModelError);
  CHECK_THROWS_AS(model.decoder_hidden({TokenId(ck.config.dec_vocab)}, enc), ModelError);
  Tensor ctc = model.ctc_log_probs(enc);
  CHECK(ctc.cols() == tok->ctc_dim());
  for (size_t r = 0; r < ctc.rows(); ++r) {
    double z = 0;
    for (float v : ctc.row(r)) z += std::exp(double(v));
    CHECK(z == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("quantized model") {
  Checkpoint ck = fixtures::small_checkpoint(10);
  Model fp(ck), q(ck, true);
  CHECK(q.quantized());
  std::mt19937_64 rng(37);
  FeatureMatrix f = fixtures::random_features(rng, 40);
  Tensor a = fp.encode_full(f, {3}), b = q.encode_full(f, {3});
  CHECK(max_diff(a, b) > 0.0);
  CHECK(max_diff(a, b) < 0.1);
  auto names = q.linear_names();
  CHECK(std::find(names.begin(), names.end(), "enc.0.attn.q") != names.end());
  CHECK(std::find(names.begin(), names.end(), "dec.out") != names.end());
  size_t traced = 0;
  q.set_linear_trace([&](const std::string&, const Tensor&) { ++traced; });
  q.encode_full(f, {3});
  CHECK(traced > 0);
  CHECK_THROWS_AS(q.apply_linear("nope", a, true), ModelError);
}

TEST_CASE("sinusoidal positions") {
  Tensor p = sinusoidal_positions(3, 2, 8);
  CHECK(p.rows() == 2);
  CHECK(p.at(0, 0) == doctest::Approx(std::sin(3.0)));
  CHECK(p.at(0, 1) == doctest::Approx(std::cos(3.0)));
  CHECK(p.at(1, 2) == doctest::Approx(std::sin(4.0 / std::pow(10000.0, 2.0 / 8.0))));
  CHECK(sinusoidal_positions(0, 5, 8).slice_rows(3, 5) == p);
}
