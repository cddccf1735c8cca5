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

#ifndef U2S_FRONTEND_H_
#define U2S_FRONTEND_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "u2s/tensor.h"

namespace u2s {

inline constexpr int kSampleRate = 16000;
inline constexpr size_t kWindowSamples = 400;  // 25 ms
inline constexpr size_t kHopSamples = 160;     // 10 ms
inline constexpr size_t kFftSize = 512;
inline constexpr size_t kMelBins = 80;
inline constexpr double kFrameHopSeconds = 0.010;
inline constexpr double kLogFloor = 1e-10;

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Log-mel energies, one row per 10 ms frame.
struct FeatureMatrix {
  Tensor values;  // [frames x bins]
  float hop_s = static_cast<float>(kFrameHopSeconds);

  FeatureMatrix() : values(std::vector<size_t>{0, kMelBins}) {}
  explicit FeatureMatrix(Tensor v, float hop = static_cast<float>(kFrameHopSeconds))
      : values(std::move(v)), hop_s(hop) {}

  size_t frames() const { return values.rows(); }
  size_t bins() const { return values.cols(); }
  FeatureMatrix slice(size_t begin, size_t end) const {
    return FeatureMatrix(values.slice_rows(begin, end), hop_s);
  }
  void append(const FeatureMatrix& other) { values.append_rows(other.values); }
};

// Parses a RIFF/WAVE container (PCM16 or float32, any channel count and
// rate) into 16 kHz mono.
AudioBuffer decode_wav(std::span<const uint8_t> bytes);
AudioBuffer read_wav(const std::filesystem::path& path);
// Writes 16-bit PCM mono.
std::vector<uint8_t> encode_wav_pcm16(const AudioBuffer& audio);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

// Linear-interpolation resampling.
std::vector<float> resample_linear(std::span<const float> in, int from_rate, int to_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Center frequency (Hz) of each triangular mel filter.
std::vector<double> mel_filter_centers();

FeatureMatrix log_mel(const AudioBuffer& audio);

size_t frame_count(size_t samples);

// Incremental framing for streaming. The stream is left-padded with
// (window - hop) zeros so that every 160 fed samples complete one frame.
class StreamingFeaturizer {
 public:
  StreamingFeaturizer();
  FeatureMatrix accept(std::span<const float> samples);
  void reset();

 private:
  std::vector<float> pending_;
};

// Binary feature file: "U2FT", u32 frames, u32 bins, f32 hop, then
// row-major little-endian f32 data.
void save_features(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix load_features(const std::filesystem::path& path);

}  // namespace u2s

#endif  // U2S_FRONTEND_H_
