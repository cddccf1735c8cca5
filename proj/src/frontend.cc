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

#include "u2s/frontend.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace u2s {

namespace {

uint16_t read_u16(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint16_t>(b[at] | (b[at + 1] << 8));
}

uint32_t read_u32(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
         (static_cast<uint32_t>(b[at + 2]) << 16) | (static_cast<uint32_t>(b[at + 3]) << 24);
}

float read_f32(std::span<const uint8_t> b, size_t at) {
  uint32_t bits = read_u32(b, at);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

bool tag_is(std::span<const uint8_t> b, size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

// In-place iterative radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
  size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

struct MelBank {
  // weights[m][k] for FFT bin k in [0, kFftSize/2].
  std::vector<std::vector<double>> weights;
  std::vector<double> window;

  MelBank() {
    window.resize(kWindowSamples);
    for (size_t n = 0; n < kWindowSamples; ++n)
      window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                        static_cast<double>(kWindowSamples));
    double mel_lo = hz_to_mel(0.0);
    double mel_hi = hz_to_mel(kSampleRate / 2.0);
    double step = (mel_hi - mel_lo) / static_cast<double>(kMelBins + 1);
    size_t nbins = kFftSize / 2 + 1;
    weights.assign(kMelBins, std::vector<double>(nbins, 0.0));
    for (size_t m = 0; m < kMelBins; ++m) {
      double left = mel_lo + step * static_cast<double>(m);
      double center = left + step;
      double right = center + step;
      for (size_t k = 0; k < nbins; ++k) {
        double mel = hz_to_mel(static_cast<double>(k) * kSampleRate / static_cast<double>(kFftSize));
        if (mel > left && mel < right)
          weights[m][k] = mel <= center ? (mel - left) / step : (right - mel) / step;
      }
    }
  }
};

const MelBank& mel_bank() {
  static const MelBank bank;
  return bank;
}

void compute_frame(std::span<const float> samples, std::span<float> out) {
  const MelBank& bank = mel_bank();
  std::vector<std::complex<double>> buf(kFftSize);
  for (size_t n = 0; n < kWindowSamples; ++n) buf[n] = samples[n] * bank.window[n];
  fft(buf);
  std::array<double, kFftSize / 2 + 1> power{};
  for (size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
  for (size_t m = 0; m < kMelBins; ++m) {
    double e = 0.0;
    const auto& w = bank.weights[m];
    for (size_t k = 0; k < power.size(); ++k) e += w[k] * power[k];
    out[m] = static_cast<float>(std::log(std::max(e, kLogFloor)));
  }
}

}  // namespace

AudioBuffer decode_wav(std::span<const uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE"))
    throw AudioError("malformed WAV header: missing RIFF/WAVE tags");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const uint8_t> payload;
  bool have_data = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = read_u32(bytes, pos + 4);
    size_t body = pos + 8;
    if (body + len > bytes.size()) {
      if (!tag_is(bytes, pos, "data")) throw AudioError("malformed WAV: truncated chunk");
      len = static_cast<uint32_t>(bytes.size() - body);  // tolerate streamed writers
    }
    if (tag_is(bytes, pos, "fmt ")) {
      if (len < 16) throw AudioError("malformed WAV: short fmt chunk");
      format = read_u16(bytes, body);
      channels = read_u16(bytes, body + 2);
      rate = read_u32(bytes, body + 4);
      bits = read_u16(bytes, body + 14);
      if (format == kFormatExtensible) {
        if (len < 40) throw AudioError("malformed WAV: short extensible fmt chunk");
        format = read_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      payload = bytes.subspan(body, len);
      have_data = true;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw AudioError("malformed WAV: no fmt chunk");
  if (!have_data) throw AudioError("malformed WAV: no data chunk");
  if (channels == 0 || rate == 0) throw AudioError("malformed WAV: zero channels or rate");

  size_t sample_bytes;
  if (format == kFormatPcm && bits == 16) {
    sample_bytes = 2;
  } else if (format == kFormatFloat && bits == 32) {
    sample_bytes = 4;
  } else {
    throw AudioError("unsupported WAV codec: format " + std::to_string(format) + ", " +
                     std::to_string(bits) + " bits");
  }
  size_t frames = payload.size() / (sample_bytes * channels);
  if (frames == 0) throw AudioError("WAV has zero-length payload");

  std::vector<float> mono(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      size_t at = (i * channels + c) * sample_bytes;
      if (sample_bytes == 2)
        acc += static_cast<int16_t>(read_u16(payload, at)) / 32768.0;
      else
        acc += read_f32(payload, at);
    }
    mono[i] = static_cast<float>(acc / channels);
  }

  AudioBuffer out;
  out.samples = rate == static_cast<uint32_t>(kSampleRate)
                    ? std::move(mono)
                    : resample_linear(mono, static_cast<int>(rate), kSampleRate);
  out.sample_rate = kSampleRate;
  return out;
}

AudioBuffer read_wav(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return decode_wav(bytes);
}

std::vector<uint8_t> encode_wav_pcm16(const AudioBuffer& audio) {
  std::vector<uint8_t> out;
  uint32_t data_len = static_cast<uint32_t>(audio.samples.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_len);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<uint32_t>(audio.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_len);
  for (float s : audio.samples) {
    double v = std::clamp(static_cast<double>(s), -1.0, 32767.0 / 32768.0);
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(std::lround(v * 32768.0))));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  auto bytes = encode_wav_pcm16(audio);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> resample_linear(std::span<const float> in, int from_rate, int to_rate) {
  if (in.empty()) return {};
  size_t n_out = static_cast<size_t>(static_cast<uint64_t>(in.size()) * to_rate / from_rate);
  std::vector<float> out(n_out);
  double ratio = static_cast<double>(from_rate) / to_rate;
  for (size_t i = 0; i < n_out; ++i) {
    double t = static_cast<double>(i) * ratio;
    size_t lo = static_cast<size_t>(t);
    double frac = t - static_cast<double>(lo);
    size_t hi = std::min(lo + 1, in.size() - 1);
    lo = std::min(lo, in.size() - 1);
    out[i] = static_cast<float>(in[lo] * (1.0 - frac) + in[hi] * frac);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filter_centers() {
  double lo = hz_to_mel(0.0), hi = hz_to_mel(kSampleRate / 2.0);
  double step = (hi - lo) / static_cast<double>(kMelBins + 1);
  std::vector<double> centers(kMelBins);
  for (size_t m = 0; m < kMelBins; ++m) centers[m] = mel_to_hz(lo + step * static_cast<double>(m + 1));
  return centers;
}

size_t frame_count(size_t samples) {
  return samples < kWindowSamples ? 0 : (samples - kWindowSamples) / kHopSamples + 1;
}

FeatureMatrix log_mel(const AudioBuffer& audio) {
  if (audio.sample_rate != kSampleRate)
    throw AudioError("log_mel expects 16 kHz audio, got " + std::to_string(audio.sample_rate));
  if (audio.samples.size() < kWindowSamples)
    throw AudioError("audio shorter than one analysis window (" +
                     std::to_string(audio.samples.size()) + " samples)");
  size_t frames = frame_count(audio.samples.size());
  Tensor values(frames, kMelBins);
  std::span<const float> s(audio.samples);
  for (size_t f = 0; f < frames; ++f)
    compute_frame(s.subspan(f * kHopSamples, kWindowSamples), values.row(f));
  return FeatureMatrix(std::move(values));
}

StreamingFeaturizer::StreamingFeaturizer() { reset(); }

void StreamingFeaturizer::reset() { pending_.assign(kWindowSamples - kHopSamples, 0.0f); }

FeatureMatrix StreamingFeaturizer::accept(std::span<const float> samples) {
  pending_.insert(pending_.end(), samples.begin(), samples.end());
  size_t frames = frame_count(pending_.size());
  Tensor values(frames, kMelBins);
  std::span<const float> s(pending_);
  for (size_t f = 0; f < frames; ++f)
    compute_frame(s.subspan(f * kHopSamples, kWindowSamples), values.row(f));
  pending_.erase(pending_.begin(),
                 pending_.begin() + static_cast<std::ptrdiff_t>(frames * kHopSamples));
  return FeatureMatrix(std::move(values));
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& features) {
  std::vector<uint8_t> out{'U', '2', 'F', 'T'};
  put_u32(out, static_cast<uint32_t>(features.frames()));
  put_u32(out, static_cast<uint32_t>(features.bins()));
  put_f32(out, features.hop_s);
  out.reserve(out.size() + features.values.size() * 4);
  for (float v : features.values.data()) put_f32(out, v);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw AudioError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  std::span<const uint8_t> b(bytes);
  if (b.size() < 16 || !tag_is(b, 0, "U2FT")) throw AudioError("not a feature file: " + path.string());
  uint32_t frames = read_u32(b, 4), bins = read_u32(b, 8);
  float hop = read_f32(b, 12);
  if (b.size() != 16 + static_cast<size_t>(frames) * bins * 4)
    throw AudioError("feature file size mismatch: " + path.string());
  Tensor values(frames, bins);
  for (size_t i = 0; i < values.size(); ++i) values.data()[i] = read_f32(b, 16 + 4 * i);
  return FeatureMatrix(std::move(values), hop);
}

}  // namespace u2s
