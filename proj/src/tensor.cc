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

#include "u2s/tensor.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace u2s {

namespace {

size_t product(const std::vector<size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Tensor::Tensor(std::vector<size_t> shape) : shape_(std::move(shape)) {
  data_.assign(product(shape_), 0.0f);
}

Tensor::Tensor(std::vector<size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == product(shape_),
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string());
}

Tensor Tensor::vector(std::vector<float> data) {
  size_t n = data.size();
  return Tensor({n}, std::move(data));
}

size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got shape " + shape_string());
  return shape_[0];
}

size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got shape " + shape_string());
  return shape_[1];
}

std::span<float> Tensor::row(size_t r) {
  size_t c = cols();
  return {data_.data() + r * c, c};
}

std::span<const float> Tensor::row(size_t r) const {
  size_t c = cols();
  return {data_.data() + r * c, c};
}

Tensor Tensor::slice_rows(size_t begin, size_t end) const {
  require(begin <= end && end <= rows(), "row slice out of range");
  size_t c = cols();
  return Tensor({end - begin, c},
                std::vector<float>(data_.begin() + begin * c, data_.begin() + end * c));
}

void Tensor::append_rows(const Tensor& other) {
  if (shape_.empty() || (rank() == 2 && shape_[0] == 0 && data_.empty())) {
    *this = other;
    return;
  }
  require(other.cols() == cols(), "append_rows column mismatch");
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  shape_[0] += other.rows();
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

AttentionMask AttentionMask::causal(size_t r, size_t c, size_t offset) {
  AttentionMask m(r, c, false);
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c && j <= i + offset; ++j) m.set(i, j, true);
  return m;
}

Tensor QuantizedMatrix::dequantize() const {
  Tensor out(rows, cols);
  for (size_t r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols; ++c)
      out.at(r, c) = static_cast<float>(static_cast<double>(values[r * cols + c]) * scales[r]);
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul: " + a.shape_string() + " x " + b.shape_string());
  size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out(n, m);
  std::vector<double> acc(m);
  for (size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (size_t p = 0; p < k; ++p) {
      double av = a.at(i, p);
      const float* brow = b.data().data() + p * m;
      for (size_t j = 0; j < m; ++j) acc[j] += av * brow[j];
    }
    for (size_t j = 0; j < m; ++j) out.at(i, j) = static_cast<float>(acc[j]);
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.cols() == weight.cols(),
          "linear: input " + x.shape_string() + " vs weight " + weight.shape_string());
  require(bias.size() == weight.rows(), "linear: bias length mismatch");
  size_t n = x.rows(), in = x.cols(), out_dim = weight.rows();
  Tensor out(n, out_dim);
  const float* w = weight.data().data();
  for (size_t i = 0; i < n; ++i) {
    const float* xr = x.data().data() + i * in;
    for (size_t o = 0; o < out_dim; ++o) {
      const float* wr = w + o * in;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      size_t c = 0;
      for (; c + 4 <= in; c += 4) {
        a0 += static_cast<double>(xr[c]) * wr[c];
        a1 += static_cast<double>(xr[c + 1]) * wr[c + 1];
        a2 += static_cast<double>(xr[c + 2]) * wr[c + 2];
        a3 += static_cast<double>(xr[c + 3]) * wr[c + 3];
      }
      for (; c < in; ++c) a0 += static_cast<double>(xr[c]) * wr[c];
      out.at(i, o) = static_cast<float>((a0 + a1) + (a2 + a3) + bias.data()[o]);
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  size_t d = x.cols();
  require(gamma.size() == d && beta.size() == d, "layer_norm: parameter length mismatch");
  Tensor out(x.rows(), d);
  for (size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    double mean = 0.0;
    for (float v : r) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + eps);
    for (size_t c = 0; c < d; ++c)
      out.at(i, c) = static_cast<float>((r[c] - mean) * inv * gamma.data()[c] + beta.data()[c]);
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data()) {
    double d = v;
    v = static_cast<float>(0.5 * d * (1.0 + std::erf(d / std::sqrt(2.0))));
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: " + a.shape_string() + " vs " + b.shape_string());
  for (size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

namespace {

template <typename T>
std::vector<double> log_softmax_impl(std::span<const T> x) {
  if (x.empty()) throw ShapeError("log_softmax: empty input");
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : x) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (T v : x) sum += std::exp(static_cast<double>(v) - mx);
  double lse = mx + std::log(sum);
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(x[i]) - lse;
  return out;
}

}  // namespace

std::vector<double> log_softmax(std::span<const float> x) { return log_softmax_impl(x); }
std::vector<double> log_softmax(std::span<const double> x) { return log_softmax_impl(x); }

Tensor log_softmax_rows(const Tensor& x) {
  Tensor out(x.rows(), x.cols());
  for (size_t i = 0; i < x.rows(); ++i) {
    auto ls = log_softmax(x.row(i));
    for (size_t c = 0; c < ls.size(); ++c) out.at(i, c) = static_cast<float>(ls[c]);
  }
  return out;
}

Tensor masked_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                        const AttentionMask& mask, size_t heads) {
  size_t L = query.rows(), S = key.rows(), d = query.cols();
  require(key.cols() == d && value.cols() == d && value.rows() == S,
          "attention: q " + query.shape_string() + " k " + key.shape_string() + " v " +
              value.shape_string());
  require(heads >= 1 && d % heads == 0, "attention: model width not divisible by heads");
  require(mask.rows == L && mask.cols == S, "attention: mask dimensions mismatch");
  for (size_t i = 0; i < L; ++i) {
    bool any = false;
    for (size_t j = 0; j < S && !any; ++j) any = mask(i, j);
    if (!any) throw ShapeError("attention: fully masked query row " + std::to_string(i));
  }

  size_t hd = d / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor out(L, d);
  std::vector<double> scores(S);
  std::vector<double> acc(hd);
  for (size_t h = 0; h < heads; ++h) {
    size_t off = h * hd;
    for (size_t i = 0; i < L; ++i) {
      const float* q = query.data().data() + i * d + off;
      double mx = -std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < S; ++j) {
        if (!mask(i, j)) {
          scores[j] = kMaskedScore;
          continue;
        }
        const float* k = key.data().data() + j * d + off;
        double s = 0.0;
        for (size_t c = 0; c < hd; ++c) s += static_cast<double>(q[c]) * k[c];
        scores[j] = s * scale;
        mx = std::max(mx, scores[j]);
      }
      double denom = 0.0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (size_t j = 0; j < S; ++j) {
        if (!mask(i, j)) continue;  // exp(sentinel - max) underflows to exactly zero
        double w = std::exp(scores[j] - mx);
        denom += w;
        const float* v = value.data().data() + j * d + off;
        for (size_t c = 0; c < hd; ++c) acc[c] += w * v[c];
      }
      for (size_t c = 0; c < hd; ++c) out.at(i, off + c) = static_cast<float>(acc[c] / denom);
    }
  }
  return out;
}

namespace {

// Scale s such that requantizing the dequantized row reproduces s exactly.
float stable_scale(double max_abs) {
  float s = static_cast<float>(max_abs / 127.0);
  for (int i = 0; i < 4; ++i) {
    float top = static_cast<float>(127.0 * static_cast<double>(s));
    float next = static_cast<float>(static_cast<double>(top) / 127.0);
    if (next == s) break;
    s = next;
  }
  return s;
}

}  // namespace

QuantizedMatrix quantize(const Tensor& weights) {
  QuantizedMatrix q;
  q.rows = weights.rows();
  q.cols = weights.cols();
  q.values.resize(q.rows * q.cols);
  q.scales.resize(q.rows);
  for (size_t r = 0; r < q.rows; ++r) {
    auto row = weights.row(r);
    double mx = 0.0;
    for (float v : row) mx = std::max(mx, std::fabs(static_cast<double>(v)));
    float s = mx > 0.0 ? stable_scale(mx) : 1.0f;
    q.scales[r] = s;
    for (size_t c = 0; c < q.cols; ++c) {
      double code = std::nearbyint(static_cast<double>(row[c]) / s);
      code = std::clamp(code, -127.0, 127.0);
      q.values[r * q.cols + c] = static_cast<int8_t>(code);
    }
  }
  return q;
}

Tensor quantized_linear(const Tensor& x, const QuantizedMatrix& w, const Tensor& bias) {
  require(x.cols() == w.cols, "quantized_linear: input " + x.shape_string() + " vs weight cols " +
                                  std::to_string(w.cols));
  require(bias.size() == w.rows, "quantized_linear: bias length mismatch");
  size_t n = x.rows(), in = w.cols;
  Tensor out(n, w.rows);
  for (size_t i = 0; i < n; ++i) {
    const float* xr = x.data().data() + i * in;
    for (size_t o = 0; o < w.rows; ++o) {
      const int8_t* wr = w.values.data() + o * in;
      double acc = 0.0;
      for (size_t c = 0; c < in; ++c) acc += static_cast<double>(xr[c]) * wr[c];
      out.at(i, o) = static_cast<float>(acc * w.scales[o] + bias.data()[o]);
    }
  }
  return out;
}

double log_add(double a, double b) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

}  // namespace u2s
