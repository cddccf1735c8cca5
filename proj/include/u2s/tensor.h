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

#ifndef U2S_TENSOR_H_
#define U2S_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace u2s {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major float32 array. Kernels below treat rank-2 tensors as
// [rows x cols] matrices and rank-1 tensors as vectors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape);
  Tensor(std::vector<size_t> shape, std::vector<float> data);
  Tensor(size_t rows, size_t cols) : Tensor(std::vector<size_t>{rows, cols}) {}

  static Tensor vector(std::vector<float> data);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  size_t rows() const;
  size_t cols() const;

  std::span<float> row(size_t r);
  std::span<const float> row(size_t r) const;

  float& at(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
  float at(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  // Rows [begin, end) of a matrix.
  Tensor slice_rows(size_t begin, size_t end) const;
  void append_rows(const Tensor& other);

  bool operator==(const Tensor& other) const = default;

  std::string shape_string() const;

 private:
  std::vector<size_t> shape_;
  std::vector<float> data_;
};

struct AttentionMask {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<uint8_t> allowed;  // row-major, 1 = attend

  AttentionMask() = default;
  AttentionMask(size_t r, size_t c, bool value)
      : rows(r), cols(c), allowed(r * c, value ? 1 : 0) {}

  static AttentionMask all(size_t r, size_t c) { return {r, c, true}; }
  // Query i sees key j iff j <= i + offset.
  static AttentionMask causal(size_t r, size_t c, size_t offset = 0);

  bool operator()(size_t r, size_t c) const { return allowed[r * cols + c] != 0; }
  void set(size_t r, size_t c, bool v) { allowed[r * cols + c] = v ? 1 : 0; }
};

// Per-output-row symmetric int8 weights. Row r dequantizes to codes * scales[r].
struct QuantizedMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<int8_t> values;
  std::vector<float> scales;

  Tensor dequantize() const;
  bool operator==(const QuantizedMatrix& other) const = default;
};

inline constexpr float kMaskedScore = -1e9f;

Tensor matmul(const Tensor& a, const Tensor& b);
// x [n x in] times weight [out x in] transposed, plus bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
Tensor gelu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);

// Log-softmax of one vector, computed and returned in double precision.
std::vector<double> log_softmax(std::span<const float> x);
std::vector<double> log_softmax(std::span<const double> x);
// Row-wise log-softmax of a matrix.
Tensor log_softmax_rows(const Tensor& x);

Tensor masked_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                        const AttentionMask& mask, size_t heads);

QuantizedMatrix quantize(const Tensor& weights);
Tensor quantized_linear(const Tensor& x, const QuantizedMatrix& w, const Tensor& bias);

double log_add(double a, double b);

}  // namespace u2s

#endif  // U2S_TENSOR_H_
