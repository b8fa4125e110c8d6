#pragma once
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "utvc/rng.hpp"

namespace utvc {

// Dense row-major float32 tensor, rank 1..4. All values are finite;
// construction from external data rejects NaN/Inf.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(numel(), 0.0f);
  }

  Tensor(std::vector<int> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (data_.size() != static_cast<size_t>(numel()))
      throw std::invalid_argument("tensor: data size does not match shape");
    check_finite();
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, float v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    t.check_finite();
    return t;
  }

  static Tensor uniform(std::vector<int> shape, float lo, float hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.uniform_f(lo, hi);
    return t;
  }

  static Tensor normal(std::vector<int> shape, float mean, float stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.normal_f(mean, stddev);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape_) n *= d;
    return shape_.empty() ? 0 : n;
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // indexed access for rank 2..4
  float& at(int a, int b) { return data_[static_cast<size_t>(a) * dim(1) + b]; }
  float at(int a, int b) const { return data_[static_cast<size_t>(a) * dim(1) + b]; }
  float& at(int a, int b, int c) {
    return data_[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
  }
  float at(int a, int b, int c) const {
    return data_[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
  }
  float& at(int a, int b, int c, int d) {
    return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }
  float at(int a, int b, int c, int d) const {
    return data_[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void check_finite() const;

  std::string shape_str() const;

 private:
  void validate_shape() const {
    if (shape_.empty() || shape_.size() > 4)
      throw std::invalid_argument("tensor: rank must be 1..4");
    for (int d : shape_)
      if (d <= 0) throw std::invalid_argument("tensor: extents must be positive");
  }

  std::vector<int> shape_;
  std::vector<float> data_;
};

// deterministic pairwise float32 sum (fixed reduction tree)
float pairwise_sum(const float* x, int64_t n);

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

// round half away from zero, the single rounding convention of the codec;
// adding +0 canonicalizes negative zero so bit comparisons of quantized
// values agree with integers decoded from a bitstream
inline float round_half_away(float v) { return std::round(v) + 0.0f; }

}  // namespace utvc
