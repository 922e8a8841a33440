#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace timr {

// Dense row-major N-d array of 32-bit floats. Images use [batch, channel,
// height, width].
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<int> shape);
  DenseTensor(std::vector<int> shape, std::vector<float> values);

  static DenseTensor zeros(std::vector<int> shape) { return DenseTensor(std::move(shape)); }
  static DenseTensor full(std::vector<int> shape, float v);
  static DenseTensor scalar(float v) { return DenseTensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return int(shape_.size()); }
  int dim(int i) const { return shape_[size_t(i)]; }
  int64_t numel() const { return int64_t(data_.size()); }
  bool same_shape(const DenseTensor& o) const { return shape_ == o.shape_; }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](int64_t i) { return data_[size_t(i)]; }
  float operator[](int64_t i) const { return data_[size_t(i)]; }

  // 4-d accessor for [B,C,H,W] tensors.
  float& at(int b, int c, int h, int w) {
    return data_[size_t(((int64_t(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float at(int b, int c, int h, int w) const {
    return data_[size_t(((int64_t(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  bool all_finite() const;
  std::string shape_str() const;

  void fill(float v);

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

}  // namespace timr
