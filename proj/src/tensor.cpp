#include "timr/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace timr {

int64_t shape_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
  int64_t n = 1;
  for (int e : shape) {
    if (e < 1) throw std::invalid_argument("tensor: non-positive extent");
    n *= e;
  }
  return n;
}

DenseTensor::DenseTensor(std::vector<int> shape) : shape_(std::move(shape)) {
  data_.assign(size_t(shape_numel(shape_)), 0.0f);
}

DenseTensor::DenseTensor(std::vector<int> shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != int64_t(data_.size()))
    throw std::invalid_argument("tensor: shape/data length mismatch");
}

DenseTensor DenseTensor::full(std::vector<int> shape, float v) {
  DenseTensor t(std::move(shape));
  t.fill(v);
  return t;
}

bool DenseTensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string DenseTensor::shape_str() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void DenseTensor::fill(float v) { data_.assign(data_.size(), v); }

}  // namespace timr
