#include "maxim/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace maxim {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

Tensor Tensor::zeros(Shape shape, DType dt) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = shape_numel(t.shape_);
  t.dtype_ = dt;
  if (dt == DType::f32)
    t.f32_ = std::make_shared<std::vector<float>>(t.numel_, 0.0f);
  else
    t.f64_ = std::make_shared<std::vector<double>>(t.numel_, 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (dt == DType::f32)
    std::fill(t.f32_->begin(), t.f32_->end(), static_cast<float>(value));
  else
    std::fill(t.f64_->begin(), t.f64_->end(), value);
  return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full(Shape{}, value, dt); }

Tensor Tensor::from_f32(Shape shape, std::span<const float> values) {
  Tensor t = zeros(std::move(shape), DType::f32);
  if (static_cast<int64_t>(values.size()) != t.numel_)
    throw ShapeError("from_f32: value count does not match shape");
  std::memcpy(t.f32_->data(), values.data(), values.size() * sizeof(float));
  return t;
}

Tensor Tensor::from_f64(Shape shape, std::span<const double> values) {
  Tensor t = zeros(std::move(shape), DType::f64);
  if (static_cast<int64_t>(values.size()) != t.numel_)
    throw ShapeError("from_f64: value count does not match shape");
  std::memcpy(t.f64_->data(), values.data(), values.size() * sizeof(double));
  return t;
}

Tensor Tensor::of(Shape shape, std::initializer_list<double> values, DType dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (static_cast<int64_t>(values.size()) != t.numel_)
    throw ShapeError("Tensor::of: value count does not match shape");
  int64_t i = 0;
  for (double v : values) {
    if (dt == DType::f32)
      (*t.f32_)[i++] = static_cast<float>(v);
    else
      (*t.f64_)[i++] = v;
  }
  return t;
}

int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range");
  return shape_[axis];
}

double Tensor::at(int64_t i) const {
  if (i < 0 || i >= numel_) throw ShapeError("flat index out of range");
  return dtype_ == DType::f32 ? static_cast<double>((*f32_)[i]) : (*f64_)[i];
}

double Tensor::scalar_value() const {
  if (numel_ != 1) throw ShapeError("scalar_value on tensor with numel " + std::to_string(numel_));
  return at(0);
}

Tensor Tensor::attached_to(Graph* g, int node) const {
  Tensor t = *this;
  t.graph_ = g;
  t.node_ = node;
  return t;
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.graph_ = nullptr;
  t.node_ = -1;
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel_)
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                     " changes element count");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype_) return detached();
  Tensor t = zeros(shape_, dt);
  for (int64_t i = 0; i < numel_; ++i) {
    if (dt == DType::f32)
      (*t.f32_)[i] = static_cast<float>((*f64_)[i]);
    else
      (*t.f64_)[i] = static_cast<double>((*f32_)[i]);
  }
  return t;
}

bool Tensor::all_finite() const {
  if (dtype_ == DType::f32) {
    for (float v : *f32_)
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : *f64_)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::same_values_bitwise(const Tensor& other) const {
  if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
  if (dtype_ == DType::f32)
    return std::memcmp(f32_->data(), other.f32_->data(), numel_ * sizeof(float)) == 0;
  return std::memcmp(f64_->data(), other.f64_->data(), numel_ * sizeof(double)) == 0;
}

}  // namespace maxim
