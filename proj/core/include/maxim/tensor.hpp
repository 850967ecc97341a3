#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maxim {

class Graph;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

enum class DType { f32, f64 };

inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<int64_t> row_major_strides(const Shape& s);

/// Dense n-d array in row-major layout. Canonical image layout is
/// (batch, height, width, channels). A Tensor is an immutable value once
/// built; primitives return fresh tensors. When recorded on a Graph it
/// additionally carries the id of the node that produced it.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dt = DType::f32);
  static Tensor full(Shape shape, double value, DType dt = DType::f32);
  static Tensor scalar(double value, DType dt = DType::f32);
  static Tensor from_f32(Shape shape, std::span<const float> values);
  static Tensor from_f64(Shape shape, std::span<const double> values);
  /// Convenience for tests: values given as doubles, stored at `dt`.
  static Tensor of(Shape shape, std::initializer_list<double> values, DType dt = DType::f32);

  bool defined() const { return f32_ != nullptr || f64_ != nullptr; }
  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return numel_; }
  int64_t dim(int axis) const;

  template <typename T>
  std::span<const T> data() const;
  template <typename T>
  std::span<T> raw_mutable();  // construction-time only; buffer must be uniquely owned

  /// Element access through any-dtype lens (slow; tests and glue code).
  double at(int64_t flat_index) const;
  double scalar_value() const;

  /// Graph linkage.
  Graph* graph() const { return graph_; }
  int node() const { return node_; }
  bool attached() const { return graph_ != nullptr && node_ >= 0; }
  Tensor attached_to(Graph* g, int node) const;
  Tensor detached() const;

  /// Same data, new shape (no copy). numel must match.
  Tensor reshaped(Shape shape) const;
  Tensor astype(DType dt) const;  // value copy, no graph linkage

  bool all_finite() const;
  bool same_values_bitwise(const Tensor& other) const;

 private:
  Shape shape_;
  int64_t numel_ = 0;
  DType dtype_ = DType::f32;
  std::shared_ptr<std::vector<float>> f32_;
  std::shared_ptr<std::vector<double>> f64_;
  Graph* graph_ = nullptr;
  int node_ = -1;
};

template <>
inline std::span<const float> Tensor::data<float>() const {
  if (dtype_ != DType::f32) throw ShapeError("tensor is not f32");
  return {f32_->data(), static_cast<size_t>(numel_)};
}
template <>
inline std::span<const double> Tensor::data<double>() const {
  if (dtype_ != DType::f64) throw ShapeError("tensor is not f64");
  return {f64_->data(), static_cast<size_t>(numel_)};
}
template <>
inline std::span<float> Tensor::raw_mutable<float>() {
  if (dtype_ != DType::f32) throw ShapeError("tensor is not f32");
  return {f32_->data(), static_cast<size_t>(numel_)};
}
template <>
inline std::span<double> Tensor::raw_mutable<double>() {
  if (dtype_ != DType::f64) throw ShapeError("tensor is not f64");
  return {f64_->data(), static_cast<size_t>(numel_)};
}

/// Calls f with a value of the scalar type matching dt.
template <class F>
decltype(auto) dispatch_dtype(DType dt, F&& f) {
  if (dt == DType::f32) return f(float{});
  return f(double{});
}

}  // namespace maxim
