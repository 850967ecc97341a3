#pragma once

#include <doctest.h>

#include <cmath>

#include "maxim/ops.hpp"
#include "maxim/rng.hpp"

namespace tt {

inline maxim::Tensor randn(maxim::Shape shape, maxim::Rng& rng, double scale = 1.0,
                           maxim::DType dt = maxim::DType::f64) {
  maxim::Tensor t = maxim::Tensor::zeros(std::move(shape), dt);
  maxim::dispatch_dtype(dt, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.raw_mutable<T>()) v = static_cast<T>(rng.normal() * scale);
  });
  return t;
}

inline bool tensor_close(const maxim::Tensor& a, const maxim::Tensor& b, double tol) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (std::abs(a.at(i) - b.at(i)) > tol) return false;
  return true;
}

inline double max_abs_diff(const maxim::Tensor& a, const maxim::Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

inline double rms(const maxim::Tensor& a) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.at(i) * a.at(i);
  return std::sqrt(s / static_cast<double>(a.numel()));
}

}  // namespace tt
