#pragma once

#include <string>

#include "maxim/tensor.hpp"

namespace maxim {

/// Loads a binary portable pixmap (P6, maxval 255) as [1,H,W,3] in [0,1].
Tensor load_ppm(const std::string& path, DType dt = DType::f32);

/// Clamps to [0,1], quantizes by round(v * 255), writes P6.
void save_ppm(const Tensor& img, const std::string& path);

}  // namespace maxim
