#pragma once

#include "maxim/tensor.hpp"

namespace maxim {

/// BT.601 full-range luma of an RGB image [N,H,W,3] -> [N,H,W,1].
Tensor luma601(const Tensor& rgb);

/// 10 log10(peak^2 / MSE); returns +infinity when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0, bool y_only = false);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1, averaged over valid window positions; per-channel mean
/// for color inputs.
double ssim(const Tensor& a, const Tensor& b, bool y_only = false);

}  // namespace maxim
