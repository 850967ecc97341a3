#pragma once

#include <vector>

#include "maxim/rng.hpp"
#include "maxim/tensor.hpp"

namespace maxim {

enum class DegradeKind { GaussianNoise, BoxBlur, MotionBlur };

struct DegradeSpec {
  DegradeKind kind = DegradeKind::GaussianNoise;
  double sigma = 25.0;  // noise std on the 0..255 scale
  int kernel = 9;       // blur extent / line length
};

DegradeKind degrade_kind_from_string(const std::string& s);

/// Procedural clean image: smooth gradients, soft disks and rectangles,
/// sinusoidal texture. Deterministic in the RNG state.
Tensor make_clean_image(int64_t h, int64_t w, Rng& rng, DType dt = DType::f32);

/// Applies the degradation. Noise draws from the RNG; blurs are deterministic
/// apart from the motion-blur direction.
Tensor degrade(const Tensor& clean, const DegradeSpec& spec, Rng& rng);

struct Pair {
  Tensor input;   // degraded
  Tensor target;  // clean
};

struct AugmentConfig {
  bool hflip = true, vflip = true, rot90 = true;
  double mixup_p = 0.5;
  double mixup_alpha = 1.2;
};

Tensor random_crop(const Tensor& img, int64_t patch, Rng& rng, int64_t* oy = nullptr,
                   int64_t* ox = nullptr);
Tensor crop_at(const Tensor& img, int64_t oy, int64_t ox, int64_t patch);

/// Same geometric transform on both images of each pair; MixUp blends a pair
/// with a random partner pair from the batch (inputs and targets alike).
void augment_batch(std::vector<Pair>& batch, const AugmentConfig& cfg, Rng& rng);

/// Geometric-only helpers (exposed for tests).
Tensor flip_h(const Tensor& img);
Tensor flip_v(const Tensor& img);
Tensor rot90_k(const Tensor& img, int k);

}  // namespace maxim
