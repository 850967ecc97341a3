#include "maxim/data.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace maxim {

DegradeKind degrade_kind_from_string(const std::string& s) {
  if (s == "gaussian_noise") return DegradeKind::GaussianNoise;
  if (s == "box_blur") return DegradeKind::BoxBlur;
  if (s == "motion_blur") return DegradeKind::MotionBlur;
  throw Error("unknown degradation kind: " + s);
}

Tensor make_clean_image(int64_t h, int64_t w, Rng& rng, DType dt) {
  std::vector<double> img(h * w * 3, 0.0);
  auto px = [&](int64_t y, int64_t x, int c) -> double& { return img[(y * w + x) * 3 + c]; };

  // base gradient
  double gx[3], gy[3], base[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = 0.25 + 0.5 * rng.uniform();
    gx[c] = (rng.uniform() - 0.5) * 0.6;
    gy[c] = (rng.uniform() - 0.5) * 0.6;
  }
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        px(y, x, c) = base[c] + gx[c] * (static_cast<double>(x) / w - 0.5) +
                      gy[c] * (static_cast<double>(y) / h - 0.5);

  // soft shapes
  int shapes = static_cast<int>(rng.uniform_int(4, 9));
  for (int si = 0; si < shapes; ++si) {
    double cx = rng.uniform() * w, cy = rng.uniform() * h;
    double rad = (0.08 + 0.25 * rng.uniform()) * std::min(h, w);
    bool rect = rng.bernoulli(0.5);
    double col[3];
    for (int c = 0; c < 3; ++c) col[c] = rng.uniform() - 0.5;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double dx = x - cx, dy = y - cy;
        double dist = rect ? std::max(std::abs(dx), std::abs(dy)) : std::sqrt(dx * dx + dy * dy);
        if (dist < rad) {
          double t = 1.0 - dist / rad;
          for (int c = 0; c < 3; ++c) px(y, x, c) += col[c] * std::min(1.0, 3.0 * t);
        }
      }
  }

  // sinusoidal texture
  double fx = 2.0 * M_PI * (1.0 + 5.0 * rng.uniform()) / w;
  double fy = 2.0 * M_PI * (1.0 + 5.0 * rng.uniform()) / h;
  double amp = 0.04 + 0.06 * rng.uniform();
  double phase = rng.uniform() * 2.0 * M_PI;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double v = amp * std::sin(fx * x + fy * y + phase);
      for (int c = 0; c < 3; ++c) px(y, x, c) += v;
    }

  Tensor t = Tensor::zeros({1, h, w, 3}, dt);
  dispatch_dtype(dt, [&](auto tag) {
    using T = decltype(tag);
    auto p = t.raw_mutable<T>();
    for (size_t i = 0; i < img.size(); ++i)
      p[i] = static_cast<T>(std::clamp(img[i], 0.0, 1.0));
  });
  return t;
}

namespace {

int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

Tensor convolve_kernel(const Tensor& img, const std::vector<double>& k, int64_t kh, int64_t kw) {
  int64_t n = img.dim(0), h = img.dim(1), w = img.dim(2), c = img.dim(3);
  Tensor out = Tensor::zeros(img.shape(), img.dtype());
  dispatch_dtype(img.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = img.data<T>();
    auto dst = out.raw_mutable<T>();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          for (int64_t ch = 0; ch < c; ++ch) {
            double acc = 0;
            for (int64_t dy = 0; dy < kh; ++dy)
              for (int64_t dx = 0; dx < kw; ++dx) {
                int64_t iy = reflect(y + dy - kh / 2, h);
                int64_t ix = reflect(x + dx - kw / 2, w);
                acc += k[dy * kw + dx] * src[((b * h + iy) * w + ix) * c + ch];
              }
            dst[((b * h + y) * w + x) * c + ch] = static_cast<T>(acc);
          }
  });
  return out;
}

}  // namespace

Tensor degrade(const Tensor& clean, const DegradeSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case DegradeKind::GaussianNoise: {
      if (spec.sigma < 0) throw Error("degrade: sigma must be >= 0");
      if (spec.sigma == 0) return clean.detached();
      double s = spec.sigma / 255.0;
      Tensor out = Tensor::zeros(clean.shape(), clean.dtype());
      dispatch_dtype(clean.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = clean.data<T>();
        auto dst = out.raw_mutable<T>();
        for (int64_t i = 0; i < clean.numel(); ++i)
          dst[i] = static_cast<T>(src[i] + s * rng.normal());
      });
      return out;
    }
    case DegradeKind::BoxBlur: {
      if (spec.kernel < 1) throw Error("degrade: kernel must be >= 1");
      int64_t k = spec.kernel;
      std::vector<double> kern(k * k, 1.0 / static_cast<double>(k * k));
      return convolve_kernel(clean, kern, k, k);
    }
    case DegradeKind::MotionBlur: {
      if (spec.kernel < 1) throw Error("degrade: kernel must be >= 1");
      int64_t len = spec.kernel;
      // directional line kernel on a len x len grid
      double angle = rng.uniform() * M_PI;
      int64_t sz = len;
      std::vector<double> kern(sz * sz, 0.0);
      double cx = (sz - 1) / 2.0, cy = (sz - 1) / 2.0;
      double dx = std::cos(angle), dy = std::sin(angle);
      int64_t taps = 0;
      for (int64_t t = -(sz / 2); t <= sz / 2; ++t) {
        int64_t x = static_cast<int64_t>(std::lround(cx + t * dx));
        int64_t y = static_cast<int64_t>(std::lround(cy + t * dy));
        if (x >= 0 && x < sz && y >= 0 && y < sz && kern[y * sz + x] == 0.0) {
          kern[y * sz + x] = 1.0;
          ++taps;
        }
      }
      for (double& v : kern) v /= static_cast<double>(taps);
      return convolve_kernel(clean, kern, sz, sz);
    }
  }
  throw Error("unreachable degrade kind");
}

Tensor crop_at(const Tensor& img, int64_t oy, int64_t ox, int64_t patch) {
  int64_t n = img.dim(0), c = img.dim(3);
  Tensor out = Tensor::zeros({n, patch, patch, c}, img.dtype());
  int64_t w = img.dim(2);
  dispatch_dtype(img.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = img.data<T>();
    auto dst = out.raw_mutable<T>();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t y = 0; y < patch; ++y)
        std::copy_n(src.data() + ((b * img.dim(1) + oy + y) * w + ox) * c, patch * c,
                    dst.data() + ((b * patch + y) * patch) * c);
  });
  return out;
}

Tensor random_crop(const Tensor& img, int64_t patch, Rng& rng, int64_t* oy_out, int64_t* ox_out) {
  if (img.dim(1) < patch || img.dim(2) < patch)
    throw ShapeError("random_crop: image smaller than patch");
  int64_t oy = rng.uniform_int(0, img.dim(1) - patch);
  int64_t ox = rng.uniform_int(0, img.dim(2) - patch);
  if (oy_out) *oy_out = oy;
  if (ox_out) *ox_out = ox;
  return crop_at(img, oy, ox, patch);
}

namespace {
Tensor geom_map(const Tensor& img, const std::function<std::pair<int64_t, int64_t>(
                                       int64_t, int64_t, int64_t, int64_t)>& map,
                bool swap_hw) {
  int64_t n = img.dim(0), h = img.dim(1), w = img.dim(2), c = img.dim(3);
  int64_t oh = swap_hw ? w : h, ow = swap_hw ? h : w;
  Tensor out = Tensor::zeros({n, oh, ow, c}, img.dtype());
  dispatch_dtype(img.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = img.data<T>();
    auto dst = out.raw_mutable<T>();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          auto [sy, sx] = map(y, x, h, w);
          std::copy_n(src.data() + ((b * h + sy) * w + sx) * c, c,
                      dst.data() + ((b * oh + y) * ow + x) * c);
        }
  });
  return out;
}
}  // namespace

Tensor flip_h(const Tensor& img) {
  return geom_map(img, [](int64_t y, int64_t x, int64_t, int64_t w) {
    return std::pair<int64_t, int64_t>{y, w - 1 - x};
  }, false);
}

Tensor flip_v(const Tensor& img) {
  return geom_map(img, [](int64_t y, int64_t x, int64_t h, int64_t) {
    return std::pair<int64_t, int64_t>{h - 1 - y, x};
  }, false);
}

Tensor rot90_k(const Tensor& img, int k) {
  k = ((k % 4) + 4) % 4;
  Tensor t = img.detached();
  for (int i = 0; i < k; ++i) {
    // 90 degrees counterclockwise: out(y, x) = in(x, W-1-y) on the current extents
    t = geom_map(t, [](int64_t y, int64_t x, int64_t, int64_t w) {
      return std::pair<int64_t, int64_t>{x, w - 1 - y};
    }, true);
  }
  return t;
}

void augment_batch(std::vector<Pair>& batch, const AugmentConfig& cfg, Rng& rng) {
  for (Pair& p : batch) {
    if (cfg.hflip && rng.bernoulli(0.5)) {
      p.input = flip_h(p.input);
      p.target = flip_h(p.target);
    }
    if (cfg.vflip && rng.bernoulli(0.5)) {
      p.input = flip_v(p.input);
      p.target = flip_v(p.target);
    }
    if (cfg.rot90 && rng.bernoulli(0.5)) {
      int k = static_cast<int>(rng.uniform_int(1, 3));
      p.input = rot90_k(p.input, k);
      p.target = rot90_k(p.target, k);
    }
  }
  if (cfg.mixup_p > 0 && batch.size() > 1) {
    std::vector<Pair> source = batch;  // pre-mix copies
    for (size_t i = 0; i < batch.size(); ++i) {
      if (!rng.bernoulli(cfg.mixup_p)) continue;
      size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(batch.size()) - 1));
      double gamma = rng.beta(cfg.mixup_alpha, cfg.mixup_alpha);
      auto blend = [&](const Tensor& a, const Tensor& b) {
        Tensor out = Tensor::zeros(a.shape(), a.dtype());
        dispatch_dtype(a.dtype(), [&](auto tag) {
          using T = decltype(tag);
          auto pa = a.data<T>();
          auto pb = b.data<T>();
          auto po = out.raw_mutable<T>();
          for (int64_t k = 0; k < a.numel(); ++k)
            po[k] = static_cast<T>(gamma * pa[k] + (1.0 - gamma) * pb[k]);
        });
        return out;
      };
      batch[i].input = blend(source[i].input, source[j].input);
      batch[i].target = blend(source[i].target, source[j].target);
    }
  }
}

}  // namespace maxim
