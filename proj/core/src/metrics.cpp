#include "maxim/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace maxim {

namespace {
void require_image(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected [N,H,W,C]");
}

std::vector<double> to_doubles(const Tensor& t) {
  std::vector<double> v(t.numel());
  for (int64_t i = 0; i < t.numel(); ++i) v[i] = t.at(i);
  return v;
}
}  // namespace

Tensor luma601(const Tensor& rgb) {
  require_image(rgb, "luma601");
  if (rgb.dim(3) != 3) throw ShapeError("luma601: expected 3 channels");
  int64_t n = rgb.dim(0), h = rgb.dim(1), w = rgb.dim(2);
  Tensor out = Tensor::zeros({n, h, w, 1}, DType::f64);
  auto po = out.raw_mutable<double>();
  for (int64_t i = 0; i < n * h * w; ++i) {
    double r = rgb.at(3 * i), g = rgb.at(3 * i + 1), b = rgb.at(3 * i + 2);
    po[i] = 0.299 * r + 0.587 * g + 0.114 * b;
  }
  return out;
}

double psnr(const Tensor& a, const Tensor& b, double peak, bool y_only) {
  require_image(a, "psnr");
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch");
  if (peak <= 0) throw ShapeError("psnr: peak must be positive");
  Tensor x = y_only ? luma601(a) : a;
  Tensor y = y_only ? luma601(b) : b;
  double mse = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double d = x.at(i) - y.at(i);
    mse += d * d;
  }
  mse /= static_cast<double>(x.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a, const Tensor& b, bool y_only) {
  require_image(a, "ssim");
  if (a.shape() != b.shape()) throw ShapeError("ssim: shape mismatch");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;  // (K1 L)^2, L = 1
  constexpr double kC2 = 0.03 * 0.03;
  Tensor x = y_only ? luma601(a) : a;
  Tensor y = y_only ? luma601(b) : b;
  int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h < kWin || w < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");

  double win[kWin];
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    win[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += win[i];
  }
  for (double& v : win) v /= sum;

  std::vector<double> xa = to_doubles(x), yb = to_doubles(y);
  auto at = [&](const std::vector<double>& v, int64_t bi, int64_t yy, int64_t xx, int64_t ch) {
    return v[((bi * h + yy) * w + xx) * c + ch];
  };

  // separable Gaussian filtering of the five moment maps, valid positions only
  int64_t oh = h - kWin + 1, ow = w - kWin + 1;
  double total = 0;
  int64_t count = 0;
  std::vector<double> rowbuf(5);
  for (int64_t bi = 0; bi < n; ++bi)
    for (int64_t ch = 0; ch < c; ++ch) {
      // horizontal pass
      std::vector<double> mx(h * ow), my(h * ow), mxx(h * ow), myy(h * ow), mxy(h * ow);
      for (int64_t yy = 0; yy < h; ++yy)
        for (int64_t xx = 0; xx < ow; ++xx) {
          double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
          for (int k = 0; k < kWin; ++k) {
            double xv = at(xa, bi, yy, xx + k, ch);
            double yv = at(yb, bi, yy, xx + k, ch);
            sx += win[k] * xv;
            sy += win[k] * yv;
            sxx += win[k] * xv * xv;
            syy += win[k] * yv * yv;
            sxy += win[k] * xv * yv;
          }
          mx[yy * ow + xx] = sx;
          my[yy * ow + xx] = sy;
          mxx[yy * ow + xx] = sxx;
          myy[yy * ow + xx] = syy;
          mxy[yy * ow + xx] = sxy;
        }
      // vertical pass + SSIM map
      for (int64_t yy = 0; yy < oh; ++yy)
        for (int64_t xx = 0; xx < ow; ++xx) {
          double ux = 0, uy = 0, uxx = 0, uyy = 0, uxy = 0;
          for (int k = 0; k < kWin; ++k) {
            ux += win[k] * mx[(yy + k) * ow + xx];
            uy += win[k] * my[(yy + k) * ow + xx];
            uxx += win[k] * mxx[(yy + k) * ow + xx];
            uyy += win[k] * myy[(yy + k) * ow + xx];
            uxy += win[k] * mxy[(yy + k) * ow + xx];
          }
          double vx = uxx - ux * ux;
          double vy = uyy - uy * uy;
          double cov = uxy - ux * uy;
          double val = ((2 * ux * uy + kC1) * (2 * cov + kC2)) /
                       ((ux * ux + uy * uy + kC1) * (vx + vy + kC2));
          total += val;
          ++count;
        }
    }
  return total / static_cast<double>(count);
}

}  // namespace maxim
