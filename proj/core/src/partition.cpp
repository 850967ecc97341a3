#include "maxim/partition.hpp"

namespace maxim {

namespace {
void require_divisible(int64_t h, int64_t w, int window, const char* what) {
  if (window < 1) throw ShapeError(std::string(what) + ": window must be positive");
  if (h % window != 0 || w % window != 0)
    throw ShapeError(std::string(what) + ": extents (" + std::to_string(h) + "," +
                     std::to_string(w) + ") not divisible by " + std::to_string(window));
}
}  // namespace

PartitionView block(const Tensor& x, int b) {
  if (x.rank() != 4) throw ShapeError("block: input must be [N,H,W,C]");
  int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require_divisible(h, w, b, "block");
  int64_t gh = h / b, gw = w / b;
  // [N, gh, b, gw, b, C] -> [N, gh, gw, b, b, C] -> [N, gh*gw, b*b, C]
  Tensor t = reshape(x, {n, gh, b, gw, b, c});
  t = transpose(t, {0, 1, 3, 2, 4, 5});
  t = reshape(t, {n, gh * gw, static_cast<int64_t>(b) * b, c});
  return PartitionView{PartitionKind::Block, b, h, w, t};
}

PartitionView grid(const Tensor& x, int d) {
  if (x.rank() != 4) throw ShapeError("grid: input must be [N,H,W,C]");
  int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  require_divisible(h, w, d, "grid");
  int64_t ph = h / d, pw = w / d;
  // h = gi*(H/d) + pi with the grid coordinate as the coarse factor:
  // [N, d, ph, d, pw, C] -> [N, d, d, ph, pw, C] -> [N, d*d, ph*pw, C]
  Tensor t = reshape(x, {n, d, ph, d, pw, c});
  t = transpose(t, {0, 1, 3, 2, 4, 5});
  t = reshape(t, {n, static_cast<int64_t>(d) * d, ph * pw, c});
  return PartitionView{PartitionKind::Grid, d, h, w, t};
}

Tensor invert(const PartitionView& v) {
  const Tensor& t = v.tensor;
  if (t.rank() != 4) throw ShapeError("invert: view tensor must be [N,G,P,C]");
  int64_t n = t.dim(0), c = t.dim(3);
  int64_t h = v.src_h, w = v.src_w;
  int win = v.window;
  if (h % win != 0 || w % win != 0) throw ShapeError("invert: stale source extents");
  if (v.kind == PartitionKind::Block) {
    int64_t gh = h / win, gw = w / win;
    if (t.dim(1) != gh * gw || t.dim(2) != static_cast<int64_t>(win) * win)
      throw ShapeError("invert: view shape inconsistent with source extents");
    Tensor r = reshape(t, {n, gh, gw, win, win, c});
    r = transpose(r, {0, 1, 3, 2, 4, 5});
    return reshape(r, {n, h, w, c});
  }
  int64_t ph = h / win, pw = w / win;
  if (t.dim(1) != static_cast<int64_t>(win) * win || t.dim(2) != ph * pw)
    throw ShapeError("invert: view shape inconsistent with source extents");
  Tensor r = reshape(t, {n, win, win, ph, pw, c});
  r = transpose(r, {0, 1, 3, 2, 4, 5});
  return reshape(r, {n, h, w, c});
}

PartitionView mix_on_axis(const PartitionView& v, const Mixer1dFn& mixer, MixAxis axis) {
  PartitionView out = v;
  if (axis == MixAxis::Within) {
    out.tensor = mixer(v.tensor);  // [N, G, P, C], L = P
  } else {
    Tensor t = transpose(v.tensor, {0, 2, 1, 3});  // [N, P, G, C], L = G
    t = mixer(t);
    out.tensor = transpose(t, {0, 2, 1, 3});
  }
  if (out.tensor.shape() != v.tensor.shape())
    throw ShapeError("mix_on_axis: mixer changed the view shape");
  return out;
}

}  // namespace maxim
