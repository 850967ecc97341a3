#include "maxim/layers.hpp"

#include <numeric>

namespace maxim {

Dense Dense::make(ParamBuilder pb, int64_t in, int64_t out, Init init, bool bias,
                  double init_arg) {
  Dense d;
  d.in = in;
  d.out = out;
  d.has_bias = bias;
  d.w = pb.param("w", {in, out}, init, init_arg);
  if (bias) d.b = pb.param("b", {out}, Init::Zeros);
  return d;
}

Tensor Dense::operator()(Session& s, const Tensor& x) const {
  return dense(x, s[w], has_bias ? s[b] : Tensor());
}

void Dense::count(CostCounter& c, int64_t positions) const {
  c.more(static_cast<uint64_t>(positions) * in * out,
         has_bias ? static_cast<uint64_t>(positions) * out : 0);
}

Conv2d Conv2d::make(ParamBuilder pb, int64_t kh, int64_t kw, int64_t cin, int64_t cout,
                    int stride, Padding pad, bool bias) {
  Conv2d cv;
  cv.kh = kh;
  cv.kw = kw;
  cv.cin = cin;
  cv.cout = cout;
  cv.stride = stride;
  cv.pad = pad;
  cv.has_bias = bias;
  // lecun over fan-in = kh*kw*cin
  double std = 1.0 / std::sqrt(static_cast<double>(kh * kw * cin));
  cv.k = pb.param("k", {kh, kw, cin, cout}, Init::Normal, std);
  if (bias) cv.b = pb.param("b", {cout}, Init::Zeros);
  return cv;
}

Tensor Conv2d::operator()(Session& s, const Tensor& x) const {
  Tensor y = conv2d(x, s[k], stride, pad);
  if (has_bias) y = add(y, s[b]);
  return y;
}

void Conv2d::count(CostCounter& c, int64_t out_positions) const {
  c.more(static_cast<uint64_t>(out_positions) * kh * kw * cin * cout,
         has_bias ? static_cast<uint64_t>(out_positions) * cout : 0);
}

Norm Norm::make(ParamBuilder pb, int64_t ch) {
  Norm n;
  n.ch = ch;
  n.gamma = pb.param("gamma", {ch}, Init::Ones);
  n.beta = pb.param("beta", {ch}, Init::Zeros);
  return n;
}

Tensor Norm::operator()(Session& s, const Tensor& x) const {
  return layernorm(x, s[gamma], s[beta]);
}

void Norm::count(CostCounter& c, int64_t positions) const {
  c.more(0, static_cast<uint64_t>(positions) * ch * kCostLayerNorm);
}

SpatialProj SpatialProj::make(ParamBuilder pb, int64_t len) {
  SpatialProj p;
  p.len = len;
  p.w = pb.param("w", {len, len}, Init::Normal, 1e-3 / static_cast<double>(len));
  p.b = pb.param("b", {len}, Init::Ones);
  return p;
}

Tensor SpatialProj::operator()(Session& s, const Tensor& x) const {
  int r = x.rank();
  std::vector<int> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[r - 1], perm[r - 2]);
  Tensor t = transpose(x, perm);  // [..., C, L]
  t = dense(t, s[w], s[b]);
  return transpose(t, perm);
}

void SpatialProj::count(CostCounter& c, int64_t rows) const {
  c.more(static_cast<uint64_t>(rows) * len * len, static_cast<uint64_t>(rows) * len);
}

}  // namespace maxim
