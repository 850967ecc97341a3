#include "maxim/blocks.hpp"

namespace maxim {

// ---- multi-axis block ---------------------------------------------------------

MultiAxisBlock MultiAxisBlock::make(ParamBuilder pb, int64_t channels, int b, int d,
                                    MixerKind kind, bool wide, DType dt) {
  if (!wide && channels % 2 != 0)
    throw ShapeError("multi-axis block: narrow split needs even channel count");
  MultiAxisBlock m;
  m.scope = pb.prefix();
  if (!m.scope.empty()) m.scope.pop_back();  // drop trailing '/'
  m.channels = channels;
  m.b = b;
  m.d = d;
  m.wide = wide;
  int64_t inner = wide ? 2 * channels : channels;
  int64_t bw = inner / 2;  // branch width
  m.ln = Norm::make(pb.sub("ln"), channels);
  m.in_proj = Dense::make(pb.sub("in_proj"), channels, inner);
  m.local = make_mixer(pb.sub("local"),
                       MixerSpec{kind, static_cast<int64_t>(b) * b, bw, 2, 0}, dt);
  m.global_ = make_mixer(pb.sub("global"),
                         MixerSpec{kind, static_cast<int64_t>(d) * d, bw, 2, 0}, dt);
  m.out_proj = Dense::make(pb.sub("out_proj"), inner, channels);
  return m;
}

Tensor MultiAxisBlock::forward(Session& s, const Tensor& x) const {
  if (x.rank() != 4 || x.dim(3) != channels)
    throw ShapeError("multi-axis block: input must be [N,H,W,C] with C = " +
                     std::to_string(channels));
  int64_t bw = (wide ? 2 * channels : channels) / 2;
  Tensor y = ln(s, x);
  y = gelu(in_proj(s, y));
  Tensor u_loc = slice(y, -1, 0, bw);
  Tensor u_glob = slice(y, -1, bw, bw);

  PartitionView loc = block(u_loc, b);
  loc = mix_on_axis(loc, [&](const Tensor& t) { return mixer_forward(local, s, t); },
                    MixAxis::Within);
  Tensor local_out = invert(loc);

  PartitionView glob = grid(u_glob, d);
  glob = mix_on_axis(glob, [&](const Tensor& t) { return mixer_forward(global_, s, t); },
                     MixAxis::Group);
  Tensor global_out = invert(glob);

  Tensor fused = out_proj(s, concat({local_out, global_out}, -1));
  return add(x, fused);
}

void MultiAxisBlock::count(CostCounter& c, int64_t h, int64_t w) const {
  int64_t hw = h * w;
  int64_t inner = wide ? 2 * channels : channels;
  c.leaf(scope, 0, 0);
  ln.count(c, hw);
  in_proj.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * inner * kCostGelu);
  // local: lead = N groups = hw / b^2; global: lead = positions = hw / d^2
  mixer_count(local, c, hw / (static_cast<int64_t>(b) * b));
  mixer_count(global_, c, hw / (static_cast<int64_t>(d) * d));
  out_proj.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * channels * kCostAdd);  // long skip
}

// ---- cross-gating block ---------------------------------------------------------

CrossGatingBlock CrossGatingBlock::make(ParamBuilder pb, int64_t channels, int b, int d,
                                        DType /*dt*/) {
  CrossGatingBlock g;
  g.scope = pb.prefix();
  if (!g.scope.empty()) g.scope.pop_back();
  g.channels = channels;
  g.b = b;
  g.d = d;
  g.proj_x = Dense::make(pb.sub("proj_x"), channels, channels);
  g.proj_y = Dense::make(pb.sub("proj_y"), channels, channels);
  g.ln_x = Norm::make(pb.sub("ln_x"), channels);
  g.ln_y = Norm::make(pb.sub("ln_y"), channels);
  g.w1 = Dense::make(pb.sub("w1"), channels, channels);
  g.w2 = Dense::make(pb.sub("w2"), channels, channels);
  auto make_ex = [&](ParamBuilder epb) {
    Extractor ex;
    ex.ln = Norm::make(epb.sub("ln"), channels);
    ex.to_halves = Dense::make(epb.sub("w6"), channels, 2 * channels);
    ex.block_proj = SpatialProj::make(epb.sub("w3"), static_cast<int64_t>(b) * b);
    ex.grid_proj = SpatialProj::make(epb.sub("w4"), static_cast<int64_t>(d) * d);
    ex.fuse = Dense::make(epb.sub("w5"), 2 * channels, channels);
    return ex;
  };
  g.ex_x = make_ex(pb.sub("gate_x"));
  g.ex_y = make_ex(pb.sub("gate_y"));
  g.w7 = Dense::make(pb.sub("w7"), channels, channels);
  g.w8 = Dense::make(pb.sub("w8"), channels, channels);
  return g;
}

Tensor CrossGatingBlock::gating(Session& s, const Extractor& ex, const Tensor& t) const {
  Tensor z = gelu(ex.to_halves(s, ex.ln(s, t)));
  Tensor z1 = slice(z, -1, 0, channels);
  Tensor z2 = slice(z, -1, channels, channels);
  PartitionView bv = block(z1, b);
  bv = mix_on_axis(bv, [&](const Tensor& v) { return ex.block_proj(s, v); }, MixAxis::Within);
  Tensor g1 = invert(bv);
  PartitionView gv = grid(z2, d);
  gv = mix_on_axis(gv, [&](const Tensor& v) { return ex.grid_proj(s, v); }, MixAxis::Group);
  Tensor g2 = invert(gv);
  return ex.fuse(s, concat({g1, g2}, -1));
}

std::pair<Tensor, Tensor> CrossGatingBlock::forward(Session& s, const Tensor& x,
                                                    const Tensor& y) const {
  if (x.shape() != y.shape())
    throw ShapeError("cross-gating block: inputs must share extents, got " +
                     shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  Tensor x1 = proj_x(s, x);
  Tensor y1 = proj_y(s, y);
  Tensor x2 = gelu(w1(s, ln_x(s, x1)));
  Tensor y2 = gelu(w2(s, ln_y(s, y1)));
  Tensor gx = gating(s, ex_x, x2);
  Tensor gy = gating(s, ex_y, y2);
  Tensor xh = mul(x2, gy);  // gating weights applied reciprocally
  Tensor yh = mul(y2, gx);
  Tensor x3 = add(x1, w7(s, xh));
  Tensor y3 = add(y1, w8(s, yh));
  return {x3, y3};
}

void CrossGatingBlock::count(CostCounter& c, int64_t h, int64_t w) const {
  int64_t hw = h * w;
  c.leaf(scope, 0, 0);
  proj_x.count(c, hw);
  proj_y.count(c, hw);
  ln_x.count(c, hw);
  ln_y.count(c, hw);
  w1.count(c, hw);
  w2.count(c, hw);
  c.more(0, 2ull * hw * channels * kCostGelu);
  for (const Extractor* ex : {&ex_x, &ex_y}) {
    ex->ln.count(c, hw);
    ex->to_halves.count(c, hw);
    c.more(0, 2ull * hw * channels * kCostGelu);
    ex->block_proj.count(c, hw * channels / (static_cast<int64_t>(b) * b));
    ex->grid_proj.count(c, hw * channels / (static_cast<int64_t>(d) * d));
    ex->fuse.count(c, hw);
  }
  c.more(0, 2ull * hw * channels * kCostMul);  // reciprocal gates
  w7.count(c, hw);
  w8.count(c, hw);
  c.more(0, 2ull * hw * channels * kCostAdd);  // residuals
}

// ---- residual channel attention --------------------------------------------------

ChannelAttentionBlock ChannelAttentionBlock::make(ParamBuilder pb, int64_t channels,
                                                  int reduction, bool bottleneck_1x1,
                                                  DType /*dt*/) {
  if (channels % reduction != 0)
    throw ShapeError("channel attention: reduction must divide channel count");
  ChannelAttentionBlock r;
  r.scope = pb.prefix();
  if (!r.scope.empty()) r.scope.pop_back();
  r.channels = channels;
  r.reduction = reduction;
  int64_t k = bottleneck_1x1 ? 1 : 3;
  r.ln = Norm::make(pb.sub("ln"), channels);
  r.conv1 = Conv2d::make(pb.sub("conv1"), k, k, channels, channels);
  r.conv2 = Conv2d::make(pb.sub("conv2"), k, k, channels, channels);
  r.se_down = Dense::make(pb.sub("se_down"), channels, channels / reduction);
  r.se_up = Dense::make(pb.sub("se_up"), channels / reduction, channels);
  return r;
}

Tensor ChannelAttentionBlock::forward(Session& s, const Tensor& x) const {
  Tensor y = conv2(s, leaky_relu(conv1(s, ln(s, x)), 0.2));
  Tensor pooled = reduce_mean(y, {1, 2}, /*keepdims=*/true);  // [N,1,1,C]
  Tensor gate = sigmoid_op(se_up(s, gelu(se_down(s, pooled))));
  return add(x, mul(y, gate));
}

void ChannelAttentionBlock::count(CostCounter& c, int64_t h, int64_t w) const {
  int64_t hw = h * w;
  c.leaf(scope, 0, 0);
  ln.count(c, hw);
  conv1.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * channels * kCostLeakyRelu);
  conv2.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * channels * kCostAdd);  // pooling pass
  // The squeeze/excite bottleneck runs on the pooled vector: per-image
  // constant work, independent of image size and below one pixel's dense
  // cost. Excluded so whole-model counts stay exactly linear in H*W.
  c.more(0, static_cast<uint64_t>(hw) * channels * (kCostMul + kCostAdd));  // scale + skip
}

// ---- supervised attention ----------------------------------------------------------

SupervisedAttention SupervisedAttention::make(ParamBuilder pb, int64_t channels, DType /*dt*/) {
  SupervisedAttention m;
  m.scope = pb.prefix();
  if (!m.scope.empty()) m.scope.pop_back();
  m.channels = channels;
  m.to_image = Conv2d::make(pb.sub("to_image"), 3, 3, channels, 3);
  m.attn = Conv2d::make(pb.sub("attn"), 3, 3, 3, channels);
  m.feat = Conv2d::make(pb.sub("feat"), 3, 3, channels, channels);
  return m;
}

std::pair<Tensor, Tensor> SupervisedAttention::forward(Session& s, const Tensor& f,
                                                       const Tensor& img) const {
  if (f.dim(1) != img.dim(1) || f.dim(2) != img.dim(2))
    throw ShapeError("supervised attention: feature/image extents differ");
  Tensor restored = add(to_image(s, f), img);
  Tensor a = sigmoid_op(attn(s, restored));
  Tensor features = add(mul(feat(s, f), a), f);
  return {features, restored};
}

void SupervisedAttention::count(CostCounter& c, int64_t h, int64_t w) const {
  int64_t hw = h * w;
  c.leaf(scope, 0, 0);
  to_image.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * 3 * kCostAdd);
  attn.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * channels * kCostSigmoid);
  feat.count(c, hw);
  c.more(0, static_cast<uint64_t>(hw) * channels * (kCostMul + kCostAdd));
}

}  // namespace maxim
