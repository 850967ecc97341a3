#include <doctest.h>

#include "helpers.hpp"
#include "maxim/blocks.hpp"
#include "maxim/costing.hpp"
#include "maxim/gradcheck.hpp"
#include "maxim/verify.hpp"

using namespace maxim;

namespace {
void zero_param(ParamStore& st, const std::string& name) {
  int idx = st.find(name);
  REQUIRE(idx >= 0);
  st.set_value(idx, Tensor::zeros(st.value(idx).shape(), st.dtype()));
}
void fill_param(ParamStore& st, const std::string& name, double v) {
  int idx = st.find(name);
  REQUIRE(idx >= 0);
  st.set_value(idx, Tensor::full(st.value(idx).shape(), v, st.dtype()));
}
void copy_param(ParamStore& st, const std::string& from, const std::string& to) {
  int a = st.find(from), b = st.find(to);
  REQUIRE(a >= 0);
  REQUIRE(b >= 0);
  st.set_value(b, st.value(a));
}
}  // namespace

TEST_CASE("multi-axis block: split-head view shapes on the 6x4 example") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(1);
  ParamBuilder pb(st, rng);
  // narrow split: C -> C projection, each branch runs at C/2
  auto mab = MultiAxisBlock::make(pb.sub("mab"), 4, 2, 2, MixerKind::Gmlp, false, DType::f64);
  Rng drng(2);
  Tensor x = tt::randn({1, 6, 4, 4}, drng);
  // branch views: blocked (1, 6 windows, 4 elems, C/2), gridded (1, 4, 6, C/2)
  Tensor half = slice(x, -1, 0, 2);
  CHECK(block(half, 2).tensor.shape() == Shape{1, 6, 4, 2});
  CHECK(grid(half, 2).tensor.shape() == Shape{1, 4, 6, 2});
  Session s(st);
  Tensor y = mab.forward(s, x);
  CHECK(y.shape() == x.shape());
}

TEST_CASE("multi-axis block collapses to the identity with a zero output projection") {
  for (bool wide : {true, false}) {
    ParamStore st;
    st.set_dtype(DType::f64);
    Rng rng(3);
    ParamBuilder pb(st, rng);
    auto mab = MultiAxisBlock::make(pb.sub("mab"), 4, 2, 2, MixerKind::Gmlp, wide, DType::f64);
    zero_param(st, "mab/out_proj/w");
    zero_param(st, "mab/out_proj/b");
    Rng drng(4);
    Tensor x = tt::randn({1, 4, 4, 4}, drng);
    Session s(st);
    CHECK(tt::max_abs_diff(mab.forward(s, x), x) < 1e-12);
  }
}

TEST_CASE("multi-axis block impulse support is the window united with the lattice") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(5);
  ParamBuilder pb(st, rng);
  const int b = 4, d = 4;  // on 8x8: 4x4 window, lattice spacing 2
  auto mab = MultiAxisBlock::make(pb.sub("mab"), 4, b, d, MixerKind::Gmlp, true, DType::f64);
  Session s(st);
  Rng drng(6);
  Tensor base = tt::randn({1, 8, 8, 4}, drng, 0.3);
  const int64_t py = 5, px = 2;
  Tensor poked = Tensor::zeros({1, 8, 8, 4}, DType::f64);
  for (int64_t i = 0; i < base.numel(); ++i) poked.raw_mutable<double>()[i] = base.at(i);
  poked.raw_mutable<double>()[(py * 8 + px) * 4] += 0.5;
  Tensor ya = mab.forward(s, base);
  Session s2(st);
  Tensor yb = mab.forward(s2, poked);
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 8; ++x) {
      double delta = 0;
      for (int c = 0; c < 4; ++c)
        delta = std::max(delta, std::abs(ya.at((y * 8 + x) * 4 + c) -
                                          yb.at((y * 8 + x) * 4 + c)));
      bool in_window = (y / b == py / b) && (x / b == px / b);
      bool on_lattice = (y % (8 / d) == py % (8 / d)) && (x % (8 / d) == px % (8 / d));
      if (in_window || on_lattice)
        CHECK(delta > 0);
      else
        CHECK(delta == 0.0);
    }
}

TEST_CASE("multi-axis block is fully convolutional") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(7);
  ParamBuilder pb(st, rng);
  auto mab = MultiAxisBlock::make(pb.sub("mab"), 4, 2, 2, MixerKind::Gmlp, true, DType::f64);
  // one parameter set evaluates on any divisible extents
  Session s(st);
  Tensor small = Tensor::full({1, 4, 4, 4}, 0.3, DType::f64);
  Tensor large = Tensor::full({1, 8, 8, 4}, 0.3, DType::f64);
  Tensor ys = mab.forward(s, small);
  Session s2(st);
  Tensor yl = mab.forward(s2, large);
  // constant input: the tiled output equals the tiled single-tile output
  for (int64_t i = 0; i < 16; ++i)
    CHECK(ys.at(i % 4) == doctest::Approx(ys.at((i / 4) * 16 + (i % 4))));
  CHECK(yl.at(0) == doctest::Approx(ys.at(0)).epsilon(1e-10));
}

TEST_CASE("closed-form block cost") {
  CHECK(mab_flops(256, 256, 32, 16, 16) == 1744830464ull);
  CHECK(mab_flops(512, 256, 32, 16, 16) == 2 * 1744830464ull);  // linear in H
  CHECK(mab_flops(7, 9, 1, 1, 1) == 12ull * 7 * 9);             // b=d=C=1
}

TEST_CASE("counted block flops stay within the +-15% fidelity band") {
  for (int64_t c : {32, 64}) {
    for (int64_t hw : {64, 128, 256}) {
      ParamStore st;
      Rng rng(8);
      ParamBuilder pb(st, rng);
      auto mab = MultiAxisBlock::make(pb.sub("mab"), c, 16, 16, MixerKind::Gmlp, true,
                                      DType::f32);
      CostCounter cc(st);
      mab.count(cc, hw, hw);
      CostReport rep = cc.finish(hw, hw);
      double counted = static_cast<double>(rep.flops_mac1());
      double formula = static_cast<double>(mab_flops(hw, hw, c, 16, 16));
      double ratio = counted / formula;
      INFO("C=", c, " HW=", hw, " ratio=", ratio);
      CHECK(ratio > 0.85);
      CHECK(ratio < 1.15);
    }
  }
}

TEST_CASE("cross-gating block: zero output projection keeps the first projection") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(9);
  ParamBuilder pb(st, rng);
  auto cgb = CrossGatingBlock::make(pb.sub("cgb"), 4, 2, 2, DType::f64);
  zero_param(st, "cgb/w7/w");
  zero_param(st, "cgb/w7/b");
  // gate weights forced to all-ones (zero fuse weights, unit bias)
  zero_param(st, "cgb/gate_x/w5/w");
  fill_param(st, "cgb/gate_x/w5/b", 1.0);
  zero_param(st, "cgb/gate_y/w5/w");
  fill_param(st, "cgb/gate_y/w5/b", 1.0);
  Rng drng(10);
  Tensor x = tt::randn({1, 4, 4, 4}, drng);
  Tensor y = tt::randn({1, 4, 4, 4}, drng);
  Session s(st);
  auto [x3, y3] = cgb.forward(s, x, y);
  Session s2(st);
  Tensor x1 = cgb.proj_x(s2, x);
  CHECK(tt::max_abs_diff(x3, x1) < 1e-12);
}

TEST_CASE("cross-gating block with ones-gates decouples the two streams") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(11);
  ParamBuilder pb(st, rng);
  auto cgb = CrossGatingBlock::make(pb.sub("cgb"), 4, 2, 2, DType::f64);
  for (const char* side : {"gate_x", "gate_y"}) {
    zero_param(st, std::string("cgb/") + side + "/w5/w");
    fill_param(st, std::string("cgb/") + side + "/w5/b", 1.0);
  }
  Rng drng(12);
  Tensor x = tt::randn({1, 4, 4, 4}, drng);
  Tensor y1 = tt::randn({1, 4, 4, 4}, drng);
  Tensor y2 = tt::randn({1, 4, 4, 4}, drng);
  Session sa(st), sb(st);
  // X3 no longer depends on the other input: a residual channel MLP of x alone
  CHECK(tt::max_abs_diff(cgb.forward(sa, x, y1).first, cgb.forward(sb, x, y2).first) < 1e-12);
}

TEST_CASE("cross-gating block: tied parameters give swap symmetry") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(13);
  ParamBuilder pb(st, rng);
  auto cgb = CrossGatingBlock::make(pb.sub("cgb"), 4, 2, 2, DType::f64);
  // tie: shared first projections, W1 = W2, W7 = W8, one shared extractor
  for (const char* leaf : {"w", "b"}) {
    copy_param(st, std::string("cgb/proj_x/") + leaf, std::string("cgb/proj_y/") + leaf);
    copy_param(st, std::string("cgb/w1/") + leaf, std::string("cgb/w2/") + leaf);
    copy_param(st, std::string("cgb/w7/") + leaf, std::string("cgb/w8/") + leaf);
    copy_param(st, std::string("cgb/gate_x/w6/") + leaf, std::string("cgb/gate_y/w6/") + leaf);
    copy_param(st, std::string("cgb/gate_x/w3/") + leaf, std::string("cgb/gate_y/w3/") + leaf);
    copy_param(st, std::string("cgb/gate_x/w4/") + leaf, std::string("cgb/gate_y/w4/") + leaf);
    copy_param(st, std::string("cgb/gate_x/w5/") + leaf, std::string("cgb/gate_y/w5/") + leaf);
  }
  copy_param(st, "cgb/ln_x/gamma", "cgb/ln_y/gamma");
  copy_param(st, "cgb/ln_x/beta", "cgb/ln_y/beta");
  copy_param(st, "cgb/gate_x/ln/gamma", "cgb/gate_y/ln/gamma");
  copy_param(st, "cgb/gate_x/ln/beta", "cgb/gate_y/ln/beta");
  Rng drng(14);
  Tensor x = tt::randn({1, 4, 4, 4}, drng);
  Tensor y = tt::randn({1, 4, 4, 4}, drng);
  Session sa(st), sb(st);
  auto [x3, y3] = cgb.forward(sa, x, y);
  auto [sx3, sy3] = cgb.forward(sb, y, x);
  CHECK(tt::max_abs_diff(x3, sy3) < 1e-12);
  CHECK(tt::max_abs_diff(y3, sx3) < 1e-12);
}

TEST_CASE("cross-gating block shape contract and extent mismatch") {
  ParamStore st;
  Rng rng(15);
  ParamBuilder pb(st, rng);
  auto cgb = CrossGatingBlock::make(pb.sub("cgb"), 16, 2, 2, DType::f32);
  Rng drng(16);
  Tensor x = tt::randn({1, 8, 8, 16}, drng, 1.0, DType::f32);
  Tensor y = tt::randn({1, 8, 8, 16}, drng, 1.0, DType::f32);
  Session s(st);
  auto [x3, y3] = cgb.forward(s, x, y);
  CHECK(x3.shape() == Shape{1, 8, 8, 16});
  CHECK(y3.shape() == Shape{1, 8, 8, 16});
  Tensor bad = tt::randn({1, 4, 8, 16}, drng, 1.0, DType::f32);
  CHECK_THROWS_AS(cgb.forward(s, x, bad), ShapeError);
}

TEST_CASE("channel attention block: zero second conv collapses to the identity") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(17);
  ParamBuilder pb(st, rng);
  auto rcab = ChannelAttentionBlock::make(pb.sub("rcab"), 8, 4, false, DType::f64);
  zero_param(st, "rcab/conv2/k");
  zero_param(st, "rcab/conv2/b");
  Rng drng(18);
  Tensor x = tt::randn({1, 4, 4, 8}, drng);
  Session s(st);
  CHECK(tt::max_abs_diff(rcab.forward(s, x), x) < 1e-12);
}

TEST_CASE("squeeze-excite gate on a zero-pooled input is sigmoid of the bias path") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(19);
  ParamBuilder pb(st, rng);
  auto rcab = ChannelAttentionBlock::make(pb.sub("rcab"), 8, 4, false, DType::f64);
  fill_param(st, "rcab/se_down/b", 0.25);
  fill_param(st, "rcab/se_up/b", -0.5);
  zero_param(st, "rcab/se_up/w");
  Session s(st);
  Tensor pooled = Tensor::zeros({1, 1, 1, 8}, DType::f64);
  Tensor gate = sigmoid_op(rcab.se_up(s, gelu(rcab.se_down(s, pooled))));
  // se_up weights are zero, so the gate is sigmoid(-0.5) exactly
  double want = 1.0 / (1.0 + std::exp(0.5));
  for (int c = 0; c < 8; ++c) CHECK(gate.at(c) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("reduction must divide the channel count") {
  ParamStore st;
  Rng rng(20);
  ParamBuilder pb(st, rng);
  CHECK_THROWS_AS(ChannelAttentionBlock::make(pb.sub("r"), 6, 4, false, DType::f32),
                  ShapeError);
}

TEST_CASE("supervised attention: zero residual conv echoes the image") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(21);
  ParamBuilder pb(st, rng);
  auto sam = SupervisedAttention::make(pb.sub("sam"), 4, DType::f64);
  zero_param(st, "sam/to_image/k");
  zero_param(st, "sam/to_image/b");
  Rng drng(22);
  Tensor f = tt::randn({1, 4, 4, 4}, drng);
  Tensor img = tt::randn({1, 4, 4, 3}, drng, 0.3);
  Session s(st);
  auto [feat, restored] = sam.forward(s, f, img);
  CHECK(tt::max_abs_diff(restored, img) == 0.0);
  CHECK(feat.shape() == f.shape());
}

TEST_CASE("supervised attention mask is constant on the interior of a constant image") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(23);
  ParamBuilder pb(st, rng);
  auto sam = SupervisedAttention::make(pb.sub("sam"), 4, DType::f64);
  Session s(st);
  Tensor restored = Tensor::full({1, 6, 6, 3}, 0.4, DType::f64);
  Tensor a = sigmoid_op(sam.attn(s, restored));
  // zero padding breaks constancy only in the 1-pixel border
  for (int c = 0; c < 4; ++c) {
    double ref = a.at(((1 * 6) + 1) * 4 + c);
    for (int y = 1; y < 5; ++y)
      for (int x = 1; x < 5; ++x)
        CHECK(a.at((y * 6 + x) * 4 + c) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("supervised attention: gradients flow to both inputs") {
  ParamStore st;
  st.set_dtype(DType::f64);
  Rng rng(24);
  ParamBuilder pb(st, rng);
  auto sam = SupervisedAttention::make(pb.sub("sam"), 4, DType::f64);
  Rng drng(25);
  Tensor f = tt::randn({1, 4, 4, 4}, drng, 0.5);
  Tensor img = tt::randn({1, 4, 4, 3}, drng, 0.3);
  Session s(st);
  double err = grad_check(
      [&](std::span<const Tensor> in) {
        Session si(st);
        auto [feat, restored] = sam.forward(si, in[0], in[1]);
        return add(mean_all(square(feat)), mean_all(square(restored)));
      },
      std::vector<Tensor>{f, img}, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("block gradient suite passes") {
  for (const CheckResult& r : block_grad_checks("")) {
    INFO(r.name, " err=", r.max_rel_err, " thresh=", r.threshold);
    CHECK(r.pass());
  }
}
