#include <doctest.h>

#include "helpers.hpp"
#include "maxim/ops.hpp"

using namespace maxim;

TEST_CASE("elementwise arithmetic") {
  Tensor a = Tensor::of({2}, {1, 2});
  Tensor b = Tensor::of({2}, {3, 4});
  Tensor m = mul(a, b);
  CHECK(m.at(0) == doctest::Approx(3));
  CHECK(m.at(1) == doctest::Approx(8));

  Tensor z = Tensor::zeros({2});
  CHECK(add(a, z).same_values_bitwise(a));  // identity case, exact

  Tensor s = sub(a, b);
  CHECK(s.at(0) == doctest::Approx(-2));
  Tensor q = div(a, b);
  CHECK(q.at(1) == doctest::Approx(0.5));
  CHECK(neg(a).at(0) == doctest::Approx(-1));
  CHECK(square(b).at(1) == doctest::Approx(16));
  CHECK(sqrt_op(Tensor::of({1}, {9})).at(0) == doctest::Approx(3));
}

TEST_CASE("division by zero surfaces as an error") {
  Tensor a = Tensor::of({2}, {1, 2});
  Tensor z = Tensor::zeros({2});
  CHECK_THROWS_AS(div(a, z), NumericError);
}

TEST_CASE("broadcast follows trailing-dimension rules only") {
  Tensor x = Tensor::full({2, 3, 4}, 2.0);
  Tensor v = Tensor::of({4}, {1, 2, 3, 4});
  Tensor y = mul(x, v);
  CHECK(y.shape() == Shape{2, 3, 4});
  CHECK(y.at(3) == doctest::Approx(8));
  // [N,1,1,C]-style broadcast
  Tensor g = Tensor::of({2, 1, 1, 2}, {1, 2, 3, 4});
  Tensor img = Tensor::full({2, 2, 2, 2}, 1.0);
  Tensor scaled = mul(img, g);
  CHECK(scaled.at(0) == doctest::Approx(1));
  CHECK(scaled.at(1) == doctest::Approx(2));
  CHECK(scaled.at(8) == doctest::Approx(3));
  // incompatible extents
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
}

TEST_CASE("dense shape rule and identity") {
  Rng rng(3);
  Tensor x = tt::randn({2, 3, 4}, rng);
  Tensor w = tt::randn({4, 5}, rng);
  Tensor y = dense(x, w, Tensor());
  CHECK(y.shape() == Shape{2, 3, 5});

  Tensor eye = Tensor::zeros({4, 4}, DType::f64);
  for (int i = 0; i < 4; ++i) eye.raw_mutable<double>()[i * 4 + i] = 1.0;
  Tensor same = dense(x, eye, Tensor::zeros({4}, DType::f64));
  CHECK(tt::max_abs_diff(same, x) == 0.0);

  Tensor row = Tensor::of({1, 2}, {1, 2});
  Tensor ones = Tensor::of({2, 1}, {1, 1});
  CHECK(dense(row, ones, Tensor()).at(0) == doctest::Approx(3));

  CHECK_THROWS_AS(dense(x, tt::randn({5, 4}, rng), Tensor()), ShapeError);
}

TEST_CASE("conv2d identity, shape rule, and hand oracle") {
  Rng rng(5);
  Tensor x = tt::randn({1, 4, 4, 3}, rng);
  // 1x1 identity over channels
  Tensor k = Tensor::zeros({1, 1, 3, 3}, DType::f64);
  for (int i = 0; i < 3; ++i) k.raw_mutable<double>()[i * 3 + i] = 1.0;
  CHECK(tt::max_abs_diff(conv2d(x, k, 1, Padding::Same), x) == 0.0);

  Tensor x2 = tt::randn({1, 8, 8, 3}, rng);
  Tensor k2 = tt::randn({3, 3, 3, 16}, rng);
  CHECK(conv2d(x2, k2, 2, Padding::Same).shape() == Shape{1, 4, 4, 16});

  // all-ones 3x3 kernel on a constant-1 5x5 image: interior pixels sum to 9
  Tensor ones_img = Tensor::full({1, 5, 5, 1}, 1.0, DType::f64);
  Tensor ones_k = Tensor::full({3, 3, 1, 1}, 1.0, DType::f64);
  Tensor y = conv2d(ones_img, ones_k, 1, Padding::Same);
  CHECK(y.at(2 * 5 + 2) == doctest::Approx(9.0));
  CHECK(y.at(0) == doctest::Approx(4.0));  // zero-padded corner

  CHECK_THROWS_AS(conv2d(tt::randn({1, 5, 4, 1}, rng), ones_k, 2, Padding::Same), ShapeError);
  CHECK_THROWS_AS(conv2d(tt::randn({1, 2, 2, 1}, rng), ones_k, 1, Padding::Valid), ShapeError);
  CHECK_THROWS_AS(conv2d(x, tt::randn({2, 2, 3, 1}, rng), 1, Padding::Same), ShapeError);
}

TEST_CASE("layernorm closed forms") {
  Tensor g1 = Tensor::full({2}, 1.0, DType::f64);
  Tensor b0 = Tensor::zeros({2}, DType::f64);
  // constant over channels: zero-variance case resolved by epsilon
  Tensor c = Tensor::full({1, 2}, 5.0, DType::f64);
  Tensor yc = layernorm(c, g1, b0);
  CHECK(std::abs(yc.at(0)) < 1e-9);
  // x = [1,3]: mean 2, std 1
  Tensor x = Tensor::of({1, 2}, {1, 3}, DType::f64);
  Tensor y = layernorm(x, g1, b0);
  CHECK(y.at(0) == doctest::Approx(-1).epsilon(1e-5));
  CHECK(y.at(1) == doctest::Approx(1).epsilon(1e-5));
  // gamma = 0 collapses to beta
  Tensor g0 = Tensor::zeros({2}, DType::f64);
  Tensor bb = Tensor::full({2}, 0.7, DType::f64);
  Tensor yb = layernorm(x, g0, bb);
  CHECK(yb.at(0) == doctest::Approx(0.7));
  CHECK(yb.at(1) == doctest::Approx(0.7));
}

TEST_CASE("activation values") {
  Tensor z = Tensor::zeros({1}, DType::f64);
  CHECK(gelu(z).at(0) == doctest::Approx(0.0));
  CHECK(sigmoid_op(z).at(0) == doctest::Approx(0.5));
  Tensor neg1 = Tensor::of({1}, {-1}, DType::f64);
  CHECK(leaky_relu(neg1, 0.2).at(0) == doctest::Approx(-0.2));
  // softmax rows sum to 1
  Rng rng(7);
  Tensor s = softmax_last(tt::randn({3, 5}, rng));
  for (int r = 0; r < 3; ++r) {
    double sum = 0;
    for (int i = 0; i < 5; ++i) sum += s.at(r * 5 + i);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("reshape and permute round trips are bit-exact") {
  Rng rng(11);
  Tensor x = tt::randn({6, 4, 3}, rng);
  Tensor r = reshape(reshape(x, {3, 2, 2, 2, 3}), {6, 4, 3});
  CHECK(r.same_values_bitwise(x));
  Tensor p = transpose(transpose(x, {2, 0, 1}), {1, 2, 0});
  CHECK(p.same_values_bitwise(x));
  CHECK_THROWS_AS(reshape(x, {5, 4, 3}), ShapeError);
  CHECK_THROWS_AS(transpose(x, {0, 0, 1}), ShapeError);
}

TEST_CASE("concat and slice are inverse") {
  Rng rng(13);
  Tensor a = tt::randn({2, 3, 4}, rng), b = tt::randn({2, 2, 4}, rng);
  Tensor c = concat({a, b}, 1);
  CHECK(c.shape() == Shape{2, 5, 4});
  CHECK(slice(c, 1, 0, 3).same_values_bitwise(a));
  CHECK(slice(c, 1, 3, 2).same_values_bitwise(b));
}

TEST_CASE("resize nearest replication and bilinear hand values") {
  Tensor x = Tensor::of({1, 2, 2, 1}, {1, 2, 3, 4}, DType::f64);
  Tensor up = resize(x, 4, 4, ResizeMode::Nearest);
  double expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (int i = 0; i < 16; ++i) CHECK(up.at(i) == doctest::Approx(expect[i]));

  Tensor c = Tensor::full({1, 4, 4, 2}, 0.37, DType::f64);
  Tensor down = resize(c, 2, 2, ResizeMode::Bilinear);
  for (int64_t i = 0; i < down.numel(); ++i) CHECK(down.at(i) == doctest::Approx(0.37));

  // half-pixel centers: 2x2 [[0,0],[2,2]] -> 1x1 [[1]]
  Tensor v = Tensor::of({1, 2, 2, 1}, {0, 0, 2, 2}, DType::f64);
  CHECK(resize(v, 1, 1, ResizeMode::Bilinear).at(0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(resize(x, 0, 2, ResizeMode::Nearest), ShapeError);
}

TEST_CASE("pad/crop round trips recover the input bit-exactly") {
  Rng rng(17);
  Tensor x = tt::randn({1, 5, 6, 2}, rng);
  for (PadMode m : {PadMode::Reflect, PadMode::Edge, PadMode::Zero}) {
    Tensor p = pad2d(x, 2, 1, 3, 2, m);
    CHECK(p.shape() == Shape{1, 8, 11, 2});
    CHECK(crop2d(p, 2, 3, 5, 6).same_values_bitwise(x));
  }
  CHECK_THROWS_AS(pad2d(x, 5, 0, 0, 0, PadMode::Reflect), ShapeError);

  // reflect excludes the border pixel
  Tensor r = Tensor::of({1, 1, 3, 1}, {1, 2, 3}, DType::f64);
  Tensor pr = pad2d(r, 0, 0, 2, 2, PadMode::Reflect);
  double want[7] = {3, 2, 1, 2, 3, 2, 1};
  for (int i = 0; i < 7; ++i) CHECK(pr.at(i) == doctest::Approx(want[i]));
}

TEST_CASE("spectral L1: identity, impulse oracle, and linearity") {
  Tensor z = Tensor::zeros({1, 2, 2, 1}, DType::f64);
  Tensor imp = Tensor::of({1, 2, 2, 1}, {1, 0, 0, 0}, DType::f64);
  CHECK(fft_l1_diff(imp, imp).scalar_value() == doctest::Approx(0.0));

  // brute-force 2x2 DFT of a unit impulse at (0,0): all four bins are 1 + 0i,
  // so the summed L1 is 4 and the mean over 4 bins is 1.
  double v = fft_l1_diff(imp, z).scalar_value();
  CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(19);
  Tensor a = tt::randn({1, 4, 4, 2}, rng), b = tt::randn({1, 4, 4, 2}, rng);
  double base = fft_l1_diff(a, b).scalar_value();
  Tensor a3 = add(b, scalar_mul(sub(a, b), 3.0));
  CHECK(fft_l1_diff(a3, b).scalar_value() == doctest::Approx(3.0 * base).epsilon(1e-9));

  CHECK_THROWS_AS(fft_l1_diff(a, Tensor::zeros({1, 2, 2, 2}, DType::f64)), ShapeError);
}

TEST_CASE("spectral L1 matches a brute-force DFT oracle on random input") {
  Rng rng(23);
  int64_t H = 3, W = 5;
  Tensor a = tt::randn({1, H, W, 1}, rng), b = tt::randn({1, H, W, 1}, rng);
  double oracle = 0;
  for (int64_t u = 0; u < H; ++u)
    for (int64_t v = 0; v < W; ++v) {
      double re = 0, im = 0;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          double th = 2 * M_PI * (static_cast<double>(u * y) / H + static_cast<double>(v * x) / W);
          double d = a.at(y * W + x) - b.at(y * W + x);
          re += d * std::cos(th);
          im -= d * std::sin(th);
        }
      oracle += std::abs(re) + std::abs(im);
    }
  oracle /= static_cast<double>(H * W);
  CHECK(fft_l1_diff(a, b).scalar_value() == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("non-finite results never propagate silently") {
  Tensor big = Tensor::full({4}, 1e300, DType::f64);
  CHECK_THROWS_AS(mul(big, big), NumericError);
  Tensor neg1 = Tensor::of({1}, {-1}, DType::f64);
  CHECK_THROWS_AS(sqrt_op(neg1), NumericError);
}

TEST_CASE("determinism: identical inputs give bit-identical results") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = tt::randn({2, 6, 6, 3}, rng, 1.0, DType::f32);
    Tensor k = tt::randn({3, 3, 3, 4}, rng, 0.5, DType::f32);
    Tensor y = conv2d(x, k, 1, Padding::Same);
    y = gelu(y);
    return reduce_mean(y, {1, 2}, false);
  };
  CHECK(run(99).same_values_bitwise(run(99)));
}
