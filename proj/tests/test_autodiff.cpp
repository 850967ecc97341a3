#include <doctest.h>

#include "helpers.hpp"
#include "maxim/gradcheck.hpp"
#include "maxim/verify.hpp"

using namespace maxim;

TEST_CASE("backward on linear and quadratic losses") {
  Graph g;
  Tensor w = Tensor::of({3}, {1.5, -2, 0.25}, DType::f64);
  Tensor ww = g.watch(w);

  Tensor loss = sum_all(ww);
  auto grads = g.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(grads[ww.node()].at(i) == doctest::Approx(1.0));

  Graph g2;
  Tensor w2 = g2.watch(w);
  Tensor loss2 = sum_all(mul(w2, w2));
  auto grads2 = g2.backward(loss2);
  for (int i = 0; i < 3; ++i)
    CHECK(grads2[w2.node()].at(i) == doctest::Approx(2.0 * w.at(i)));
}

TEST_CASE("backward preconditions") {
  Graph g;
  Tensor w = g.watch(Tensor::of({2}, {1, 2}, DType::f64));
  Tensor v = mul(w, w);
  CHECK_THROWS_AS(g.backward(v), ShapeError);          // not scalar
  Tensor plain = Tensor::scalar(1.0, DType::f64);
  CHECK_THROWS_AS(g.backward(plain), Error);           // not recorded
}

TEST_CASE("gradient of mul against the upstream-ones oracle") {
  Graph g;
  Tensor x = g.watch(Tensor::of({2}, {1, 2}, DType::f64));
  Tensor y = g.watch(Tensor::of({2}, {3, 4}, DType::f64));
  Tensor loss = sum_all(mul(x, y));  // upstream of mul output = ones
  auto grads = g.backward(loss);
  CHECK(grads[x.node()].at(0) == doctest::Approx(3));
  CHECK(grads[x.node()].at(1) == doctest::Approx(4));
  CHECK(grads[y.node()].at(0) == doctest::Approx(1));
  CHECK(grads[y.node()].at(1) == doctest::Approx(2));
}

TEST_CASE("parameters off the loss path receive zeros") {
  ParamStore store;
  store.set_dtype(DType::f64);
  Rng rng(1);
  ParamBuilder pb(store, rng);
  ParamId used = pb.param("used", {2}, Init::Ones);
  ParamId unused = pb.param("unused", {3}, Init::Ones);
  Graph g;
  Session s(store, &g);
  Tensor loss = sum_all(square(s[used]));
  auto grads = param_gradients(loss, store, s);
  CHECK(grads[used.index].at(0) == doctest::Approx(2.0));
  CHECK(grads[unused.index].shape() == Shape{3});
  for (int i = 0; i < 3; ++i) CHECK(grads[unused.index].at(i) == 0.0);
}

TEST_CASE("grad_check is near-exact on quadratics") {
  Rng rng(2);
  Tensor x = tt::randn({3, 2}, rng);
  double err = grad_check(
      [](std::span<const Tensor> in) { return sum_all(square(in[0])); }, {&x, 1});
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check requires f64 and finite values") {
  Tensor x32 = Tensor::zeros({2}, DType::f32);
  CHECK_THROWS_AS(grad_check([](std::span<const Tensor> in) { return sum_all(in[0]); },
                             {&x32, 1}),
                  Error);
}

TEST_CASE("grad of permute equals inverse permute of upstream") {
  Rng rng(31);
  Tensor x = tt::randn({2, 3, 4}, rng);
  Tensor weight = tt::randn({2, 3, 4}, rng);  // random upstream via weighted sum
  Graph g;
  Tensor xw = g.watch(x);
  Tensor y = transpose(xw, {2, 0, 1});
  Tensor wperm = transpose(weight, {2, 0, 1}).detached();
  Tensor loss = sum_all(mul(y, wperm));
  auto grads = g.backward(loss);
  // analytic expectation: inverse-permuted upstream = original weight
  CHECK(tt::max_abs_diff(grads[xw.node()], weight) < 1e-12);

  double err = grad_check(
      [&](std::span<const Tensor> in) {
        return sum_all(mul(transpose(in[0], {2, 0, 1}), wperm));
      },
      {&x, 1});
  CHECK(err < 1e-6);
}

TEST_CASE("broadcast gradient reduces over the broadcast axes") {
  Rng rng(37);
  Tensor x = tt::randn({2, 3, 4}, rng);
  Tensor v = tt::randn({4}, rng);
  // finite-difference oracle over the small operand
  double err = grad_check(
      [&](std::span<const Tensor> in) { return sum_all(square(mul(x, in[0]))); }, {&v, 1});
  CHECK(err < 1e-6);
  // and the analytic claim: grad(v) = sum over leading axes of upstream
  Graph g;
  Tensor vw = g.watch(v);
  Tensor loss = sum_all(mul(x, vw));
  auto grads = g.backward(loss);
  for (int c = 0; c < 4; ++c) {
    double want = 0;
    for (int i = 0; i < 6; ++i) want += x.at(i * 4 + c);
    CHECK(grads[vw.node()].at(c) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("gradient accumulation into a shared input is order-independent (f64)") {
  Rng rng(41);
  Tensor x = tt::randn({4}, rng);
  Graph g;
  Tensor xw = g.watch(x);
  // x feeds three consumers; accumulation happens in reverse node order
  Tensor l = add(add(sum_all(mul(xw, xw)), sum_all(gelu(xw))), sum_all(scalar_mul(xw, 3.0)));
  auto grads = g.backward(l);
  Graph g2;
  Tensor xw2 = g2.watch(x);
  Tensor l2 = add(sum_all(scalar_mul(xw2, 3.0)), add(sum_all(gelu(xw2)), sum_all(mul(xw2, xw2))));
  auto grads2 = g2.backward(l2);
  CHECK(tt::max_abs_diff(grads[xw.node()], grads2[xw2.node()]) < 1e-12);
}

TEST_CASE("primitive gradient suite passes its thresholds") {
  for (const CheckResult& r : primitive_grad_checks()) {
    INFO(r.name, " err=", r.max_rel_err, " thresh=", r.threshold);
    CHECK(r.pass());
  }
}
