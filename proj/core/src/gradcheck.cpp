#include "maxim/gradcheck.hpp"

#include <cmath>

namespace maxim {

namespace {
double rel_err(double fd, double ad) {
  return std::abs(fd - ad) / std::max(1e-8, std::abs(fd) + std::abs(ad));
}

Tensor perturbed(const Tensor& t, int64_t coord, double delta) {
  Tensor c = Tensor::zeros(t.shape(), DType::f64);
  auto src = t.data<double>();
  auto dst = c.raw_mutable<double>();
  for (int64_t i = 0; i < t.numel(); ++i) dst[i] = src[i];
  dst[coord] += delta;
  return c;
}
}  // namespace

double grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double h) {
  for (const Tensor& t : inputs)
    if (t.dtype() != DType::f64) throw Error("grad_check requires f64 inputs");

  // analytic gradients
  Graph g;
  std::vector<Tensor> watched;
  watched.reserve(inputs.size());
  for (const Tensor& t : inputs) watched.push_back(g.watch(t));
  Tensor loss = f(watched);
  if (loss.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
  if (!std::isfinite(loss.scalar_value())) throw NumericError("grad_check: non-finite f");
  std::vector<Tensor> node_grads = g.backward(loss);

  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& x = inputs[k];
    const Tensor& ag = node_grads[watched[k].node()];
    for (int64_t i = 0; i < x.numel(); ++i) {
      std::vector<Tensor> plus(inputs.begin(), inputs.end());
      std::vector<Tensor> minus(inputs.begin(), inputs.end());
      plus[k] = perturbed(x, i, h);
      minus[k] = perturbed(x, i, -h);
      double fp = f(plus).scalar_value();
      double fm = f(minus).scalar_value();
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite f at probe point");
      double fd = (fp - fm) / (2.0 * h);
      double ad = ag.defined() ? ag.at(i) : 0.0;
      worst = std::max(worst, rel_err(fd, ad));
    }
  }
  return worst;
}

double grad_check_params(const std::function<Tensor(Session&)>& loss_fn, ParamStore& store,
                         double h, int max_coords_per_param) {
  if (store.dtype() != DType::f64) throw Error("grad_check_params requires an f64 store");

  Graph g;
  Session s(store, &g);
  Tensor loss = loss_fn(s);
  std::vector<Tensor> grads = param_gradients(loss, store, s);

  double worst = 0.0;
  for (int64_t p = 0; p < store.count(); ++p) {
    const Tensor& x = store.value(p);
    int64_t n = x.numel();
    int64_t step = 1;
    if (max_coords_per_param > 0 && n > max_coords_per_param)
      step = (n + max_coords_per_param - 1) / max_coords_per_param;
    for (int64_t i = 0; i < n; i += step) {
      Tensor orig = x;
      store.set_value(p, perturbed(x, i, h));
      Session sp(store);
      double fp = loss_fn(sp).scalar_value();
      store.set_value(p, perturbed(orig, i, -h));
      Session sm(store);
      double fm = loss_fn(sm).scalar_value();
      store.set_value(p, orig);
      double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, rel_err(fd, grads[p].at(i)));
    }
  }
  return worst;
}

}  // namespace maxim
