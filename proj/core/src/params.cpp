#include "maxim/params.hpp"

#include <cmath>

namespace maxim {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  int idx = static_cast<int>(names_.size());
  index_.emplace(name, idx);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return ParamId{idx};
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

void ParamStore::set_value(ParamId id, Tensor t) { set_value(id.index, std::move(t)); }

void ParamStore::set_value(int64_t i, Tensor t) {
  const Tensor& old = values_.at(i);
  if (t.shape() != old.shape())
    throw ShapeError("set_value: shape mismatch for " + names_[i]);
  values_[i] = std::move(t).detached();
}

int ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? -1 : it->second;
}

ParamId ParamBuilder::param(std::string_view name, Shape shape, Init init, double arg) {
  DType dt = store_->dtype();
  Tensor t;
  switch (init) {
    case Init::Zeros:
      t = Tensor::zeros(shape, dt);
      break;
    case Init::Ones:
      t = Tensor::full(shape, 1.0, dt);
      break;
    case Init::Constant:
      t = Tensor::full(shape, arg, dt);
      break;
    case Init::LecunNormal: {
      t = Tensor::zeros(shape, dt);
      double std = 1.0 / std::sqrt(static_cast<double>(shape.empty() ? 1 : shape[0]));
      dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto p = t.raw_mutable<T>();
        for (auto& v : p) v = static_cast<T>(rng_->normal() * std);
      });
      break;
    }
    case Init::Normal: {
      t = Tensor::zeros(shape, dt);
      dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto p = t.raw_mutable<T>();
        for (auto& v : p) v = static_cast<T>(rng_->normal() * arg);
      });
      break;
    }
  }
  return store_->add(prefix_ + std::string(name), std::move(t));
}

const Tensor& Session::operator[](ParamId id) {
  auto& slot = cache_.at(id.index);
  if (!slot.has_value()) {
    const Tensor& v = store_->value(id);
    slot = graph_ ? graph_->watch(v) : v;
  }
  return *slot;
}

int Session::node_of(int64_t index) const {
  const auto& slot = cache_.at(index);
  return slot.has_value() && slot->attached() ? slot->node() : -1;
}

std::vector<Tensor> param_gradients(const Tensor& loss, const ParamStore& store,
                                    Session& session) {
  Graph* g = session.graph();
  if (!g) throw Error("param_gradients: session has no graph");
  std::vector<Tensor> node_grads = g->backward(loss);
  std::vector<Tensor> out(store.count());
  for (int64_t i = 0; i < store.count(); ++i) {
    int node = session.node_of(i);
    if (node >= 0 && node_grads[node].defined())
      out[i] = std::move(node_grads[node]);
    else
      out[i] = Tensor::zeros(store.value(i).shape(), store.value(i).dtype());
  }
  return out;
}

}  // namespace maxim
