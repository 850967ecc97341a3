#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "maxim/graph.hpp"
#include "maxim/rng.hpp"
#include "maxim/tensor.hpp"

namespace maxim {

struct ParamId {
  int32_t index = -1;
  bool valid() const { return index >= 0; }
};

/// Ordered map from hierarchical names ("stage0/enc1/mab0/in_proj/w") to
/// tensors, plus per-parameter optimizer state slots. Iteration order is
/// insertion order; names are unique.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);
  int64_t count() const { return static_cast<int64_t>(names_.size()); }
  int64_t total_params() const;

  const std::string& name(ParamId id) const { return names_.at(id.index); }
  const Tensor& value(ParamId id) const { return values_.at(id.index); }
  const Tensor& value(int64_t i) const { return values_.at(i); }
  void set_value(ParamId id, Tensor t);
  void set_value(int64_t i, Tensor t);
  int find(std::string_view name) const;

  DType dtype() const { return dtype_; }
  void set_dtype(DType dt) { dtype_ = dt; }

  // Adam slots (lazily initialized by the optimizer).
  std::vector<Tensor>& adam_m() { return adam_m_; }
  std::vector<Tensor>& adam_v() { return adam_v_; }
  const std::vector<Tensor>& adam_m() const { return adam_m_; }
  const std::vector<Tensor>& adam_v() const { return adam_v_; }
  int64_t& adam_step() { return adam_step_; }
  int64_t adam_step() const { return adam_step_; }
  bool has_optimizer_state() const { return !adam_m_.empty(); }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, int> index_;
  std::vector<Tensor> adam_m_, adam_v_;
  int64_t adam_step_ = 0;
  DType dtype_ = DType::f32;
};

enum class Init {
  Zeros,
  Ones,
  LecunNormal,    // std = 1/sqrt(fan_in); fan_in = extent of the first axis
  Normal,         // std given explicitly
  Constant,
};

/// Registers parameters under a scoped prefix with deterministic
/// initialization drawn from the builder's RNG (in registration order).
class ParamBuilder {
 public:
  ParamBuilder(ParamStore& store, Rng& rng, std::string prefix = "")
      : store_(&store), rng_(&rng), prefix_(std::move(prefix)) {}

  ParamBuilder sub(std::string_view name) const {
    return ParamBuilder(*store_, *rng_, prefix_ + std::string(name) + "/");
  }
  const std::string& prefix() const { return prefix_; }

  ParamId param(std::string_view name, Shape shape, Init init, double arg = 0.0);

 private:
  ParamStore* store_;
  Rng* rng_;
  std::string prefix_;
};

/// Read-through view of a ParamStore used during forward evaluation. With a
/// Graph, each parameter is watched once (becoming a differentiable leaf);
/// without one, raw values are returned (inference).
class Session {
 public:
  explicit Session(const ParamStore& store, Graph* g = nullptr)
      : store_(&store), graph_(g), cache_(store.count()) {}

  const Tensor& operator[](ParamId id);
  Graph* graph() const { return graph_; }
  const ParamStore& store() const { return *store_; }
  /// Node id of a parameter if it was touched by the forward pass, else -1.
  int node_of(int64_t index) const;

 private:
  const ParamStore* store_;
  Graph* graph_;
  std::vector<std::optional<Tensor>> cache_;
};

/// Gradient of a scalar loss w.r.t. every parameter, aligned with store
/// order. Parameters not on the loss's path receive zeros.
std::vector<Tensor> param_gradients(const Tensor& loss, const ParamStore& store, Session& session);

}  // namespace maxim
