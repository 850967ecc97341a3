#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maxim/params.hpp"

namespace maxim {

/// Static cost model. MACs are tracked separately from other flops so the
/// report can present both conventions:
///   FLOPs(MAC=2) = 2*macs + extra      (documented primary convention)
///   FLOPs(MAC=1) =   macs + extra      (footer, for comparability)
///
/// Per-element costs of non-MAC work. Every count is an integer number of
/// flops per element, and every element count in the model is exactly linear
/// in the number of spatial positions, so whole-model counts scale exactly
/// linearly with H*W. Per-image constant work (the squeeze/excite bottleneck
/// on pooled features) is excluded: it is independent of image size and
/// smaller than one pixel's worth of dense work.
inline constexpr uint64_t kCostLayerNorm = 6;  // stats passes + normalize + affine
inline constexpr uint64_t kCostGelu = 10;      // cubic poly + tanh (tanh counted as 4)
inline constexpr uint64_t kCostSigmoid = 6;    // exp (4) + add + div
inline constexpr uint64_t kCostLeakyRelu = 2;
inline constexpr uint64_t kCostSoftmax = 8;    // max/sub/exp/sum/div amortized
inline constexpr uint64_t kCostAdd = 1;
inline constexpr uint64_t kCostMul = 1;
inline constexpr uint64_t kCostBilinear = 8;   // 4 taps: weights + blend, per output
inline constexpr uint64_t kCostNearest = 1;

struct CostRow {
  std::string name;
  uint64_t params = 0;
  uint64_t macs = 0;
  uint64_t extra = 0;  // non-MAC flops
  uint64_t flops_mac2() const { return 2 * macs + extra; }
  uint64_t flops_mac1() const { return macs + extra; }
};

struct CostReport {
  std::vector<CostRow> rows;
  int64_t eval_h = 0, eval_w = 0;
  uint64_t total_params = 0;
  uint64_t total_macs = 0;
  uint64_t total_extra = 0;
  uint64_t flops_mac2() const { return 2 * total_macs + total_extra; }
  uint64_t flops_mac1() const { return total_macs + total_extra; }

  /// Column-aligned text table (name, params, flops under MAC=2), totals and
  /// both-convention footer last.
  std::string table() const;
  /// name,params,flops rows; totals last.
  std::string csv() const;
};

/// Accumulates per-layer rows during a symbolic walk of the model. Parameter
/// counts are taken from the live ParamStore by scope prefix, so the report
/// total equals the store total exactly whenever the leaf scopes partition
/// the parameter namespace.
class CostCounter {
 public:
  explicit CostCounter(const ParamStore& store) : store_(&store) {}

  /// One row covering all parameters whose names start with `scope` + "/".
  void leaf(const std::string& scope, uint64_t macs, uint64_t extra);
  /// Adds cost to the most recently opened leaf (helpers inside a module).
  void more(uint64_t macs, uint64_t extra);

  CostReport finish(int64_t h, int64_t w) const;

 private:
  const ParamStore* store_;
  std::vector<CostRow> rows_;
};

/// Closed-form reference cost of one multi-axis block (counted in
/// multiply-accumulates): b^2 HWC + d^2 HWC + 10 HWC^2.
uint64_t mab_flops(int64_t h, int64_t w, int64_t c, int64_t b, int64_t d);

}  // namespace maxim
