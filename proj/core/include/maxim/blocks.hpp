#pragma once

#include <optional>
#include <utility>

#include "maxim/mixers.hpp"
#include "maxim/partition.hpp"

namespace maxim {

/// Multi-axis block: parallel local (blocked) and global (gridded) 1-D mixers
/// over split heads, fused by channel projection with a long skip.
///
/// `wide` selects the head split: wide projects C -> 2C and runs each branch
/// at width C (used at encoder/decoder sites); narrow projects C -> C and
/// runs branches at C/2 (used in the bottlenecks, where the channel count is
/// large and the wide split is parameter-disproportionate).
struct MultiAxisBlock {
  std::string scope;
  Norm ln;
  Dense in_proj, out_proj;
  Mixer local, global_;
  int b = 0, d = 0;
  int64_t channels = 0;
  bool wide = true;

  static MultiAxisBlock make(ParamBuilder pb, int64_t channels, int b, int d, MixerKind kind,
                             bool wide, DType dt);
  Tensor forward(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t h, int64_t w) const;
};

/// Cross-gating block: two features gate each other with multi-axis gating
/// weights extracted from the opposite input; residual from the first
/// projections.
struct CrossGatingBlock {
  struct Extractor {
    Norm ln;
    Dense to_halves;  // C -> 2C, halves are the block/grid streams
    SpatialProj block_proj, grid_proj;
    Dense fuse;  // 2C -> C
  };
  std::string scope;
  Dense proj_x, proj_y;
  Norm ln_x, ln_y;
  Dense w1, w2;
  Extractor ex_x, ex_y;  // per-input extractors (tied only in tests)
  Dense w7, w8;
  int b = 0, d = 0;
  int64_t channels = 0;

  static CrossGatingBlock make(ParamBuilder pb, int64_t channels, int b, int d, DType dt);
  /// Gating weights G(t) for one side.
  Tensor gating(Session& s, const Extractor& ex, const Tensor& t) const;
  std::pair<Tensor, Tensor> forward(Session& s, const Tensor& x, const Tensor& y) const;
  void count(CostCounter& c, int64_t h, int64_t w) const;
};

/// Residual channel attention block: LayerNorm - Conv - LeakyReLU - Conv -
/// squeeze/excite gate - residual. Bottleneck variant uses 1x1 convs.
struct ChannelAttentionBlock {
  std::string scope;
  Norm ln;
  Conv2d conv1, conv2;
  Dense se_down, se_up;
  int64_t channels = 0;
  int reduction = 4;

  static ChannelAttentionBlock make(ParamBuilder pb, int64_t channels, int reduction,
                                    bool bottleneck_1x1, DType dt);
  Tensor forward(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t h, int64_t w) const;
};

/// Supervised attention: emits a restored image (into the loss) and
/// attention-gated features handed to the next stage.
struct SupervisedAttention {
  std::string scope;
  Conv2d to_image, attn, feat;
  int64_t channels = 0;

  static SupervisedAttention make(ParamBuilder pb, int64_t channels, DType dt);
  /// Returns {features, restored}.
  std::pair<Tensor, Tensor> forward(Session& s, const Tensor& f, const Tensor& img) const;
  void count(CostCounter& c, int64_t h, int64_t w) const;
};

}  // namespace maxim
