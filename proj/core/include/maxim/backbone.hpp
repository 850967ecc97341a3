#pragma once

#include <array>
#include <optional>

#include "maxim/blocks.hpp"

namespace maxim {

/// Architectural description of one encoder-decoder stage. Depth i runs at
/// extent (H >> i, W >> i) with channels c0 << i; the two bottlenecks run at
/// (H >> depths) with bneck_mult * c0 channels.
struct StageConfig {
  int64_t c0 = 32;
  int depths = 3;
  int scales = 3;
  std::array<std::pair<int, int>, 3> bd{{{16, 16}, {16, 16}, {8, 8}}};
  // Both bottlenecks use 8: a 16-window at extent H/8 would demand inputs
  // divisible by 128, breaking the pad-to-64 inference contract.
  std::array<std::pair<int, int>, 2> bneck_bd{{{8, 8}, {8, 8}}};
  std::array<int, 3> neck_bd{16, 16, 8};
  int bneck_mult = 8;
  int pairs = 2;  // (multi-axis + channel-attention) pairs per depth
  int se_reduction = 4;
  MixerKind mixer = MixerKind::Gmlp;

  int64_t channels_at(int depth) const { return c0 << depth; }
  int64_t bneck_channels() const { return static_cast<int64_t>(bneck_mult) * c0; }
  /// Smallest extent multiple the stage evaluates on.
  int64_t divisibility() const;
};

/// Desk-scale profile: runs the full architecture in minutes on a CPU.
StageConfig tiny_stage_config();

struct StageIO {
  std::vector<Tensor> pyramid;   // per scale, [N, H>>n, W>>n, 3]
  std::vector<Tensor> incoming;  // per depth; empty for the first stage
};

struct StageResult {
  std::vector<Tensor> enc;  // per depth, pre-downsample features
  std::vector<Tensor> dec;  // per depth, dec[0] at full resolution
};

/// One encoder-decoder backbone: per-depth shallow extraction and fusion,
/// (multi-axis + channel-attention) pairs, two bottlenecks, cross-gated skip
/// connections driven by the bottleneck globals, and multi-level feature
/// fusion on both the encoder->neck and neck->decoder flows.
struct Backbone {
  struct PairBlock {
    MultiAxisBlock mab;
    ChannelAttentionBlock rcab;
  };
  struct EncoderLevel {
    Conv2d shallow;
    std::optional<Conv2d> from_below;
    std::optional<Dense> fuse_shallow;
    std::optional<CrossGatingBlock> cross;  // later stages only
    Dense pre;
    std::vector<PairBlock> blocks;
    Conv2d down;
  };
  struct BottleneckLevel {
    Dense in;
    std::vector<PairBlock> blocks;
  };
  struct NeckLevel {
    Dense glob_in;
    CrossGatingBlock cgb;
  };
  struct DecoderLevel {
    Dense up;
    Dense fuse;
    std::vector<PairBlock> blocks;
  };

  StageConfig cfg;
  std::string scope;
  bool has_cross = false;
  bool full_res_head = true;
  std::vector<EncoderLevel> enc;
  std::array<BottleneckLevel, 2> bneck;
  std::vector<NeckLevel> necks;
  std::vector<DecoderLevel> dec;
  std::vector<std::vector<Dense>> enc_fuse;   // [target depth][source depth]
  std::vector<std::vector<Dense>> skip_fuse;  // [target depth][source depth]
  std::vector<std::optional<Conv2d>> heads;   // per scale; [0] absent for SAM stages

  static Backbone make(ParamBuilder pb, const StageConfig& cfg, bool has_cross,
                       bool full_res_head, DType dt);
  StageResult forward(Session& s, const StageIO& io) const;
  /// Restored image at scale n: residual head on the decoder features.
  Tensor head(Session& s, int scale, const Tensor& dec_feat, const Tensor& pyramid_img) const;
  void count(CostCounter& c, int64_t h, int64_t w) const;
};

}  // namespace maxim
