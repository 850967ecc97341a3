#pragma once

#include "maxim/backbone.hpp"

namespace maxim {

enum class LossKind { CharbonnierFreq, L2 };

struct ModelConfig {
  std::string arch = "maxim-2s";
  int stages = 2;
  StageConfig stage;
  double freq_weight = 0.1;  // lambda
  LossKind loss = LossKind::CharbonnierFreq;

  /// Named presets: maxim-1s | maxim-2s | maxim-3s | tiny (desk scale).
  static ModelConfig preset(const std::string& name);
  /// Canonical key=value serialization; its FNV-1a hash is the checkpoint digest.
  std::string canonical() const;
  uint64_t digest() const;
};

/// The S x N pyramid of restored images from one forward pass.
struct StageOutputs {
  std::vector<std::vector<Tensor>> restored;  // [stage][scale]
  std::vector<Tensor> sam_features;           // size stages - 1
};

/// Stacked backbones with supervised-attention handoffs and cross-stage
/// feature fusion. Stage s > 1 receives the previous stage's encoder+decoder
/// features per depth (plus the attention features at full resolution),
/// fused into its encoder through cross-gating blocks.
struct Model {
  ModelConfig cfg;
  std::vector<Backbone> stage_nets;
  std::vector<SupervisedAttention> sams;

  static Model build(ParamStore& store, const ModelConfig& cfg, uint64_t seed = 1);
  StageOutputs forward(Session& s, const Tensor& img) const;
  CostReport count(const ParamStore& store, int64_t h, int64_t w) const;
  int64_t divisibility() const { return cfg.stage.divisibility(); }
};

// ---- losses -------------------------------------------------------------------

inline constexpr double kCharbonnierEps = 1e-3;

/// Mean over elements of sqrt((r - t)^2 + eps^2).
Tensor charbonnier(const Tensor& r, const Tensor& t);
/// Mean L1 distance between the 2-D DFTs (real and imaginary parts).
Tensor freq_loss(const Tensor& r, const Tensor& t);
/// Sum over stages and scales of the per-output loss against the
/// bilinearly-downscaled target pyramid.
Tensor total_loss(const StageOutputs& out, const Tensor& target, const ModelConfig& cfg);

/// Builds the shared nearest-downscaled input pyramid.
std::vector<Tensor> input_pyramid(const Tensor& img, int scales);
/// Bilinearly-downscaled target pyramid.
std::vector<Tensor> target_pyramid(const Tensor& target, int scales);

/// Pads H and W up to the model's divisibility (split evenly, reflect by
/// default), runs the model, crops the final full-resolution output back.
Tensor pad_infer(const Model& model, const ParamStore& store, const Tensor& img,
                 PadMode mode = PadMode::Reflect);

}  // namespace maxim
