#pragma once

#include <variant>

#include "maxim/layers.hpp"

namespace maxim {

enum class MixerKind { Gmlp, Mlp, Fft, SelfAttention };

MixerKind mixer_kind_from_string(const std::string& s);
const char* mixer_kind_name(MixerKind k);

/// Spec of a 1-D spatial operator mounted on one partition axis.
struct MixerSpec {
  MixerKind kind = MixerKind::Gmlp;
  int64_t length = 0;    // extent of the mixed axis
  int64_t channels = 0;  // feature width at the mount site
  int expansion = 2;     // gated-MLP channel expansion
  int heads = 0;         // self-attention only; 0 = pick by width
};

/// Residual gated MLP over [..., L, C] (right panel of the multi-axis block
/// diagram): expand channels, split halves, gate one half by a learned L x L
/// projection of the other, project back, add the shortcut.
struct GmlpMixer {
  Norm ln_in, ln_gate;
  Dense expand, project;
  SpatialProj spatial;
  int64_t len, ch;
  int e;
  Tensor forward(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t lead) const;
};

/// Residual token-mixing MLP along L, shared over channels. Hidden width is
/// L/2 (matches the published parameter ordering of the mixer family).
struct MlpMixer {
  Norm ln;
  ParamId w1, b1, w2, b2;  // token denses [L,hidden], [hidden,L]
  int64_t len, hidden, ch;
  Tensor forward(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t lead) const;
};

/// Residual spectral filter: y = x + IDFT(DFT(LN(x)) * Phi) along L, with a
/// learned per-channel complex filter over the L/2+1 nonnegative bins. The
/// half-spectrum reconstruction keeps the inverse exactly real, so the
/// imaginary residue the contract bounds (< 1e-5) is identically zero.
struct FftMixer {
  Norm ln;
  ParamId filt_re, filt_im;  // [F, C], F = L/2 + 1
  Tensor fwd_cos, fwd_sin;   // [L, F] constants
  Tensor inv_cos, inv_sin;   // [F, L] constants, Hermitian weights folded in
  int64_t len, bins, ch;
  Tensor forward(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t lead) const;
};

/// Residual single-layer multi-head dot-product attention along L. No
/// positional encoding: the partition structure supplies position.
struct SaMixer {
  Norm ln;
  Dense qkv, project;
  int64_t len, ch;
  int heads;
  Tensor forward(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t lead) const;
};

using Mixer = std::variant<GmlpMixer, MlpMixer, FftMixer, SaMixer>;

Mixer make_mixer(ParamBuilder pb, const MixerSpec& spec, DType dt);
Tensor mixer_forward(const Mixer& m, Session& s, const Tensor& x);
void mixer_count(const Mixer& m, CostCounter& c, int64_t lead);
/// Analytic parameter count for a spec (tested against the built store).
int64_t mixer_param_count(const MixerSpec& spec);

}  // namespace maxim
