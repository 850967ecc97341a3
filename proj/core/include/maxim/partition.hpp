#pragma once

#include <functional>

#include "maxim/ops.hpp"

namespace maxim {

enum class PartitionKind { Block, Grid };
enum class MixAxis { Group, Within };

/// A blocked or gridded reshaping of a spatial tensor. The view tensor has
/// shape [N, num_groups, group_size, C]:
///   block: num_groups = (H/b)*(W/b), group_size = b*b   (windows of pixels)
///   grid:  num_groups = d*d, group_size = (H/d)*(W/d)   (dilated lattices)
/// Both are pure permutations of [N,H,W,C]; invert() is bit-exact.
struct PartitionView {
  PartitionKind kind;
  int window;  // b or d
  int64_t src_h, src_w;
  Tensor tensor;
};

/// Pixel (h, w) lands in group floor(h/b)*(W/b) + floor(w/b) at within-group
/// index (h mod b)*b + (w mod b). Requires H % b == 0 and W % b == 0.
PartitionView block(const Tensor& x, int b);

/// Decomposes h = gi*(H/d) + pi, w = gj*(W/d) + pj. The grid coordinate
/// gi*d + gj (the coarse factor) orders the group axis, so sweeping a group
/// visits pixels spaced (H/d, W/d) apart. Requires H % d == 0, W % d == 0.
PartitionView grid(const Tensor& x, int d);

Tensor invert(const PartitionView& v);

/// Applies a 1-D mixer on one view axis, shared across every index of the
/// other axes. The mixer maps [..., L, C] -> [..., L, C]; L must equal the
/// chosen axis extent (b*b for block/within, d*d for grid/group).
using Mixer1dFn = std::function<Tensor(const Tensor&)>;
PartitionView mix_on_axis(const PartitionView& v, const Mixer1dFn& mixer, MixAxis axis);

}  // namespace maxim
