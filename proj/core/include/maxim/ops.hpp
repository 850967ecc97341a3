#pragma once

#include <vector>

#include "maxim/graph.hpp"
#include "maxim/tensor.hpp"

namespace maxim {

/// Differentiable primitives over dense n-d tensors.
///
/// Every primitive validates its output for finiteness and throws
/// NumericError if a NaN/Inf would escape. Binary elementwise ops broadcast
/// with trailing-dimension (numpy) alignment only. All primitives are
/// deterministic: fixed loop and reduction orders, no threading inside an op.

enum class Padding { Same, Valid };
enum class PadMode { Reflect, Edge, Zero };
enum class ResizeMode { Nearest, Bilinear };

// ---- elementwise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor sqrt_op(const Tensor& x);
Tensor square(const Tensor& x);
Tensor scalar_mul(const Tensor& x, double s);
Tensor scalar_add(const Tensor& x, double s);

// ---- activations ----------------------------------------------------------
/// GELU via the tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
/// The gradient is derived from the same approximation.
Tensor gelu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor sigmoid_op(const Tensor& x);
/// Numerically stable softmax along the last axis.
Tensor softmax_last(const Tensor& x);

// ---- linear algebra -------------------------------------------------------
/// x: [..., in], w: [in, out], bias: [out] (optional, pass undefined Tensor).
/// All leading axes are batched; a 1x1 convolution is exactly this op.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias);
/// Batched matmul: a [..., M, K] x b [..., K, N] with equal leading axes.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
/// x: [N,H,W,Cin], k: [kh,kw,Cin,Cout]. stride in {1,2}. Same-padding requires
/// odd kernels; stride-2 requires even spatial extents.
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, Padding pad);
/// Per-position normalization over the channel (last) axis, epsilon added to
/// the variance, then affine with gamma/beta of shape [C].
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

// ---- shape ----------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
/// Axis permutation; gradient is the inverse permutation.
Tensor transpose(const Tensor& x, std::vector<int> perm);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);

// ---- spatial --------------------------------------------------------------
Tensor resize(const Tensor& x, int64_t out_h, int64_t out_w, ResizeMode mode);
/// Pads H and W of [N,H,W,C]. Reflect excludes the border pixel; Edge repeats it.
Tensor pad2d(const Tensor& x, int top, int bottom, int left, int right, PadMode mode);
Tensor crop2d(const Tensor& x, int64_t top, int64_t left, int64_t h, int64_t w);

// ---- reductions -----------------------------------------------------------
Tensor reduce_sum(const Tensor& x, std::vector<int> axes, bool keepdims);
Tensor reduce_mean(const Tensor& x, std::vector<int> axes, bool keepdims);
Tensor mean_all(const Tensor& x);  // scalar
Tensor sum_all(const Tensor& x);   // scalar

// ---- spectra ---------------------------------------------------------------
/// Mean over all frequency bins, batches and channels of |Re d| + |Im d| where
/// d is the unnormalized 2-D DFT over (H, W) of a - b, per (batch, channel).
/// Differentiable through the transform.
Tensor fft_l1_diff(const Tensor& a, const Tensor& b);

Tensor cast(const Tensor& x, DType dt);

/// Picks the graph shared by the attached inputs; throws on mixed graphs.
Graph* common_graph(std::initializer_list<const Tensor*> xs);

}  // namespace maxim
