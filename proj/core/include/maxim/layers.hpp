#pragma once

#include <string>

#include "maxim/costing.hpp"
#include "maxim/ops.hpp"
#include "maxim/params.hpp"

namespace maxim {

/// Channel projection over the last axis (a 1x1 convolution when applied to
/// [N,H,W,C]).
struct Dense {
  ParamId w, b;
  int64_t in = 0, out = 0;
  bool has_bias = true;

  static Dense make(ParamBuilder pb, int64_t in, int64_t out, Init init = Init::LecunNormal,
                    bool bias = true, double init_arg = 0.0);
  Tensor operator()(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t positions) const;
  int64_t params() const { return in * out + (has_bias ? out : 0); }
};

struct Conv2d {
  ParamId k, b;
  int64_t kh = 0, kw = 0, cin = 0, cout = 0;
  int stride = 1;
  Padding pad = Padding::Same;
  bool has_bias = true;

  static Conv2d make(ParamBuilder pb, int64_t kh, int64_t kw, int64_t cin, int64_t cout,
                     int stride = 1, Padding pad = Padding::Same, bool bias = true);
  Tensor operator()(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t out_positions) const;
  int64_t params() const { return kh * kw * cin * cout + (has_bias ? cout : 0); }
};

struct Norm {
  ParamId gamma, beta;
  int64_t ch = 0;

  static Norm make(ParamBuilder pb, int64_t ch);
  Tensor operator()(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t positions) const;
};

/// Learned linear map along the second-to-last axis ([..., L, C] over L),
/// realized as transpose / channel-dense / transpose. Initialized near
/// identity-gate: weights ~ N(0, (1e-3 / L)^2), bias = 1.
struct SpatialProj {
  ParamId w, b;
  int64_t len = 0;

  static SpatialProj make(ParamBuilder pb, int64_t len);
  Tensor operator()(Session& s, const Tensor& x) const;
  void count(CostCounter& c, int64_t rows) const;  // rows = elements / len
};

}  // namespace maxim
