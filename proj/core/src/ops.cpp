#include "maxim/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numeric>

namespace maxim {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapCM = Eigen::Map<const MatRM<T>>;
template <typename T>
using MapA = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using MapCA = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

void check_finite(const Tensor& t, const char* op) {
  bool ok = dispatch_dtype(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    MapCA<T> m(t.data<T>().data(), t.numel());
    return m.allFinite();
  });
  if (!ok) throw NumericError(std::string(op) + ": non-finite value in result");
}

Tensor detach(const Tensor& t) { return t.detached(); }

/// Attaches `out` to the graph shared by the inputs (if any) with the given vjp.
Tensor record(Graph* g, Tensor out, std::vector<int> parents, Graph::Vjp vjp) {
  if (!g) return out;
  int id = g->add_node(std::move(parents), std::move(vjp));
  return out.attached_to(g, id);
}

std::vector<int> parent_ids(std::initializer_list<const Tensor*> xs) {
  std::vector<int> ids;
  for (const Tensor* t : xs) ids.push_back(t->defined() && t->attached() ? t->node() : -1);
  return ids;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  int r = std::max(ra, rb);
  Shape out(r);
  for (int i = 0; i < r; ++i) {
    int64_t da = i < r - ra ? 1 : a[i - (r - ra)];
    int64_t db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " do not broadcast (trailing alignment)");
    out[i] = std::max(da, db);
  }
  return out;
}

/// Row-major strides of `s` padded to rank r, with stride 0 on broadcast axes.
std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  int r = static_cast<int>(out.size());
  int lead = r - static_cast<int>(s.size());
  std::vector<int64_t> full = row_major_strides(s);
  std::vector<int64_t> st(r, 0);
  for (int i = lead; i < r; ++i) {
    int64_t e = s[i - lead];
    st[i] = (e == 1 && out[i] != 1) ? 0 : full[i - lead];
  }
  return st;
}

template <typename T, class F>
void binary_apply(const Tensor& a, const Tensor& b, Tensor& out, F f) {
  auto pa = a.data<T>().data();
  auto pb = b.data<T>().data();
  auto po = out.raw_mutable<T>().data();
  int64_t n = out.numel();
  if (a.shape() == b.shape()) {
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return;
  }
  const Shape& os = out.shape();
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  int r = static_cast<int>(os.size());
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    po[i] = f(pa[ia], pb[ib]);
    for (int ax = r - 1; ax >= 0; --ax) {
      ++idx[ax];
      ia += sa[ax];
      ib += sb[ax];
      if (idx[ax] < os[ax]) break;
      ia -= sa[ax] * os[ax];
      ib -= sb[ax] * os[ax];
      idx[ax] = 0;
    }
  }
}

/// Sums `g` down to `target` (inverse of broadcasting), preserving dtype.
Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor r = g;
  int extra = r.rank() - static_cast<int>(target.size());
  if (extra > 0) {
    std::vector<int> axes(extra);
    std::iota(axes.begin(), axes.end(), 0);
    r = reduce_sum(r, axes, /*keepdims=*/false);
  }
  std::vector<int> axes;
  for (int i = 0; i < r.rank(); ++i)
    if (target[i] == 1 && r.dim(i) != 1) axes.push_back(i);
  if (!axes.empty()) r = reduce_sum(r, axes, /*keepdims=*/true);
  return r.reshaped(Shape(target));
}

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ShapeError(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
}

template <class FwdF, class GaF, class GbF>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdF fwd, GaF make_ga,
                 GbF make_gb) {
  require_same_dtype(a, b, name);
  Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::zeros(os, a.dtype());
  dispatch_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    binary_apply<T>(a, b, out, [&](T x, T y) { return static_cast<T>(fwd(x, y)); });
  });
  check_finite(out, name);
  Graph* g = common_graph({&a, &b});
  if (!g) return out;
  Tensor ad = detach(a), bd = detach(b), od = detach(out);
  return record(g, out, parent_ids({&a, &b}), [=](const Tensor& go) -> std::vector<Tensor> {
    return {reduce_to_shape(make_ga(go, ad, bd, od), ad.shape()),
            reduce_to_shape(make_gb(go, ad, bd, od), bd.shape())};
  });
}

template <class FwdF, class BwdF>
Tensor unary_op(const char* name, const Tensor& x, FwdF fwd, BwdF bwd_elem) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>().data();
    auto po = out.raw_mutable<T>().data();
    for (int64_t i = 0; i < x.numel(); ++i) po[i] = static_cast<T>(fwd(px[i]));
  });
  check_finite(out, name);
  Graph* g = common_graph({&x});
  if (!g) return out;
  Tensor xd = detach(x), od = detach(out);
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(xd.shape(), xd.dtype());
    dispatch_dtype(xd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pg = go.data<T>().data();
      auto px = xd.data<T>().data();
      auto py = od.data<T>().data();
      auto po = gx.raw_mutable<T>().data();
      for (int64_t i = 0; i < xd.numel(); ++i)
        po[i] = static_cast<T>(bwd_elem(pg[i], px[i], py[i]));
    });
    return {gx};
  });
}

int64_t leading_product(const Shape& s, int upto) {
  int64_t p = 1;
  for (int i = 0; i < upto; ++i) p *= s[i];
  return p;
}

}  // namespace

Graph* common_graph(std::initializer_list<const Tensor*> xs) {
  Graph* g = nullptr;
  for (const Tensor* t : xs) {
    if (!t->defined() || !t->attached()) continue;
    if (g && t->graph() != g) throw Error("operands recorded on different graphs");
    g = t->graph();
  }
  return g;
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](const Tensor& go, const Tensor&, const Tensor&, const Tensor&) { return go; },
      [](const Tensor& go, const Tensor&, const Tensor&, const Tensor&) { return go; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](const Tensor& go, const Tensor&, const Tensor&, const Tensor&) { return go; },
      [](const Tensor& go, const Tensor&, const Tensor&, const Tensor&) { return neg(go); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](const Tensor& go, const Tensor&, const Tensor& bd, const Tensor&) { return mul(go, bd); },
      [](const Tensor& go, const Tensor& ad, const Tensor&, const Tensor&) { return mul(go, ad); });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](const Tensor& go, const Tensor&, const Tensor& bd, const Tensor&) { return div(go, bd); },
      [](const Tensor& go, const Tensor&, const Tensor& bd, const Tensor& od) {
        return neg(mul(go, div(od, bd)));
      });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double v) { return -v; },
      [](double g, double, double) { return -g; });
}

Tensor sqrt_op(const Tensor& x) {
  return unary_op(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double g, double, double y) { return g * 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      "square", x, [](double v) { return v * v; },
      [](double g, double v, double) { return g * 2.0 * v; });
}

Tensor scalar_mul(const Tensor& x, double s) {
  return unary_op(
      "scalar_mul", x, [s](double v) { return v * s; },
      [s](double g, double, double) { return g * s; });
}

Tensor scalar_add(const Tensor& x, double s) {
  return unary_op(
      "scalar_add", x, [s](double v) { return v + s; },
      [](double g, double, double) { return g; });
}

// ---- activations ------------------------------------------------------------

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  // tanh evaluated through Eigen's vectorized path; cached for the backward rule
  Tensor th = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    MapCA<T> vx(x.data<T>().data(), x.numel());
    MapA<T> vt(th.raw_mutable<T>().data(), x.numel());
    MapA<T> vo(out.raw_mutable<T>().data(), x.numel());
    vt = ((vx + T(kGeluA) * vx.cube()) * T(kGeluC)).tanh();
    vo = T(0.5) * vx * (T(1) + vt);
  });
  check_finite(out, "gelu");
  Graph* g = common_graph({&x});
  if (!g) return out;
  Tensor xd = detach(x), thd = detach(th);
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(xd.shape(), xd.dtype());
    dispatch_dtype(xd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      MapCA<T> vx(xd.data<T>().data(), xd.numel());
      MapCA<T> vt(thd.data<T>().data(), xd.numel());
      MapCA<T> vg(go.data<T>().data(), xd.numel());
      MapA<T> vo(gx.raw_mutable<T>().data(), xd.numel());
      auto sech2 = T(1) - vt.square();
      auto du = T(kGeluC) * (T(1) + T(3.0 * kGeluA) * vx.square());
      vo = vg * (T(0.5) * (T(1) + vt) + T(0.5) * vx * sech2 * du);
    });
    return {gx};
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_op(
      "leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double g, double v, double) { return v > 0 ? g : g * slope; });
}

Tensor sigmoid_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    MapCA<T> vx(x.data<T>().data(), x.numel());
    MapA<T> vo(out.raw_mutable<T>().data(), x.numel());
    vo = T(1) / (T(1) + (-vx).exp());
  });
  check_finite(out, "sigmoid");
  Graph* g = common_graph({&x});
  if (!g) return out;
  Tensor od = detach(out);
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(od.shape(), od.dtype());
    dispatch_dtype(od.dtype(), [&](auto tag) {
      using T = decltype(tag);
      MapCA<T> vs(od.data<T>().data(), od.numel());
      MapCA<T> vg(go.data<T>().data(), od.numel());
      MapA<T> vo(gx.raw_mutable<T>().data(), od.numel());
      vo = vg * vs * (T(1) - vs);
    });
    return {gx};
  });
}

Tensor softmax_last(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("softmax_last: rank >= 1 required");
  int64_t L = x.dim(-1);
  int64_t rows = x.numel() / L;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>().data();
    auto po = out.raw_mutable<T>().data();
    for (int64_t r = 0; r < rows; ++r) {
      const T* xr = px + r * L;
      T* orow = po + r * L;
      T m = xr[0];
      for (int64_t i = 1; i < L; ++i) m = std::max(m, xr[i]);
      T s = 0;
      for (int64_t i = 0; i < L; ++i) {
        orow[i] = std::exp(xr[i] - m);
        s += orow[i];
      }
      for (int64_t i = 0; i < L; ++i) orow[i] /= s;
    }
  });
  check_finite(out, "softmax");
  Graph* g = common_graph({&x});
  if (!g) return out;
  Tensor od = detach(out);
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(od.shape(), od.dtype());
    dispatch_dtype(od.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pp = od.data<T>().data();
      auto pg = go.data<T>().data();
      auto po = gx.raw_mutable<T>().data();
      for (int64_t r = 0; r < rows; ++r) {
        const T* p = pp + r * L;
        const T* gr = pg + r * L;
        T dot = 0;
        for (int64_t i = 0; i < L; ++i) dot += gr[i] * p[i];
        for (int64_t i = 0; i < L; ++i) po[r * L + i] = p[i] * (gr[i] - dot);
      }
    });
    return {gx};
  });
}

// ---- linear algebra ----------------------------------------------------------

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_same_dtype(x, w, "dense");
  if (w.rank() != 2) throw ShapeError("dense: weight must be rank 2");
  int64_t in = w.dim(0), out_c = w.dim(1);
  if (x.rank() < 1 || x.dim(-1) != in)
    throw ShapeError("dense: inner dimension mismatch, x " + shape_str(x.shape()) + " w " +
                     shape_str(w.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_c))
    throw ShapeError("dense: bias shape mismatch");
  int64_t m = x.numel() / in;
  Shape os = x.shape();
  os.back() = out_c;
  Tensor out = Tensor::zeros(os, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    MapCM<T> X(x.data<T>().data(), m, in);
    MapCM<T> W(w.data<T>().data(), in, out_c);
    MapM<T> O(out.raw_mutable<T>().data(), m, out_c);
    O.noalias() = X * W;
    if (bias.defined()) {
      MapCM<T> B(bias.data<T>().data(), 1, out_c);
      O.rowwise() += B.row(0);
    }
  });
  check_finite(out, "dense");
  Graph* g = common_graph({&x, &w, &bias});
  if (!g) return out;
  Tensor xd = detach(x), wd = detach(w);
  bool has_bias = bias.defined();
  return record(g, out, parent_ids({&x, &w, &bias}),
                [=](const Tensor& go) -> std::vector<Tensor> {
                  Tensor gx = Tensor::zeros(xd.shape(), xd.dtype());
                  Tensor gw = Tensor::zeros(wd.shape(), wd.dtype());
                  Tensor gb = has_bias ? Tensor::zeros({out_c}, wd.dtype()) : Tensor();
                  dispatch_dtype(xd.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    MapCM<T> X(xd.data<T>().data(), m, in);
                    MapCM<T> W(wd.data<T>().data(), in, out_c);
                    MapCM<T> G(go.data<T>().data(), m, out_c);
                    MapM<T>(gx.raw_mutable<T>().data(), m, in).noalias() = G * W.transpose();
                    MapM<T>(gw.raw_mutable<T>().data(), in, out_c).noalias() = X.transpose() * G;
                    if (has_bias) {
                      MapM<T> B(gb.raw_mutable<T>().data(), 1, out_c);
                      B = G.colwise().sum();
                    }
                  });
                  return {gx, gw, gb};
                });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require_same_dtype(a, b, "bmm");
  if (a.rank() < 2 || b.rank() != a.rank()) throw ShapeError("bmm: rank mismatch");
  for (int i = 0; i + 2 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i)) throw ShapeError("bmm: leading axes differ");
  int64_t am = a.dim(-2), an = a.dim(-1);
  int64_t bm = b.dim(-2), bn = b.dim(-1);
  int64_t M = trans_a ? an : am, K = trans_a ? am : an;
  int64_t Kb = trans_b ? bn : bm, N = trans_b ? bm : bn;
  if (K != Kb) throw ShapeError("bmm: inner dimension mismatch");
  int64_t batch = leading_product(a.shape(), a.rank() - 2);
  Shape os(a.shape().begin(), a.shape().end() - 2);
  os.push_back(M);
  os.push_back(N);
  Tensor out = Tensor::zeros(os, a.dtype());
  dispatch_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto pa = a.data<T>().data();
    auto pb = b.data<T>().data();
    auto po = out.raw_mutable<T>().data();
    for (int64_t i = 0; i < batch; ++i) {
      MapCM<T> A(pa + i * am * an, am, an);
      MapCM<T> B(pb + i * bm * bn, bm, bn);
      MapM<T> O(po + i * M * N, M, N);
      if (!trans_a && !trans_b)
        O.noalias() = A * B;
      else if (trans_a && !trans_b)
        O.noalias() = A.transpose() * B;
      else if (!trans_a && trans_b)
        O.noalias() = A * B.transpose();
      else
        O.noalias() = A.transpose() * B.transpose();
    }
  });
  check_finite(out, "bmm");
  Graph* g = common_graph({&a, &b});
  if (!g) return out;
  Tensor ad = detach(a), bd = detach(b);
  return record(g, out, parent_ids({&a, &b}), [=](const Tensor& go) -> std::vector<Tensor> {
    // dA = G B^T (or transposed variants), dB = A^T G
    Tensor ga, gb;
    if (!trans_a)
      ga = bmm(go, bd, false, !trans_b);
    else
      ga = bmm(bd, go, trans_b, true);
    if (!trans_b)
      gb = bmm(ad, go, !trans_a, false);
    else
      gb = bmm(go, ad, true, trans_a);
    return {ga, gb};
  });
}

namespace {

struct ConvGeometry {
  int64_t n, h, w, cin, kh, kw, cout;
  int stride;
  int64_t oh, ow;
  int64_t pt, pl;  // top/left padding
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& k, int stride, Padding pad) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [N,H,W,Cin]");
  if (k.rank() != 4) throw ShapeError("conv2d: kernel must be [kh,kw,Cin,Cout]");
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  ConvGeometry gm{};
  gm.n = x.dim(0);
  gm.h = x.dim(1);
  gm.w = x.dim(2);
  gm.cin = x.dim(3);
  gm.kh = k.dim(0);
  gm.kw = k.dim(1);
  gm.cout = k.dim(3);
  gm.stride = stride;
  if (k.dim(2) != gm.cin) throw ShapeError("conv2d: kernel Cin mismatch");
  if (pad == Padding::Same) {
    if (gm.kh % 2 == 0 || gm.kw % 2 == 0)
      throw ShapeError("conv2d: same-padding requires odd kernel extents");
    if (stride == 2 && (gm.h % 2 != 0 || gm.w % 2 != 0))
      throw ShapeError("conv2d: stride-2 same-padding requires even spatial extents");
    gm.oh = (gm.h + stride - 1) / stride;
    gm.ow = (gm.w + stride - 1) / stride;
    int64_t tot_h = std::max<int64_t>((gm.oh - 1) * stride + gm.kh - gm.h, 0);
    int64_t tot_w = std::max<int64_t>((gm.ow - 1) * stride + gm.kw - gm.w, 0);
    gm.pt = tot_h / 2;
    gm.pl = tot_w / 2;
  } else {
    if (gm.h < gm.kh || gm.w < gm.kw)
      throw ShapeError("conv2d: kernel larger than (padded) input");
    gm.oh = (gm.h - gm.kh) / stride + 1;
    gm.ow = (gm.w - gm.kw) / stride + 1;
    gm.pt = gm.pl = 0;
  }
  return gm;
}

template <typename T>
void fill_col(const ConvGeometry& gm, const T* px, T* col) {
  const int64_t kcols = gm.kh * gm.kw * gm.cin;
  for (int64_t n = 0; n < gm.n; ++n) {
    const T* xn = px + n * gm.h * gm.w * gm.cin;
    for (int64_t oy = 0; oy < gm.oh; ++oy) {
      for (int64_t ox = 0; ox < gm.ow; ++ox) {
        T* row = col + ((n * gm.oh + oy) * gm.ow + ox) * kcols;
        for (int64_t dy = 0; dy < gm.kh; ++dy) {
          int64_t iy = oy * gm.stride + dy - gm.pt;
          for (int64_t dx = 0; dx < gm.kw; ++dx) {
            int64_t ix = ox * gm.stride + dx - gm.pl;
            T* dst = row + (dy * gm.kw + dx) * gm.cin;
            if (iy >= 0 && iy < gm.h && ix >= 0 && ix < gm.w)
              std::memcpy(dst, xn + (iy * gm.w + ix) * gm.cin, gm.cin * sizeof(T));
            else
              std::memset(dst, 0, gm.cin * sizeof(T));
          }
        }
      }
    }
  }
}

template <typename T>
void col_scatter(const ConvGeometry& gm, const T* col, T* gx) {
  const int64_t kcols = gm.kh * gm.kw * gm.cin;
  for (int64_t n = 0; n < gm.n; ++n) {
    T* xn = gx + n * gm.h * gm.w * gm.cin;
    for (int64_t oy = 0; oy < gm.oh; ++oy) {
      for (int64_t ox = 0; ox < gm.ow; ++ox) {
        const T* row = col + ((n * gm.oh + oy) * gm.ow + ox) * kcols;
        for (int64_t dy = 0; dy < gm.kh; ++dy) {
          int64_t iy = oy * gm.stride + dy - gm.pt;
          if (iy < 0 || iy >= gm.h) continue;
          for (int64_t dx = 0; dx < gm.kw; ++dx) {
            int64_t ix = ox * gm.stride + dx - gm.pl;
            if (ix < 0 || ix >= gm.w) continue;
            const T* src = row + (dy * gm.kw + dx) * gm.cin;
            T* dst = xn + (iy * gm.w + ix) * gm.cin;
            for (int64_t c = 0; c < gm.cin; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, Padding pad) {
  require_same_dtype(x, k, "conv2d");
  ConvGeometry gm = conv_geometry(x, k, stride, pad);
  const int64_t m = gm.n * gm.oh * gm.ow;
  const int64_t kcols = gm.kh * gm.kw * gm.cin;
  Tensor out = Tensor::zeros({gm.n, gm.oh, gm.ow, gm.cout}, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<T> col(m * kcols);
    fill_col<T>(gm, x.data<T>().data(), col.data());
    MapCM<T> C(col.data(), m, kcols);
    MapCM<T> K(k.data<T>().data(), kcols, gm.cout);
    MapM<T> O(out.raw_mutable<T>().data(), m, gm.cout);
    O.noalias() = C * K;
  });
  check_finite(out, "conv2d");
  Graph* g = common_graph({&x, &k});
  if (!g) return out;
  Tensor xd = detach(x), kd = detach(k);
  return record(g, out, parent_ids({&x, &k}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(xd.shape(), xd.dtype());
    Tensor gk = Tensor::zeros(kd.shape(), kd.dtype());
    dispatch_dtype(xd.dtype(), [&](auto tag) {
      using T = decltype(tag);
      std::vector<T> col(m * kcols);
      fill_col<T>(gm, xd.data<T>().data(), col.data());
      MapCM<T> C(col.data(), m, kcols);
      MapCM<T> G(go.data<T>().data(), m, gm.cout);
      MapCM<T> K(kd.data<T>().data(), kcols, gm.cout);
      MapM<T>(gk.raw_mutable<T>().data(), kcols, gm.cout).noalias() = C.transpose() * G;
      std::vector<T> gcol(m * kcols);
      MapM<T>(gcol.data(), m, kcols).noalias() = G * K.transpose();
      col_scatter<T>(gm, gcol.data(), gx.raw_mutable<T>().data());
    });
    return {gx, gk};
  });
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_same_dtype(x, gamma, "layernorm");
  require_same_dtype(x, beta, "layernorm");
  if (x.rank() < 1) throw ShapeError("layernorm: rank >= 1 required");
  int64_t c = x.dim(-1);
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("layernorm: gamma/beta must have shape [C]");
  int64_t rows = x.numel() / c;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  Tensor xhat = Tensor::zeros(x.shape(), x.dtype());
  Tensor invstd = Tensor::zeros({rows}, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto px = x.data<T>().data();
    auto pg = gamma.data<T>().data();
    auto pb = beta.data<T>().data();
    auto po = out.raw_mutable<T>().data();
    auto ph = xhat.raw_mutable<T>().data();
    auto pv = invstd.raw_mutable<T>().data();
    for (int64_t r = 0; r < rows; ++r) {
      const T* xr = px + r * c;
      T mean = 0;
      for (int64_t i = 0; i < c; ++i) mean += xr[i];
      mean /= static_cast<T>(c);
      T var = 0;
      for (int64_t i = 0; i < c; ++i) {
        T d = xr[i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(c);
      T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      pv[r] = is;
      for (int64_t i = 0; i < c; ++i) {
        T h = (xr[i] - mean) * is;
        ph[r * c + i] = h;
        po[r * c + i] = h * pg[i] + pb[i];
      }
    }
  });
  check_finite(out, "layernorm");
  Graph* g = common_graph({&x, &gamma, &beta});
  if (!g) return out;
  Tensor hd = detach(xhat), vd = detach(invstd), gd = detach(gamma);
  return record(g, out, parent_ids({&x, &gamma, &beta}),
                [=](const Tensor& go) -> std::vector<Tensor> {
                  Tensor gx = Tensor::zeros(hd.shape(), hd.dtype());
                  Tensor gg = Tensor::zeros({c}, hd.dtype());
                  Tensor gb = Tensor::zeros({c}, hd.dtype());
                  dispatch_dtype(hd.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto ph = hd.data<T>().data();
                    auto pv = vd.data<T>().data();
                    auto pgam = gd.data<T>().data();
                    auto pgo = go.data<T>().data();
                    auto pgx = gx.raw_mutable<T>().data();
                    auto pgg = gg.raw_mutable<T>().data();
                    auto pgb = gb.raw_mutable<T>().data();
                    for (int64_t r = 0; r < rows; ++r) {
                      const T* h = ph + r * c;
                      const T* gor = pgo + r * c;
                      T m1 = 0, m2 = 0;
                      for (int64_t i = 0; i < c; ++i) {
                        T gh = gor[i] * pgam[i];
                        m1 += gh;
                        m2 += gh * h[i];
                        pgg[i] += gor[i] * h[i];
                        pgb[i] += gor[i];
                      }
                      m1 /= static_cast<T>(c);
                      m2 /= static_cast<T>(c);
                      for (int64_t i = 0; i < c; ++i) {
                        T gh = gor[i] * pgam[i];
                        pgx[r * c + i] = pv[r] * (gh - m1 - h[i] * m2);
                      }
                    }
                  });
                  return {gx, gg, gb};
                });
}

// ---- shape -------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  Tensor out = x.detached().reshaped(shape);
  Graph* g = common_graph({&x});
  if (!g) return out;
  Shape orig = x.shape();
  return record(g, out, parent_ids({&x}), [orig](const Tensor& go) -> std::vector<Tensor> {
    return {go.detached().reshaped(orig)};
  });
}

namespace {
std::vector<int> inverse_perm(const std::vector<int>& p) {
  std::vector<int> inv(p.size());
  for (size_t i = 0; i < p.size(); ++i) inv[p[i]] = static_cast<int>(i);
  return inv;
}

template <typename T>
void permute_copy(const Tensor& x, const std::vector<int>& perm, Tensor& out) {
  int r = x.rank();
  auto in_strides = row_major_strides(x.shape());
  const Shape& os = out.shape();
  // stride in the input for each output axis
  std::vector<int64_t> src_stride(r);
  for (int i = 0; i < r; ++i) src_stride[i] = in_strides[perm[i]];
  const T* px = x.data<T>().data();
  T* po = out.raw_mutable<T>().data();
  std::vector<int64_t> idx(r, 0);
  int64_t src = 0;
  int64_t n = out.numel();
  // innermost-contiguous fast path: copy runs when the last output axis is the
  // last input axis
  if (perm[r - 1] == r - 1) {
    int64_t run = os[r - 1];
    for (int64_t i = 0; i < n; i += run) {
      std::memcpy(po + i, px + src, run * sizeof(T));
      for (int ax = r - 2; ax >= 0; --ax) {
        ++idx[ax];
        src += src_stride[ax];
        if (idx[ax] < os[ax]) break;
        src -= src_stride[ax] * os[ax];
        idx[ax] = 0;
      }
    }
    return;
  }
  for (int64_t i = 0; i < n; ++i) {
    po[i] = px[src];
    for (int ax = r - 1; ax >= 0; --ax) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < os[ax]) break;
      src -= src_stride[ax] * os[ax];
      idx[ax] = 0;
    }
  }
}
}  // namespace

Tensor transpose(const Tensor& x, std::vector<int> perm) {
  if (static_cast<int>(perm.size()) != x.rank()) throw ShapeError("transpose: perm rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    if (p < 0 || p >= x.rank() || seen[p]) throw ShapeError("transpose: invalid permutation");
    seen[p] = true;
  }
  Shape os(x.rank());
  for (int i = 0; i < x.rank(); ++i) os[i] = x.dim(perm[i]);
  Tensor out = Tensor::zeros(os, x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    permute_copy<T>(x, perm, out);
  });
  Graph* g = common_graph({&x});
  if (!g) return out;
  std::vector<int> inv = inverse_perm(perm);
  return record(g, out, parent_ids({&x}), [inv](const Tensor& go) -> std::vector<Tensor> {
    return {transpose(go, inv)};
  });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  int r = xs[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("concat: axis out of range");
  Shape os = xs[0].shape();
  int64_t total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && t.dim(i) != os[i]) throw ShapeError("concat: extent mismatch off-axis");
    total += t.dim(axis);
  }
  os[axis] = total;
  Tensor out = Tensor::zeros(os, xs[0].dtype());
  int64_t outer = leading_product(os, axis);
  int64_t inner = out.numel() / (outer * total);
  dispatch_dtype(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* po = out.raw_mutable<T>().data();
    int64_t off = 0;
    for (const Tensor& t : xs) {
      int64_t len = t.dim(axis) * inner;
      const T* pt = t.data<T>().data();
      for (int64_t o = 0; o < outer; ++o)
        std::memcpy(po + o * total * inner + off, pt + o * len, len * sizeof(T));
      off += len;
    }
  });
  std::vector<const Tensor*> ptrs;
  for (const Tensor& t : xs) ptrs.push_back(&t);
  Graph* g = nullptr;
  for (const Tensor* t : ptrs) {
    if (t->attached()) {
      if (g && t->graph() != g) throw Error("concat: mixed graphs");
      g = t->graph();
    }
  }
  if (!g) return out;
  std::vector<int> parents;
  std::vector<int64_t> lens;
  for (const Tensor& t : xs) {
    parents.push_back(t.attached() ? t.node() : -1);
    lens.push_back(t.dim(axis));
  }
  return record(g, out, parents, [axis, lens](const Tensor& go) -> std::vector<Tensor> {
    std::vector<Tensor> grads;
    int64_t start = 0;
    for (int64_t len : lens) {
      grads.push_back(slice(go, axis, start, len));
      start += len;
    }
    return grads;
  });
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > x.dim(axis)) throw ShapeError("slice: range invalid");
  Shape os = x.shape();
  os[axis] = len;
  Tensor out = Tensor::zeros(os, x.dtype());
  int64_t outer = leading_product(x.shape(), axis);
  int64_t inner = x.numel() / (outer * x.dim(axis));
  int64_t src_pitch = x.dim(axis) * inner;
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>().data();
    T* po = out.raw_mutable<T>().data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(po + o * len * inner, px + o * src_pitch + start * inner,
                  len * inner * sizeof(T));
  });
  Graph* g = common_graph({&x});
  if (!g) return out;
  Shape xs = x.shape();
  return record(g, out, parent_ids({&x}),
                [axis, start, len, xs, outer, inner](const Tensor& go) -> std::vector<Tensor> {
                  Tensor gx = Tensor::zeros(xs, go.dtype());
                  int64_t pitch = xs[axis] * inner;
                  dispatch_dtype(go.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = go.data<T>().data();
                    T* po = gx.raw_mutable<T>().data();
                    for (int64_t o = 0; o < outer; ++o)
                      std::memcpy(po + o * pitch + start * inner, pg + o * len * inner,
                                  len * inner * sizeof(T));
                  });
                  return {gx};
                });
}

// ---- spatial -----------------------------------------------------------------

namespace {
int64_t reflect_index(int64_t i, int64_t n, PadMode mode) {
  if (mode == PadMode::Edge) return std::clamp<int64_t>(i, 0, n - 1);
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}
}  // namespace

Tensor resize(const Tensor& x, int64_t oh, int64_t ow, ResizeMode mode) {
  if (x.rank() != 4) throw ShapeError("resize: input must be [N,H,W,C]");
  if (oh < 1 || ow < 1) throw ShapeError("resize: target extents must be >= 1");
  int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (oh == h && ow == w) {
    // identity resize; keep gradient flow without a copy op
    Tensor out = x.detached();
    Graph* g = common_graph({&x});
    if (!g) return out;
    return record(g, out, parent_ids({&x}),
                  [](const Tensor& go) -> std::vector<Tensor> { return {go}; });
  }
  Tensor out = Tensor::zeros({n, oh, ow, c}, x.dtype());

  if (mode == ResizeMode::Nearest) {
    std::vector<int64_t> sy(oh), sx(ow);
    for (int64_t i = 0; i < oh; ++i) sy[i] = (i * h) / oh;
    for (int64_t i = 0; i < ow; ++i) sx[i] = (i * w) / ow;
    dispatch_dtype(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* px = x.data<T>().data();
      T* po = out.raw_mutable<T>().data();
      for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < oh; ++y)
          for (int64_t xw = 0; xw < ow; ++xw)
            std::memcpy(po + ((b * oh + y) * ow + xw) * c,
                        px + ((b * h + sy[y]) * w + sx[xw]) * c, c * sizeof(T));
    });
    Graph* g = common_graph({&x});
    if (!g) return out;
    Shape xs = x.shape();
    return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
      Tensor gx = Tensor::zeros(xs, go.dtype());
      dispatch_dtype(go.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go.data<T>().data();
        T* po = gx.raw_mutable<T>().data();
        for (int64_t b = 0; b < n; ++b)
          for (int64_t y = 0; y < oh; ++y)
            for (int64_t xw = 0; xw < ow; ++xw) {
              T* dst = po + ((b * h + sy[y]) * w + sx[xw]) * c;
              const T* src = pg + ((b * oh + y) * ow + xw) * c;
              for (int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
            }
      });
      return {gx};
    });
  }

  // Bilinear with half-pixel centers.
  struct Lerp {
    int64_t i0, i1;
    double w0, w1;
  };
  auto make_lerp = [](int64_t out_n, int64_t in_n) {
    std::vector<Lerp> v(out_n);
    double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (int64_t i = 0; i < out_n; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      double f = std::floor(src);
      int64_t i0 = static_cast<int64_t>(f);
      double t = src - f;
      int64_t i1 = i0 + 1;
      if (i0 < 0) {
        i0 = 0;
        i1 = 0;
        t = 0;
      }
      if (i1 > in_n - 1) {
        i1 = in_n - 1;
        if (i0 > in_n - 1) i0 = in_n - 1;
      }
      v[i] = {i0, i1, 1.0 - t, t};
    }
    return v;
  };
  auto ly = make_lerp(oh, h), lx = make_lerp(ow, w);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>().data();
    T* po = out.raw_mutable<T>().data();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xw = 0; xw < ow; ++xw) {
          const auto& a = ly[y];
          const auto& d = lx[xw];
          const T* p00 = px + ((b * h + a.i0) * w + d.i0) * c;
          const T* p01 = px + ((b * h + a.i0) * w + d.i1) * c;
          const T* p10 = px + ((b * h + a.i1) * w + d.i0) * c;
          const T* p11 = px + ((b * h + a.i1) * w + d.i1) * c;
          T* dst = po + ((b * oh + y) * ow + xw) * c;
          for (int64_t ch = 0; ch < c; ++ch)
            dst[ch] = static_cast<T>(a.w0 * (d.w0 * p00[ch] + d.w1 * p01[ch]) +
                                     a.w1 * (d.w0 * p10[ch] + d.w1 * p11[ch]));
        }
  });
  check_finite(out, "resize");
  Graph* g = common_graph({&x});
  if (!g) return out;
  Shape xs = x.shape();
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(xs, go.dtype());
    dispatch_dtype(go.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* pg = go.data<T>().data();
      T* po = gx.raw_mutable<T>().data();
      for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < oh; ++y)
          for (int64_t xw = 0; xw < ow; ++xw) {
            const auto& a = ly[y];
            const auto& d = lx[xw];
            const T* src = pg + ((b * oh + y) * ow + xw) * c;
            T* p00 = po + ((b * h + a.i0) * w + d.i0) * c;
            T* p01 = po + ((b * h + a.i0) * w + d.i1) * c;
            T* p10 = po + ((b * h + a.i1) * w + d.i0) * c;
            T* p11 = po + ((b * h + a.i1) * w + d.i1) * c;
            for (int64_t ch = 0; ch < c; ++ch) {
              p00[ch] += static_cast<T>(a.w0 * d.w0 * src[ch]);
              p01[ch] += static_cast<T>(a.w0 * d.w1 * src[ch]);
              p10[ch] += static_cast<T>(a.w1 * d.w0 * src[ch]);
              p11[ch] += static_cast<T>(a.w1 * d.w1 * src[ch]);
            }
          }
    });
    return {gx};
  });
}

Tensor pad2d(const Tensor& x, int top, int bottom, int left, int right, PadMode mode) {
  if (x.rank() != 4) throw ShapeError("pad2d: input must be [N,H,W,C]");
  if (top < 0 || bottom < 0 || left < 0 || right < 0) throw ShapeError("pad2d: negative pad");
  int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (mode == PadMode::Reflect &&
      (top > h - 1 || bottom > h - 1 || left > w - 1 || right > w - 1))
    throw ShapeError("pad2d: reflect pad exceeds extent - 1");
  int64_t nh = h + top + bottom, nw = w + left + right;
  Tensor out = Tensor::zeros({n, nh, nw, c}, x.dtype());
  std::vector<int64_t> ys(nh), xsrc(nw);
  for (int64_t y = 0; y < nh; ++y)
    ys[y] = mode == PadMode::Zero ? (y - top >= 0 && y - top < h ? y - top : -1)
                                  : reflect_index(y - top, h, mode);
  for (int64_t xw = 0; xw < nw; ++xw)
    xsrc[xw] = mode == PadMode::Zero ? (xw - left >= 0 && xw - left < w ? xw - left : -1)
                                     : reflect_index(xw - left, w, mode);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>().data();
    T* po = out.raw_mutable<T>().data();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t y = 0; y < nh; ++y)
        for (int64_t xw = 0; xw < nw; ++xw) {
          T* dst = po + ((b * nh + y) * nw + xw) * c;
          if (ys[y] < 0 || xsrc[xw] < 0)
            std::memset(dst, 0, c * sizeof(T));
          else
            std::memcpy(dst, px + ((b * h + ys[y]) * w + xsrc[xw]) * c, c * sizeof(T));
        }
  });
  Graph* g = common_graph({&x});
  if (!g) return out;
  Shape xs = x.shape();
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(xs, go.dtype());
    dispatch_dtype(go.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* pg = go.data<T>().data();
      T* po = gx.raw_mutable<T>().data();
      for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < nh; ++y)
          for (int64_t xw = 0; xw < nw; ++xw) {
            if (ys[y] < 0 || xsrc[xw] < 0) continue;
            T* dst = po + ((b * h + ys[y]) * w + xsrc[xw]) * c;
            const T* src = pg + ((b * nh + y) * nw + xw) * c;
            for (int64_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
    });
    return {gx};
  });
}

Tensor crop2d(const Tensor& x, int64_t top, int64_t left, int64_t h, int64_t w) {
  if (x.rank() != 4) throw ShapeError("crop2d: input must be [N,H,W,C]");
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > x.dim(1) || left + w > x.dim(2))
    throw ShapeError("crop2d: window out of range");
  Tensor rows = slice(x, 1, top, h);
  return slice(rows, 2, left, w);
}

// ---- reductions --------------------------------------------------------------

Tensor reduce_sum(const Tensor& x, std::vector<int> axes, bool keepdims) {
  int r = x.rank();
  for (int& a : axes)
    if (a < 0) a += r;
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (int a : axes)
    if (a < 0 || a >= r) throw ShapeError("reduce_sum: axis out of range");
  std::vector<bool> red(r, false);
  for (int a : axes) red[a] = true;
  Shape os_keep = x.shape();
  for (int a : axes) os_keep[a] = 1;
  Shape os;
  for (int i = 0; i < r; ++i)
    if (keepdims)
      os.push_back(os_keep[i]);
    else if (!red[i])
      os.push_back(x.dim(i));
  // os may be empty -> scalar
  Tensor out = Tensor::zeros(os.empty() ? Shape{} : os, x.dtype());
  auto out_strides_keep = row_major_strides(os_keep);
  auto xs = x.shape();
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.data<T>().data();
    T* po = out.raw_mutable<T>().data();
    std::vector<int64_t> idx(r, 0);
    int64_t oi = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
      po[oi] += px[i];
      for (int ax = r - 1; ax >= 0; --ax) {
        ++idx[ax];
        if (!red[ax]) oi += out_strides_keep[ax];
        if (idx[ax] < xs[ax]) break;
        if (!red[ax]) oi -= out_strides_keep[ax] * xs[ax];
        idx[ax] = 0;
      }
    }
  });
  check_finite(out, "reduce_sum");
  Graph* g = common_graph({&x});
  if (!g) return out;
  Shape xshape = x.shape();
  return record(g, out, parent_ids({&x}), [=](const Tensor& go) -> std::vector<Tensor> {
    Tensor gx = Tensor::zeros(xshape, go.dtype());
    dispatch_dtype(go.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* pg = go.data<T>().data();
      T* po = gx.raw_mutable<T>().data();
      std::vector<int64_t> idx(r, 0);
      int64_t oi = 0;
      for (int64_t i = 0; i < gx.numel(); ++i) {
        po[i] = pg[oi];
        for (int ax = r - 1; ax >= 0; --ax) {
          ++idx[ax];
          if (!red[ax]) oi += out_strides_keep[ax];
          if (idx[ax] < xshape[ax]) break;
          if (!red[ax]) oi -= out_strides_keep[ax] * xshape[ax];
          idx[ax] = 0;
        }
      }
    });
    return {gx};
  });
}

Tensor reduce_mean(const Tensor& x, std::vector<int> axes, bool keepdims) {
  int64_t k = 1;
  int r = x.rank();
  for (int a : axes) k *= x.dim(a < 0 ? a + r : a);
  return scalar_mul(reduce_sum(x, std::move(axes), keepdims), 1.0 / static_cast<double>(k));
}

Tensor sum_all(const Tensor& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce_sum(x, axes, false);
}

Tensor mean_all(const Tensor& x) {
  return scalar_mul(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- spectra -------------------------------------------------------------------

namespace {

struct DftTables {
  Eigen::MatrixXd cos;  // [L, L], cos(2*pi*j*k/L)
  Eigen::MatrixXd sin;
};

const DftTables& dft_tables(int64_t L) {
  static std::map<int64_t, DftTables> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(L);
  if (it != cache.end()) return it->second;
  DftTables t;
  t.cos.resize(L, L);
  t.sin.resize(L, L);
  for (int64_t j = 0; j < L; ++j)
    for (int64_t k = 0; k < L; ++k) {
      double th = 2.0 * M_PI * static_cast<double>(j) * static_cast<double>(k) /
                  static_cast<double>(L);
      t.cos(j, k) = std::cos(th);
      t.sin(j, k) = std::sin(th);
    }
  return cache.emplace(L, std::move(t)).first->second;
}

/// Unnormalized 2-D DFT of a real plane D [H,W]: X = C_H^T (D C_W) etc.
void dft2_plane(const Eigen::MatrixXd& d, Eigen::MatrixXd& re, Eigen::MatrixXd& im) {
  int64_t h = d.rows(), w = d.cols();
  const DftTables& tw = dft_tables(w);
  const DftTables& th = dft_tables(h);
  Eigen::MatrixXd re1 = d * tw.cos;   // [h, w]
  Eigen::MatrixXd im1 = -(d * tw.sin);
  re = th.cos.transpose() * re1 + th.sin.transpose() * im1;
  im = th.cos.transpose() * im1 - th.sin.transpose() * re1;
}

}  // namespace

Tensor fft_l1_diff(const Tensor& a, const Tensor& b) {
  require_same_dtype(a, b, "fft_l1_diff");
  if (a.shape() != b.shape()) throw ShapeError("fft_l1_diff: shape mismatch");
  if (a.rank() != 4) throw ShapeError("fft_l1_diff: inputs must be [N,H,W,C]");
  int64_t n = a.dim(0), h = a.dim(1), w = a.dim(2), c = a.dim(3);
  double bins = static_cast<double>(n * h * w * c);

  auto plane = [&](const Tensor& t, int64_t bi, int64_t ci) {
    Eigen::MatrixXd d(h, w);
    dispatch_dtype(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* p = t.data<T>().data();
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          d(y, x) = static_cast<double>(p[((bi * h + y) * w + x) * c + ci]);
    });
    return d;
  };

  double total = 0.0;
  for (int64_t bi = 0; bi < n; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      Eigen::MatrixXd d = plane(a, bi, ci) - plane(b, bi, ci);
      Eigen::MatrixXd re, im;
      dft2_plane(d, re, im);
      total += re.array().abs().sum() + im.array().abs().sum();
    }
  total /= bins;
  Tensor out = Tensor::scalar(total, a.dtype());
  check_finite(out, "fft_l1_diff");
  Graph* g = common_graph({&a, &b});
  if (!g) return out;
  Tensor ad = detach(a), bd = detach(b);
  return record(g, out, parent_ids({&a, &b}), [=](const Tensor& go) -> std::vector<Tensor> {
    double gscale = go.scalar_value() / bins;
    Tensor ga = Tensor::zeros(ad.shape(), ad.dtype());
    auto plane2 = [&](const Tensor& t, int64_t bi, int64_t ci) {
      Eigen::MatrixXd d(h, w);
      dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* p = t.data<T>().data();
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x)
            d(y, x) = static_cast<double>(p[((bi * h + y) * w + x) * c + ci]);
      });
      return d;
    };
    const DftTables& tw = dft_tables(w);
    const DftTables& th = dft_tables(h);
    dispatch_dtype(ad.dtype(), [&](auto tag) {
      using T = decltype(tag);
      T* pg = ga.raw_mutable<T>().data();
      for (int64_t bi = 0; bi < n; ++bi)
        for (int64_t ci = 0; ci < c; ++ci) {
          Eigen::MatrixXd d = plane2(ad, bi, ci) - plane2(bd, bi, ci);
          Eigen::MatrixXd re, im;
          dft2_plane(d, re, im);
          Eigen::MatrixXd sre = re.array().sign().matrix();
          Eigen::MatrixXd sim = im.array().sign().matrix();
          // grad(h,w) = sum_{v,u} s_re cos(theta) - s_im sin(theta)
          Eigen::MatrixXd p = th.cos * sre - th.sin * sim;  // [h, u]
          Eigen::MatrixXd q = th.sin * sre + th.cos * sim;
          Eigen::MatrixXd gplane = p * tw.cos.transpose() - q * tw.sin.transpose();
          for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
              pg[((bi * h + y) * w + x) * c + ci] = static_cast<T>(gscale * gplane(y, x));
        }
    });
    Tensor gb = neg(ga);
    return {ga, gb};
  });
}

Tensor cast(const Tensor& x, DType dt) {
  Tensor out = x.astype(dt);
  Graph* g = common_graph({&x});
  if (!g) return out;
  DType src = x.dtype();
  return record(g, out, parent_ids({&x}), [src](const Tensor& go) -> std::vector<Tensor> {
    return {go.astype(src)};
  });
}

}  // namespace maxim
