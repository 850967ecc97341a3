#include "maxim/mixers.hpp"

#include <cmath>
#include <numeric>

namespace maxim {

MixerKind mixer_kind_from_string(const std::string& s) {
  if (s == "gmlp") return MixerKind::Gmlp;
  if (s == "mlp") return MixerKind::Mlp;
  if (s == "fft") return MixerKind::Fft;
  if (s == "sa") return MixerKind::SelfAttention;
  throw Error("unknown mixer kind: " + s);
}

const char* mixer_kind_name(MixerKind k) {
  switch (k) {
    case MixerKind::Gmlp: return "gmlp";
    case MixerKind::Mlp: return "mlp";
    case MixerKind::Fft: return "fft";
    case MixerKind::SelfAttention: return "sa";
  }
  return "?";
}

namespace {

Tensor over_tokens(Session& s, const Tensor& x, ParamId w, ParamId b) {
  int r = x.rank();
  std::vector<int> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[r - 1], perm[r - 2]);
  Tensor t = transpose(x, perm);
  t = dense(t, s[w], s[b]);
  return transpose(t, perm);
}

int default_heads(int64_t channels) { return channels <= 64 ? 2 : 4; }

}  // namespace

// ---- gMLP -------------------------------------------------------------------

Tensor GmlpMixer::forward(Session& s, const Tensor& x) const {
  if (x.rank() < 2 || x.dim(-2) != len || x.dim(-1) != ch)
    throw ShapeError("gmlp mixer: trailing extents must be (L, C)");
  Tensor y = ln_in(s, x);
  y = gelu(expand(s, y));
  int64_t half = (static_cast<int64_t>(e) * ch) / 2;
  Tensor u1 = slice(y, -1, 0, half);
  Tensor u2 = slice(y, -1, half, half);
  Tensor v = spatial(s, ln_gate(s, u2));
  return add(x, project(s, mul(u1, v)));
}

void GmlpMixer::count(CostCounter& c, int64_t lead) const {
  int64_t ec = static_cast<int64_t>(e) * ch, half = ec / 2;
  ln_in.count(c, lead * len);
  expand.count(c, lead * len);
  c.more(0, static_cast<uint64_t>(lead) * len * ec * kCostGelu);
  ln_gate.count(c, lead * len);
  spatial.count(c, lead * half);
  c.more(0, static_cast<uint64_t>(lead) * len * half * kCostMul);  // gate
  project.count(c, lead * len);
  c.more(0, static_cast<uint64_t>(lead) * len * ch * kCostAdd);  // residual
}

// ---- token MLP ----------------------------------------------------------------

Tensor MlpMixer::forward(Session& s, const Tensor& x) const {
  if (x.rank() < 2 || x.dim(-2) != len || x.dim(-1) != ch)
    throw ShapeError("mlp mixer: trailing extents must be (L, C)");
  Tensor y = ln(s, x);
  y = over_tokens(s, y, w1, b1);
  y = gelu(y);
  y = over_tokens(s, y, w2, b2);
  return add(x, y);
}

void MlpMixer::count(CostCounter& c, int64_t lead) const {
  ln.count(c, lead * len);
  uint64_t rows = static_cast<uint64_t>(lead) * ch;
  c.more(rows * len * hidden, rows * hidden);
  c.more(0, rows * hidden * kCostGelu);
  c.more(rows * hidden * len, rows * len);
  c.more(0, static_cast<uint64_t>(lead) * len * ch * kCostAdd);
}

// ---- spectral filter ------------------------------------------------------------

Tensor FftMixer::forward(Session& s, const Tensor& x) const {
  if (x.rank() < 2 || x.dim(-2) != len || x.dim(-1) != ch)
    throw ShapeError("fft mixer: trailing extents must be (L, C)");
  Tensor y = ln(s, x);
  int r = x.rank();
  std::vector<int> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[r - 1], perm[r - 2]);
  Tensor t = transpose(y, perm);             // [..., C, L]
  Tensor re = dense(t, fwd_cos, Tensor());   // [..., C, F]
  Tensor im = dense(t, fwd_sin, Tensor());   // already negated table
  Tensor fr = transpose(s[filt_re], {1, 0});  // [C, F], broadcasts over leading
  Tensor fi = transpose(s[filt_im], {1, 0});
  Tensor yr = sub(mul(re, fr), mul(im, fi));
  Tensor yi = add(mul(re, fi), mul(im, fr));
  Tensor rec = add(dense(yr, inv_cos, Tensor()), dense(yi, inv_sin, Tensor()));
  return add(x, transpose(rec, perm));
}

void FftMixer::count(CostCounter& c, int64_t lead) const {
  ln.count(c, lead * len);
  uint64_t rows = static_cast<uint64_t>(lead) * ch;
  c.more(2 * rows * len * bins, 0);           // forward transform (re, im)
  c.more(0, rows * bins * 6);                 // complex filter multiply
  c.more(2 * rows * bins * len, rows * len);  // inverse transform + combine
  c.more(0, static_cast<uint64_t>(lead) * len * ch * kCostAdd);
}

// ---- self-attention -------------------------------------------------------------

Tensor SaMixer::forward(Session& s, const Tensor& x) const {
  if (x.rank() < 2 || x.dim(-2) != len || x.dim(-1) != ch)
    throw ShapeError("sa mixer: trailing extents must be (L, C)");
  Shape orig = x.shape();
  int64_t bsz = x.numel() / (len * ch);
  int64_t dh = ch / heads;
  Tensor y = ln(s, x);
  Tensor q3 = qkv(s, y);  // [..., L, 3C]
  q3 = reshape(q3, {bsz, len, 3 * ch});
  Tensor q = slice(q3, -1, 0, ch);
  Tensor k = slice(q3, -1, ch, ch);
  Tensor v = slice(q3, -1, 2 * ch, ch);
  auto to_heads = [&](const Tensor& t) {
    return transpose(reshape(t, {bsz, len, static_cast<int64_t>(heads), dh}), {0, 2, 1, 3});
  };
  q = to_heads(q);
  k = to_heads(k);
  v = to_heads(v);
  Tensor scores = scalar_mul(bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor p = softmax_last(scores);
  Tensor o = bmm(p, v);                              // [B, h, L, dh]
  o = reshape(transpose(o, {0, 2, 1, 3}), {bsz, len, ch});
  o = project(s, o);
  return add(x, reshape(o, orig));
}

void SaMixer::count(CostCounter& c, int64_t lead) const {
  ln.count(c, lead * len);
  qkv.count(c, lead * len);
  uint64_t l = static_cast<uint64_t>(lead);
  c.more(l * len * len * ch, 0);                       // q k^T over heads
  c.more(0, l * heads * len * len * (kCostSoftmax + kCostMul));  // softmax + scale
  c.more(l * len * len * ch, 0);                       // attention-weighted values
  project.count(c, lead * len);
  c.more(0, l * len * ch * kCostAdd);
}

// ---- factory ---------------------------------------------------------------------

Mixer make_mixer(ParamBuilder pb, const MixerSpec& spec, DType dt) {
  int64_t L = spec.length, C = spec.channels;
  if (L < 1 || C < 1) throw ShapeError("mixer: length and channels must be positive");
  switch (spec.kind) {
    case MixerKind::Gmlp: {
      int64_t ec = static_cast<int64_t>(spec.expansion) * C;
      if (ec % 2 != 0) throw ShapeError("gmlp mixer: expanded width must be even");
      GmlpMixer m;
      m.len = L;
      m.ch = C;
      m.e = spec.expansion;
      m.ln_in = Norm::make(pb.sub("ln_in"), C);
      m.expand = Dense::make(pb.sub("expand"), C, ec);
      m.ln_gate = Norm::make(pb.sub("ln_gate"), ec / 2);
      m.spatial = SpatialProj::make(pb.sub("sgu"), L);
      m.project = Dense::make(pb.sub("project"), ec / 2, C);
      return m;
    }
    case MixerKind::Mlp: {
      MlpMixer m;
      m.len = L;
      m.ch = C;
      m.hidden = std::max<int64_t>(1, L / 2);
      m.ln = Norm::make(pb.sub("ln"), C);
      auto tok = pb.sub("token");
      m.w1 = tok.param("w1", {L, m.hidden}, Init::LecunNormal);
      m.b1 = tok.param("b1", {m.hidden}, Init::Zeros);
      m.w2 = tok.param("w2", {m.hidden, L}, Init::LecunNormal);
      m.b2 = tok.param("b2", {L}, Init::Zeros);
      return m;
    }
    case MixerKind::Fft: {
      FftMixer m;
      m.len = L;
      m.ch = C;
      m.bins = L / 2 + 1;
      m.ln = Norm::make(pb.sub("ln"), C);
      auto f = pb.sub("filter");
      m.filt_re = f.param("re", {m.bins, C}, Init::Normal, 0.02);
      m.filt_im = f.param("im", {m.bins, C}, Init::Normal, 0.02);
      // constant transform tables; Hermitian doubling folded into the inverse
      Tensor fc = Tensor::zeros({L, m.bins}, DType::f64);
      Tensor fs = Tensor::zeros({L, m.bins}, DType::f64);
      Tensor ic = Tensor::zeros({m.bins, L}, DType::f64);
      Tensor is = Tensor::zeros({m.bins, L}, DType::f64);
      auto pfc = fc.raw_mutable<double>();
      auto pfs = fs.raw_mutable<double>();
      auto pic = ic.raw_mutable<double>();
      auto pis = is.raw_mutable<double>();
      for (int64_t l = 0; l < L; ++l)
        for (int64_t fb = 0; fb < m.bins; ++fb) {
          double th = 2.0 * M_PI * static_cast<double>(l) * static_cast<double>(fb) /
                      static_cast<double>(L);
          pfc[l * m.bins + fb] = std::cos(th);
          pfs[l * m.bins + fb] = -std::sin(th);
          double wgt = (fb == 0 || (L % 2 == 0 && fb == L / 2)) ? 1.0 : 2.0;
          pic[fb * L + l] = wgt * std::cos(th) / static_cast<double>(L);
          pis[fb * L + l] = -wgt * std::sin(th) / static_cast<double>(L);
        }
      m.fwd_cos = fc.astype(dt);
      m.fwd_sin = fs.astype(dt);
      m.inv_cos = ic.astype(dt);
      m.inv_sin = is.astype(dt);
      return m;
    }
    case MixerKind::SelfAttention: {
      SaMixer m;
      m.len = L;
      m.ch = C;
      m.heads = spec.heads > 0 ? spec.heads : default_heads(C);
      if (C % m.heads != 0) throw ShapeError("sa mixer: channels not divisible by heads");
      m.ln = Norm::make(pb.sub("ln"), C);
      m.qkv = Dense::make(pb.sub("qkv"), C, 3 * C);
      m.project = Dense::make(pb.sub("project"), C, C);
      return m;
    }
  }
  throw Error("unreachable mixer kind");
}

Tensor mixer_forward(const Mixer& m, Session& s, const Tensor& x) {
  return std::visit([&](const auto& mm) { return mm.forward(s, x); }, m);
}

void mixer_count(const Mixer& m, CostCounter& c, int64_t lead) {
  std::visit([&](const auto& mm) { mm.count(c, lead); }, m);
}

int64_t mixer_param_count(const MixerSpec& spec) {
  int64_t L = spec.length, C = spec.channels;
  switch (spec.kind) {
    case MixerKind::Gmlp: {
      int64_t ec = static_cast<int64_t>(spec.expansion) * C;
      return 2 * C + (C * ec + ec) + 2 * (ec / 2) + (L * L + L) + ((ec / 2) * C + C);
    }
    case MixerKind::Mlp: {
      int64_t h = std::max<int64_t>(1, L / 2);
      return 2 * C + L * h + h + h * L + L;
    }
    case MixerKind::Fft:
      return 2 * C + 2 * (L / 2 + 1) * C;
    case MixerKind::SelfAttention:
      return 2 * C + (C * 3 * C + 3 * C) + (C * C + C);
  }
  return 0;
}

}  // namespace maxim
