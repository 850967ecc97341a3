#include "maxim/model.hpp"

#include <sstream>

namespace maxim {

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  c.arch = name;
  if (name == "maxim-1s") {
    c.stages = 1;
  } else if (name == "maxim-2s") {
    c.stages = 2;
  } else if (name == "maxim-3s") {
    c.stages = 3;
  } else if (name == "tiny") {
    c.stages = 1;
    c.stage = tiny_stage_config();
  } else {
    throw Error("unknown architecture preset: " + name +
                " (expected maxim-1s|maxim-2s|maxim-3s|tiny)");
  }
  return c;
}

std::string ModelConfig::canonical() const {
  std::ostringstream os;
  os << "arch=" << arch << ";stages=" << stages << ";c0=" << stage.c0
     << ";depths=" << stage.depths << ";scales=" << stage.scales << ";bd=";
  for (auto [b, d] : stage.bd) os << b << "," << d << ";";
  os << "bneck=";
  for (auto [b, d] : stage.bneck_bd) os << b << "," << d << ";";
  os << "neck=";
  for (int v : stage.neck_bd) os << v << ",";
  os << ";mult=" << stage.bneck_mult << ";pairs=" << stage.pairs
     << ";r=" << stage.se_reduction << ";mixer=" << mixer_kind_name(stage.mixer)
     << ";loss=" << (loss == LossKind::L2 ? "l2" : "charbonnier+freq")
     << ";lambda=" << freq_weight;
  return os.str();
}

uint64_t ModelConfig::digest() const {
  std::string s = canonical();
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

Model Model::build(ParamStore& store, const ModelConfig& cfg, uint64_t seed) {
  Model m;
  m.cfg = cfg;
  Rng rng(Rng::derive(seed, 0xa11c));
  ParamBuilder pb(store, rng);
  for (int s = 0; s < cfg.stages; ++s) {
    bool first = s == 0;
    bool last = s == cfg.stages - 1;
    m.stage_nets.push_back(Backbone::make(pb.sub("stage" + std::to_string(s)), cfg.stage,
                                          /*has_cross=*/!first, /*full_res_head=*/last,
                                          store.dtype()));
    if (!last)
      m.sams.push_back(
          SupervisedAttention::make(pb.sub("sam" + std::to_string(s)), cfg.stage.c0,
                                    store.dtype()));
  }
  return m;
}

std::vector<Tensor> input_pyramid(const Tensor& img, int scales) {
  std::vector<Tensor> pyr{img};
  for (int n = 1; n < scales; ++n)
    pyr.push_back(resize(img, img.dim(1) >> n, img.dim(2) >> n, ResizeMode::Nearest));
  return pyr;
}

std::vector<Tensor> target_pyramid(const Tensor& target, int scales) {
  std::vector<Tensor> pyr{target};
  for (int n = 1; n < scales; ++n)
    pyr.push_back(resize(target, target.dim(1) >> n, target.dim(2) >> n, ResizeMode::Bilinear));
  return pyr;
}

StageOutputs Model::forward(Session& s, const Tensor& img) const {
  if (img.rank() != 4 || img.dim(3) != 3)
    throw ShapeError("model: input must be [N,H,W,3]");
  int64_t div = divisibility();
  if (img.dim(1) % div != 0 || img.dim(2) % div != 0)
    throw ShapeError("model: extents " + std::to_string(img.dim(1)) + "x" +
                     std::to_string(img.dim(2)) + " must be multiples of " +
                     std::to_string(div) + " (pad the input)");

  std::vector<Tensor> pyramid = input_pyramid(img, cfg.stage.scales);
  StageOutputs out;
  out.restored.resize(cfg.stages);
  StageResult prev;
  Tensor sam_feat;
  for (int si = 0; si < cfg.stages; ++si) {
    const Backbone& net = stage_nets[si];
    StageIO io;
    io.pyramid = pyramid;
    if (si > 0) {
      for (int i = 0; i < cfg.stage.depths; ++i) {
        Tensor sum = add(prev.enc[i], prev.dec[i]);
        if (i == 0) sum = add(sum, sam_feat);
        io.incoming.push_back(sum);
      }
    }
    StageResult res = net.forward(s, io);
    out.restored[si].resize(cfg.stage.scales);
    for (int n = 0; n < cfg.stage.scales; ++n) {
      if (n == 0 && si < cfg.stages - 1) continue;  // SAM supplies this one
      out.restored[si][n] = net.head(s, n, res.dec[n], pyramid[n]);
    }
    if (si < cfg.stages - 1) {
      auto [feat, restored] = sams[si].forward(s, res.dec[0], pyramid[0]);
      out.restored[si][0] = restored;
      out.sam_features.push_back(feat);
      sam_feat = feat;
    }
    prev = std::move(res);
  }
  return out;
}

CostReport Model::count(const ParamStore& store, int64_t h, int64_t w) const {
  int64_t div = divisibility();
  if (h % div != 0 || w % div != 0)
    throw ShapeError("count: extents must be multiples of " + std::to_string(div));
  CostCounter c(store);
  for (int si = 0; si < cfg.stages; ++si) {
    stage_nets[si].count(c, h, w);
    if (si < cfg.stages - 1) {
      sams[si].count(c, h, w);
      // cross-stage bundle sums (enc + dec [+ attention features]) feeding the
      // next stage's cross-gating inputs
      for (int i = 0; i < cfg.stage.depths; ++i) {
        uint64_t hw = static_cast<uint64_t>(h >> i) * (w >> i);
        c.more(0, hw * cfg.stage.channels_at(i) * (i == 0 ? 2 : 1) * kCostAdd);
      }
    }
  }
  CostReport r = c.finish(h, w);
  if (r.total_params != static_cast<uint64_t>(store.total_params()))
    throw Error("cost report parameter coverage mismatch: " + std::to_string(r.total_params) +
                " counted vs " + std::to_string(store.total_params()) + " stored");
  return r;
}

// ---- losses ---------------------------------------------------------------------

Tensor charbonnier(const Tensor& r, const Tensor& t) {
  if (r.shape() != t.shape()) throw ShapeError("charbonnier: shape mismatch");
  Tensor d = sub(r, t);
  return mean_all(sqrt_op(scalar_add(square(d), kCharbonnierEps * kCharbonnierEps)));
}

Tensor freq_loss(const Tensor& r, const Tensor& t) { return fft_l1_diff(r, t); }

Tensor total_loss(const StageOutputs& out, const Tensor& target, const ModelConfig& cfg) {
  std::vector<Tensor> targets = target_pyramid(target, cfg.stage.scales);
  Tensor loss;
  for (const auto& stage : out.restored) {
    for (int n = 0; n < static_cast<int>(stage.size()); ++n) {
      Tensor term;
      if (cfg.loss == LossKind::L2) {
        term = mean_all(square(sub(stage[n], targets[n])));
      } else {
        term = charbonnier(stage[n], targets[n]);
        if (cfg.freq_weight != 0.0)
          term = add(term, scalar_mul(freq_loss(stage[n], targets[n]), cfg.freq_weight));
      }
      loss = loss.defined() ? add(loss, term) : term;
    }
  }
  return loss;
}

Tensor pad_infer(const Model& model, const ParamStore& store, const Tensor& img, PadMode mode) {
  int64_t div = model.divisibility();
  int64_t h = img.dim(1), w = img.dim(2);
  int64_t ph = (div - h % div) % div;
  int64_t pw = (div - w % div) % div;
  int top = static_cast<int>(ph / 2), bottom = static_cast<int>(ph - ph / 2);
  int left = static_cast<int>(pw / 2), right = static_cast<int>(pw - pw / 2);
  // reflect cannot pad past extent - 1; tiny inputs fall back to replication
  if (mode == PadMode::Reflect && (bottom > h - 1 || right > w - 1)) mode = PadMode::Edge;
  Tensor padded = (ph || pw) ? pad2d(img, top, bottom, left, right, mode) : img;
  Session s(store);
  StageOutputs out = model.forward(s, padded);
  Tensor full = out.restored.back()[0];
  if (ph || pw) full = crop2d(full, top, left, h, w);
  return full;
}

}  // namespace maxim
