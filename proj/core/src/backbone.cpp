#include "maxim/backbone.hpp"

#include <numeric>

namespace maxim {

int64_t StageConfig::divisibility() const {
  int64_t div = 1;
  for (int i = 0; i < depths; ++i)
    div = std::lcm(div, (int64_t{1} << i) * std::max(bd[i].first, bd[i].second));
  for (const auto& [b, d] : bneck_bd)
    div = std::lcm(div, (int64_t{1} << depths) * std::max(b, d));
  for (int i = 0; i < depths; ++i)
    div = std::lcm(div, (int64_t{1} << i) * neck_bd[i]);
  return div;
}

StageConfig tiny_stage_config() {
  StageConfig c;
  c.c0 = 8;
  c.bd = {{{8, 8}, {8, 8}, {4, 4}}};
  c.bneck_bd = {{{4, 4}, {4, 4}}};
  c.neck_bd = {8, 8, 4};
  return c;
}

namespace {
std::string scope_of(const ParamBuilder& pb) {
  std::string s = pb.prefix();
  if (!s.empty()) s.pop_back();
  return s;
}
}  // namespace

Backbone Backbone::make(ParamBuilder pb, const StageConfig& cfg, bool has_cross,
                        bool full_res_head, DType dt) {
  Backbone bb;
  bb.cfg = cfg;
  bb.scope = scope_of(pb);
  bb.has_cross = has_cross;
  bb.full_res_head = full_res_head;
  const int D = cfg.depths;

  for (int i = 0; i < D; ++i) {
    auto lp = pb.sub("enc" + std::to_string(i));
    EncoderLevel lvl;
    int64_t c = cfg.channels_at(i);
    lvl.shallow = Conv2d::make(lp.sub("shallow"), 3, 3, 3, c);
    if (i > 0) {
      lvl.from_below = Conv2d::make(lp.sub("from_below"), 3, 3, cfg.channels_at(i - 1), c);
      lvl.fuse_shallow = Dense::make(lp.sub("fuse_shallow"), 2 * c, c);
    }
    if (has_cross)
      lvl.cross = CrossGatingBlock::make(lp.sub("cross"), c, cfg.neck_bd[i], cfg.neck_bd[i], dt);
    lvl.pre = Dense::make(lp.sub("pre"), c, c);
    for (int p = 0; p < cfg.pairs; ++p) {
      PairBlock blk{
          MultiAxisBlock::make(lp.sub("mab" + std::to_string(p)), c, cfg.bd[i].first,
                               cfg.bd[i].second, cfg.mixer, /*wide=*/true, dt),
          ChannelAttentionBlock::make(lp.sub("rcab" + std::to_string(p)), c, cfg.se_reduction,
                                      /*bottleneck_1x1=*/false, dt)};
      lvl.blocks.push_back(std::move(blk));
    }
    lvl.down = Conv2d::make(lp.sub("down"), 3, 3, c, c, /*stride=*/2);
    bb.enc.push_back(std::move(lvl));
  }

  int64_t cb = cfg.bneck_channels();
  for (int k = 0; k < 2; ++k) {
    auto lp = pb.sub("bneck" + std::to_string(k));
    BottleneckLevel lvl;
    lvl.in = Dense::make(lp.sub("in"), k == 0 ? cfg.channels_at(D - 1) : cb, cb);
    for (int p = 0; p < cfg.pairs; ++p) {
      PairBlock blk{MultiAxisBlock::make(lp.sub("mab" + std::to_string(p)), cb,
                                         cfg.bneck_bd[k].first, cfg.bneck_bd[k].second,
                                         cfg.mixer, /*wide=*/false, dt),
                    ChannelAttentionBlock::make(lp.sub("rcab" + std::to_string(p)), cb,
                                                cfg.se_reduction, /*bottleneck_1x1=*/true, dt)};
      lvl.blocks.push_back(std::move(blk));
    }
    bb.bneck[k] = std::move(lvl);
  }

  for (int i = 0; i < D; ++i) {
    auto lp = pb.sub("neck" + std::to_string(i));
    NeckLevel lvl;
    int64_t c = cfg.channels_at(i);
    int64_t c_src = i == D - 1 ? cb : cfg.channels_at(i + 1);
    lvl.glob_in = Dense::make(lp.sub("glob_in"), c_src, c);
    lvl.cgb = CrossGatingBlock::make(lp.sub("cgb"), c, cfg.neck_bd[i], cfg.neck_bd[i], dt);
    bb.necks.push_back(std::move(lvl));
  }

  bb.enc_fuse.resize(D);
  bb.skip_fuse.resize(D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      bb.enc_fuse[i].push_back(Dense::make(
          pb.sub("enc_fuse" + std::to_string(i) + std::to_string(j)), cfg.channels_at(j),
          cfg.channels_at(i)));
      bb.skip_fuse[i].push_back(Dense::make(
          pb.sub("skip_fuse" + std::to_string(i) + std::to_string(j)), cfg.channels_at(j),
          cfg.channels_at(i)));
    }

  for (int i = 0; i < D; ++i) {
    auto dp = pb.sub("dec" + std::to_string(i));
    DecoderLevel lvl;
    int64_t c = cfg.channels_at(i);
    int64_t c_below = i == D - 1 ? cb : cfg.channels_at(i + 1);
    lvl.up = Dense::make(dp.sub("up"), c_below, c);
    lvl.fuse = Dense::make(dp.sub("fuse"), 2 * c, c);
    for (int p = 0; p < cfg.pairs; ++p) {
      PairBlock blk{
          MultiAxisBlock::make(dp.sub("mab" + std::to_string(p)), c, cfg.bd[i].first,
                               cfg.bd[i].second, cfg.mixer, /*wide=*/true, dt),
          ChannelAttentionBlock::make(dp.sub("rcab" + std::to_string(p)), c, cfg.se_reduction,
                                      /*bottleneck_1x1=*/false, dt)};
      lvl.blocks.push_back(std::move(blk));
    }
    bb.dec.push_back(std::move(lvl));
  }

  bb.heads.resize(cfg.scales);
  for (int n = 0; n < cfg.scales; ++n) {
    if (n == 0 && !full_res_head) continue;  // SAM supplies the full-res output
    bb.heads[n] =
        Conv2d::make(pb.sub("head" + std::to_string(n)), 3, 3, cfg.channels_at(n), 3);
  }
  return bb;
}

StageResult Backbone::forward(Session& s, const StageIO& io) const {
  const int D = cfg.depths;
  if (static_cast<int>(io.pyramid.size()) != cfg.scales)
    throw ShapeError("stage: pyramid must have one image per scale");
  if (has_cross && static_cast<int>(io.incoming.size()) != D)
    throw ShapeError("stage: cross-stage features must be given per depth");

  StageResult res;
  std::vector<Tensor> shallows(D);
  for (int i = 0; i < D; ++i) shallows[i] = enc[i].shallow(s, io.pyramid[i]);

  Tensor r, below;
  for (int i = 0; i < D; ++i) {
    if (i == 0) {
      r = shallows[0];
    } else {
      r = (*enc[i].from_below)(s, below);
      r = (*enc[i].fuse_shallow)(s, concat({r, shallows[i]}, -1));
    }
    if (enc[i].cross) r = enc[i].cross->forward(s, r, io.incoming[i]).first;
    r = enc[i].pre(s, r);
    for (const PairBlock& blk : enc[i].blocks) r = blk.rcab.forward(s, blk.mab.forward(s, r));
    res.enc.push_back(r);
    below = enc[i].down(s, r);
  }

  Tensor g = below;
  for (const BottleneckLevel& lvl : bneck) {
    g = lvl.in(s, g);
    for (const PairBlock& blk : lvl.blocks) g = blk.rcab.forward(s, blk.mab.forward(s, g));
  }

  // Neck chain: bottleneck globals gate the skips, refined globals move up.
  std::vector<Tensor> skips(D);
  Tensor glob = g;
  for (int i = D - 1; i >= 0; --i) {
    int64_t eh = res.enc[i].dim(1), ew = res.enc[i].dim(2);
    Tensor up = necks[i].glob_in(s, resize(glob, eh, ew, ResizeMode::Nearest));
    Tensor fused;
    for (int j = 0; j < D; ++j) {
      Tensor src = enc_fuse[i][j](s, resize(res.enc[j], eh, ew, ResizeMode::Bilinear));
      fused = j == 0 ? src : add(fused, src);
    }
    auto [skip, refined] = necks[i].cgb.forward(s, fused, up);
    skips[i] = skip;
    glob = refined;
  }

  Tensor x = g;
  res.dec.resize(D);
  for (int i = D - 1; i >= 0; --i) {
    int64_t eh = res.enc[i].dim(1), ew = res.enc[i].dim(2);
    Tensor up = dec[i].up(s, resize(x, eh, ew, ResizeMode::Nearest));
    Tensor fused;
    for (int j = 0; j < D; ++j) {
      Tensor src = skip_fuse[i][j](s, resize(skips[j], eh, ew, ResizeMode::Bilinear));
      fused = j == 0 ? src : add(fused, src);
    }
    x = dec[i].fuse(s, concat({up, fused}, -1));
    for (const PairBlock& blk : dec[i].blocks) x = blk.rcab.forward(s, blk.mab.forward(s, x));
    res.dec[i] = x;
  }
  return res;
}

Tensor Backbone::head(Session& s, int scale, const Tensor& dec_feat,
                      const Tensor& pyramid_img) const {
  if (!heads[scale])
    throw Error("stage has no head at scale " + std::to_string(scale));
  return add((*heads[scale])(s, dec_feat), pyramid_img);
}

void Backbone::count(CostCounter& c, int64_t h, int64_t w) const {
  const int D = cfg.depths;
  auto eh = [&](int i) { return h >> i; };
  auto ew = [&](int i) { return w >> i; };

  for (int i = 0; i < D; ++i) {
    std::string lp = scope + "/enc" + std::to_string(i);
    int64_t hw = eh(i) * ew(i);
    int64_t cch = cfg.channels_at(i);
    c.leaf(lp + "/shallow", 0, 0);
    enc[i].shallow.count(c, hw);
    if (i > 0) {
      c.leaf(lp + "/from_below", 0, 0);
      enc[i].from_below->count(c, hw);
      c.leaf(lp + "/fuse_shallow", 0, 0);
      enc[i].fuse_shallow->count(c, hw);
    }
    if (enc[i].cross) enc[i].cross->count(c, eh(i), ew(i));
    c.leaf(lp + "/pre", 0, 0);
    enc[i].pre.count(c, hw);
    for (const PairBlock& blk : enc[i].blocks) {
      blk.mab.count(c, eh(i), ew(i));
      blk.rcab.count(c, eh(i), ew(i));
    }
    c.leaf(lp + "/down", 0, 0);
    enc[i].down.count(c, (eh(i) / 2) * (ew(i) / 2));
    (void)cch;
  }

  int64_t bh = eh(D), bw_ = ew(D);
  for (int k = 0; k < 2; ++k) {
    std::string lp = scope + "/bneck" + std::to_string(k);
    c.leaf(lp + "/in", 0, 0);
    bneck[k].in.count(c, bh * bw_);
    for (const PairBlock& blk : bneck[k].blocks) {
      blk.mab.count(c, bh, bw_);
      blk.rcab.count(c, bh, bw_);
    }
  }

  for (int i = D - 1; i >= 0; --i) {
    std::string lp = scope + "/neck" + std::to_string(i);
    int64_t hw = eh(i) * ew(i);
    int64_t c_src = i == D - 1 ? cfg.bneck_channels() : cfg.channels_at(i + 1);
    c.leaf(lp + "/glob_in", 0, static_cast<uint64_t>(hw) * c_src * kCostNearest);
    necks[i].glob_in.count(c, hw);
    for (int j = 0; j < D; ++j) {
      c.leaf(scope + "/enc_fuse" + std::to_string(i) + std::to_string(j), 0,
             static_cast<uint64_t>(hw) * cfg.channels_at(j) * kCostBilinear);
      enc_fuse[i][j].count(c, hw);
      c.more(0, j == 0 ? 0 : static_cast<uint64_t>(hw) * cfg.channels_at(i) * kCostAdd);
    }
    necks[i].cgb.count(c, eh(i), ew(i));
  }

  for (int i = D - 1; i >= 0; --i) {
    std::string lp = scope + "/dec" + std::to_string(i);
    int64_t hw = eh(i) * ew(i);
    int64_t c_below = i == D - 1 ? cfg.bneck_channels() : cfg.channels_at(i + 1);
    c.leaf(lp + "/up", 0, static_cast<uint64_t>(hw) * c_below * kCostNearest);
    dec[i].up.count(c, hw);
    for (int j = 0; j < D; ++j) {
      c.leaf(scope + "/skip_fuse" + std::to_string(i) + std::to_string(j), 0,
             static_cast<uint64_t>(hw) * cfg.channels_at(j) * kCostBilinear);
      skip_fuse[i][j].count(c, hw);
      c.more(0, j == 0 ? 0 : static_cast<uint64_t>(hw) * cfg.channels_at(i) * kCostAdd);
    }
    c.leaf(lp + "/fuse", 0, 0);
    dec[i].fuse.count(c, hw);
    for (const PairBlock& blk : dec[i].blocks) {
      blk.mab.count(c, eh(i), ew(i));
      blk.rcab.count(c, eh(i), ew(i));
    }
  }

  for (int n = 0; n < cfg.scales; ++n) {
    if (!heads[n]) continue;
    int64_t hw = eh(n) * ew(n);
    c.leaf(scope + "/head" + std::to_string(n), 0, static_cast<uint64_t>(hw) * 3 * kCostAdd);
    heads[n]->count(c, hw);
  }
}

}  // namespace maxim
