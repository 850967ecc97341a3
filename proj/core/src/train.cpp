#include "maxim/train.hpp"

#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <thread>

#include "maxim/checkpoint.hpp"
#include "maxim/image.hpp"

namespace maxim {

double lr_at(int64_t step, int64_t total, double lr_init, double lr_final) {
  if (step < 0 || step > total) throw Error("lr_at: step outside [0, total]");
  if (lr_final > lr_init) throw Error("lr_at: lr_final must not exceed lr_init");
  double c = std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total));
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + c);
}

void adam_step(ParamStore& store, const std::vector<Tensor>& grads, double lr, double beta1,
               double beta2, double eps) {
  if (static_cast<int64_t>(grads.size()) != store.count())
    throw Error("adam_step: gradient count misaligned with parameters");
  if (store.adam_m().empty()) {
    for (int64_t i = 0; i < store.count(); ++i) {
      store.adam_m().push_back(Tensor::zeros(store.value(i).shape(), store.dtype()));
      store.adam_v().push_back(Tensor::zeros(store.value(i).shape(), store.dtype()));
    }
  }
  int64_t t = ++store.adam_step();
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (int64_t i = 0; i < store.count(); ++i) {
    const Tensor& g = grads[i];
    if (g.shape() != store.value(i).shape())
      throw Error("adam_step: gradient shape mismatch for " +
                  store.name(ParamId{static_cast<int32_t>(i)}));
    Tensor p = Tensor::zeros(g.shape(), store.dtype());
    dispatch_dtype(store.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pm = store.adam_m()[i].raw_mutable<T>();
      auto pv = store.adam_v()[i].raw_mutable<T>();
      auto pg = g.data<T>();
      auto pw = store.value(i).data<T>();
      auto po = p.raw_mutable<T>();
      for (int64_t k = 0; k < g.numel(); ++k) {
        double gd = static_cast<double>(pg[k]);
        double m = beta1 * static_cast<double>(pm[k]) + (1.0 - beta1) * gd;
        double v = beta2 * static_cast<double>(pv[k]) + (1.0 - beta2) * gd * gd;
        pm[k] = static_cast<T>(m);
        pv[k] = static_cast<T>(v);
        double mh = m / bc1, vh = v / bc2;
        po[k] = static_cast<T>(static_cast<double>(pw[k]) - lr * mh / (std::sqrt(vh) + eps));
      }
    });
    store.set_value(i, std::move(p));
  }
}

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.model = ModelConfig::preset(c.str("arch", "tiny"));
  if (c.has("mixer")) t.model.stage.mixer = mixer_kind_from_string(c.require("mixer"));
  std::string loss = c.str("loss", "charbonnier+freq");
  if (loss == "l2")
    t.model.loss = LossKind::L2;
  else if (loss == "charbonnier+freq")
    t.model.loss = LossKind::CharbonnierFreq;
  else
    throw Error("config: unknown loss '" + loss + "'");
  t.model.freq_weight = c.number("lambda", t.model.freq_weight);
  t.patch = c.integer("patch", t.patch);
  t.batch = c.integer("batch", t.batch);
  t.steps = c.integer("steps", t.steps);
  t.lr_init = c.number("lr_init", t.lr_init);
  t.lr_final = c.number("lr_final", t.lr_final);
  t.seed = static_cast<uint64_t>(c.integer("seed", 7));
  t.augment.hflip = c.boolean("hflip", true);
  t.augment.vflip = c.boolean("vflip", true);
  t.augment.rot90 = c.boolean("rot90", true);
  t.augment.mixup_p = c.number("mixup_p", 0.5);
  t.augment.mixup_alpha = c.number("mixup_alpha", 1.2);
  t.data = c.str("data", "synthetic");
  if (c.has("degrade")) t.degrade.kind = degrade_kind_from_string(c.require("degrade"));
  t.degrade.sigma = c.number("sigma", 25.0);
  t.degrade.kernel = static_cast<int>(c.integer("kernel", 9));
  t.synth_images = c.integer("images", 24);
  t.synth_size = c.integer("image_size", 96);
  t.train_input_dir = c.str("train_input", "");
  t.train_target_dir = c.str("train_target", "");
  t.out_dir = c.str("out", ".");
  t.ckpt_every = c.integer("ckpt_every", 1000);
  t.threads = static_cast<int>(c.integer("threads", 0));
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (lr_final > lr_init) throw Error("config: lr_final must not exceed lr_init");
  int64_t div = model.stage.divisibility();
  if (patch % div != 0)
    throw Error("config: patch size " + std::to_string(patch) +
                " violates the model's divisibility contract (multiple of " +
                std::to_string(div) + " required)");
  if (batch < 1 || steps < 1) throw Error("config: batch and steps must be positive");
  if (data != "synthetic" && data != "dirs")
    throw Error("config: data must be 'synthetic' or 'dirs'");
  if (data == "dirs" && (train_input_dir.empty() || train_target_dir.empty()))
    throw Error("config: dirs mode needs train_input and train_target");
  if (data == "synthetic" && synth_size < patch)
    throw Error("config: image_size must be >= patch");
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  store_.set_dtype(DType::f32);
  model_ = Model::build(store_, cfg_.model, cfg_.seed);
  if (cfg_.data == "synthetic") {
    Rng rng(Rng::derive(cfg_.seed, 0xda7a));
    for (int64_t i = 0; i < cfg_.synth_images; ++i)
      clean_.push_back(make_clean_image(cfg_.synth_size, cfg_.synth_size, rng));
  } else {
    namespace fs = std::filesystem;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(cfg_.train_input_dir))
      if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    for (const std::string& n : names) {
      fs::path tgt = fs::path(cfg_.train_target_dir) / n;
      if (fs::exists(tgt))
        files_.emplace_back((fs::path(cfg_.train_input_dir) / n).string(), tgt.string());
    }
    if (files_.empty()) throw Error("no paired images found under " + cfg_.train_input_dir);
  }
  threads_ = cfg_.threads > 0 ? cfg_.threads
                              : static_cast<int>(std::thread::hardware_concurrency());
  threads_ = std::clamp<int>(threads_, 1, static_cast<int>(cfg_.batch));
}

std::vector<Pair> Trainer::sample_batch(Rng& rng) {
  std::vector<Pair> batch;
  for (int64_t i = 0; i < cfg_.batch; ++i) {
    if (cfg_.data == "synthetic") {
      const Tensor& clean = clean_[rng.uniform_int(0, static_cast<int64_t>(clean_.size()) - 1)];
      Tensor patch = random_crop(clean, cfg_.patch, rng);
      batch.push_back(Pair{degrade(patch, cfg_.degrade, rng), patch});
    } else {
      auto& [in_path, tgt_path] =
          files_[rng.uniform_int(0, static_cast<int64_t>(files_.size()) - 1)];
      Tensor in = load_ppm(in_path);
      Tensor tgt = load_ppm(tgt_path);
      if (in.shape() != tgt.shape()) throw Error("paired images differ in extents: " + in_path);
      int64_t oy, ox;
      Tensor pin = random_crop(in, cfg_.patch, rng, &oy, &ox);
      batch.push_back(Pair{pin, crop_at(tgt, oy, ox, cfg_.patch)});
    }
  }
  augment_batch(batch, cfg_.augment, rng);
  return batch;
}

double Trainer::step() {
  Rng rng(Rng::derive(cfg_.seed, 0x57e9 + static_cast<uint64_t>(step_)));
  std::vector<Pair> batch = sample_batch(rng);
  const int64_t bsz = static_cast<int64_t>(batch.size());

  // Per-sample forward/backward; reduction order is fixed by sample index, so
  // the result is bit-identical for any worker count.
  std::vector<std::vector<Tensor>> grads(bsz);
  std::vector<double> losses(bsz);
  std::atomic<int64_t> next{0};
  auto worker = [&]() {
    for (;;) {
      int64_t i = next.fetch_add(1);
      if (i >= bsz) return;
      Graph g;
      Session s(store_, &g);
      StageOutputs out = model_.forward(s, batch[i].input);
      Tensor loss = total_loss(out, batch[i].target, cfg_.model);
      losses[i] = loss.scalar_value();
      grads[i] = param_gradients(loss, store_, s);
    }
  };
  if (threads_ <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads_; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<Tensor> total = std::move(grads[0]);
  for (int64_t i = 1; i < bsz; ++i)
    for (size_t p = 0; p < total.size(); ++p) total[p] = add(total[p], grads[i][p]);
  double inv = 1.0 / static_cast<double>(bsz);
  for (Tensor& t : total) t = scalar_mul(t, inv);

  double lr = lr_at(step_, cfg_.steps, cfg_.lr_init, cfg_.lr_final);
  adam_step(store_, total, lr);
  ++step_;
  double loss = 0;
  for (double l : losses) loss += l;
  return loss * inv;
}

double run_training(const TrainConfig& cfg, std::ostream& log) {
  Trainer tr(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  std::deque<double> tail;
  char line[128];
  for (int64_t i = 0; i < cfg.steps; ++i) {
    double lr = lr_at(i, cfg.steps, cfg.lr_init, cfg.lr_final);
    double loss = tr.step();
    std::snprintf(line, sizeof line, "step=%lld loss=%.6f lr=%.8f",
                  static_cast<long long>(i), loss, lr);
    log << line << "\n";
    tail.push_back(loss);
    if (tail.size() > 50) tail.pop_front();
    if (cfg.ckpt_every > 0 && ((i + 1) % cfg.ckpt_every == 0 || i + 1 == cfg.steps)) {
      std::string path = cfg.out_dir + "/ckpt_" + std::to_string(i + 1) + ".mxim";
      save_checkpoint(path, tr.store(), cfg.model.digest(), /*include_optimizer_state=*/true);
    }
  }
  double mean = 0;
  for (double v : tail) mean += v;
  return tail.empty() ? 0.0 : mean / static_cast<double>(tail.size());
}

}  // namespace maxim
