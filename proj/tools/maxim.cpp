// Command-line front end: training, evaluation, inference, cost analysis,
// gradient verification and complexity scaling reports.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "maxim/checkpoint.hpp"
#include "maxim/image.hpp"
#include "maxim/metrics.hpp"
#include "maxim/model.hpp"
#include "maxim/train.hpp"
#include "maxim/verify.hpp"

namespace fs = std::filesystem;
using namespace maxim;

namespace {

int cmd_train(const std::string& config_path) {
  TrainConfig cfg = TrainConfig::from_config(Config::from_file(config_path));
  run_training(cfg, std::cout);
  return 0;
}

ModelConfig model_config_from_flags(const std::string& arch, const std::string& mixer) {
  ModelConfig mc = ModelConfig::preset(arch);
  if (!mixer.empty()) mc.stage.mixer = mixer_kind_from_string(mixer);
  return mc;
}

int cmd_eval(const std::string& ckpt, const std::string& dir, const std::string& arch,
             const std::string& mixer, bool y_only) {
  ModelConfig mc = model_config_from_flags(arch, mixer);
  ParamStore store;
  Model model = Model::build(store, mc);
  load_checkpoint(ckpt, store, mc.digest());

  fs::path input_dir = fs::path(dir) / "input";
  fs::path target_dir = fs::path(dir) / "target";
  if (!fs::is_directory(input_dir) || !fs::is_directory(target_dir))
    throw IoError("eval: expected <dir>/input and <dir>/target with paired images");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(input_dir))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("eval: no images under " + input_dir.string());

  double psnr_sum = 0, ssim_sum = 0;
  int n = 0;
  for (const std::string& name : names) {
    fs::path tgt = target_dir / name;
    if (!fs::exists(tgt)) continue;
    Tensor in = load_ppm((input_dir / name).string());
    Tensor gt = load_ppm(tgt.string());
    Tensor restored = pad_infer(model, store, in);
    psnr_sum += psnr(restored, gt, 1.0, y_only);
    ssim_sum += ssim(restored, gt, y_only);
    ++n;
  }
  if (n == 0) throw IoError("eval: no paired images found");
  std::printf("images=%d mean_psnr=%.4f mean_ssim=%.4f\n", n, psnr_sum / n, ssim_sum / n);
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& in_path, const std::string& out_path,
              const std::string& arch, const std::string& mixer, const std::string& pad_mode) {
  ModelConfig mc = model_config_from_flags(arch, mixer);
  ParamStore store;
  Model model = Model::build(store, mc);
  load_checkpoint(ckpt, store, mc.digest());
  Tensor img = load_ppm(in_path);
  PadMode mode = pad_mode == "edge" ? PadMode::Edge : PadMode::Reflect;
  Tensor restored = pad_infer(model, store, img, mode);
  save_ppm(restored, out_path);
  std::printf("wrote %s (%lldx%lld)\n", out_path.c_str(),
              static_cast<long long>(restored.dim(2)), static_cast<long long>(restored.dim(1)));
  return 0;
}

int cmd_count(const std::string& arch, const std::string& mixer, int64_t hw, bool csv) {
  ModelConfig mc = model_config_from_flags(arch, mixer);
  ParamStore store;
  Model model = Model::build(store, mc);
  CostReport r = model.count(store, hw, hw);
  std::cout << (csv ? r.csv() : r.table());
  return 0;
}

int cmd_gradcheck(const std::string& block) {
  std::vector<CheckResult> results;
  if (block.empty()) {
    results = primitive_grad_checks();
    auto mix = mixer_grad_checks();
    results.insert(results.end(), mix.begin(), mix.end());
    auto blocks = block_grad_checks("");
    results.insert(results.end(), blocks.begin(), blocks.end());
  } else {
    results = block_grad_checks(block);
  }
  bool ok = true;
  for (const CheckResult& r : results) {
    std::printf("%-26s max_rel_err=%.3e threshold=%.0e %s\n", r.name.c_str(), r.max_rel_err,
                r.threshold, r.pass() ? "ok" : "FAIL");
    ok = ok && r.pass();
  }
  return ok ? 0 : 1;
}

int cmd_bench_scaling(const std::string& arch, const std::string& mixer) {
  ModelConfig mc = model_config_from_flags(arch, mixer);
  ParamStore store;
  Model model = Model::build(store, mc);
  std::vector<int64_t> sizes{64, 128, 256, 512};
  std::vector<uint64_t> flops;
  std::printf("%8s %20s %12s\n", "HxW", "flops(MAC=2)", "ratio");
  for (size_t i = 0; i < sizes.size(); ++i) {
    CostReport r = model.count(store, sizes[i], sizes[i]);
    flops.push_back(r.flops_mac2());
    if (i == 0)
      std::printf("%8lld %20llu %12s\n", static_cast<long long>(sizes[i]),
                  static_cast<unsigned long long>(flops[i]), "-");
    else
      std::printf("%8lld %20llu %12.4f\n", static_cast<long long>(sizes[i]),
                  static_cast<unsigned long long>(flops[i]),
                  static_cast<double>(flops[i]) / static_cast<double>(flops[i - 1]));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-axis MLP image restoration toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  auto* train = app.add_subcommand("train", "run the training loop from a config file");
  train->add_option("--config", config_path, "key = value config file")->required();

  std::string ckpt, dir, arch = "tiny", mixer, in_path, out_path, pad_mode = "reflect";
  bool y_only = false;
  auto* eval = app.add_subcommand("eval", "mean PSNR/SSIM over a paired directory");
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval->add_option("--dir", dir, "directory with input/ and target/ subdirs")->required();
  eval->add_option("--arch", arch, "architecture preset");
  eval->add_option("--mixer", mixer, "gmlp|mlp|fft|sa");
  eval->add_flag("--y-only", y_only, "compute metrics on the BT.601 luma channel");

  auto* infer = app.add_subcommand("infer", "restore one image (pad, run, crop)");
  infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
  infer->add_option("--in", in_path, "input image (binary pixmap)")->required();
  infer->add_option("--out", out_path, "output image path")->required();
  infer->add_option("--arch", arch, "architecture preset");
  infer->add_option("--mixer", mixer, "gmlp|mlp|fft|sa");
  infer->add_option("--pad", pad_mode, "reflect|edge");

  int64_t hw = 256;
  bool csv = false;
  auto* count = app.add_subcommand("count", "parameter/flop report");
  count->add_option("--arch", arch, "maxim-1s|maxim-2s|maxim-3s|tiny")->required();
  count->add_option("--mixer", mixer, "gmlp|mlp|fft|sa");
  count->add_option("--hw", hw, "square input extent (default 256)");
  count->add_flag("--csv", csv, "emit comma-separated values");

  std::string block;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
  gradcheck->add_option("--block", block, "mab|cgb|rcab|sam|stage (default: everything)");

  bool scaling = false;
  auto* bench = app.add_subcommand("bench", "complexity scaling report");
  bench->add_flag("--scaling", scaling, "flop counts at 64..512 with ratios");
  bench->add_option("--arch", arch, "architecture preset");
  bench->add_option("--mixer", mixer, "gmlp|mlp|fft|sa");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  try {
    if (*train) return cmd_train(config_path);
    if (*eval) return cmd_eval(ckpt, dir, arch, mixer, y_only);
    if (*infer) return cmd_infer(ckpt, in_path, out_path, arch, mixer, pad_mode);
    if (*count) return cmd_count(arch, mixer, hw, csv);
    if (*gradcheck) return cmd_gradcheck(block);
    if (*bench) {
      if (!scaling) {
        std::cerr << "bench: nothing to do (use --scaling)\n";
        return 2;
      }
      return cmd_bench_scaling(arch, mixer);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
