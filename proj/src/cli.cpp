#include "kiprn/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "kiprn/config_json.hpp"
#include "kiprn/engine.hpp"
#include "kiprn/gradcheck.hpp"

namespace kiprn {

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config;
  std::string out = "out";
  std::string data;
  uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "JSON config file; defaults apply when omitted");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--data", o.data, "dataset directory (default <out>/dataset)");
  cmd->add_option("--seed", o.seed, "override the training and dataset seeds")
      ->each([&o](const std::string&) { o.seed_set = true; });
}

// A broken config file is a usage error (exit 1), so this runs before any
// compute and its exceptions are caught separately from runtime failures.
EngineConfig resolve(const CommonOpts& o) {
  EngineConfig cfg;
  if (!o.config.empty()) cfg = config_from_json_file(o.config);
  cfg.out_dir = o.out;
  cfg.data_root = o.data.empty() ? (fs::path(o.out) / "dataset").string() : o.data;
  if (o.seed_set) {
    cfg.seed = o.seed;
    cfg.dataset.seed = o.seed;
  }
  return cfg;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"kernel-inversed pyramidal resizing network, desk scale"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic pavement dataset");
  CommonOpts synth_o;
  int synth_per = 0, synth_size = 0;
  add_common(synth, synth_o);
  synth->add_option("--per-class", synth_per, "images per class (overrides config)");
  synth->add_option("--size", synth_size, "square image size in pixels (overrides config)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and write metrics");
  CommonOpts train_o;
  std::string resume;
  add_common(train_cmd, train_o);
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CommonOpts eval_o;
  std::string eval_ckpt;
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run the kernel/placement ablation grid");
  CommonOpts ablate_o;
  std::string preset = "all";
  add_common(ablate_cmd, ablate_o);
  ablate_cmd->add_option("--preset", preset,
                         "one grid row by name, or lowercase 'all' for the whole grid "
                         "('All' names the placement row)");

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "time the three training modes");
  CommonOpts bench_o;
  add_common(bench_cmd, bench_o);

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  int gc_seeds = 20;
  uint64_t gc_seed = 1;
  double gc_tol = 1e-6;
  bool gc_verbose = false;
  grad_cmd->add_option("--seeds", gc_seeds, "number of seeds");
  grad_cmd->add_option("--seed", gc_seed, "base seed");
  grad_cmd->add_option("--tol", gc_tol, "relative error tolerance");
  grad_cmd->add_flag("--verbose", gc_verbose, "print every case, not just the per-op maxima");

  // cam
  auto* cam_cmd = app.add_subcommand("cam", "class activation heatmaps");
  CommonOpts cam_o;
  std::string cam_ckpt, cam_image;
  int cam_limit = 0, cam_class = -1;
  add_common(cam_cmd, cam_o);
  cam_cmd->add_option("--checkpoint", cam_ckpt, "checkpoint file")->required();
  cam_cmd->add_option("--image", cam_image,
                      "export heatmap + overlay for this image instead of scoring the test split");
  cam_cmd->add_option("--class", cam_class, "class index for --image (-1 = predicted)");
  cam_cmd->add_option("--limit", cam_limit, "cap on scored test images (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  EngineConfig cfg;
  const CommonOpts* active = nullptr;
  if (synth->parsed()) active = &synth_o;
  else if (train_cmd->parsed()) active = &train_o;
  else if (eval_cmd->parsed()) active = &eval_o;
  else if (ablate_cmd->parsed()) active = &ablate_o;
  else if (bench_cmd->parsed()) active = &bench_o;
  else if (cam_cmd->parsed()) active = &cam_o;
  if (active) {
    try {
      cfg = resolve(*active);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 1;
    }
  }

  try {
    if (synth->parsed()) {
      synthpave::GenConfig gen = cfg.dataset;
      if (synth_per > 0) gen.per_class = synth_per;
      if (synth_size > 0) gen.size = synth_size;
      const synthpave::Manifest m = synthpave::generate_dataset(cfg.data_root, gen);
      std::printf("wrote %zu images (%d classes, %d per class, size %d) under %s\n",
                  m.items.size(), static_cast<int>(synthpave::class_names().size()),
                  gen.per_class, gen.size, cfg.data_root.c_str());
    } else if (train_cmd->parsed()) {
      const TrainResult r = train(cfg, resume);
      std::printf("done: train_loss %.6g train_acc %.6g test_acc %.6g\n", r.final_train_loss,
                  r.final_train_acc, r.final_test_acc);
      std::printf("metrics: %s\ncheckpoint: %s\n", r.metrics_path.c_str(),
                  r.checkpoint_path.c_str());
    } else if (eval_cmd->parsed()) {
      const synthpave::Manifest m = synthpave::load_manifest(cfg.data_root);
      synthpave::ImageCache cache;
      Model model;
      model.init(cfg);
      load_model_checkpoint(eval_ckpt, model, nullptr, nullptr, cfg);
      const EvalResult r = evaluate(model, m, m.test_idx(), cache, cfg.batch_size);
      std::printf("test_loss %.6g test_acc %.6g n %d\n", r.loss, r.acc, r.count);
    } else if (ablate_cmd->parsed()) {
      const std::vector<AblationRow> rows = ablate(cfg, preset);
      fs::create_directories(cfg.out_dir);
      const std::string path =
          write_ablation_csv((fs::path(cfg.out_dir) / "ablation.csv").string(), rows);
      for (const AblationRow& r : rows)
        std::printf("%-9s kernel=%-9s placement=%-9s train_acc %.4f test_acc %.4f\n",
                    r.name.c_str(), r.kernel_order.c_str(), r.placement.c_str(), r.train_acc,
                    r.test_acc);
      std::printf("grid: %s\n", path.c_str());
    } else if (bench_cmd->parsed()) {
      const std::vector<BenchmarkRow> rows = benchmark(cfg);
      fs::create_directories(cfg.out_dir);
      const std::string path =
          write_benchmark_csv((fs::path(cfg.out_dir) / "benchmark.csv").string(), rows);
      for (const BenchmarkRow& r : rows)
        std::printf("%-20s epochs %d mean %.3fs stddev %.3fs\n", r.mode.c_str(), r.epochs,
                    r.mean_wall_seconds, r.stddev_wall_seconds);
      std::printf("timings: %s\n", path.c_str());
    } else if (grad_cmd->parsed()) {
      const gradcheck::SuiteResult r =
          gradcheck::run_gradient_suite(gc_seed, gc_seeds, gc_tol, gc_verbose ? &std::cout : nullptr);
      std::map<std::string, double> worst_by_op;  // case names are "#<seed>:<op>"
      for (const gradcheck::CaseResult& c : r.cases) {
        const size_t colon = c.name.find(':');
        const std::string op = colon == std::string::npos ? c.name : c.name.substr(colon + 1);
        double& w = worst_by_op[op];
        w = std::max(w, c.rel_err);
      }
      for (const auto& [op, w] : worst_by_op)
        std::printf("%-28s max rel_err %.3g\n", op.c_str(), w);
      std::printf("%s: %d cases over %d seeds, worst rel_err %.3g (%.1fs)\n",
                  r.pass ? "PASS" : "FAIL", r.count(), gc_seeds, r.worst, r.seconds);
      return r.pass ? 0 : 2;
    } else if (cam_cmd->parsed()) {
      if (!cam_image.empty()) {
        const int used = cam_export(cfg, cam_ckpt, cam_image, cam_class, cfg.out_dir);
        std::printf("cam for class %d (%s): %s\n", used, synthpave::class_names()[used],
                    (fs::path(cfg.out_dir) / "cam.png").string().c_str());
      } else {
        const CamResult r = cam_localization(cfg, cam_ckpt, cfg.out_dir, cam_limit);
        std::printf("cam localization: %d/%d (%.3f)\n", r.localized, r.total, r.fraction);
      }
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.push_back("kiprn");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<char*> argv;
  argv.reserve(full.size());
  for (std::string& s : full) argv.push_back(s.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace kiprn
