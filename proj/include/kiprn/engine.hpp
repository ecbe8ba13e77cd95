#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kiprn/checkpoint.hpp"
#include "kiprn/classifier.hpp"
#include "kiprn/resizer.hpp"
#include "kiprn/synthpave.hpp"

namespace kiprn {

enum class TrainMode { Kiprn, BilinearMultiscale, SingleScale };

inline const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::Kiprn: return "kiprn";
    case TrainMode::BilinearMultiscale: return "bilinear-multiscale";
    default: return "single-scale";
  }
}
TrainMode train_mode_from(const std::string& s);

struct EngineConfig {
  std::string data_root;  // set from the command line, not the config file
  std::string out_dir;
  uint64_t seed = 1;
  TrainMode mode = TrainMode::Kiprn;
  int epochs = 20;
  // Tape activations for a render-256 kiprn batch run ~100 MB per image;
  // 6 keeps the peak comfortably inside a 5 GB box.
  int batch_size = 6;
  // >0: evaluate every k epochs and after the last; 0: last epoch only;
  // -1: never.
  int eval_every = 1;
  int checkpoint_every = 0;  // 0: final checkpoint only
  AdamWHyper adamw;
  // Engine defaults are the desk preset; KiprnConfig itself carries the
  // paper-scale sizes.
  KiprnConfig resizer = [] {
    KiprnConfig c;
    c.level_sizes = desk_level_sizes();
    return c;
  }();
  BackboneConfig backbone;
  synthpave::GenConfig dataset;

  void validate() const;
};

// One trainable configuration: the classifier is always present, the
// learnable resizer only in kiprn mode. Bilinear and single-scale modes
// share the backbone init stream with kiprn, so all three start from the
// same classifier weights for a given seed.
struct Model {
  TrainMode mode = TrainMode::Kiprn;
  KiprnConfig rcfg;
  BackboneConfig bcfg;
  ParamStore<float> store;
  KiprnNet<float> resizer;
  Backbone<float> backbone;

  bool has_resizer() const { return mode == TrainMode::Kiprn; }
  void init(const EngineConfig& cfg);
  std::vector<Var<float>> pyramid(Binder<float>& b, Var<float> x) const;
  Var<float> logits(Binder<float>& b, Var<float> x,
                    std::vector<Var<float>>* features = nullptr) const;
};

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double test_acc = -1;  // -1 when evaluation was skipped this epoch
  double wall_seconds = 0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  double final_train_loss = 0;
  double final_train_acc = 0;
  double final_test_acc = -1;
  std::string metrics_path;
  std::string checkpoint_path;
};

struct EvalResult {
  double loss = 0;
  double acc = 0;
  int count = 0;
};

// Returning false from the callback stops training after the current
// epoch's row is recorded; the final checkpoint and CSV are still written.
using EpochCallback = std::function<bool(const MetricsRow&)>;

TrainResult train(const EngineConfig& cfg, const std::string& resume_path = "",
                  const EpochCallback& on_epoch = {});
// Same run on an already-loaded manifest (e.g. a subset of one).
TrainResult train_on(const EngineConfig& cfg, const synthpave::Manifest& m,
                     const std::string& resume_path = "", const EpochCallback& on_epoch = {});
EvalResult evaluate(Model& model, const synthpave::Manifest& m, const std::vector<int>& indices,
                    synthpave::ImageCache& cache, int batch_size,
                    std::vector<int>* predictions = nullptr);
// Mean loss over the training split of an untrained model.
double initial_loss(const EngineConfig& cfg);
TensorF predict_probs(Model& model, const TensorF& batch);

void save_model_checkpoint(const std::string& path, const Model& model, uint32_t step,
                           const Rng& rng, int next_epoch, const EngineConfig& cfg);
// Returns the epoch training should continue from; validates that the
// snapshot metadata matches cfg (everything except epochs and paths).
int load_model_checkpoint(const std::string& path, Model& model, uint32_t* step, Rng* rng,
                          const EngineConfig& cfg);

std::string write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

struct AblationRow {
  std::string name;
  std::string kernel_order;
  std::string placement;
  double train_acc = 0;
  double test_acc = -1;
};

const std::vector<std::string>& ablation_presets();  // the ten grid names
EngineConfig ablation_config(const EngineConfig& base, const std::string& preset);
std::vector<AblationRow> ablate(const EngineConfig& base, const std::string& preset = "all");
std::string write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

struct BenchmarkRow {
  std::string mode;
  int epochs = 0;
  double mean_wall_seconds = 0;
  double stddev_wall_seconds = 0;
  std::vector<double> per_epoch_wall_seconds;
};

std::vector<BenchmarkRow> benchmark(const EngineConfig& base);
std::string write_benchmark_csv(const std::string& path, const std::vector<BenchmarkRow>& rows);

struct CamResult {
  int total = 0;
  int localized = 0;  // images whose in-mask CAM mean beats the out-mask mean
  double fraction = 0;
};

// Evaluates CAM localization over the test split of a trained model; when
// export_dir is non-empty, writes one heatmap PNG per image. limit == 0
// means the whole split.
CamResult cam_localization(const EngineConfig& cfg, const std::string& checkpoint_path,
                           const std::string& export_dir = "", int limit = 0);

// Heatmap + 0.5 alpha overlay for one image; cls < 0 uses the predicted
// class. Returns the class the map was computed for.
int cam_export(const EngineConfig& cfg, const std::string& checkpoint_path,
               const std::string& image_path, int cls, const std::string& out_dir);

}  // namespace kiprn
