#include "kiprn/engine.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "kiprn/config_json.hpp"

namespace kiprn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int argmax_row(const TensorF& t, int row) {
  const int c = t.dim(1);
  int best = 0;
  for (int j = 1; j < c; ++j)
    if (t[static_cast<int64_t>(row) * c + j] > t[static_cast<int64_t>(row) * c + best]) best = j;
  return best;
}

// The checkpoint snapshot drops the dataset-generation section: a training
// run is defined by what it optimizes, not by how the corpus was rendered,
// and run paths never enter the serialized config at all. Identical runs in
// different directories therefore produce identical checkpoint bytes.
std::string snapshot_text(const EngineConfig& cfg) {
  json j = json::parse(config_to_json_text(cfg));
  j.erase("dataset");
  return j.dump();
}

// Grayscale heatmap plus the 0.5 alpha blend of it over the source image.
void write_cam_pngs(const TensorF& up, const Image& src, const std::string& cam_path,
                    const std::string& overlay_path) {
  Image hm;
  hm.width = src.width;
  hm.height = src.height;
  hm.channels = 1;
  hm.pixels.resize(static_cast<size_t>(hm.width) * hm.height);
  for (int64_t p = 0; p < up.numel(); ++p)
    hm.pixels[static_cast<size_t>(p)] =
        static_cast<uint8_t>(std::clamp(std::lround(255.0 * up[p]), 0L, 255L));
  write_png(cam_path, hm);

  Image ov;
  ov.width = src.width;
  ov.height = src.height;
  ov.channels = 3;
  ov.pixels.resize(static_cast<size_t>(ov.width) * ov.height * 3);
  for (int64_t p = 0; p < up.numel(); ++p) {
    const double heat = 255.0 * up[p];
    for (int c = 0; c < 3; ++c) {
      const double v = 0.5 * src.pixels[static_cast<size_t>(p * 3 + c)] + 0.5 * heat;
      ov.pixels[static_cast<size_t>(p * 3 + c)] =
          static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  write_png(overlay_path, ov);
}

}  // namespace

void EngineConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_every < -1) throw ConfigError("eval_every must be >= -1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (!(adamw.lr > 0)) throw ConfigError("adamw.lr must be positive");
  if (adamw.beta1 < 0 || adamw.beta1 >= 1 || adamw.beta2 < 0 || adamw.beta2 >= 1)
    throw ConfigError("adamw betas must lie in [0, 1)");
  if (!(adamw.eps > 0)) throw ConfigError("adamw.eps must be positive");
  if (adamw.weight_decay < 0) throw ConfigError("adamw.weight_decay must be >= 0");
  resizer.validate();
  backbone.validate();
}

void Model::init(const EngineConfig& cfg) {
  cfg.validate();
  mode = cfg.mode;
  rcfg = cfg.resizer;
  bcfg = cfg.backbone;
  store = ParamStore<float>();
  resizer = KiprnNet<float>();
  backbone = Backbone<float>();
  if (has_resizer()) {
    Rng r(derive_seed(cfg.seed, "init.resizer"));
    resizer.init(store, rcfg, r);
  }
  Rng b(derive_seed(cfg.seed, "init.backbone"));
  backbone.init(store, bcfg, b);
}

std::vector<Var<float>> Model::pyramid(Binder<float>& b, Var<float> x) const {
  switch (mode) {
    case TrainMode::Kiprn:
      return resizer.forward(b, x);
    case TrainMode::BilinearMultiscale: {
      std::vector<Var<float>> out;
      for (int s : rcfg.level_sizes) out.push_back(b.tape->bilinear_resize(x, s, s));
      return out;
    }
    default: {
      const int s = rcfg.level_sizes.back();
      return {b.tape->bilinear_resize(x, s, s)};
    }
  }
}

Var<float> Model::logits(Binder<float>& b, Var<float> x,
                         std::vector<Var<float>>* features) const {
  return backbone.multiscale_logits(b, pyramid(b, x), features);
}

EvalResult evaluate(Model& model, const synthpave::Manifest& m, const std::vector<int>& indices,
                    synthpave::ImageCache& cache, int batch_size,
                    std::vector<int>* predictions) {
  if (indices.empty()) throw ArgumentError("evaluate: empty index list");
  if (predictions) predictions->clear();
  EvalResult out;
  double loss_sum = 0;
  int correct = 0;
  for (size_t off = 0; off < indices.size(); off += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(indices.size(), off + static_cast<size_t>(batch_size));
    const std::vector<int> bidx(indices.begin() + static_cast<std::ptrdiff_t>(off),
                                indices.begin() + static_cast<std::ptrdiff_t>(end));
    const TensorF x = synthpave::load_batch(m, bidx, cache);
    const std::vector<int> labels = synthpave::labels_of(m, bidx);
    TapeF tape;
    Binder<float> b{&tape, false, {}};
    VarF xv = tape.leaf(x, false);
    VarF lg = model.logits(b, xv);
    VarF loss = tape.softmax_cross_entropy(lg, labels);
    loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(bidx.size());
    for (size_t i = 0; i < bidx.size(); ++i) {
      const int pred = argmax_row(lg.value(), static_cast<int>(i));
      if (pred == labels[i]) ++correct;
      if (predictions) predictions->push_back(pred);
    }
  }
  out.count = static_cast<int>(indices.size());
  out.loss = loss_sum / out.count;
  out.acc = static_cast<double>(correct) / out.count;
  return out;
}

TensorF predict_probs(Model& model, const TensorF& batch) {
  TapeF tape;
  Binder<float> b{&tape, false, {}};
  VarF xv = tape.leaf(batch, false);
  VarF lg = model.logits(b, xv);
  return kernels::softmax_rows(lg.value());
}

double initial_loss(const EngineConfig& cfg) {
  const synthpave::Manifest m = synthpave::load_manifest(cfg.data_root);
  synthpave::ImageCache cache;
  Model model;
  model.init(cfg);
  return evaluate(model, m, m.train_idx(), cache, cfg.batch_size).loss;
}

void save_model_checkpoint(const std::string& path, const Model& model, uint32_t step,
                           const Rng& rng, int next_epoch, const EngineConfig& cfg) {
  CheckpointData ck;
  for (Param<float>* p : model.store.all()) {
    ck.f32.emplace("param." + p->name, p->value);
    if (p->state.m.defined()) {
      ck.f32.emplace("adamw.m." + p->name, p->state.m);
      ck.f32.emplace("adamw.v." + p->name, p->state.v);
    }
  }
  const json meta = {{"epoch", next_epoch}, {"config", json::parse(snapshot_text(cfg))}};
  ck.f32.emplace("__meta__", bytes_to_tensor(meta.dump()));
  ck.step = step;
  ck.rng_state = rng.state();
  save_checkpoint(path, ck);
}

int load_model_checkpoint(const std::string& path, Model& model, uint32_t* step, Rng* rng,
                          const EngineConfig& cfg) {
  CheckpointData ck = load_checkpoint(path);
  const auto meta_it = ck.f32.find("__meta__");
  if (meta_it == ck.f32.end()) throw CheckpointError("checkpoint lacks __meta__");
  json meta;
  try {
    meta = json::parse(tensor_to_bytes(meta_it->second));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint meta is not JSON: ") + e.what());
  }
  if (!meta.contains("epoch") || !meta.contains("config"))
    throw CheckpointError("checkpoint meta incomplete");
  if (!config_resume_compatible(meta.at("config").dump(), snapshot_text(cfg)))
    throw ConfigError("checkpoint config does not match the requested run");

  size_t used = 1;  // __meta__
  for (Param<float>* p : model.store.all()) {
    const auto pv = ck.f32.find("param." + p->name);
    if (pv == ck.f32.end()) throw CheckpointError("checkpoint missing param." + p->name);
    if (!pv->second.same_dims(p->value))
      throw CheckpointError("checkpoint dims mismatch for " + p->name);
    p->value = pv->second;
    ++used;
    const auto mv = ck.f32.find("adamw.m." + p->name);
    const auto vv = ck.f32.find("adamw.v." + p->name);
    if ((mv == ck.f32.end()) != (vv == ck.f32.end()))
      throw CheckpointError("checkpoint has partial optimizer state for " + p->name);
    if (mv != ck.f32.end()) {
      if (!mv->second.same_dims(p->value) || !vv->second.same_dims(p->value))
        throw CheckpointError("optimizer state dims mismatch for " + p->name);
      p->state.m = mv->second;
      p->state.v = vv->second;
      p->state.t = static_cast<int64_t>(ck.step);
      used += 2;
    } else {
      p->state = AdamWState<float>();
    }
  }
  if (used != ck.f32.size() || !ck.f64.empty())
    throw CheckpointError("checkpoint holds tensors unknown to this model");
  if (step) *step = ck.step;
  if (rng) rng->set_state(ck.rng_state);
  return meta.at("epoch").get<int>();
}

std::string write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,train_acc,test_acc,wall_seconds\n";
  for (const MetricsRow& r : rows)
    out << r.epoch << "," << g9(r.train_loss) << "," << g9(r.train_acc) << "," << g9(r.test_acc)
        << "," << g9(r.wall_seconds) << "\n";
  if (!out) throw IoError("write failed: " + path);
  return path;
}

TrainResult train(const EngineConfig& cfg, const std::string& resume_path,
                  const EpochCallback& on_epoch) {
  if (cfg.data_root.empty()) throw ConfigError("data_root is required");
  return train_on(cfg, synthpave::load_manifest(cfg.data_root), resume_path, on_epoch);
}

TrainResult train_on(const EngineConfig& cfg, const synthpave::Manifest& m,
                     const std::string& resume_path, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.out_dir.empty()) throw ConfigError("out_dir is required");
  synthpave::ImageCache cache;

  Model model;
  model.init(cfg);
  Rng train_rng(derive_seed(cfg.seed, "train"));
  uint32_t step = 0;
  int start_epoch = 0;
  if (!resume_path.empty()) {
    start_epoch = load_model_checkpoint(resume_path, model, &step, &train_rng, cfg);
    if (start_epoch > cfg.epochs)
      throw ConfigError("checkpoint is ahead of the requested epoch count");
  }

  const std::vector<int> train_idx = m.train_idx();
  const std::vector<int> test_idx = m.test_idx();
  if (train_idx.empty() || test_idx.empty()) throw ArgumentError("dataset split is empty");
  fs::create_directories(cfg.out_dir);

  TrainResult out;
  for (int e = start_epoch; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order = train_idx;
    Rng sh(derive_seed(cfg.seed, "epoch", static_cast<uint64_t>(e)));
    shuffle(order, sh);

    double loss_sum = 0;
    int correct = 0;
    for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), off + static_cast<size_t>(cfg.batch_size));
      const std::vector<int> bidx(order.begin() + static_cast<std::ptrdiff_t>(off),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
      const TensorF x = synthpave::load_batch(m, bidx, cache);
      const std::vector<int> labels = synthpave::labels_of(m, bidx);
      TapeF tape;
      Binder<float> b{&tape, true, {}};
      VarF xv = tape.leaf(x, false);
      VarF lg = model.logits(b, xv);
      VarF loss = tape.softmax_cross_entropy(lg, labels);
      const double batch_loss = loss.value()[0];
      if (!std::isfinite(batch_loss))
        throw Error("training diverged: non-finite loss at step " + std::to_string(step));
      loss_sum += batch_loss * static_cast<double>(bidx.size());
      for (size_t i = 0; i < bidx.size(); ++i)
        if (argmax_row(lg.value(), static_cast<int>(i)) == labels[i]) ++correct;
      tape.backward(loss);
      apply_adamw(model.store, b, cfg.adamw);
      ++step;
    }

    MetricsRow row;
    row.epoch = e;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    row.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    const bool last = e == cfg.epochs - 1;
    const bool do_eval =
        last ? cfg.eval_every >= 0
             : cfg.eval_every > 0 && (e + 1) % cfg.eval_every == 0;
    if (do_eval) row.test_acc = evaluate(model, m, test_idx, cache, cfg.batch_size).acc;
    row.wall_seconds = seconds_since(t0);
    out.rows.push_back(row);
    std::printf("[%s] epoch %d/%d loss %.4f acc %.4f test %.4f (%.1fs)\n", to_string(cfg.mode),
                e + 1, cfg.epochs, row.train_loss, row.train_acc, row.test_acc, row.wall_seconds);
    std::fflush(stdout);

    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 && !last) {
      const std::string path = (fs::path(cfg.out_dir) /
                                ("ckpt_epoch" + std::to_string(e + 1) + ".bin")).string();
      save_model_checkpoint(path, model, step, train_rng, e + 1, cfg);
    }
    if (on_epoch && !on_epoch(row)) break;
  }

  const int next_epoch = out.rows.empty() ? start_epoch : out.rows.back().epoch + 1;
  out.checkpoint_path = (fs::path(cfg.out_dir) / "ckpt_final.bin").string();
  save_model_checkpoint(out.checkpoint_path, model, step, train_rng, next_epoch, cfg);
  out.metrics_path =
      write_metrics_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), out.rows);
  if (!out.rows.empty()) {
    const MetricsRow& lastr = out.rows.back();
    out.final_train_loss = lastr.train_loss;
    out.final_train_acc = lastr.train_acc;
    out.final_test_acc = lastr.test_acc;
  } else if (cfg.eval_every >= 0) {
    // No-op run: report the untrained test accuracy.
    out.final_test_acc = evaluate(model, m, test_idx, cache, cfg.batch_size).acc;
    std::printf("[%s] untrained test %.4f\n", to_string(cfg.mode), out.final_test_acc);
  }
  return out;
}

const std::vector<std::string>& ablation_presets() {
  static const std::vector<std::string> names{"3x3",  "5x5",  "7x7",      "Forward", "Inversed",
                                              "All",  "None", "Resblock", "Last",    "First"};
  return names;
}

EngineConfig ablation_config(const EngineConfig& base, const std::string& preset) {
  EngineConfig cfg = base;
  cfg.mode = TrainMode::Kiprn;
  cfg.eval_every = 0;  // final accuracy is what the grid reports
  cfg.resizer.kernel_order = KernelOrder::Inversed;
  cfg.resizer.placement = Placement::First;
  if (preset == "3x3" || preset == "5x5" || preset == "7x7") {
    cfg.resizer.kernel_order = KernelOrder::Uniform;
    cfg.resizer.uniform_kernel = preset[0] - '0';
  } else if (preset == "Forward") {
    cfg.resizer.kernel_order = KernelOrder::Forward;
  } else if (preset == "Inversed") {
    cfg.resizer.kernel_order = KernelOrder::Inversed;
  } else if (preset == "All") {
    cfg.resizer.placement = Placement::All;
  } else if (preset == "None") {
    cfg.resizer.placement = Placement::None;
  } else if (preset == "Resblock") {
    cfg.resizer.placement = Placement::Resblock;
  } else if (preset == "Last") {
    cfg.resizer.placement = Placement::Last;
  } else if (preset == "First") {
    cfg.resizer.placement = Placement::First;
  } else {
    std::string names;
    for (const std::string& n : ablation_presets()) names += (names.empty() ? "" : ", ") + n;
    throw ArgumentError("unknown ablation preset: " + preset + " (expected 'all' or one of " +
                        names + ")");
  }
  std::string dir = preset;
  for (char& c : dir) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  cfg.out_dir = (fs::path(base.out_dir) / ("ablate_" + dir)).string();
  return cfg;
}

std::vector<AblationRow> ablate(const EngineConfig& base, const std::string& preset) {
  std::vector<std::string> todo;
  if (preset == "all")
    todo = ablation_presets();
  else
    todo.push_back(preset);
  std::vector<AblationRow> rows;
  for (const std::string& name : todo) {
    const EngineConfig cfg = ablation_config(base, name);
    const TrainResult r = train(cfg);
    AblationRow row;
    row.name = name;
    row.kernel_order = cfg.resizer.kernel_order == KernelOrder::Uniform
                           ? "uniform" + std::to_string(cfg.resizer.uniform_kernel)
                           : to_string(cfg.resizer.kernel_order);
    row.placement = to_string(cfg.resizer.placement);
    row.train_acc = r.final_train_acc;
    row.test_acc = r.final_test_acc;
    rows.push_back(row);
  }
  return rows;
}

std::string write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "name,kernel_order,placement,train_acc,test_acc\n";
  for (const AblationRow& r : rows)
    out << r.name << "," << r.kernel_order << "," << r.placement << "," << g9(r.train_acc) << ","
        << g9(r.test_acc) << "\n";
  if (!out) throw IoError("write failed: " + path);
  return path;
}

std::vector<BenchmarkRow> benchmark(const EngineConfig& base) {
  std::vector<BenchmarkRow> rows;
  for (TrainMode mode :
       {TrainMode::Kiprn, TrainMode::BilinearMultiscale, TrainMode::SingleScale}) {
    EngineConfig cfg = base;
    cfg.mode = mode;
    cfg.eval_every = -1;  // timing only
    cfg.out_dir = (fs::path(base.out_dir) / (std::string("bench_") + to_string(mode))).string();
    const TrainResult r = train(cfg);
    BenchmarkRow row;
    row.mode = to_string(mode);
    row.epochs = cfg.epochs;
    for (const MetricsRow& mr : r.rows) row.per_epoch_wall_seconds.push_back(mr.wall_seconds);
    double sum = 0;
    for (double w : row.per_epoch_wall_seconds) sum += w;
    row.mean_wall_seconds = sum / static_cast<double>(row.per_epoch_wall_seconds.size());
    double var = 0;
    for (double w : row.per_epoch_wall_seconds) {
      const double d = w - row.mean_wall_seconds;
      var += d * d;
    }
    row.stddev_wall_seconds =
        row.per_epoch_wall_seconds.size() > 1
            ? std::sqrt(var / static_cast<double>(row.per_epoch_wall_seconds.size() - 1))
            : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string write_benchmark_csv(const std::string& path, const std::vector<BenchmarkRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "mode,epochs,mean_wall_seconds,stddev_wall_seconds,per_epoch_wall_seconds\n";
  for (const BenchmarkRow& r : rows) {
    out << r.mode << "," << r.epochs << "," << g9(r.mean_wall_seconds) << ","
        << g9(r.stddev_wall_seconds) << ",";
    for (size_t i = 0; i < r.per_epoch_wall_seconds.size(); ++i)
      out << (i ? ";" : "") << g9(r.per_epoch_wall_seconds[i]);
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
  return path;
}

CamResult cam_localization(const EngineConfig& cfg, const std::string& checkpoint_path,
                           const std::string& export_dir, int limit) {
  const synthpave::Manifest m = synthpave::load_manifest(cfg.data_root);
  synthpave::ImageCache cache;
  Model model;
  model.init(cfg);
  if (!checkpoint_path.empty()) load_model_checkpoint(checkpoint_path, model, nullptr, nullptr, cfg);
  if (!export_dir.empty()) fs::create_directories(export_dir);

  std::vector<int> idx = m.test_idx();
  if (limit > 0 && static_cast<size_t>(limit) < idx.size()) idx.resize(static_cast<size_t>(limit));
  const TensorF& head_w = model.backbone.head.weight->value;

  CamResult out;
  const int batch = 4;
  for (size_t off = 0; off < idx.size(); off += batch) {
    const size_t end = std::min(idx.size(), off + batch);
    const std::vector<int> bidx(idx.begin() + static_cast<std::ptrdiff_t>(off),
                                idx.begin() + static_cast<std::ptrdiff_t>(end));
    const TensorF x = synthpave::load_batch(m, bidx, cache);
    const std::vector<int> labels = synthpave::labels_of(m, bidx);
    TapeF tape;
    Binder<float> b{&tape, false, {}};
    VarF xv = tape.leaf(x, false);
    std::vector<VarF> feats;
    (void)model.logits(b, xv, &feats);
    const TensorF fmap = feats.back().value();  // largest pyramid level
    for (size_t i = 0; i < bidx.size(); ++i) {
      const TensorF cam = cam_map(fmap, head_w, static_cast<int>(i), labels[i]);
      const TensorF cam4 = TensorF::from({1, 1, cam.dim(0), cam.dim(1)}, cam.vec());
      const TensorF up = cam_normalize(kernels::bilinear_forward(cam4, m.size, m.size));
      const Image mask = read_png(m.mask_path(bidx[i]));
      if (mask.width != m.size || mask.height != m.size || mask.channels != 1)
        throw ShapeError("unexpected mask geometry in " + m.mask_path(bidx[i]));
      double in_sum = 0, out_sum = 0;
      int64_t in_n = 0, out_n = 0;
      for (int64_t p = 0; p < up.numel(); ++p) {
        if (mask.pixels[static_cast<size_t>(p)] > 127) {
          in_sum += up[p];
          ++in_n;
        } else {
          out_sum += up[p];
          ++out_n;
        }
      }
      ++out.total;
      if (in_n > 0 && out_n > 0 && in_sum / in_n > out_sum / out_n) ++out.localized;
      if (!export_dir.empty()) {
        const Image& src = cache.get(m.image_path(bidx[i]));
        char name[96];
        std::snprintf(name, sizeof(name), "%s_%04d.png",
                      synthpave::class_dir_name(labels[i]).c_str(),
                      m.items[static_cast<size_t>(bidx[i])].index);
        write_cam_pngs(up, src, (fs::path(export_dir) / ("cam_" + std::string(name))).string(),
                       (fs::path(export_dir) / ("overlay_" + std::string(name))).string());
      }
    }
  }
  out.fraction = out.total > 0 ? static_cast<double>(out.localized) / out.total : 0.0;
  return out;
}

int cam_export(const EngineConfig& cfg, const std::string& checkpoint_path,
               const std::string& image_path, int cls, const std::string& out_dir) {
  Model model;
  model.init(cfg);
  if (!checkpoint_path.empty())
    load_model_checkpoint(checkpoint_path, model, nullptr, nullptr, cfg);
  const Image src = read_png(image_path);
  if (src.channels != 3) throw ArgumentError("cam expects an RGB image: " + image_path);

  TensorF x = TensorF::zeros({1, 3, src.height, src.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < src.height; ++y)
      for (int xpx = 0; xpx < src.width; ++xpx)
        x.at(0, c, y, xpx) = (static_cast<float>(src.at(y, xpx, c)) / 255.0f - 0.5f) / 0.25f;

  TapeF tape;
  Binder<float> b{&tape, false, {}};
  VarF xv = tape.leaf(x, false);
  std::vector<VarF> feats;
  VarF lg = model.logits(b, xv, &feats);
  if (cls >= model.bcfg.num_classes)
    throw ArgumentError("cam class out of range: " + std::to_string(cls));
  if (cls < 0) {
    cls = 0;
    for (int j = 1; j < model.bcfg.num_classes; ++j)
      if (lg.value()[j] > lg.value()[cls]) cls = j;
  }
  const TensorF cam = cam_map(feats.back().value(), model.backbone.head.weight->value, 0, cls);
  const TensorF cam4 = TensorF::from({1, 1, cam.dim(0), cam.dim(1)}, cam.vec());
  const TensorF up = cam_normalize(kernels::bilinear_forward(cam4, src.height, src.width));

  fs::create_directories(out_dir);
  write_cam_pngs(up, src, (fs::path(out_dir) / "cam.png").string(),
                 (fs::path(out_dir) / "cam_overlay.png").string());
  return cls;
}

}  // namespace kiprn
