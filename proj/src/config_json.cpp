#include "kiprn/config_json.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace kiprn {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key " + where + "." + it.key());
}

template <typename T>
void read_num(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
      throw ConfigError(where + "." + key + " must be an integer");
  } else {
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
  }
  out = v.get<T>();
}

void read_bool(const json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
  out = j.at(key).get<bool>();
}

void read_str(const json& j, const char* key, std::string& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) throw ConfigError(where + "." + key + " must be a string");
  out = j.at(key).get<std::string>();
}

std::vector<int> read_int_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array of integers");
  std::vector<int> out;
  for (const json& e : v) {
    if (!e.is_number_integer() && !e.is_number_unsigned())
      throw ConfigError(where + " must hold integers");
    out.push_back(e.get<int>());
  }
  return out;
}

KernelOrder kernel_mode_from(const std::string& s) {
  if (s == "inversed") return KernelOrder::Inversed;
  if (s == "forward") return KernelOrder::Forward;
  if (s == "uniform") return KernelOrder::Uniform;
  throw ConfigError("unknown kernel_mode: " + s);
}

Placement placement_from(const std::string& s) {
  if (s == "first") return Placement::First;
  if (s == "none") return Placement::None;
  if (s == "last") return Placement::Last;
  if (s == "resblock") return Placement::Resblock;
  if (s == "all") return Placement::All;
  throw ConfigError("unknown placement: " + s);
}

}  // namespace

TrainMode train_mode_from(const std::string& s) {
  if (s == "kiprn") return TrainMode::Kiprn;
  if (s == "bilinear-multiscale" || s == "bilinear_multiscale" || s == "bilinear")
    return TrainMode::BilinearMultiscale;
  if (s == "single-scale" || s == "single_scale" || s == "single") return TrainMode::SingleScale;
  throw ConfigError("unknown mode: " + s);
}

EngineConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"kiprn", "backbone", "train", "dataset"}, "config");
  EngineConfig cfg;

  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t,
                   {"lr", "beta1", "beta2", "eps", "weight_decay", "epochs", "batch_size", "seed",
                    "mode", "eval_every", "checkpoint_every"},
                   "train");
    read_num(t, "lr", cfg.adamw.lr, "train");
    read_num(t, "beta1", cfg.adamw.beta1, "train");
    read_num(t, "beta2", cfg.adamw.beta2, "train");
    read_num(t, "eps", cfg.adamw.eps, "train");
    read_num(t, "weight_decay", cfg.adamw.weight_decay, "train");
    read_num(t, "epochs", cfg.epochs, "train");
    read_num(t, "batch_size", cfg.batch_size, "train");
    read_num(t, "seed", cfg.seed, "train");
    if (t.contains("mode")) {
      std::string s;
      read_str(t, "mode", s, "train");
      cfg.mode = train_mode_from(s);
    }
    read_num(t, "eval_every", cfg.eval_every, "train");
    read_num(t, "checkpoint_every", cfg.checkpoint_every, "train");
  }

  if (j.contains("kiprn")) {
    const json& r = j.at("kiprn");
    reject_unknown(r,
                   {"level_sizes", "pyconv_layer1_kernels", "pyconv_layer2_kernels",
                    "pyconv_channels", "kernel_mode", "uniform_kernel", "placement",
                    "branch_channels", "resblocks_per_branch", "zero_init_projection"},
                   "kiprn");
    if (r.contains("level_sizes"))
      cfg.resizer.level_sizes = read_int_array(r.at("level_sizes"), "kiprn.level_sizes");
    if (r.contains("pyconv_layer1_kernels"))
      cfg.resizer.pyconv_layer1_kernels =
          read_int_array(r.at("pyconv_layer1_kernels"), "kiprn.pyconv_layer1_kernels");
    if (r.contains("pyconv_layer2_kernels"))
      cfg.resizer.pyconv_layer2_kernels =
          read_int_array(r.at("pyconv_layer2_kernels"), "kiprn.pyconv_layer2_kernels");
    if (r.contains("pyconv_channels")) {
      const std::vector<int> pc = read_int_array(r.at("pyconv_channels"),
                                                 "kiprn.pyconv_channels");
      if (pc.size() != 2) throw ConfigError("kiprn.pyconv_channels must have two entries");
      cfg.resizer.pyconv_channels1 = pc[0];
      cfg.resizer.pyconv_channels2 = pc[1];
    }
    if (r.contains("kernel_mode")) {
      std::string s;
      read_str(r, "kernel_mode", s, "kiprn");
      cfg.resizer.kernel_order = kernel_mode_from(s);
    }
    read_num(r, "uniform_kernel", cfg.resizer.uniform_kernel, "kiprn");
    if (r.contains("placement")) {
      std::string s;
      read_str(r, "placement", s, "kiprn");
      cfg.resizer.placement = placement_from(s);
    }
    read_num(r, "branch_channels", cfg.resizer.branch_channels, "kiprn");
    read_num(r, "resblocks_per_branch", cfg.resizer.blocks_per_branch, "kiprn");
    read_bool(r, "zero_init_projection", cfg.resizer.zero_init_projection, "kiprn");
  }

  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    reject_unknown(b, {"stem_channels", "stage_channels", "blocks_per_stage", "num_classes"},
                   "backbone");
    read_num(b, "stem_channels", cfg.backbone.stem_channels, "backbone");
    if (b.contains("stage_channels"))
      cfg.backbone.stage_channels = read_int_array(b.at("stage_channels"),
                                                   "backbone.stage_channels");
    read_num(b, "blocks_per_stage", cfg.backbone.blocks_per_stage, "backbone");
    read_num(b, "num_classes", cfg.backbone.num_classes, "backbone");
  }

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d,
                   {"samples_per_class", "render_size", "seed", "train_fraction",
                    "noise_amplitude", "distractors"},
                   "dataset");
    read_num(d, "samples_per_class", cfg.dataset.per_class, "dataset");
    read_num(d, "render_size", cfg.dataset.size, "dataset");
    read_num(d, "seed", cfg.dataset.seed, "dataset");
    read_num(d, "train_fraction", cfg.dataset.train_fraction, "dataset");
    read_num(d, "noise_amplitude", cfg.dataset.noise_amplitude, "dataset");
    read_num(d, "distractors", cfg.dataset.distractors, "dataset");
  }
  return cfg;
}

EngineConfig config_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return config_from_json_text(buf.str());
  } catch (const Error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string config_to_json_text(const EngineConfig& cfg) {
  json j;
  j["train"] = {{"lr", cfg.adamw.lr},
                {"beta1", cfg.adamw.beta1},
                {"beta2", cfg.adamw.beta2},
                {"eps", cfg.adamw.eps},
                {"weight_decay", cfg.adamw.weight_decay},
                {"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"seed", cfg.seed},
                {"mode", to_string(cfg.mode)},
                {"eval_every", cfg.eval_every},
                {"checkpoint_every", cfg.checkpoint_every}};
  j["kiprn"] = {{"level_sizes", cfg.resizer.level_sizes},
                {"pyconv_layer1_kernels", cfg.resizer.pyconv_layer1_kernels},
                {"pyconv_layer2_kernels", cfg.resizer.pyconv_layer2_kernels},
                {"pyconv_channels",
                 std::vector<int>{cfg.resizer.pyconv_channels1, cfg.resizer.pyconv_channels2}},
                {"kernel_mode", to_string(cfg.resizer.kernel_order)},
                {"uniform_kernel", cfg.resizer.uniform_kernel},
                {"placement", to_string(cfg.resizer.placement)},
                {"branch_channels", cfg.resizer.branch_channels},
                {"resblocks_per_branch", cfg.resizer.blocks_per_branch},
                {"zero_init_projection", cfg.resizer.zero_init_projection}};
  j["backbone"] = {{"stem_channels", cfg.backbone.stem_channels},
                   {"stage_channels", cfg.backbone.stage_channels},
                   {"blocks_per_stage", cfg.backbone.blocks_per_stage},
                   {"num_classes", cfg.backbone.num_classes}};
  j["dataset"] = {{"samples_per_class", cfg.dataset.per_class},
                  {"render_size", cfg.dataset.size},
                  {"seed", cfg.dataset.seed},
                  {"train_fraction", cfg.dataset.train_fraction},
                  {"noise_amplitude", cfg.dataset.noise_amplitude},
                  {"distractors", cfg.dataset.distractors}};
  return j.dump();
}

bool config_resume_compatible(const std::string& a, const std::string& b) {
  json ja, jb;
  try {
    ja = json::parse(a);
    jb = json::parse(b);
  } catch (const json::exception&) {
    return false;
  }
  for (json* j : {&ja, &jb}) {
    j->erase("dataset");
    if (j->contains("train")) {
      json& t = j->at("train");
      t.erase("epochs");
      t.erase("eval_every");
      t.erase("checkpoint_every");
    }
  }
  return ja == jb;
}

}  // namespace kiprn
