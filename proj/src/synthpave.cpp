#include "kiprn/synthpave.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace kiprn::synthpave {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double lattice_hash(uint64_t seed, int64_t xi, int64_t yi) {
  uint64_t h = seed;
  h ^= static_cast<uint64_t>(xi) * 0x632be59bd9b4e019ULL;
  h ^= static_cast<uint64_t>(yi) * 0x9e3779b97f4a7c15ULL;
  h = splitmix64(h);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double vnoise(uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int64_t xi = static_cast<int64_t>(fx), yi = static_cast<int64_t>(fy);
  const double tx = smoothstep(x - fx), ty = smoothstep(y - fy);
  const double v00 = lattice_hash(seed, xi, yi), v10 = lattice_hash(seed, xi + 1, yi);
  const double v01 = lattice_hash(seed, xi, yi + 1), v11 = lattice_hash(seed, xi + 1, yi + 1);
  const double a = v00 + tx * (v10 - v00);
  const double b = v01 + tx * (v11 - v01);
  return a + ty * (b - a);
}

double fbm(uint64_t seed, double x, double y, int octaves) {
  double sum = 0, amp = 1, norm = 0, freq = 1;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * vnoise(seed + static_cast<uint64_t>(o) * 0x51ed2701, x * freq, y * freq);
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

struct Canvas {
  int size = 0;
  std::vector<float> v;      // gray working buffer
  std::vector<uint8_t> mask;

  float& at(int y, int x) { return v[static_cast<size_t>(y) * size + x]; }
  void mark(int y, int x) { mask[static_cast<size_t>(y) * size + x] = 255; }
};

void stamp_disk(Canvas& c, double cx, double cy, double r, double delta, bool mark,
                double mask_extra = 1.5) {
  const double rm = r + mask_extra;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rm)));
  const int x1 = std::min(c.size - 1, static_cast<int>(std::ceil(cx + rm)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - rm)));
  const int y1 = std::min(c.size - 1, static_cast<int>(std::ceil(cy + rm)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d <= r) {
        const double fall = d < r * 0.6 ? 1.0 : (r - d) / (r * 0.4 + 1e-9);
        c.at(y, x) += static_cast<float>(delta * std::min(1.0, fall));
      }
      if (mark && d <= rm) c.mark(y, x);
    }
  }
}

// Overwrite toward a target value instead of adding; used for smooth
// surfaces (sealant, repair patches).
void stamp_disk_set(Canvas& c, double cx, double cy, double r, double target, double blend,
                    bool mark, double mask_extra = 1.5) {
  const double rm = r + mask_extra;
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rm)));
  const int x1 = std::min(c.size - 1, static_cast<int>(std::ceil(cx + rm)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - rm)));
  const int y1 = std::min(c.size - 1, static_cast<int>(std::ceil(cy + rm)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d <= r) {
        const double w = blend * (d < r * 0.7 ? 1.0 : (r - d) / (r * 0.3 + 1e-9));
        float& px = c.at(y, x);
        px += static_cast<float>(std::min(1.0, w) * (target - px));
      }
      if (mark && d <= rm) c.mark(y, x);
    }
  }
}

void stamp_segment(Canvas& c, double x0, double y0, double x1, double y1, double width,
                   double delta, bool mark) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int steps = std::max(1, static_cast<int>(len / 0.75));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    stamp_disk(c, x0 + t * (x1 - x0), y0 + t * (y1 - y0), width / 2, delta, mark);
  }
}

struct Path {
  std::vector<double> xs, ys;
};

Path crack_path(Rng& rng, int size, double x, double y, double dx, double dy, double seg_len,
                double wander) {
  Path p;
  p.xs.push_back(x);
  p.ys.push_back(y);
  const double margin = 2.0 * size;
  while (x > -margin && x < size + margin && y > -margin && y < size + margin) {
    x += dx * seg_len + rng.uniform(-wander, wander);
    y += dy * seg_len + rng.uniform(-wander, wander);
    p.xs.push_back(x);
    p.ys.push_back(y);
    if (static_cast<int>(p.xs.size()) > 8 * size) break;
    if (x < -4 || x > size + 4 || y < -4 || y > size + 4) break;
  }
  return p;
}

void stamp_path(Canvas& c, const Path& p, double width, double delta, bool mark) {
  for (size_t i = 0; i + 1 < p.xs.size(); ++i)
    stamp_segment(c, p.xs[i], p.ys[i], p.xs[i + 1], p.ys[i + 1], width, delta, mark);
}

void render_linear_crack(Canvas& c, Rng& rng, double s, bool transverse) {
  const int n = c.size;
  const double width = rng.uniform(9.0, 13.0) * s;
  const double dark = -rng.uniform(70.0, 95.0);
  const double drift = rng.uniform(-0.22, 0.22);
  Path p;
  if (transverse)
    p = crack_path(rng, n, -2.0, rng.uniform(0.3, 0.7) * n, 1.0, drift, 20.0 * s, 5.0 * s);
  else
    p = crack_path(rng, n, rng.uniform(0.3, 0.7) * n, -2.0, drift, 1.0, 20.0 * s, 5.0 * s);
  stamp_path(c, p, width, dark, true);
}

void render_alligator(Canvas& c, Rng& rng, double s) {
  const int n = c.size;
  const double cell = rng.uniform(64.0, 92.0) * s;
  const double width = rng.uniform(4.5, 6.5) * s;
  const double dark = -rng.uniform(45.0, 65.0);
  for (double y = rng.uniform(0.0, cell); y < n + cell; y += cell) {
    Path p = crack_path(rng, n, -2.0, y, 1.0, rng.uniform(-0.1, 0.1), 18.0 * s, 7.0 * s);
    stamp_path(c, p, width, dark, true);
  }
  for (double x = rng.uniform(0.0, cell); x < n + cell; x += cell) {
    Path p = crack_path(rng, n, x, -2.0, rng.uniform(-0.1, 0.1), 1.0, 18.0 * s, 7.0 * s);
    stamp_path(c, p, width, dark, true);
  }
}

void render_massive(Canvas& c, Rng& rng, double s) {
  const int n = c.size;
  const bool horizontal = rng.uniform() < 0.5;
  const double width = rng.uniform(22.0, 32.0) * s;
  const double dark = -rng.uniform(70.0, 90.0);
  Path p;
  if (horizontal)
    p = crack_path(rng, n, -2.0, rng.uniform(0.4, 0.6) * n, 1.0, rng.uniform(-0.2, 0.2), 22.0 * s,
                   11.0 * s);
  else
    p = crack_path(rng, n, rng.uniform(0.4, 0.6) * n, -2.0, rng.uniform(-0.2, 0.2), 1.0, 22.0 * s,
                   11.0 * s);
  stamp_path(c, p, width, dark, true);
  // ragged edges plus a couple of side branches
  const int branches = 2 + static_cast<int>(rng.uniform_int(0, 1));
  for (int i = 0; i < branches; ++i) {
    const size_t pick = static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(p.xs.size()) - 1));
    Path b = crack_path(rng, n, p.xs[pick], p.ys[pick], rng.uniform(-1.0, 1.0),
                        rng.uniform(-1.0, 1.0), 14.0 * s, 8.0 * s);
    if (b.xs.size() > 6) {
      b.xs.resize(6);
      b.ys.resize(6);
    }
    stamp_path(c, b, width * 0.45, dark * 0.8, true);
  }
}

void render_pouring(Canvas& c, Rng& rng, double s) {
  const int n = c.size;
  // Sealed cracks run corner to corner; the offset slides the band off the
  // exact diagonal without letting it leave the frame.
  const double width = rng.uniform(18.0, 26.0) * s;
  const double target = rng.uniform(38.0, 50.0);
  const double off = rng.uniform(-0.18, 0.18) * n;
  const double drift = rng.uniform(-0.15, 0.15);
  Path p;
  if (off >= 0)
    p = crack_path(rng, n, -2.0, off, 0.72, 0.72 * (1.0 + drift), 26.0 * s, 4.0 * s);
  else
    p = crack_path(rng, n, -off, -2.0, 0.72, 0.72 * (1.0 + drift), 26.0 * s, 4.0 * s);
  // smooth near-black sealant band, crisp edged
  for (size_t i = 0; i + 1 < p.xs.size(); ++i) {
    const double len = std::hypot(p.xs[i + 1] - p.xs[i], p.ys[i + 1] - p.ys[i]);
    const int steps = std::max(1, static_cast<int>(len / 0.75));
    for (int t = 0; t <= steps; ++t) {
      const double u = static_cast<double>(t) / steps;
      stamp_disk_set(c, p.xs[i] + u * (p.xs[i + 1] - p.xs[i]),
                     p.ys[i] + u * (p.ys[i + 1] - p.ys[i]), width / 2, target, 0.95, true);
    }
  }
}

void render_raveling(Canvas& c, Rng& rng, double s) {
  const int n = c.size;
  const double rx = rng.uniform(0.24, 0.34) * n;
  const double ry = rng.uniform(0.24, 0.34) * n;
  const double cx = n / 2.0 + rng.uniform(-0.10, 0.10) * n;
  const double cy = n / 2.0 + rng.uniform(-0.10, 0.10) * n;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double ex = (x - cx) / rx, ey = (y - cy) / ry;
      if (ex * ex + ey * ey <= 1.0) {
        c.at(y, x) -= 13.0f;
        c.mark(y, x);
      }
    }
  }
  const int speckles = static_cast<int>(rx * ry / (26.0 * s * s));
  for (int i = 0; i < speckles; ++i) {
    const double a = rng.uniform(0.0, 2.0 * 3.14159265358979);
    const double r = std::sqrt(rng.uniform()) ;
    const double px = cx + std::cos(a) * r * rx * 0.96;
    const double py = cy + std::sin(a) * r * ry * 0.96;
    const double rad = rng.uniform(1.5, 4.5) * s;
    const double delta = (rng.uniform() < 0.7 ? -1 : 1) * rng.uniform(22.0, 42.0);
    stamp_disk(c, px, py, rad, delta, false);
  }
}

void render_repair(Canvas& c, Rng& rng, double s) {
  const int n = c.size;
  const int w = static_cast<int>(rng.uniform(0.30, 0.55) * n);
  const int h = static_cast<int>(rng.uniform(0.30, 0.55) * n);
  const int x0 = static_cast<int>(rng.uniform(0.0, static_cast<double>(n - w)));
  const int y0 = static_cast<int>(rng.uniform(0.0, static_cast<double>(n - h)));
  const double target = rng.uniform(152.0, 172.0);
  const uint64_t tex_seed = rng.next_u64();
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      const double tex = 8.0 * (vnoise(tex_seed, x / (14.0 * s), y / (14.0 * s)) - 0.5);
      c.at(y, x) = static_cast<float>(target + tex);
      c.mark(y, x);
    }
  }
  const double border = -30.0;
  const double bw = std::max(1.5, 2.5 * s);
  stamp_segment(c, x0, y0, x0 + w - 1, y0, bw, border, false);
  stamp_segment(c, x0, y0 + h - 1, x0 + w - 1, y0 + h - 1, bw, border, false);
  stamp_segment(c, x0, y0, x0, y0 + h - 1, bw, border, false);
  stamp_segment(c, x0 + w - 1, y0, x0 + w - 1, y0 + h - 1, bw, border, false);
}

}  // namespace

std::string class_dir_name(int label) {
  if (label < 0 || label >= static_cast<int>(class_names().size()))
    throw ArgumentError("label out of range: " + std::to_string(label));
  std::string name = class_names()[static_cast<size_t>(label)];
  for (char& ch : name)
    if (ch == ' ') ch = '_';
  return name;
}

Image render_image(int label, int index, const GenConfig& cfg, Image* mask_out) {
  const int size = cfg.size;
  if (size < 32) throw ArgumentError("render size too small: " + std::to_string(size));
  if (cfg.noise_amplitude < 0) throw ArgumentError("noise_amplitude must be >= 0");
  if (cfg.distractors < 0) throw ArgumentError("distractors must be >= 0");
  const std::string dir = class_dir_name(label);  // validates label
  Rng rng(derive_seed(cfg.seed, "img." + dir, static_cast<uint64_t>(index)));
  const double s = static_cast<double>(size) / 512.0;

  Canvas c;
  c.size = size;
  c.v.assign(static_cast<size_t>(size) * size, 0.0f);
  c.mask.assign(static_cast<size_t>(size) * size, 0);

  const double base = rng.uniform(117.0, 129.0);
  const double amp = cfg.noise_amplitude;
  const uint64_t bg_seed = rng.next_u64();
  const uint64_t grain_seed = rng.next_u64();
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double coarse = fbm(bg_seed, x / (88.0 * s), y / (88.0 * s), 3) - 0.5;
      const double fine = vnoise(bg_seed ^ 0xabcdULL, x / (11.0 * s), y / (11.0 * s)) - 0.5;
      const double grain = lattice_hash(grain_seed, x, y) - 0.5;
      c.at(y, x) =
          static_cast<float>(base + amp * (20.0 * coarse + 14.0 * fine + 11.0 * grain));
    }
  }

  // Benign blemishes drawn before the defect so the defect overdraws them;
  // they stay out of the mask.
  for (int i = 0; i < cfg.distractors; ++i) {
    const double px = rng.uniform(0.0, static_cast<double>(size));
    const double py = rng.uniform(0.0, static_cast<double>(size));
    const double rad = rng.uniform(5.0, 14.0) * s;
    const double delta = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(6.0, 13.0);
    stamp_disk(c, px, py, rad, delta, false);
  }

  switch (label) {
    case 0: render_alligator(c, rng, s); break;
    case 1: render_pouring(c, rng, s); break;
    case 2: render_linear_crack(c, rng, s, false); break;
    case 3: render_massive(c, rng, s); break;
    case 4: render_linear_crack(c, rng, s, true); break;
    case 5: render_raveling(c, rng, s); break;
    case 6: render_repair(c, rng, s); break;
    default: break;
  }

  // Base channels stay identical gray; only the sealant band and repair
  // patch carry a color cast (bluish-black pour, tan patch).
  double tint_r = 0.0, tint_b = 0.0;
  if (label == 1) {
    tint_r = -rng.uniform(4.0, 8.0);
    tint_b = rng.uniform(5.0, 9.0);
  } else if (label == 6) {
    tint_r = rng.uniform(6.0, 10.0);
    tint_b = -rng.uniform(4.0, 8.0);
  }
  Image img;
  img.width = size;
  img.height = size;
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double v = c.at(y, x);
      const bool in_structure = c.mask[static_cast<size_t>(y) * size + x] != 0;
      const double chan[3] = {v + (in_structure ? tint_r : 0.0), v,
                              v + (in_structure ? tint_b : 0.0)};
      for (int k = 0; k < 3; ++k)
        img.at(y, x, k) = static_cast<uint8_t>(std::clamp(chan[k], 0.0, 255.0));
    }
  }
  if (mask_out) {
    mask_out->width = size;
    mask_out->height = size;
    mask_out->channels = 1;
    mask_out->pixels = c.mask;
  }
  return img;
}

std::vector<int> Manifest::train_idx() const {
  std::vector<int> out;
  for (size_t i = 0; i < items.size(); ++i)
    if (items[i].train) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> Manifest::test_idx() const {
  std::vector<int> out;
  for (size_t i = 0; i < items.size(); ++i)
    if (!items[i].train) out.push_back(static_cast<int>(i));
  return out;
}

std::string Manifest::image_path(int i) const {
  return (fs::path(root) / items[static_cast<size_t>(i)].image).string();
}

std::string Manifest::mask_path(int i) const {
  return (fs::path(root) / items[static_cast<size_t>(i)].mask).string();
}

Manifest generate(const std::string& root, const GenConfig& cfg) {
  if (cfg.per_class < 1) throw ArgumentError("per_class must be >= 1");
  Manifest m;
  m.root = root;
  m.size = cfg.size;
  m.seed = cfg.seed;
  fs::create_directories(root);
  for (int label = 0; label < static_cast<int>(class_names().size()); ++label) {
    const std::string dir = class_dir_name(label);
    fs::create_directories(fs::path(root) / "images" / dir);
    fs::create_directories(fs::path(root) / "masks" / dir);
    for (int idx = 0; idx < cfg.per_class; ++idx) {
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s_%04d.png", dir.c_str(), idx);
      Image mask;
      const Image img = render_image(label, idx, cfg, &mask);
      Item item;
      item.image = (fs::path("images") / dir / stem).generic_string();
      item.mask = (fs::path("masks") / dir / stem).generic_string();
      item.label = label;
      item.index = idx;
      item.train = true;
      write_png((fs::path(root) / item.image).string(), img);
      write_png((fs::path(root) / item.mask).string(), mask);
      m.items.push_back(std::move(item));
    }
  }
  return m;
}

void make_splits(Manifest& m, double train_fraction, uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("train_fraction must lie strictly between 0 and 1");
  std::vector<std::vector<int>> per_class(class_names().size());
  for (size_t i = 0; i < m.items.size(); ++i)
    per_class[static_cast<size_t>(m.items[i].label)].push_back(static_cast<int>(i));
  for (size_t label = 0; label < per_class.size(); ++label) {
    std::vector<int>& idx = per_class[label];
    if (idx.empty()) continue;
    const int n = static_cast<int>(idx.size());
    const int n_train = static_cast<int>(std::lround(train_fraction * n));
    if (n_train < 1 || n_train >= n)
      throw ArgumentError("class " + class_dir_name(static_cast<int>(label)) +
                          " is too small to split at fraction " + std::to_string(train_fraction));
    Rng rng(derive_seed(seed, "split", static_cast<uint64_t>(label)));
    shuffle(idx, rng);
    for (int i = 0; i < n; ++i) m.items[static_cast<size_t>(idx[i])].train = i < n_train;
  }
}

void save_manifest(const Manifest& m, const GenConfig& cfg) {
  std::ofstream out(fs::path(m.root) / "manifest.jsonl");
  if (!out) throw IoError("cannot write manifest under " + m.root);
  const json header = {{"dataset", "synthpave"},
                       {"version", 1},
                       {"seed", cfg.seed},
                       {"spec",
                        {{"samples_per_class", cfg.per_class},
                         {"render_size", cfg.size},
                         {"train_fraction", cfg.train_fraction},
                         {"noise_amplitude", cfg.noise_amplitude},
                         {"distractors", cfg.distractors}}}};
  out << header.dump() << "\n";
  for (const Item& it : m.items) {
    const json rec = {{"path", it.image},
                      {"label", it.label},
                      {"class_name", class_names()[static_cast<size_t>(it.label)]},
                      {"split", it.train ? "train" : "test"}};
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("manifest write failed under " + m.root);
}

Manifest generate_dataset(const std::string& root, const GenConfig& cfg) {
  Manifest m = generate(root, cfg);
  make_splits(m, cfg.train_fraction, derive_seed(cfg.seed, "split"));
  save_manifest(m, cfg);
  return m;
}

Manifest load_manifest(const std::string& root) {
  const std::string path = (fs::path(root) / "manifest.jsonl").string();
  std::ifstream in(path);
  if (!in) throw IoError("no manifest.jsonl under " + root);
  Manifest m;
  m.root = root;
  std::string line;
  if (!std::getline(in, line)) throw DecodeError("empty manifest: " + path);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DecodeError(std::string("manifest header is not JSON: ") + e.what());
  }
  if (header.value("dataset", "") != "synthpave" || header.value("version", 0) != 1 ||
      !header.contains("spec"))
    throw DecodeError("unrecognized manifest header in " + path);
  m.seed = header.value("seed", uint64_t{0});
  m.size = header.at("spec").value("render_size", 0);
  if (m.size < 1) throw DecodeError("manifest spec lacks a valid render_size");

  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw DecodeError(std::string("malformed manifest record: ") + e.what());
    }
    Item it;
    if (!rec.contains("path") || !rec.contains("label") || !rec.contains("split"))
      throw DecodeError("manifest record missing fields: " + line);
    it.image = rec.at("path").get<std::string>();
    it.label = rec.at("label").get<int>();
    if (it.label < 0 || it.label >= static_cast<int>(class_names().size()))
      throw DecodeError("manifest label out of range: " + line);
    if (rec.value("class_name", "") != class_names()[static_cast<size_t>(it.label)])
      throw DecodeError("manifest class_name does not match label: " + line);
    const std::string split = rec.at("split").get<std::string>();
    if (split != "train" && split != "test") throw DecodeError("bad split value: " + line);
    it.train = split == "train";
    if (it.image.rfind("images/", 0) != 0)
      throw DecodeError("manifest path must live under images/: " + it.image);
    it.mask = "masks/" + it.image.substr(7);
    if (!seen.insert(it.image).second) throw DecodeError("duplicate manifest path: " + it.image);
    const std::string stem = fs::path(it.image).stem().string();
    const size_t us = stem.rfind('_');
    it.index = us == std::string::npos ? 0 : std::atoi(stem.c_str() + us + 1);
    for (const std::string& rel : {it.image, it.mask}) {
      const fs::path full = fs::path(root) / rel;
      if (!fs::exists(full)) throw IoError("manifest references a missing file: " + full.string());
    }
    m.items.push_back(std::move(it));
  }
  if (m.items.empty()) throw DecodeError("manifest has no records");
  return m;
}

const Image& ImageCache::get(const std::string& path) {
  auto it = map_.find(path);
  if (it != map_.end()) return it->second;
  return map_.emplace(path, read_png(path)).first->second;
}

TensorF load_batch(const Manifest& m, const std::vector<int>& indices, ImageCache& cache) {
  if (indices.empty()) throw ArgumentError("load_batch: empty index list");
  const int s = m.size;
  TensorF batch = TensorF::zeros({static_cast<int>(indices.size()), 3, s, s});
  for (size_t bi = 0; bi < indices.size(); ++bi) {
    const Image& img = cache.get(m.image_path(indices[bi]));
    if (img.width != s || img.height != s || img.channels != 3)
      throw ShapeError("unexpected image geometry in " + m.image_path(indices[bi]));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          batch.at(static_cast<int>(bi), c, y, x) =
              (static_cast<float>(img.at(y, x, c)) / 255.0f - 0.5f) / 0.25f;
  }
  return batch;
}

std::vector<int> labels_of(const Manifest& m, const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(m.items[static_cast<size_t>(i)].label);
  return out;
}

}  // namespace kiprn::synthpave
