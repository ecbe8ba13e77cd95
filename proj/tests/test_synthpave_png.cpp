#include "doctest.h"

#include <zlib.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "kiprn/kernels.hpp"
#include "kiprn/synthpave.hpp"

using namespace kiprn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("kiprn_ut_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

std::vector<fs::path> sorted_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  std::sort(out.begin(), out.end());
  return out;
}

Image random_image(Rng& rng, int w, int h, int channels) {
  Image img;
  img.width = w;
  img.height = h;
  img.channels = channels;
  img.pixels.resize(static_cast<size_t>(w) * h * channels);
  for (uint8_t& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
  return img;
}

// Minimal PNG writer used to hand an adversarial-but-valid file to the
// decoder: every row carries a different filter type.
void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void add_chunk(std::vector<uint8_t>& png, const char* type, const std::vector<uint8_t>& data) {
  put_u32(png, static_cast<uint32_t>(data.size()));
  const size_t start = png.size();
  for (int i = 0; i < 4; ++i) png.push_back(static_cast<uint8_t>(type[i]));
  png.insert(png.end(), data.begin(), data.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0, png.data() + start, static_cast<uInt>(4 + data.size())));
  put_u32(png, crc);
}

uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace

TEST_CASE("png encode/decode round-trips RGB and gray pixels exactly") {
  Rng rng(601);
  for (int ch : {3, 1}) {
    Image img = random_image(rng, 9, 7, ch);
    std::vector<uint8_t> bytes = encode_png(img);
    Image back = decode_png(bytes.data(), bytes.size());
    CHECK(back.width == 9);
    CHECK(back.height == 7);
    CHECK(back.channels == ch);
    CHECK(back.pixels == img.pixels);
    CHECK(encode_png(img) == bytes);  // encoding is deterministic
  }
}

TEST_CASE("decoder handles all five png row filters") {
  const int w = 4, h = 5, bpp = 3, stride = w * bpp;
  std::vector<uint8_t> raw(static_cast<size_t>(h) * stride);
  for (int y = 0; y < h; ++y)
    for (int i = 0; i < stride; ++i)
      raw[static_cast<size_t>(y) * stride + i] = static_cast<uint8_t>((y * 53 + i * 31) & 0xFF);

  std::vector<uint8_t> scan;
  for (int y = 0; y < h; ++y) {
    scan.push_back(static_cast<uint8_t>(y));  // filter type = row index
    const uint8_t* row = raw.data() + static_cast<size_t>(y) * stride;
    const uint8_t* prev = y > 0 ? raw.data() + static_cast<size_t>(y - 1) * stride : nullptr;
    for (int i = 0; i < stride; ++i) {
      const int left = i >= bpp ? row[i - bpp] : 0;
      const int up = prev ? prev[i] : 0;
      const int upleft = (prev && i >= bpp) ? prev[i - bpp] : 0;
      int f = row[i];
      switch (y) {
        case 0: break;
        case 1: f -= left; break;
        case 2: f -= up; break;
        case 3: f -= (left + up) / 2; break;
        case 4: f -= paeth(left, up, upleft); break;
      }
      scan.push_back(static_cast<uint8_t>(f & 0xFF));
    }
  }
  uLongf zcap = compressBound(static_cast<uLong>(scan.size()));
  std::vector<uint8_t> zdata(zcap);
  REQUIRE(compress2(zdata.data(), &zcap, scan.data(), static_cast<uLong>(scan.size()), 6) ==
          Z_OK);
  zdata.resize(zcap);

  std::vector<uint8_t> png{137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, w);
  put_u32(ihdr, h);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB, no interlace
  add_chunk(png, "IHDR", ihdr);
  add_chunk(png, "IDAT", zdata);
  add_chunk(png, "IEND", {});

  Image img = decode_png(png.data(), png.size());
  CHECK(img.width == w);
  CHECK(img.height == h);
  CHECK(img.channels == 3);
  CHECK(img.pixels == raw);
}

TEST_CASE("malformed png files raise decode errors, never partial data") {
  Rng rng(602);
  Image img = random_image(rng, 6, 6, 3);
  std::vector<uint8_t> bytes = encode_png(img);

  CHECK_THROWS_AS(decode_png(bytes.data(), 7), DecodeError);           // inside signature
  CHECK_THROWS_AS(decode_png(bytes.data(), 20), DecodeError);          // inside IHDR
  CHECK_THROWS_AS(decode_png(bytes.data(), bytes.size() - 5), DecodeError);
  std::vector<uint8_t> junk(bytes);
  junk[1] = 'X';
  CHECK_THROWS_AS(decode_png(junk.data(), junk.size()), DecodeError);  // bad signature
  std::vector<uint8_t> crc_broken(bytes);
  crc_broken[crc_broken.size() - 5] ^= 0xFF;  // IEND crc
  CHECK_THROWS_AS(decode_png(crc_broken.data(), crc_broken.size()), DecodeError);
}

TEST_CASE("png tensor save/load stays within one quantization step") {
  const fs::path dir = fresh_dir("pngio");
  Rng rng(603);
  TensorF t = TensorF::uniform({3, 11, 13}, rng, 0.0, 1.0);
  save_png_tensor((dir / "t.png").string(), t);
  TensorF back = load_png_tensor((dir / "t.png").string());
  REQUIRE(back.dims() == t.dims());
  CHECK(max_abs_diff(back, t) <= 1.0 / 255.0 + 1e-6);

  TensorF zeros = TensorF::zeros({3, 5, 5});
  save_png_tensor((dir / "z.png").string(), zeros);
  TensorF zback = load_png_tensor((dir / "z.png").string());
  for (int64_t i = 0; i < zback.numel(); ++i) CHECK(zback[i] == 0.0f);

  // Out-of-range values clamp on save.
  TensorF wild = TensorF::full({3, 4, 4}, 1.5f);
  for (int64_t i = 0; i < 8; ++i) wild[i] = -2.0f;
  save_png_tensor((dir / "w.png").string(), wild);
  TensorF wback = load_png_tensor((dir / "w.png").string());
  CHECK(wback[0] == 0.0f);
  CHECK(wback[wback.numel() - 1] == 1.0f);

  CHECK_THROWS_AS(load_png_tensor((dir / "absent.png").string()), IoError);
}

TEST_CASE("rendering is a pure function of label, index and config") {
  synthpave::GenConfig cfg;
  cfg.size = 48;
  Image mask1, mask2;
  Image a = synthpave::render_image(2, 5, cfg, &mask1);
  Image b = synthpave::render_image(2, 5, cfg, &mask2);
  CHECK(a.pixels == b.pixels);
  CHECK(mask1.pixels == mask2.pixels);
  CHECK(a.channels == 3);
  CHECK(a.width == 48);
  CHECK(mask1.channels == 1);

  Image c = synthpave::render_image(2, 6, cfg, nullptr);
  CHECK(a.pixels != c.pixels);
  Image d = synthpave::render_image(3, 5, cfg, nullptr);
  CHECK(a.pixels != d.pixels);

  synthpave::GenConfig small = cfg;
  small.size = 16;
  CHECK_THROWS_AS(synthpave::render_image(0, 0, small, nullptr), ArgumentError);
  CHECK_THROWS_AS(synthpave::render_image(7, 0, cfg, nullptr), ArgumentError);
}

TEST_CASE("generate_dataset writes a balanced, reloadable corpus") {
  const fs::path dir = fresh_dir("corpus");
  synthpave::GenConfig cfg;
  cfg.per_class = 3;
  cfg.size = 48;
  cfg.seed = 9;
  synthpave::Manifest m = synthpave::generate_dataset(dir.string(), cfg);
  CHECK(m.items.size() == 21);

  std::array<int, 7> count{};
  std::set<std::string> paths;
  for (const synthpave::Item& it : m.items) {
    ++count[static_cast<size_t>(it.label)];
    CHECK(paths.insert(it.image).second);
    CHECK(fs::exists(dir / it.image));
    CHECK(fs::exists(dir / it.mask));
    Image mask = read_png((dir / it.mask).string());
    CHECK(mask.width == 48);
    CHECK(mask.channels == 1);
  }
  for (int c : count) CHECK(c == 3);

  synthpave::Manifest back = synthpave::load_manifest(dir.string());
  CHECK(back.items.size() == m.items.size());
  CHECK(back.size == 48);
  CHECK(back.seed == 9);
  for (size_t i = 0; i < m.items.size(); ++i) {
    CHECK(back.items[i].image == m.items[i].image);
    CHECK(back.items[i].label == m.items[i].label);
    CHECK(back.items[i].train == m.items[i].train);
  }
}

TEST_CASE("same generation seed gives byte-identical trees, new seeds differ") {
  synthpave::GenConfig cfg;
  cfg.per_class = 2;
  cfg.size = 48;
  cfg.seed = 5;
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  synthpave::generate_dataset(a.string(), cfg);
  synthpave::generate_dataset(b.string(), cfg);
  const std::vector<fs::path> fa = sorted_files(a), fb = sorted_files(b);
  REQUIRE(fa == fb);
  CHECK(fa.size() == 2 * 14 + 1);  // images, masks, manifest
  for (const fs::path& rel : fa) CHECK(read_bytes(a / rel) == read_bytes(b / rel));

  synthpave::GenConfig other = cfg;
  other.seed = 6;
  const fs::path c = fresh_dir("det_c");
  synthpave::generate_dataset(c.string(), other);
  bool any_differ = false;
  for (const fs::path& rel : fa)
    if (rel.extension() == ".png" && read_bytes(a / rel) != read_bytes(c / rel))
      any_differ = true;
  CHECK(any_differ);
}

TEST_CASE("splits are stratified, seeded, disjoint and exhaustive") {
  const fs::path dir = fresh_dir("splits");
  synthpave::GenConfig cfg;
  cfg.per_class = 10;
  cfg.size = 48;
  cfg.seed = 13;
  synthpave::Manifest m = synthpave::generate(dir.string(), cfg);

  synthpave::make_splits(m, 0.5, 77);
  std::array<int, 7> train_per_class{};
  for (const synthpave::Item& it : m.items)
    if (it.train) ++train_per_class[static_cast<size_t>(it.label)];
  for (int c : train_per_class) CHECK(c == 5);

  const std::vector<int> train = m.train_idx(), test = m.test_idx();
  CHECK(train.size() == 35);
  CHECK(test.size() == 35);
  std::set<int> seen(train.begin(), train.end());
  for (int i : test) CHECK(seen.insert(i).second);
  CHECK(seen.size() == m.items.size());

  synthpave::Manifest m2 = m;
  synthpave::make_splits(m2, 0.5, 77);
  for (size_t i = 0; i < m.items.size(); ++i) CHECK(m2.items[i].train == m.items[i].train);
  synthpave::make_splits(m2, 0.5, 78);
  bool moved = false;
  for (size_t i = 0; i < m.items.size(); ++i)
    if (m2.items[i].train != m.items[i].train) moved = true;
  CHECK(moved);

  CHECK_THROWS_AS(synthpave::make_splits(m, 0.0, 1), ArgumentError);
  CHECK_THROWS_AS(synthpave::make_splits(m, 1.0, 1), ArgumentError);
  synthpave::GenConfig one = cfg;
  one.per_class = 1;
  const fs::path d2 = fresh_dir("splits1");
  synthpave::Manifest tiny = synthpave::generate(d2.string(), one);
  CHECK_THROWS_AS(synthpave::make_splits(tiny, 0.5, 1), ArgumentError);
}

TEST_CASE("load_batch normalizes (p/255 - 0.5) / 0.25 and partitions cleanly") {
  const fs::path dir = fresh_dir("batches");
  synthpave::GenConfig cfg;
  cfg.per_class = 2;
  cfg.size = 48;
  cfg.seed = 21;
  synthpave::Manifest m = synthpave::generate_dataset(dir.string(), cfg);
  synthpave::ImageCache cache;

  TensorF one = synthpave::load_batch(m, {3}, cache);
  REQUIRE(one.dims() == std::vector<int>{1, 3, 48, 48});
  Image img = read_png(m.image_path(3));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        const float want = (static_cast<float>(img.at(y, x, c)) / 255.0f - 0.5f) / 0.25f;
        CHECK(one.at(0, c, y, x) == want);
      }

  // One full-size batch covers every sample once; chunked batches carry the
  // same label multiset.
  std::vector<int> all(m.items.size());
  for (size_t i = 0; i < all.size(); ++i) all[static_cast<size_t>(i)] = static_cast<int>(i);
  Rng sh(31);
  shuffle(all, sh);
  TensorF full = synthpave::load_batch(m, all, cache);
  CHECK(full.dims() == std::vector<int>{14, 3, 48, 48});
  std::vector<int> got_labels;
  for (size_t off = 0; off < all.size(); off += 4) {
    const size_t end = std::min(all.size(), off + 4);
    std::vector<int> bidx(all.begin() + static_cast<std::ptrdiff_t>(off),
                          all.begin() + static_cast<std::ptrdiff_t>(end));
    for (int l : synthpave::labels_of(m, bidx)) got_labels.push_back(l);
  }
  std::vector<int> want_labels;
  for (const synthpave::Item& it : m.items) want_labels.push_back(it.label);
  std::sort(got_labels.begin(), got_labels.end());
  std::sort(want_labels.begin(), want_labels.end());
  CHECK(got_labels == want_labels);

  CHECK_THROWS_AS(synthpave::load_batch(m, {}, cache), ArgumentError);
  fs::remove(m.image_path(0));
  synthpave::ImageCache cold;
  CHECK_THROWS_AS(synthpave::load_batch(m, {0}, cold), IoError);
}

TEST_CASE("shuffled epoch order is a seeded permutation") {
  std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> b = a;
  Rng r1(42), r2(42), r3(43);
  shuffle(a, r1);
  shuffle(b, r2);
  CHECK(a == b);
  std::vector<int> c{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  shuffle(c, r3);
  CHECK(a != c);
  std::vector<int> sorted_a = a;
  std::sort(sorted_a.begin(), sorted_a.end());
  CHECK(sorted_a == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("corrupt manifests are rejected with precise errors") {
  const fs::path dir = fresh_dir("manifest_err");
  synthpave::GenConfig cfg;
  cfg.per_class = 1;
  cfg.size = 48;
  cfg.seed = 3;
  synthpave::Manifest m = synthpave::generate(dir.string(), cfg);
  synthpave::save_manifest(m, cfg);
  const fs::path mf = dir / "manifest.jsonl";
  const std::string original(reinterpret_cast<const char*>(read_bytes(mf).data()),
                             read_bytes(mf).size());

  auto rewrite = [&](auto edit) {
    std::vector<std::string> lines;
    std::istringstream in(original);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    edit(lines);
    std::ofstream out(mf);
    for (const std::string& l : lines) out << l << "\n";
  };

  CHECK_THROWS_AS(synthpave::load_manifest((dir / "nowhere").string()), IoError);

  rewrite([](std::vector<std::string>& l) { l.assign(1, ""); });
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), DecodeError);

  rewrite([](std::vector<std::string>& l) { l[0] = "{\"dataset\": \"other\"}"; });
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), DecodeError);

  rewrite([](std::vector<std::string>& l) {
    json r = json::parse(l[1]);
    r["label"] = 9;
    l[1] = r.dump();
  });
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), DecodeError);

  rewrite([](std::vector<std::string>& l) {
    json r = json::parse(l[1]);
    r["class_name"] = "repair";
    l[1] = r.dump();
  });
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), DecodeError);

  rewrite([](std::vector<std::string>& l) { l.push_back(l[1]); });
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), DecodeError);

  rewrite([](std::vector<std::string>& l) {
    json r = json::parse(l[1]);
    r["split"] = "validation";
    l[1] = r.dump();
  });
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), DecodeError);

  rewrite([](std::vector<std::string>&) {});  // restore valid content
  synthpave::Manifest ok = synthpave::load_manifest(dir.string());
  fs::remove(dir / ok.items[0].image);
  CHECK_THROWS_AS(synthpave::load_manifest(dir.string()), IoError);
}

TEST_CASE("classes are separable for a nearest-centroid probe") {
  const fs::path dir = fresh_dir("centroid");
  synthpave::GenConfig cfg;
  cfg.per_class = 16;
  cfg.size = 128;
  cfg.seed = 11;
  synthpave::Manifest m = synthpave::generate_dataset(dir.string(), cfg);
  synthpave::ImageCache cache;

  auto embed = [&](int idx) {
    TensorF x = synthpave::load_batch(m, {idx}, cache);
    return kernels::bilinear_forward(x, 32, 32);
  };

  std::array<std::vector<double>, 7> centroid;
  std::array<int, 7> n{};
  for (int idx : m.train_idx()) {
    TensorF e = embed(idx);
    const int label = m.items[static_cast<size_t>(idx)].label;
    auto& c = centroid[static_cast<size_t>(label)];
    if (c.empty()) c.assign(static_cast<size_t>(e.numel()), 0.0);
    for (int64_t i = 0; i < e.numel(); ++i) c[static_cast<size_t>(i)] += e[i];
    ++n[static_cast<size_t>(label)];
  }
  for (size_t l = 0; l < 7; ++l)
    for (double& v : centroid[l]) v /= n[l];

  int correct = 0, total = 0;
  for (int idx : m.test_idx()) {
    TensorF e = embed(idx);
    int best = -1;
    double best_d = 1e300;
    for (size_t l = 0; l < 7; ++l) {
      double d = 0;
      for (int64_t i = 0; i < e.numel(); ++i) {
        const double diff = e[i] - centroid[l][static_cast<size_t>(i)];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(l);
      }
    }
    correct += best == m.items[static_cast<size_t>(idx)].label;
    ++total;
  }
  CHECK(total == 56);
  CHECK(static_cast<double>(correct) / total > 2.0 / 7.0);
}
