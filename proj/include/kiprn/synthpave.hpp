#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "kiprn/png_io.hpp"
#include "kiprn/rng.hpp"
#include "kiprn/tensor.hpp"

// Synthetic pavement-distress dataset: seven classes rendered over a
// value-noise asphalt background, with a defect mask beside every image.
// Rendering is a pure function of (seed, class, index, render params).
namespace kiprn::synthpave {

inline const std::array<const char*, 7>& class_names() {
  static const std::array<const char*, 7> names{
      "alligator crack", "crack pouring", "longitudinal crack", "massive crack",
      "transverse crack", "raveling",     "repair"};
  return names;
}

std::string class_dir_name(int label);

struct GenConfig {
  int per_class = 100;
  int size = 512;
  uint64_t seed = 7;
  double train_fraction = 0.5;
  double noise_amplitude = 1.0;  // scales the background texture
  int distractors = 3;           // benign blemishes per image, outside the mask
};

struct Item {
  std::string image;  // path relative to the dataset root
  std::string mask;
  int label = 0;
  int index = 0;
  bool train = true;
};

struct Manifest {
  std::string root;
  int size = 0;
  uint64_t seed = 0;
  std::vector<Item> items;

  std::vector<int> train_idx() const;
  std::vector<int> test_idx() const;
  std::string image_path(int i) const;
  std::string mask_path(int i) const;
};

Image render_image(int label, int index, const GenConfig& cfg, Image* mask_out);

// Renders all images and masks; split tags start as "train" until
// make_splits assigns them. Does not write the manifest file.
Manifest generate(const std::string& root, const GenConfig& cfg);

// Per-class stratified split: a seeded shuffle of each class takes the
// first round(n * train_fraction) for training.
void make_splits(Manifest& m, double train_fraction, uint64_t seed);

// manifest.jsonl: a header object carrying the generation spec, then one
// record per sample: {"path", "label", "class_name", "split"}. Mask paths
// are the image paths with images/ replaced by masks/.
void save_manifest(const Manifest& m, const GenConfig& cfg);
Manifest load_manifest(const std::string& root);

// generate + make_splits + save_manifest.
Manifest generate_dataset(const std::string& root, const GenConfig& cfg);

// Decoded-image cache; batches over epochs decode each file once.
class ImageCache {
 public:
  const Image& get(const std::string& path);
  void clear() { map_.clear(); }

 private:
  std::unordered_map<std::string, Image> map_;
};

// [N,3,S,S], normalized (p/255 - 0.5) / 0.25.
TensorF load_batch(const Manifest& m, const std::vector<int>& indices, ImageCache& cache);
std::vector<int> labels_of(const Manifest& m, const std::vector<int>& indices);

}  // namespace kiprn::synthpave
