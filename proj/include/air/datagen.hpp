#pragma once

// Deterministic synthetic datasets: sprite scenes, glyph scenes (procedural
// seven-segment digits or real digits from IDX files), renderer scenes, and
// the count-generalization splits. Everything is a pure function of
// (spec, seed); images derive their own rng from (seed, index).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "air/io.hpp"
#include "air/raster.hpp"

namespace air {

enum class DatasetKind { Sprites, Glyphs, Raster };

struct CountDist {
  std::vector<int> counts;
  std::vector<double> probs;  // must sum to 1
};

CountDist uniform_counts(std::vector<int> counts);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Sprites;
  int canvas = 28;
  CountDist count_dist = uniform_counts({0, 1, 2});
  int n_images = 1000;
  uint64_t seed = 0;
  bool overlap_allowed = false;
  bool repetition_allowed = true;  // raster identities may repeat
  int sprite_size = 10;            // nominal template side in px
  double scale_jitter = 0.2;       // +-20% size jitter
  std::string mnist_images;        // optional IDX paths for glyph mode
  std::string mnist_labels;
  RenderConfig render;             // used when kind == Raster

  void validate() const;
};

struct LabeledImage {
  Img pixels;
  int count = 0;
  std::vector<int> classes;                  // sprite/glyph class or ShapeId
  std::vector<std::array<double, 2>> centers;  // (x, y) in px, left-to-right
  std::vector<double> sizes;                 // scaled template side in px
  SceneSpec scene;                           // raster kind only
};

struct Dataset {
  DatasetSpec spec;
  std::vector<LabeledImage> items;
};

// Antialiased grayscale templates, values in [0,1].
Img sprite_template(int cls, int size);  // 0 disc, 1 square, 2 diamond
Img glyph_template(int digit, int size);  // seven-segment digit

Dataset generate(const DatasetSpec& spec);

// Labels for two-object glyph scenes.
int label_sum(const LabeledImage& item);             // 0..18
int label_order(const LabeledImage& item);           // 1 iff left < right

// PGM directory + truth.jsonl + manifest.json (config echo and content hash).
void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

std::string truth_to_json(const LabeledImage& item);
LabeledImage truth_from_json(const std::string& line);

}  // namespace air
