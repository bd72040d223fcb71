#pragma once

// Zero-dependency file formats: binary PGM images, IDX (MNIST) ingestion,
// and small helpers shared by datagen and the trainer.

#include <cstdint>
#include <string>
#include <vector>

namespace air {

struct Img {
  int h = 0, w = 0;
  std::vector<double> p;  // row-major, values in [0,1] unless stated

  Img() = default;
  Img(int h_, int w_, double fill = 0.0)
      : h(h_), w(w_), p(static_cast<size_t>(h_) * w_, fill) {}
  double& at(int r, int c) { return p[static_cast<size_t>(r) * w + c]; }
  double at(int r, int c) const { return p[static_cast<size_t>(r) * w + c]; }
  bool operator==(const Img&) const = default;
};

// Quantize to 8 bits; dataset images are defined as their quantized form so
// files round-trip bit-exactly.
Img quantize8(const Img& img);

void write_pgm(const std::string& path, const Img& img);
Img read_pgm(const std::string& path);

// IDX containers (big-endian magic 0x00000803 images / 0x00000801 labels).
// Throws with the failing byte offset on malformed input.
std::vector<Img> read_idx_images(const std::string& path);
std::vector<uint8_t> read_idx_labels(const std::string& path);

// Deterministic per-item seed derivation (splitmix64 over (seed, index)).
uint64_t derive_seed(uint64_t seed, uint64_t index);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a content hash used by dataset manifests.
uint64_t fnv1a(const std::string& bytes);

}  // namespace air
