#include "air/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace air {

Img quantize8(const Img& img) {
  Img out(img.h, img.w);
  for (size_t i = 0; i < img.p.size(); ++i) {
    double v = std::clamp(img.p[i], 0.0, 1.0);
    out.p[i] = std::round(v * 255.0) / 255.0;
  }
  return out;
}

void write_pgm(const std::string& path, const Img& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pgm: cannot write " + path);
  os << "P5\n" << img.w << " " << img.h << "\n255\n";
  for (double v : img.p) {
    double c = std::clamp(v, 0.0, 1.0);
    unsigned char b = static_cast<unsigned char>(std::round(c * 255.0));
    os.put(static_cast<char>(b));
  }
}

Img read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pgm: cannot read " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: expected P5 in " + path);
  int w, h, maxval;
  is >> w >> h >> maxval;
  if (maxval != 255) throw std::runtime_error("pgm: expected maxval 255");
  is.get();  // single whitespace after header
  Img img(h, w);
  for (auto& v : img.p) {
    int c = is.get();
    if (c == EOF) throw std::runtime_error("pgm: truncated " + path);
    v = c / 255.0;
  }
  return img;
}

namespace {
uint32_t read_be32(std::istream& is, const std::string& path, size_t offset) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is)
    throw std::runtime_error("idx: truncated read at offset " +
                             std::to_string(offset) + " in " + path);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
         (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}
}  // namespace

std::vector<Img> read_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("idx: cannot read " + path);
  uint32_t magic = read_be32(is, path, 0);
  if (magic != 0x00000803)
    throw std::runtime_error("idx: bad image magic at offset 0 in " + path +
                             " (got " + std::to_string(magic) + ")");
  uint32_t count = read_be32(is, path, 4);
  uint32_t rows = read_be32(is, path, 8);
  uint32_t cols = read_be32(is, path, 12);
  std::vector<Img> out;
  out.reserve(count);
  std::vector<char> buf(static_cast<size_t>(rows) * cols);
  for (uint32_t i = 0; i < count; ++i) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!is)
      throw std::runtime_error("idx: truncated pixels at offset " +
                               std::to_string(16 + size_t(i) * buf.size()) +
                               " in " + path);
    Img img(static_cast<int>(rows), static_cast<int>(cols));
    for (size_t j = 0; j < buf.size(); ++j)
      img.p[j] = static_cast<unsigned char>(buf[j]) / 255.0;
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<uint8_t> read_idx_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("idx: cannot read " + path);
  uint32_t magic = read_be32(is, path, 0);
  if (magic != 0x00000801)
    throw std::runtime_error("idx: bad label magic at offset 0 in " + path);
  uint32_t count = read_be32(is, path, 4);
  std::vector<uint8_t> out(count);
  is.read(reinterpret_cast<char*>(out.data()), count);
  if (!is)
    throw std::runtime_error("idx: truncated labels at offset 8 in " + path);
  return out;
}

uint64_t derive_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << content;
}

uint64_t fnv1a(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace air
