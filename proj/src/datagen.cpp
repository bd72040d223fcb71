#include "air/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "air/nn.hpp"
#include "json.hpp"

namespace air {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

int sample_count(const CountDist& d, double u) {
  double acc = 0;
  for (size_t i = 0; i < d.counts.size(); ++i) {
    acc += d.probs[i];
    if (u < acc) return d.counts[i];
  }
  return d.counts.back();
}

bool boxes_disjoint(double cx0, double cy0, double h0, double cx1, double cy1,
                    double h1) {
  return std::abs(cx0 - cx1) > h0 + h1 || std::abs(cy0 - cy1) > h0 + h1;
}

// Scaled bilinear placement of a template centered at (cx, cy), additive.
void place(Img& canvas, const Img& tmpl, double cx, double cy, double scale) {
  double half_w = 0.5 * scale * tmpl.w, half_h = 0.5 * scale * tmpl.h;
  int r0 = std::max(0, int(std::floor(cy - half_h)) - 1);
  int r1 = std::min(canvas.h - 1, int(std::ceil(cy + half_h)) + 1);
  int c0 = std::max(0, int(std::floor(cx - half_w)) - 1);
  int c1 = std::min(canvas.w - 1, int(std::ceil(cx + half_w)) + 1);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      double tx = (c - cx) / scale + 0.5 * (tmpl.w - 1);
      double ty = (r - cy) / scale + 0.5 * (tmpl.h - 1);
      if (tx < 0 || ty < 0 || tx > tmpl.w - 1 || ty > tmpl.h - 1) continue;
      int x0 = int(std::floor(tx)), y0 = int(std::floor(ty));
      int x1 = std::min(x0 + 1, tmpl.w - 1), y1 = std::min(y0 + 1, tmpl.h - 1);
      double fx = tx - x0, fy = ty - y0;
      double v = (1 - fy) * ((1 - fx) * tmpl.at(y0, x0) + fx * tmpl.at(y0, x1)) +
                 fy * ((1 - fx) * tmpl.at(y1, x0) + fx * tmpl.at(y1, x1));
      canvas.at(r, c) += v;
    }
}

}  // namespace

CountDist uniform_counts(std::vector<int> counts) {
  CountDist d;
  d.probs.assign(counts.size(), 1.0 / counts.size());
  d.counts = std::move(counts);
  return d;
}

void DatasetSpec::validate() const {
  if (canvas < 8) throw std::invalid_argument("dataset: canvas too small");
  if (n_images < 0) throw std::invalid_argument("dataset: n_images < 0");
  if (count_dist.counts.empty() ||
      count_dist.counts.size() != count_dist.probs.size())
    throw std::invalid_argument("dataset: malformed count distribution");
  double total = std::accumulate(count_dist.probs.begin(),
                                 count_dist.probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("dataset: count probabilities must sum to 1");
  for (int c : count_dist.counts)
    if (c < 0) throw std::invalid_argument("dataset: negative count");
  if (sprite_size < 4) throw std::invalid_argument("dataset: sprite too small");
  if (scale_jitter < 0 || scale_jitter >= 1)
    throw std::invalid_argument("dataset: scale jitter out of range");
  if (kind == DatasetKind::Raster) {
    render.validate();
    for (int c : count_dist.counts)
      if (c > render.max_objects)
        throw std::invalid_argument("dataset: count exceeds raster slots");
    if (!repetition_allowed)
      for (int c : count_dist.counts)
        if (c > 3)
          throw std::invalid_argument(
              "dataset: more objects than distinct identities");
  }
}

Img sprite_template(int cls, int size) {
  Img t(size, size);
  double mid = 0.5 * (size - 1);
  double r = 0.5 * size - 1.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double dx = x - mid, dy = y - mid, sd;
      switch (cls) {
        case 0:
          sd = std::sqrt(dx * dx + dy * dy) - r;
          break;
        case 1:
          sd = std::max(std::abs(dx), std::abs(dy)) - 0.85 * r;
          break;
        case 2:
          sd = (std::abs(dx) + std::abs(dy) - 1.2 * r) / std::sqrt(2.0);
          break;
        default:
          throw std::invalid_argument("sprite class out of range");
      }
      t.at(y, x) = std::clamp(0.5 - sd, 0.0, 1.0);
    }
  return t;
}

Img glyph_template(int digit, int size) {
  if (digit < 0 || digit > 9)
    throw std::invalid_argument("glyph digit out of range");
  // segment order: top, top-right, bottom-right, bottom, bottom-left,
  // top-left, middle
  static const int seg_map[10] = {0b1111110, 0b0110000, 0b1101101, 0b1111001,
                                  0b0110011, 0b1011011, 0b1011111, 0b1110000,
                                  0b1111111, 0b1111011};
  int segs = seg_map[digit];
  Img t(size, size);
  double m = 1.0, x0 = m + 0.15 * size, x1 = size - 1 - m - 0.15 * size;
  double y0 = m, y1 = size - 1 - m, ym = 0.5 * (y0 + y1);
  double th = std::max(1.2, size / 5.0);
  auto rect = [&](double ra, double rb, double ca, double cb) {
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if (y >= ra && y <= rb && x >= ca && x <= cb) t.at(y, x) = 1.0;
  };
  if (segs & 0b1000000) rect(y0, y0 + th, x0, x1);             // top
  if (segs & 0b0100000) rect(y0, ym, x1 - th, x1);             // top-right
  if (segs & 0b0010000) rect(ym, y1, x1 - th, x1);             // bottom-right
  if (segs & 0b0001000) rect(y1 - th, y1, x0, x1);             // bottom
  if (segs & 0b0000100) rect(ym, y1, x0, x0 + th);             // bottom-left
  if (segs & 0b0000010) rect(y0, ym, x0, x0 + th);             // top-left
  if (segs & 0b0000001) rect(ym - th / 2, ym + th / 2, x0, x1);  // middle
  return t;
}

namespace {

LabeledImage gen_composited(const DatasetSpec& spec, Rng& rng,
                            const std::vector<Img>* mnist,
                            const std::vector<uint8_t>* mnist_labels) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  int n = sample_count(spec.count_dist, u01(rng));
  for (int attempt = 0; attempt < 10000; ++attempt) {
    // infeasible placements after 100 tries resample the whole scene
    if (attempt > 0 && attempt % 100 == 0)
      n = sample_count(spec.count_dist, u01(rng));
    std::vector<int> classes;
    std::vector<double> cxs, cys, sizes;
    std::vector<const Img*> tmpls;
    std::vector<Img> owned;
    owned.reserve(n);
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      int cls;
      if (spec.kind == DatasetKind::Sprites) {
        cls = int(rng() % 3);
        owned.push_back(sprite_template(cls, spec.sprite_size));
      } else if (mnist) {
        size_t idx = rng() % mnist->size();
        cls = mnist_labels ? (*mnist_labels)[idx] : 0;
        owned.push_back((*mnist)[idx]);
      } else {
        cls = int(rng() % 10);
        owned.push_back(glyph_template(cls, spec.sprite_size));
      }
      double size_px =
          spec.sprite_size * (1 - spec.scale_jitter +
                              2 * spec.scale_jitter * u01(rng));
      double half = 0.5 * size_px;
      if (2 * half + 2 > spec.canvas) {
        ok = false;
        break;
      }
      double cx = half + u01(rng) * (spec.canvas - 1 - 2 * half);
      double cy = half + u01(rng) * (spec.canvas - 1 - 2 * half);
      if (!spec.overlap_allowed)
        for (size_t j = 0; j < cxs.size(); ++j)
          if (!boxes_disjoint(cx, cy, half, cxs[j], cys[j], sizes[j] / 2))
            ok = false;
      if (!ok) break;
      classes.push_back(cls);
      cxs.push_back(cx);
      cys.push_back(cy);
      sizes.push_back(size_px);
    }
    if (!ok) continue;

    LabeledImage item;
    item.pixels = Img(spec.canvas, spec.canvas);
    for (int i = 0; i < n; ++i)
      place(item.pixels, owned[i], cxs[i], cys[i],
            sizes[i] / owned[i].w);
    for (auto& v : item.pixels.p) v = std::min(v, 1.0);
    item.count = n;
    // record objects left to right so positional labels are well defined
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return cxs[a] < cxs[b]; });
    for (int i : order) {
      item.classes.push_back(classes[i]);
      item.centers.push_back({cxs[i], cys[i]});
      item.sizes.push_back(sizes[i]);
    }
    return item;
  }
  throw std::runtime_error("datagen: no non-overlapping placement found");
}

LabeledImage gen_raster(const DatasetSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const RenderConfig& rc = spec.render;
  int n = sample_count(spec.count_dist, u01(rng));
  double margin = rc.shape_radius;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    if (attempt > 0 && attempt % 100 == 0)
      n = sample_count(spec.count_dist, u01(rng));
    SceneSpec s;
    s.present.assign(rc.max_objects, 0);
    s.identity.assign(rc.max_objects, 0);
    s.pose.assign(rc.max_objects, {0, 0, 0});
    std::vector<int> ids;
    if (spec.repetition_allowed) {
      for (int i = 0; i < n; ++i) ids.push_back(int(rng() % 3));
    } else {
      ids = {0, 1, 2};
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(n);
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      s.present[i] = 1;
      s.identity[i] = ids[i];
      double x = margin + u01(rng) * (rc.W - 1 - 2 * margin);
      double y = margin + u01(rng) * (rc.H - 1 - 2 * margin);
      double th = -kPi + 2 * kPi * u01(rng);
      if (!spec.overlap_allowed)
        for (int j = 0; j < i; ++j)
          if (!boxes_disjoint(x, y, margin + 1, s.pose[j][0], s.pose[j][1],
                              margin + 1))
            ok = false;
      s.pose[i] = {x, y, th};
    }
    if (!ok) continue;
    LabeledImage item;
    item.pixels = rasterize(s, rc);
    item.count = n;
    item.scene = s;
    for (int i = 0; i < n; ++i) {
      item.classes.push_back(s.identity[i]);
      item.centers.push_back({s.pose[i][0], s.pose[i][1]});
      item.sizes.push_back(2 * rc.shape_radius);
    }
    return item;
  }
  throw std::runtime_error("datagen: no non-overlapping placement found");
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Img> mnist;
  std::vector<uint8_t> labels;
  bool use_mnist = spec.kind == DatasetKind::Glyphs && !spec.mnist_images.empty();
  if (use_mnist) {
    mnist = read_idx_images(spec.mnist_images);
    if (mnist.empty()) throw std::runtime_error("datagen: empty IDX file");
    if (!spec.mnist_labels.empty()) {
      labels = read_idx_labels(spec.mnist_labels);
      if (labels.size() != mnist.size())
        throw std::runtime_error("datagen: image/label count mismatch");
    }
  }
  Dataset ds;
  ds.spec = spec;
  ds.items.reserve(spec.n_images);
  for (int i = 0; i < spec.n_images; ++i) {
    Rng rng(derive_seed(spec.seed, uint64_t(i)));
    if (spec.kind == DatasetKind::Raster)
      ds.items.push_back(gen_raster(spec, rng));
    else
      ds.items.push_back(gen_composited(
          spec, rng, use_mnist ? &mnist : nullptr,
          use_mnist && !labels.empty() ? &labels : nullptr));
  }
  return ds;
}

int label_sum(const LabeledImage& item) {
  if (item.count != 2)
    throw std::invalid_argument("label_sum: needs exactly two objects");
  return item.classes[0] + item.classes[1];
}

int label_order(const LabeledImage& item) {
  if (item.count != 2)
    throw std::invalid_argument("label_order: needs exactly two objects");
  return item.classes[0] < item.classes[1] ? 1 : 0;
}

std::string truth_to_json(const LabeledImage& item) {
  nlohmann::json j;
  j["count"] = item.count;
  j["classes"] = item.classes;
  auto& centers = j["centers"] = nlohmann::json::array();
  for (const auto& c : item.centers) centers.push_back({c[0], c[1]});
  j["sizes"] = item.sizes;
  if (item.scene.slots() > 0)
    j["scene"] = nlohmann::json::parse(scene_to_json(item.scene));
  return j.dump();
}

LabeledImage truth_from_json(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  LabeledImage item;
  item.count = j.at("count").get<int>();
  item.classes = j.at("classes").get<std::vector<int>>();
  for (const auto& c : j.at("centers"))
    item.centers.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
  item.sizes = j.at("sizes").get<std::vector<double>>();
  if (j.contains("scene")) item.scene = scene_from_json(j["scene"].dump());
  return item;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string truth;
  uint64_t hash = 1469598103934665603ull;
  for (size_t i = 0; i < ds.items.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
    std::string path = dir + "/" + name;
    write_pgm(path, ds.items[i].pixels);
    hash ^= fnv1a(read_text_file(path));
    hash *= 1099511628211ull;
    truth += truth_to_json(ds.items[i]) + "\n";
  }
  write_text_file(dir + "/truth.jsonl", truth);
  nlohmann::json m;
  m["kind"] = int(ds.spec.kind);
  m["canvas"] = ds.spec.canvas;
  m["n_images"] = ds.items.size();
  m["seed"] = ds.spec.seed;
  m["content_hash"] = hash ^ fnv1a(truth);
  write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

Dataset read_dataset(const std::string& dir) {
  nlohmann::json m = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
  Dataset ds;
  ds.spec.kind = DatasetKind(m.at("kind").get<int>());
  ds.spec.canvas = m.at("canvas").get<int>();
  ds.spec.seed = m.at("seed").get<uint64_t>();
  size_t n = m.at("n_images").get<size_t>();
  ds.spec.n_images = int(n);
  std::string truth = read_text_file(dir + "/truth.jsonl");
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos < truth.size()) {
    size_t nl = truth.find('\n', pos);
    if (nl == std::string::npos) nl = truth.size();
    if (nl > pos) lines.push_back(truth.substr(pos, nl - pos));
    pos = nl + 1;
  }
  if (lines.size() != n)
    throw std::runtime_error("dataset: truth line count mismatch");
  for (size_t i = 0; i < n; ++i) {
    LabeledImage item = truth_from_json(lines[i]);
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
    item.pixels = read_pgm(dir + "/" + name);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

}  // namespace air
