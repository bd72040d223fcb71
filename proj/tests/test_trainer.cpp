#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "air/trainer.hpp"

using namespace air;

namespace {

ModelConfig tiny_model_cfg() {
  ModelConfig cfg;
  cfg.N = 2;
  cfg.C = 4;
  cfg.canvas_h = cfg.canvas_w = 16;
  cfg.glimpse_h = cfg.glimpse_w = 6;
  cfg.hidden = 16;
  cfg.enc_hidden = 16;
  cfg.dec_hidden = 16;
  cfg.baseline_hidden = 8;
  return cfg;
}

DatasetSpec tiny_sprites(int n, uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::Sprites;
  s.canvas = 16;
  s.sprite_size = 6;
  s.count_dist = uniform_counts({0, 1});
  s.n_images = n;
  s.seed = seed;
  return s;
}

TrainConfig quick_train(int steps) {
  TrainConfig tc;
  tc.batch_size = 8;
  tc.steps = steps;
  tc.eval_every = 50;
  tc.lr_model = 1e-3;
  tc.lr_baseline = 1e-2;
  return tc;
}

}  // namespace

TEST_CASE("train config validation and csv format") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  CHECK(TrainConfig{}.lr_model == 1e-4);
  CHECK(TrainConfig{}.lr_baseline == 1e-3);
  CHECK(TrainConfig{}.batch_size == 64);

  std::vector<MetricRow> rows = {{100, -5.5, 0.5, 1.25, 3.0}};
  std::string csv = metrics_csv(rows);
  CHECK(csv.find("step,elbo,count_acc,pose_err,seconds\n") == 0);
  CHECK(csv.find("100,-5.5,0.5,1.25,3") != std::string::npos);
}

TEST_CASE("identical seed and config give identical training traces") {
  Dataset ds = generate(tiny_sprites(40, 3));
  auto run = [&]() {
    AirModel m(tiny_model_cfg(), 5);
    TrainResult r = train_elbo(m, pixels_of(ds), quick_train(10));
    return std::make_pair(r.elbo_trace, m.params().checksum());
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("labels cannot leak: poisoned truth leaves training unchanged") {
  Dataset clean = generate(tiny_sprites(40, 7));
  Dataset poisoned = clean;
  for (auto& it : poisoned.items) {
    it.count = 99;
    it.classes.assign(it.classes.size(), -1);
  }
  AirModel m1(tiny_model_cfg(), 9);
  AirModel m2(tiny_model_cfg(), 9);
  train_elbo(m1, pixels_of(clean), quick_train(8));
  train_elbo(m2, pixels_of(poisoned), quick_train(8));
  CHECK(m1.params().checksum() == m2.params().checksum());
}

TEST_CASE("non-finite loss aborts instead of updating") {
  Dataset ds = generate(tiny_sprites(20, 11));
  AirModel m(tiny_model_cfg(), 13);
  m.params().params()[0].tensor.data()[0] =
      std::numeric_limits<double>::quiet_NaN();
  TrainResult r = train_elbo(m, pixels_of(ds), quick_train(5));
  CHECK(r.aborted);
  CHECK(r.last_step == 0);
}

TEST_CASE("the bound improves over a short sprite run") {
  Dataset ds = generate(tiny_sprites(60, 17));
  AirModel m(tiny_model_cfg(), 19);
  TrainResult r = train_elbo(m, pixels_of(ds), quick_train(150));
  REQUIRE(int(r.elbo_trace.size()) == 150);
  double early = std::accumulate(r.elbo_trace.begin(),
                                 r.elbo_trace.begin() + 30, 0.0) / 30;
  double late = std::accumulate(r.elbo_trace.end() - 30, r.elbo_trace.end(),
                                0.0) / 30;
  CHECK(late > early);
  // metric log is append-only in step order
  for (size_t i = 1; i < r.metrics.size(); ++i)
    CHECK(r.metrics[i].step > r.metrics[i - 1].step);
}

TEST_CASE("checkpointing keeps the last good parameters") {
  Dataset ds = generate(tiny_sprites(20, 23));
  AirModel m(tiny_model_cfg(), 29);
  std::string path = "trainer_ckpt.airt";
  TrainConfig tc = quick_train(4);
  tc.eval_every = 2;
  train_elbo(m, pixels_of(ds), tc, nullptr, path);
  AirModel fresh(tiny_model_cfg(), 31);
  fresh.load(path);
  std::remove(path.c_str());
  CHECK(fresh.params().checksum() == m.params().checksum());
}

TEST_CASE("count evaluation agrees with a prediction-matched truth") {
  Dataset ds = generate(tiny_sprites(25, 37));
  AirModel m(tiny_model_cfg(), 41);
  double acc = eval_counts(m, ds);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  // align truth with the model's own predictions: accuracy becomes 1
  Dataset matched = ds;
  for (auto& it : matched.items) it.count = m.infer_map(it.pixels).n;
  CHECK(eval_counts(m, matched) == 1.0);
}

TEST_CASE("attention centers stay inside the canvas") {
  Dataset ds = generate(tiny_sprites(10, 43));
  AirModel m(tiny_model_cfg(), 47);
  for (const auto& it : ds.items) {
    SceneLatent lat = m.infer_map(it.pixels);
    auto centers = attention_centers(m, lat);
    CHECK(int(centers.size()) == lat.n);
    for (auto& c : centers) {
      CHECK(std::isfinite(c[0]));
      CHECK(std::isfinite(c[1]));
    }
  }
}

TEST_CASE("probe head learns separable features and oracle labels") {
  Rng rng(51);
  std::normal_distribution<double> g(0.0, 0.05);
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < 300; ++i) {
    int y = int(rng() % 3);
    std::vector<double> x(3, 0.0);
    x[y] = 1.0;
    for (auto& v : x) v += g(rng);
    xs.push_back(x);
    ys.push_back(y);
  }
  std::vector<std::vector<double>> train_x(xs.begin(), xs.begin() + 200);
  std::vector<int> train_y(ys.begin(), ys.begin() + 200);
  std::vector<std::vector<double>> test_x(xs.begin() + 200, xs.end());
  std::vector<int> test_y(ys.begin() + 200, ys.end());
  double acc = probe_accuracy(train_x, train_y, test_x, test_y, 3, 16, 300, 1);
  CHECK(acc > 0.95);
}

TEST_CASE("downstream probe runs end to end on a frozen model") {
  DatasetSpec spec = tiny_sprites(60, 53);
  spec.kind = DatasetKind::Glyphs;
  spec.count_dist = uniform_counts({2});
  spec.canvas = 16;
  spec.sprite_size = 5;
  Dataset ds = generate(spec);
  AirModel m(tiny_model_cfg(), 59);
  uint64_t before = m.params().checksum();
  ProbeResult pr = downstream_probe(m, ds, ProbeTask::Order, 0.5, 3);
  CHECK(m.params().checksum() == before);  // probe must not touch the model
  CHECK(pr.probe_acc >= 0.0);
  CHECK(pr.probe_acc <= 1.0);
  CHECK(pr.raw_acc >= 0.0);
  CHECK(pr.raw_acc <= 1.0);
}

TEST_CASE("scan policy heatmaps are normalized per step") {
  Dataset ds = generate(tiny_sprites(30, 61));
  AirModel m(tiny_model_cfg(), 67);
  auto maps = scan_policy_heatmap(m, ds);
  REQUIRE(int(maps.size()) == m.config().N);
  for (const auto& hm : maps) {
    double total = 0;
    bool any = false;
    for (double v : hm.p) {
      total += v;
      any |= v > 0;
    }
    if (any) CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("reconstruction grid has the two-row layout") {
  Dataset ds = generate(tiny_sprites(8, 71));
  AirModel m(tiny_model_cfg(), 73);
  Img grid = reconstruction_grid(m, ds, 4);
  CHECK(grid.h == 2 * 16 + 1);
  CHECK(grid.w == 4 * 17 - 1);
  for (double v : grid.p) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

namespace {

DatasetSpec tiny_raster_ds(int n, uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::Raster;
  s.canvas = 16;
  s.render.H = s.render.W = 16;
  s.render.max_objects = 1;
  s.render.shape_radius = 3;
  s.render.blur_width = 3;
  s.count_dist = uniform_counts({1});
  s.n_images = n;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("supervised raster training reduces the label loss") {
  Dataset ds = generate(tiny_raster_ds(30, 79));
  RasterModelConfig mc;
  mc.render = ds.spec.render;
  mc.hidden = 16;
  mc.baseline_hidden = 8;
  RasterModel m(mc, 83);
  TrainConfig tc = quick_train(120);
  TrainResult r = train_supervised(m, ds, tc);
  REQUIRE(!r.aborted);
  double early = std::accumulate(r.elbo_trace.begin(),
                                 r.elbo_trace.begin() + 20, 0.0) / 20;
  double late = std::accumulate(r.elbo_trace.end() - 20, r.elbo_trace.end(),
                                0.0) / 20;
  CHECK(late > early);
}

TEST_CASE("raster evaluation reports bounded metrics") {
  Dataset ds = generate(tiny_raster_ds(20, 89));
  RasterModelConfig mc;
  mc.render = ds.spec.render;
  mc.hidden = 16;
  mc.baseline_hidden = 8;
  RasterModel m(mc, 97);
  RasterEval ev = eval_raster(m, ds);
  CHECK(ev.count_acc >= 0.0);
  CHECK(ev.count_acc <= 1.0);
  CHECK(ev.identity_acc >= 0.0);
  CHECK(ev.identity_acc <= 1.0);
  CHECK(ev.median_pos_err >= 0.0);
  CHECK(ev.median_rot_err <= ev.median_rot_err_raw + 1e-12);
}

TEST_CASE("raster elbo training runs and stays finite") {
  Dataset ds = generate(tiny_raster_ds(20, 101));
  RasterModelConfig mc;
  mc.render = ds.spec.render;
  mc.hidden = 16;
  mc.baseline_hidden = 8;
  RasterModel m(mc, 103);
  TrainConfig tc = quick_train(10);
  TrainResult r = train_elbo(m, pixels_of(ds), tc);
  CHECK(!r.aborted);
  for (double e : r.elbo_trace) CHECK(std::isfinite(e));
}
