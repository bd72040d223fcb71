// Command-line front end: dataset generation, training, inference,
// evaluation, and a fast self-check of the numerical core.
// Exit codes: 0 ok, 1 check failure, 2 config error, 3 training abort,
// 4 shape mismatch.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "air/datagen.hpp"
#include "air/kernels.hpp"
#include "air/trainer.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
}

air::RenderConfig parse_render(const json& j);

air::DatasetSpec parse_dataset(const json& j) {
  check_keys(j, {"kind", "canvas", "counts", "count_probs", "n_images",
                 "seed", "overlap_allowed", "repetition_allowed",
                 "sprite_size", "scale_jitter", "mnist_images",
                 "mnist_labels", "render"},
             "dataset");
  air::DatasetSpec s;
  std::string kind = j.value("kind", "sprites");
  if (kind == "sprites")
    s.kind = air::DatasetKind::Sprites;
  else if (kind == "glyphs")
    s.kind = air::DatasetKind::Glyphs;
  else if (kind == "raster")
    s.kind = air::DatasetKind::Raster;
  else
    throw ConfigError("dataset: unknown kind '" + kind + "'");
  s.canvas = j.value("canvas", s.canvas);
  if (j.contains("counts")) {
    s.count_dist = air::uniform_counts(j["counts"].get<std::vector<int>>());
    if (j.contains("count_probs"))
      s.count_dist.probs = j["count_probs"].get<std::vector<double>>();
  }
  s.n_images = j.value("n_images", s.n_images);
  s.seed = j.value("seed", s.seed);
  s.overlap_allowed = j.value("overlap_allowed", s.overlap_allowed);
  s.repetition_allowed = j.value("repetition_allowed", s.repetition_allowed);
  s.sprite_size = j.value("sprite_size", s.sprite_size);
  s.scale_jitter = j.value("scale_jitter", s.scale_jitter);
  s.mnist_images = j.value("mnist_images", s.mnist_images);
  s.mnist_labels = j.value("mnist_labels", s.mnist_labels);
  if (j.contains("render")) s.render = parse_render(j["render"]);
  return s;
}

air::RenderConfig parse_render(const json& j) {
  check_keys(j, {"H", "W", "max_objects", "shape_radius", "edge",
                 "blur_width", "sigma_x", "fd_eps", "alpha"},
             "render");
  air::RenderConfig rc;
  rc.H = j.value("H", rc.H);
  rc.W = j.value("W", rc.W);
  rc.max_objects = j.value("max_objects", rc.max_objects);
  rc.shape_radius = j.value("shape_radius", rc.shape_radius);
  rc.edge = j.value("edge", rc.edge);
  rc.blur_width = j.value("blur_width", rc.blur_width);
  rc.sigma_x = j.value("sigma_x", rc.sigma_x);
  rc.fd_eps = j.value("fd_eps", rc.fd_eps);
  rc.alpha = j.value("alpha", rc.alpha);
  return rc;
}

air::ModelConfig parse_model(const json& j, int canvas) {
  check_keys(j, {"N", "C", "glimpse", "hidden", "enc_hidden", "dec_hidden",
                 "baseline_hidden", "sigma_x", "rho", "where_prior_mean",
                 "where_prior_std"},
             "model");
  air::ModelConfig m;
  m.canvas_h = m.canvas_w = canvas;
  m.N = j.value("N", m.N);
  m.C = j.value("C", m.C);
  m.glimpse_h = m.glimpse_w = j.value("glimpse", m.glimpse_h);
  m.hidden = j.value("hidden", m.hidden);
  m.enc_hidden = j.value("enc_hidden", m.enc_hidden);
  m.dec_hidden = j.value("dec_hidden", m.dec_hidden);
  m.baseline_hidden = j.value("baseline_hidden", m.baseline_hidden);
  m.sigma_x = j.value("sigma_x", m.sigma_x);
  m.rho = j.value("rho", m.rho);
  if (j.contains("where_prior_mean")) {
    auto v = j["where_prior_mean"].get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("model: where_prior_mean needs 3");
    std::copy(v.begin(), v.end(), m.where_prior_mean);
  }
  if (j.contains("where_prior_std")) {
    auto v = j["where_prior_std"].get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError("model: where_prior_std needs 3");
    std::copy(v.begin(), v.end(), m.where_prior_std);
  }
  return m;
}

air::TrainConfig parse_train(const json& j) {
  check_keys(j, {"batch_size", "lr_model", "lr_baseline", "steps", "seed",
                 "eval_every"},
             "train");
  air::TrainConfig t;
  t.batch_size = j.value("batch_size", t.batch_size);
  t.lr_model = j.value("lr_model", t.lr_model);
  t.lr_baseline = j.value("lr_baseline", t.lr_baseline);
  t.steps = j.value("steps", t.steps);
  t.seed = j.value("seed", t.seed);
  t.eval_every = j.value("eval_every", t.eval_every);
  return t;
}

struct Run {
  json cfg;
  std::string mode = "2d";
  std::string variant = "air";
  std::string out = "run";
  uint64_t seed = 0;
};

Run load_run(const std::string& path, const std::string& mode_flag,
             const std::string& variant_flag, const std::string& out_flag,
             long long seed_flag) {
  Run r;
  try {
    r.cfg = json::parse(air::read_text_file(path));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(r.cfg, {"mode", "variant", "seed", "out", "dataset", "model",
                     "render", "raster_model", "train"},
             "config");
  r.mode = r.cfg.value("mode", r.mode);
  r.variant = r.cfg.value("variant", r.variant);
  r.out = r.cfg.value("out", r.out);
  r.seed = r.cfg.value("seed", r.seed);
  if (!mode_flag.empty()) r.mode = mode_flag;
  if (!variant_flag.empty()) r.variant = variant_flag;
  if (!out_flag.empty()) r.out = out_flag;
  if (seed_flag >= 0) r.seed = uint64_t(seed_flag);
  if (r.mode != "2d" && r.mode != "raster")
    throw ConfigError("config: mode must be 2d or raster");
  if (r.variant != "air" && r.variant != "dair")
    throw ConfigError("config: variant must be air or dair");
  return r;
}

air::DatasetSpec dataset_of(const Run& r) {
  if (!r.cfg.contains("dataset"))
    throw ConfigError("config: missing 'dataset'");
  air::DatasetSpec s = parse_dataset(r.cfg["dataset"]);
  if (s.kind == air::DatasetKind::Raster || r.mode == "raster") {
    s.kind = air::DatasetKind::Raster;
    if (r.cfg.contains("render")) s.render = parse_render(r.cfg["render"]);
    s.canvas = s.render.H;
  }
  s.validate();
  return s;
}

air::Dataset load_or_generate(const Run& r) {
  std::string dir = r.out + "/dataset";
  if (fs::exists(dir + "/manifest.json")) return air::read_dataset(dir);
  air::Dataset ds = air::generate(dataset_of(r));
  air::write_dataset(ds, dir);
  return ds;
}

air::AirModel make_air_model(const Run& r, int canvas) {
  air::ModelConfig mc =
      r.cfg.contains("model") ? parse_model(r.cfg["model"], canvas)
                              : [&] {
                                  air::ModelConfig m;
                                  m.canvas_h = m.canvas_w = canvas;
                                  return m;
                                }();
  mc.variant = r.variant == "dair" ? air::Variant::Dair : air::Variant::Air;
  return air::AirModel(mc, r.seed);
}

air::RasterModel make_raster_model(const Run& r) {
  air::RasterModelConfig mc;
  // the model renders with the same settings the dataset was drawn with
  // unless a top-level render section overrides them
  if (r.cfg.contains("render"))
    mc.render = parse_render(r.cfg["render"]);
  else if (r.cfg.contains("dataset") && r.cfg["dataset"].contains("render"))
    mc.render = parse_render(r.cfg["dataset"]["render"]);
  if (r.cfg.contains("raster_model")) {
    const json& j = r.cfg["raster_model"];
    check_keys(j, {"hidden", "baseline_hidden", "pos_prior_std"},
               "raster_model");
    mc.hidden = j.value("hidden", mc.hidden);
    mc.baseline_hidden = j.value("baseline_hidden", mc.baseline_hidden);
    mc.pos_prior_std = j.value("pos_prior_std", mc.pos_prior_std);
  }
  return air::RasterModel(mc, r.seed);
}

int cmd_gen(const Run& r) {
  air::Dataset ds = air::generate(dataset_of(r));
  air::write_dataset(ds, r.out + "/dataset");
  std::cout << "wrote " << ds.items.size() << " images to " << r.out
            << "/dataset\n";
  return 0;
}

template <class Model>
int run_training(const Run& r, Model& model, const air::Dataset& ds) {
  air::TrainConfig tc =
      r.cfg.contains("train") ? parse_train(r.cfg["train"]) : air::TrainConfig{};
  fs::create_directories(r.out);
  std::string ckpt = r.out + "/model.airt";
  if (fs::exists(ckpt)) {
    model.load(ckpt);
    std::cout << "resumed from " << ckpt << "\n";
  }
  // hold out the tail for the periodic metric hook
  size_t split = ds.items.size() * 9 / 10;
  air::Dataset heldout;
  heldout.spec = ds.spec;
  heldout.items.assign(ds.items.begin() + split, ds.items.end());

  std::function<std::array<double, 2>()> hook;
  if constexpr (std::is_same_v<Model, air::AirModel>) {
    hook = [&]() -> std::array<double, 2> {
      return {air::eval_counts(model, heldout), 0.0};
    };
  } else {
    hook = [&]() -> std::array<double, 2> {
      air::RasterEval ev = air::eval_raster(model, heldout);
      return {ev.count_acc, ev.median_pos_err};
    };
  }
  std::vector<air::Img> pixels = air::pixels_of(ds);
  pixels.resize(split);
  air::TrainResult res = air::train_elbo(model, pixels, tc, hook, ckpt);
  air::write_text_file(r.out + "/metrics.csv", air::metrics_csv(res.metrics));
  if constexpr (std::is_same_v<Model, air::AirModel>) {
    air::write_pgm(r.out + "/recon.pgm",
                   air::reconstruction_grid(model, heldout, 8));
    auto maps = air::scan_policy_heatmap(model, heldout);
    for (size_t i = 0; i < maps.size(); ++i) {
      double peak = 0;
      for (double v : maps[i].p) peak = std::max(peak, v);
      if (peak > 0)
        for (auto& v : maps[i].p) v /= peak;
      air::write_pgm(r.out + "/heatmap_step" + std::to_string(i) + ".pgm",
                     maps[i]);
    }
  }
  if (res.aborted) {
    std::cerr << "training aborted: non-finite loss at step "
              << res.last_step + 1 << "\n";
    return 3;
  }
  std::cout << "trained " << res.last_step << " steps; final batch bound "
            << (res.elbo_trace.empty() ? 0.0 : res.elbo_trace.back()) << "\n";
  return 0;
}

int cmd_train(const Run& r) {
  air::Dataset ds = load_or_generate(r);
  if (r.mode == "2d") {
    air::AirModel model = make_air_model(r, ds.spec.canvas);
    return run_training(r, model, ds);
  }
  air::RasterModel model = make_raster_model(r);
  return run_training(r, model, ds);
}

int cmd_infer(const Run& r, const std::string& image_path) {
  air::Img img = air::read_pgm(image_path);
  std::string ckpt = r.out + "/model.airt";
  json out;
  auto t0 = std::chrono::steady_clock::now();
  try {
    if (r.mode == "2d") {
      air::AirModel model = make_air_model(r, img.h);
      if (fs::exists(ckpt)) model.load(ckpt);
      air::SceneLatent lat = model.infer_map(img);
      out["mode"] = "2d";
      out["count"] = lat.n;
      auto& objs = out["objects"] = json::array();
      for (const auto& st : lat.steps) {
        if (!st.pres) continue;
        objs.push_back({{"s", st.pose.s}, {"tx", st.pose.tx},
                        {"ty", st.pose.ty}});
      }
      air::Dataset one;
      one.items.push_back({img});
      air::write_pgm(r.out + "/infer_recon.pgm",
                     air::reconstruction_grid(model, one, 1));
      air::write_text_file(r.out + "/infer_latents.csv",
                           model.latents_csv(lat));
    } else {
      air::RasterModel model = make_raster_model(r);
      if (fs::exists(ckpt)) model.load(ckpt);
      air::SceneSpec scene = model.infer_map(img);
      out["mode"] = "raster";
      out["count"] = scene.count();
      out["scene"] = json::parse(air::scene_to_json(scene));
      air::write_pgm(r.out + "/infer_render.pgm",
                     air::rasterize(scene, model.config().render));
    }
  } catch (const std::invalid_argument& e) {
    throw ShapeError(e.what());
  }
  out["ms"] = std::chrono::duration<double, std::milli>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_eval(const Run& r) {
  air::Dataset ds = load_or_generate(r);
  std::string ckpt = r.out + "/model.airt";
  json out;
  if (r.mode == "2d") {
    air::AirModel model = make_air_model(r, ds.spec.canvas);
    if (fs::exists(ckpt)) model.load(ckpt);
    out["count_acc"] = air::eval_counts(model, ds);
    out["attention_match_3px"] = air::attention_match_rate(model, ds, 3.0);
  } else {
    air::RasterModel model = make_raster_model(r);
    if (fs::exists(ckpt)) model.load(ckpt);
    air::RasterEval ev = air::eval_raster(model, ds);
    out["count_acc"] = ev.count_acc;
    out["identity_acc"] = ev.identity_acc;
    out["median_pos_err"] = ev.median_pos_err;
    out["median_rot_err"] = ev.median_rot_err;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// Fast numerical self-check: each property printed with its measured value.
int cmd_check() {
  using namespace air;
  int failures = 0;
  auto report = [&](const std::string& name, double measured, double tol) {
    bool ok = measured <= tol;
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name << " (measured " << measured
              << ", tol " << tol << ")\n";
  };

  {  // reverse-mode vs central differences on composite ops
    double worst = 0;
    for (uint64_t s = 0; s < 5; ++s) {
      Rng rng(s);
      std::normal_distribution<double> g(0.0, 1.0);
      std::vector<double> d(6);
      for (auto& v : d) v = g(rng);
      Tensor x = Tensor::from({6}, d, true);
      worst = std::max(worst, grad_check(
          [](const Tensor& t) { return sum(mul(sigmoid(t), tanh(t))); }, x,
          1e-5));
    }
    report("grad: sigmoid*tanh composite", worst, 1e-5);
  }
  {  // unary-code consistency with p(n), enumerated
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
      int N = 1 + int(rng() % 8);
      std::vector<double> pmf(N + 1);
      double total = 0;
      for (auto& v : pmf) total += (v = u(rng));
      for (auto& v : pmf) v /= total;
      double s = 0;
      for (double v : pmf) s += v;
      pmf[0] += 1 - s;
      CountPrior prior = make_count_prior(pmf);
      for (int n = 0; n <= N; ++n) {
        std::vector<int> code(n, 1);
        if (n < N) code.push_back(0);
        worst = std::max(worst,
                         std::abs(std::exp(log_prob_unary(code, prior)) -
                                  prior.pmf[n]));
      }
    }
    report("count prior: unary codes reproduce p(n)", worst, 1e-12);
  }
  {  // likelihood-ratio estimator unbiasedness, enumerable oracle
    double logit = 0.4;
    double p = 1.0 / (1.0 + std::exp(-logit));
    auto f = [](int z) { return z ? 1.7 : -0.3; };
    double exact = p * (1 - p) * (f(1) - f(0));  // d/dlogit E[f]
    Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int n = 20000;
    double mean = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
      Tensor lt = Tensor::scalar(logit, true);
      int z = bernoulli_sample({lt}, u(rng));
      lt.zero_grad();
      backward(score_function_surrogate(discrete_log_pmf(z, BernoulliParams{lt}),
                                        f(z), 0.0));
      double g = lt.grad()[0];
      double delta = g - mean;
      mean += delta / (i + 1);
      m2 += delta * (g - mean);
    }
    double se = std::sqrt(m2 / (n - 1) / n);
    report("estimator: score-function mean vs exact (in SEs)",
           std::abs(mean - exact) / se, 3.0);
  }
  {  // pathwise estimator through the reparameterized gaussian
    Tensor mu = Tensor::scalar(0.3, true);
    Tensor ls = Tensor::scalar(-0.2, true);
    Tensor noise = Tensor::scalar(0.7);
    mu.zero_grad();
    ls.zero_grad();
    backward(square(gaussian_sample_reparam({mu, ls}, noise)));
    double z = 0.3 + std::exp(-0.2) * 0.7;
    double worst = std::abs(mu.grad()[0] - 2 * z);
    worst = std::max(worst,
                     std::abs(ls.grad()[0] - 2 * z * std::exp(-0.2) * 0.7));
    report("estimator: pathwise gradient exact", worst, 1e-12);
  }
  {  // spatial transformer: identity pose reproduces the image
    Rng rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> d(49);
    for (auto& v : d) v = u(rng);
    Tensor img = Tensor::from({7, 7}, d);
    Tensor pose = Tensor::from({3}, {1.0, 0.0, 0.0});
    Tensor g = attend(img, pose, 7, 7);
    double worst = 0;
    for (int i = 0; i < 49; ++i)
      worst = std::max(worst, std::abs(g.at(i) - d[i]));
    report("transformer: identity glimpse exact", worst, 1e-12);
  }
  {  // spatial transformer pose gradients vs central differences
    Rng rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> d(64);
    for (auto& v : d) v = u(rng);
    // smooth the image so the sampler's kinks do not dominate
    Img raw(8, 8);
    raw.p = d;
    RenderConfig rc;
    rc.blur_width = 3;
    Img smooth = blur(raw, rc);
    Tensor img = Tensor::from({8, 8}, smooth.p);
    Tensor pose = Tensor::from({3}, {0.6, 0.1, -0.2}, true);
    auto f = [&](const Tensor& p) { return sum(square(attend(img, p, 5, 5))); };
    report("transformer: pose gradient vs differences", grad_check(f, pose, 1e-5),
           1e-3);
  }
  {  // checkpoint round trip
    Rng rng(19);
    ParamStore ps;
    Mlp mlp(ps, "m", {4, 5, 2}, rng);
    std::stringstream buf;
    ps.save(buf);
    uint64_t before = ps.checksum();
    for (auto& p : ps.params())
      for (auto& v : p.tensor.data()) v = 0;
    ps.load(buf);
    report("io: checkpoint round trip", ps.checksum() == before ? 0.0 : 1.0,
           0.0);
  }
  std::cout << (failures ? "CHECK FAILED\n" : "CHECK OK\n");
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variable-length latent scene models: train and evaluate"};
  app.require_subcommand(1);
  std::string config, mode_flag, variant_flag, out_flag, image;
  long long seed_flag = -1;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", config, "JSON run config");
    if (need_config) opt->required();
    sub->add_option("--mode", mode_flag)->check(CLI::IsMember({"2d", "raster"}));
    sub->add_option("--variant", variant_flag)
        ->check(CLI::IsMember({"air", "dair"}));
    sub->add_option("--out", out_flag);
    sub->add_option("--seed", seed_flag);
  };
  auto* gen = app.add_subcommand("gen", "generate a dataset");
  add_common(gen, true);
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, true);
  auto* infer = app.add_subcommand("infer", "run inference on one image");
  add_common(infer, true);
  infer->add_option("--image", image, "input PGM")->required();
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, true);
  auto* check = app.add_subcommand("check", "fast numerical self-check");
  (void)check;

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("check")) return cmd_check();
    Run r = load_run(config, mode_flag, variant_flag, out_flag, seed_flag);
    if (app.got_subcommand("gen")) return cmd_gen(r);
    if (app.got_subcommand("train")) return cmd_train(r);
    if (app.got_subcommand("infer")) return cmd_infer(r, image);
    if (app.got_subcommand("eval")) return cmd_eval(r);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape mismatch: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
