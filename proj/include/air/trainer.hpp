#pragma once

// Optimization loop shared by both modes plus evaluation: count accuracy,
// attention diagnostics, generalization tables, downstream probes, and
// scan-policy heatmaps. The unsupervised path takes pixel vectors only, so
// truth labels cannot leak into it by construction.

#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "air/datagen.hpp"
#include "air/model.hpp"
#include "air/raster.hpp"

namespace air {

struct TrainConfig {
  int batch_size = 64;
  double lr_model = 1e-4;
  double lr_baseline = 1e-3;
  int steps = 1000;
  uint64_t seed = 0;
  int eval_every = 200;

  void validate() const;
};

struct MetricRow {
  int step = 0;
  double elbo = 0, count_acc = 0, pose_err = 0, seconds = 0;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);

struct TrainResult {
  std::vector<MetricRow> metrics;
  std::vector<double> elbo_trace;  // per-step batch means
  bool aborted = false;            // non-finite loss encountered
  int last_step = 0;
};

std::vector<Img> pixels_of(const Dataset& ds);

// One optimizer thread owns the parameters; eval_fn (optional) returns
// (count accuracy, pose error) for the metrics log. When checkpoint_path is
// set, a last-good checkpoint is kept and restored on a non-finite abort.
template <class Model>
TrainResult train_elbo(
    Model& model, const std::vector<Img>& images, const TrainConfig& cfg,
    const std::function<std::array<double, 2>()>& eval_fn = nullptr,
    const std::string& checkpoint_path = "") {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("train: empty dataset");
  Adam opt_model({.lr = cfg.lr_model});
  Adam opt_baseline({.lr = cfg.lr_baseline});
  auto mp = model.model_params();
  auto bp = model.baseline_params();
  Rng rng(cfg.seed);
  TrainResult out;
  auto t0 = std::chrono::steady_clock::now();
  bool have_good = false;

  auto record = [&](int step, double elbo) {
    MetricRow row;
    row.step = step;
    row.elbo = elbo;
    if (eval_fn) {
      auto [acc, pose] = eval_fn();
      row.count_acc = acc;
      row.pose_err = pose;
    }
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.metrics.push_back(row);
  };

  for (int step = 1; step <= cfg.steps; ++step) {
    model.params().zero_grad();
    double batch_elbo = 0;
    bool finite = true;
    Tensor scale = Tensor::scalar(1.0 / cfg.batch_size);
    for (int b = 0; b < cfg.batch_size && finite; ++b) {
      const Img& img = images[rng() % images.size()];
      auto res = model.elbo_and_surrogate(img, rng);
      if (!std::isfinite(res.elbo)) {
        finite = false;
        break;
      }
      batch_elbo += res.elbo / cfg.batch_size;
      backward(res.surrogate_loss * scale);
      backward(res.baseline_total * scale);
    }
    if (!finite) {
      out.aborted = true;
      out.last_step = step - 1;
      if (have_good && !checkpoint_path.empty()) model.load(checkpoint_path);
      return out;
    }
    opt_model.step(mp);
    opt_baseline.step(bp);
    out.elbo_trace.push_back(batch_elbo);
    out.last_step = step;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      record(step, batch_elbo);
      if (!checkpoint_path.empty()) {
        model.save(checkpoint_path);
        have_good = true;
      }
    }
  }
  return out;
}

// Supervised baseline: same network body, trained on ground-truth scenes.
TrainResult train_supervised(RasterModel& model, const Dataset& ds,
                             const TrainConfig& cfg);

// --- 2D mode evaluation ----------------------------------------------------

double eval_counts(const AirModel& model, const Dataset& ds);

// Attention centers (x, y in px) of the present steps of a latent scene.
std::vector<std::array<double, 2>> attention_centers(const AirModel& model,
                                                     const SceneLatent& lat);

// Fraction of two-object scenes whose two attention centers land within
// tol_px of distinct planted objects.
double attention_match_rate(const AirModel& model, const Dataset& ds,
                            double tol_px);

struct GeneralizationRow {
  double air_acc = 0, dair_acc = 0;
};
GeneralizationRow eval_generalization(const AirModel& air,
                                      const AirModel& dair,
                                      const Dataset& heldout);

// Trains a softmax-MLP head; returns test accuracy.
double probe_accuracy(const std::vector<std::vector<double>>& train_x,
                      const std::vector<int>& train_y,
                      const std::vector<std::vector<double>>& test_x,
                      const std::vector<int>& test_y, int n_classes,
                      int hidden, int steps, uint64_t seed);

struct ProbeResult {
  double probe_acc = 0;  // head on frozen inferred latents
  double raw_acc = 0;    // equal-capacity head on raw pixels
};
enum class ProbeTask { Sum, Order };
// labeled two-object dataset; train_fraction of the train pool is labeled
ProbeResult downstream_probe(const AirModel& frozen, const Dataset& ds,
                             ProbeTask task, double train_fraction,
                             uint64_t seed);

// Per-step histograms of attention centers, each normalized to sum 1.
std::vector<Img> scan_policy_heatmap(const AirModel& model, const Dataset& ds);

// Two-row grid: data on top, reconstructions with attention boxes below.
Img reconstruction_grid(const AirModel& model, const Dataset& ds, int n_cols);

// --- raster mode evaluation -------------------------------------------------

struct RasterEval {
  double count_acc = 0;
  double identity_acc = 0;        // per-object, position-matched
  double median_pos_err = 0;      // px, over matched objects
  double median_rot_err = 0;      // rad, quotient by the shape's symmetry
  double median_rot_err_raw = 0;  // rad, no symmetry quotient
};
RasterEval eval_raster(const RasterModel& model, const Dataset& ds);

}  // namespace air
