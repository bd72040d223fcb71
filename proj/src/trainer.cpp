#include "air/trainer.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace air {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1 || steps < 0 || eval_every < 1)
    throw std::invalid_argument("train: sizes must be positive");
  if (lr_model <= 0 || lr_baseline <= 0)
    throw std::invalid_argument("train: learning rates must be positive");
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "step,elbo,count_acc,pose_err,seconds\n";
  for (const auto& r : rows)
    os << r.step << "," << r.elbo << "," << r.count_acc << "," << r.pose_err
       << "," << r.seconds << "\n";
  return os.str();
}

std::vector<Img> pixels_of(const Dataset& ds) {
  std::vector<Img> out;
  out.reserve(ds.items.size());
  for (const auto& it : ds.items) out.push_back(it.pixels);
  return out;
}

TrainResult train_supervised(RasterModel& model, const Dataset& ds,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (ds.items.empty()) throw std::invalid_argument("train: empty dataset");
  Adam opt({.lr = cfg.lr_model});
  auto mp = model.model_params();
  Rng rng(cfg.seed);
  TrainResult out;
  auto t0 = std::chrono::steady_clock::now();
  for (int step = 1; step <= cfg.steps; ++step) {
    model.params().zero_grad();
    double batch_loss = 0;
    Tensor scale = Tensor::scalar(1.0 / cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      const LabeledImage& it = ds.items[rng() % ds.items.size()];
      Tensor loss = model.supervised_loss(it.pixels, it.scene);
      batch_loss += loss.item() / cfg.batch_size;
      backward(loss * scale);
    }
    if (!std::isfinite(batch_loss)) {
      out.aborted = true;
      out.last_step = step - 1;
      return out;
    }
    opt.step(mp);
    out.elbo_trace.push_back(-batch_loss);
    out.last_step = step;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      MetricRow row;
      row.step = step;
      row.elbo = -batch_loss;
      row.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      out.metrics.push_back(row);
    }
  }
  return out;
}

double eval_counts(const AirModel& model, const Dataset& ds) {
  if (ds.items.empty()) return 0.0;
  int hit = 0;
  for (const auto& it : ds.items)
    if (model.infer_map(it.pixels).n == it.count) ++hit;
  return double(hit) / ds.items.size();
}

std::vector<std::array<double, 2>> attention_centers(const AirModel& model,
                                                     const SceneLatent& lat) {
  const ModelConfig& cfg = model.config();
  std::vector<std::array<double, 2>> out;
  for (const auto& st : lat.steps) {
    if (!st.pres) continue;
    out.push_back({(st.pose.tx + 1) * 0.5 * (cfg.canvas_w - 1),
                   (st.pose.ty + 1) * 0.5 * (cfg.canvas_h - 1)});
  }
  return out;
}

double attention_match_rate(const AirModel& model, const Dataset& ds,
                            double tol_px) {
  int total = 0, hit = 0;
  for (const auto& it : ds.items) {
    if (it.count != 2) continue;
    ++total;
    SceneLatent lat = model.infer_map(it.pixels);
    auto centers = attention_centers(model, lat);
    if (centers.size() != 2) continue;
    auto dist = [&](int a, int b) {
      double dx = centers[a][0] - it.centers[b][0];
      double dy = centers[a][1] - it.centers[b][1];
      return std::sqrt(dx * dx + dy * dy);
    };
    bool ok = (dist(0, 0) <= tol_px && dist(1, 1) <= tol_px) ||
              (dist(0, 1) <= tol_px && dist(1, 0) <= tol_px);
    if (ok) ++hit;
  }
  return total ? double(hit) / total : 0.0;
}

GeneralizationRow eval_generalization(const AirModel& air,
                                      const AirModel& dair,
                                      const Dataset& heldout) {
  return {eval_counts(air, heldout), eval_counts(dair, heldout)};
}

double probe_accuracy(const std::vector<std::vector<double>>& train_x,
                      const std::vector<int>& train_y,
                      const std::vector<std::vector<double>>& test_x,
                      const std::vector<int>& test_y, int n_classes,
                      int hidden, int steps, uint64_t seed) {
  if (train_x.empty() || test_x.empty())
    throw std::invalid_argument("probe: empty split");
  int in = int(train_x[0].size());
  Rng rng(seed);
  ParamStore ps;
  Mlp head(ps, "probe", {in, hidden, n_classes}, rng);
  Adam opt({.lr = 1e-3});
  const int batch = 32;
  for (int s = 0; s < steps; ++s) {
    ps.zero_grad();
    Tensor scale = Tensor::scalar(1.0 / batch);
    for (int b = 0; b < batch; ++b) {
      size_t i = rng() % train_x.size();
      Tensor x = Tensor::from({in}, train_x[i]);
      Tensor logits = reshape(head(x), {n_classes});
      Tensor nll = neg(discrete_log_pmf(train_y[i], CategoricalParams{logits}));
      backward(nll * scale);
    }
    opt.step(ps.params());
  }
  int hit = 0;
  for (size_t i = 0; i < test_x.size(); ++i) {
    Tensor logits = head(Tensor::from({in}, test_x[i]));
    int best = 0;
    for (int k = 1; k < n_classes; ++k)
      if (logits.at(k) > logits.at(best)) best = k;
    if (best == test_y[i]) ++hit;
  }
  return double(hit) / test_x.size();
}

namespace {

std::vector<double> latent_features(const AirModel& model, const Img& img) {
  const ModelConfig& cfg = model.config();
  SceneLatent lat = model.infer_map(img);
  std::vector<double> f;
  f.reserve(size_t(cfg.N) * (1 + 3 + cfg.C));
  for (const auto& st : lat.steps) {
    f.push_back(st.pres);
    for (int k = 0; k < 3; ++k)
      f.push_back(st.pres ? st.z_where.at(k) : 0.0);
    for (int k = 0; k < cfg.C; ++k)
      f.push_back(st.pres ? st.z_what.at(k) : 0.0);
  }
  return f;
}

}  // namespace

ProbeResult downstream_probe(const AirModel& frozen, const Dataset& ds,
                             ProbeTask task, double train_fraction,
                             uint64_t seed) {
  if (train_fraction <= 0 || train_fraction > 1)
    throw std::invalid_argument("probe: train_fraction out of range");
  std::vector<const LabeledImage*> two;
  for (const auto& it : ds.items)
    if (it.count == 2) two.push_back(&it);
  if (two.size() < 10) throw std::invalid_argument("probe: too few scenes");
  size_t pool = two.size() * 8 / 10;
  size_t labeled = std::max<size_t>(4, size_t(train_fraction * pool));
  labeled = std::min(labeled, pool);

  int n_classes = task == ProbeTask::Sum ? 19 : 2;
  auto label = [&](const LabeledImage& it) {
    return task == ProbeTask::Sum ? label_sum(it) : label_order(it);
  };
  std::vector<std::vector<double>> lat_train, lat_test, raw_train, raw_test;
  std::vector<int> y_train, y_test;
  for (size_t i = 0; i < two.size(); ++i) {
    bool is_train = i < pool;
    if (is_train && i >= labeled) continue;
    std::vector<double> lf = latent_features(frozen, two[i]->pixels);
    (is_train ? lat_train : lat_test).push_back(std::move(lf));
    (is_train ? raw_train : raw_test).push_back(two[i]->pixels.p);
    (is_train ? y_train : y_test).push_back(label(*two[i]));
  }
  ProbeResult res;
  const int hidden = 32, steps = 400;
  res.probe_acc = probe_accuracy(lat_train, y_train, lat_test, y_test,
                                 n_classes, hidden, steps, seed);
  res.raw_acc = probe_accuracy(raw_train, y_train, raw_test, y_test,
                               n_classes, hidden, steps, seed);
  return res;
}

std::vector<Img> scan_policy_heatmap(const AirModel& model,
                                     const Dataset& ds) {
  const ModelConfig& cfg = model.config();
  std::vector<Img> maps(cfg.N, Img(cfg.canvas_h, cfg.canvas_w));
  for (const auto& it : ds.items) {
    SceneLatent lat = model.infer_map(it.pixels);
    for (int i = 0; i < cfg.N; ++i) {
      const StepLatent& st = lat.steps[i];
      if (!st.pres) continue;
      int cx = int(std::lround((st.pose.tx + 1) * 0.5 * (cfg.canvas_w - 1)));
      int cy = int(std::lround((st.pose.ty + 1) * 0.5 * (cfg.canvas_h - 1)));
      cx = std::clamp(cx, 0, cfg.canvas_w - 1);
      cy = std::clamp(cy, 0, cfg.canvas_h - 1);
      maps[i].at(cy, cx) += 1.0;
    }
  }
  for (auto& m : maps) {
    double total = 0;
    for (double v : m.p) total += v;
    if (total > 0)
      for (auto& v : m.p) v /= total;
  }
  return maps;
}

Img reconstruction_grid(const AirModel& model, const Dataset& ds, int n_cols) {
  const ModelConfig& cfg = model.config();
  n_cols = std::min<int>(n_cols, int(ds.items.size()));
  int H = cfg.canvas_h, W = cfg.canvas_w;
  Img grid(2 * H + 1, n_cols * (W + 1) - 1, 0.25);
  for (int c = 0; c < n_cols; ++c) {
    const Img& x = ds.items[c].pixels;
    SceneLatent lat = model.infer_map(x);
    Img recon(H, W);
    for (int i = 0; i < lat.canvas.size(); ++i)
      recon.p[i] = std::clamp(lat.canvas.at(i), 0.0, 1.0);
    // burn the attention boxes into the reconstruction row
    for (const auto& st : lat.steps) {
      if (!st.pres) continue;
      double cx = (st.pose.tx + 1) * 0.5 * (W - 1);
      double cy = (st.pose.ty + 1) * 0.5 * (H - 1);
      double hx = st.pose.s * 0.5 * (W - 1), hy = st.pose.s * 0.5 * (H - 1);
      int x0 = std::clamp(int(cx - hx), 0, W - 1);
      int x1 = std::clamp(int(cx + hx), 0, W - 1);
      int y0 = std::clamp(int(cy - hy), 0, H - 1);
      int y1 = std::clamp(int(cy + hy), 0, H - 1);
      for (int xx = x0; xx <= x1; ++xx)
        recon.at(y0, xx) = recon.at(y1, xx) = 1.0;
      for (int yy = y0; yy <= y1; ++yy)
        recon.at(yy, x0) = recon.at(yy, x1) = 1.0;
    }
    for (int r = 0; r < H; ++r)
      for (int cc = 0; cc < W; ++cc) {
        grid.at(r, c * (W + 1) + cc) = x.at(r, cc);
        grid.at(H + 1 + r, c * (W + 1) + cc) = recon.at(r, cc);
      }
  }
  return grid;
}

RasterEval eval_raster(const RasterModel& model, const Dataset& ds) {
  RasterEval ev;
  if (ds.items.empty()) return ev;
  int count_hit = 0, id_hit = 0, id_total = 0;
  std::vector<double> pos_errs, rot_errs, rot_raw;
  for (const auto& it : ds.items) {
    SceneSpec pred = model.infer_map(it.pixels);
    if (pred.count() == it.count) ++count_hit;

    // greedy nearest-position matching of predicted to truth objects
    std::vector<int> pred_idx, truth_idx;
    for (int i = 0; i < pred.slots(); ++i)
      if (pred.present[i]) pred_idx.push_back(i);
    for (int i = 0; i < it.scene.slots(); ++i)
      if (it.scene.present[i]) truth_idx.push_back(i);
    id_total += int(truth_idx.size());
    while (!pred_idx.empty() && !truth_idx.empty()) {
      double best = 1e300;
      size_t bp = 0, bt = 0;
      for (size_t a = 0; a < pred_idx.size(); ++a)
        for (size_t b = 0; b < truth_idx.size(); ++b) {
          double dx = pred.pose[pred_idx[a]][0] - it.scene.pose[truth_idx[b]][0];
          double dy = pred.pose[pred_idx[a]][1] - it.scene.pose[truth_idx[b]][1];
          double d = std::sqrt(dx * dx + dy * dy);
          if (d < best) {
            best = d;
            bp = a;
            bt = b;
          }
        }
      int p = pred_idx[bp], t = truth_idx[bt];
      pos_errs.push_back(best);
      if (pred.identity[p] == it.scene.identity[t]) ++id_hit;
      int tid = it.scene.identity[t];
      if (tid != int(ShapeId::Disc)) {
        double period =
            tid == int(ShapeId::Square) ? kPi / 2 : 2 * kPi / 3;
        rot_errs.push_back(
            angle_error_mod(pred.pose[p][2], it.scene.pose[t][2], period));
        rot_raw.push_back(
            angle_error_mod(pred.pose[p][2], it.scene.pose[t][2], 2 * kPi));
      }
      pred_idx.erase(pred_idx.begin() + bp);
      truth_idx.erase(truth_idx.begin() + bt);
    }
  }
  ev.count_acc = double(count_hit) / ds.items.size();
  ev.identity_acc = id_total ? double(id_hit) / id_total : 0.0;
  ev.median_pos_err = median(std::move(pos_errs));
  ev.median_rot_err = median(std::move(rot_errs));
  ev.median_rot_err_raw = median(std::move(rot_raw));
  return ev;
}

}  // namespace air
