#include "air/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace air {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

// Contiguous rank-1 slice with gradient routing back into the source.
Tensor slice1d(const Tensor& x, int from, int n) {
  std::vector<double> d(x.data().begin() + from, x.data().begin() + from + n);
  return make_op({n}, std::move(d), {x},
                 [from, n](const std::vector<double>& g,
                           const std::vector<double*>& pg) {
                   if (pg[0])
                     for (int i = 0; i < n; ++i) pg[0][from + i] += g[i];
                 });
}

Tensor flat1d(const Tensor& x) { return reshape(x, {x.size()}); }

}  // namespace

void ModelConfig::validate() const {
  if (N < 1) throw std::invalid_argument("model: N must be >= 1");
  if (C < 1) throw std::invalid_argument("model: C must be >= 1");
  if (canvas_h < 2 || canvas_w < 2 || glimpse_h < 2 || glimpse_w < 2)
    throw std::invalid_argument("model: canvas/glimpse sides must be >= 2");
  if (sigma_x <= 0) throw std::invalid_argument("model: sigma_x must be > 0");
  if (rho <= 0 || rho >= 1)
    throw std::invalid_argument("model: rho must be in (0,1)");
  if (hidden < 1 || enc_hidden < 1 || dec_hidden < 1 || baseline_hidden < 1)
    throw std::invalid_argument("model: hidden widths must be >= 1");
  for (double s : where_prior_std)
    if (s <= 0) throw std::invalid_argument("model: prior stds must be > 0");
}

AirModel::AirModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), prior_(truncated_geometric(cfg.rho, cfg.N)) {
  cfg_.validate();
  Rng rng(seed);
  int hw = cfg_.canvas_h * cfg_.canvas_w;
  int ghw = cfg_.glimpse_h * cfg_.glimpse_w;
  // AIR feeds the image plus the previous step's latents into the core;
  // DAIR feeds only the current error canvas.
  int core_in = cfg_.variant == Variant::Air ? hw + 1 + 3 + cfg_.C : hw;
  core_ = GruCell(ps_, "core", core_in, cfg_.hidden, rng);
  head_pres_ = Linear(ps_, "head_pres", cfg_.hidden, 1, rng);
  head_where_ = Linear(ps_, "head_where", cfg_.hidden, 6, rng);
  encoder_ = Mlp(ps_, "enc", {ghw, cfg_.enc_hidden, 2 * cfg_.C}, rng);
  decoder_ = Mlp(ps_, "dec", {cfg_.C, cfg_.dec_hidden, ghw}, rng);
  baseline_ = Baseline(ps_, "baseline",
                       {hw + cfg_.N * 4, cfg_.baseline_hidden, 1}, rng);
  // start the pose posterior at the prior with reduced spread, bias the
  // presence decision slightly on, and keep the appearance posterior tight;
  // all three make early training much better behaved
  for (int k = 0; k < 3; ++k) {
    head_where_.b.data()[k] = cfg_.where_prior_mean[k];
    head_where_.b.data()[3 + k] = std::log(0.5 * cfg_.where_prior_std[k]);
  }
  head_pres_.b.data()[0] = 1.0;
  for (int k = 0; k < cfg_.C; ++k)
    encoder_.layers.back().b.data()[cfg_.C + k] = -2.0;

  where_prior_mean_ = Tensor::from(
      {3}, {cfg_.where_prior_mean[0], cfg_.where_prior_mean[1],
            cfg_.where_prior_mean[2]});
  where_prior_log_std_ = Tensor::from(
      {3}, {std::log(cfg_.where_prior_std[0]),
            std::log(cfg_.where_prior_std[1]),
            std::log(cfg_.where_prior_std[2])});
}

std::vector<Parameter> AirModel::model_params() const {
  std::vector<Parameter> out;
  for (const auto& p : ps_.params())
    if (p.name.rfind("baseline", 0) != 0) out.push_back(p);
  return out;
}

std::vector<Parameter> AirModel::baseline_params() const {
  std::vector<Parameter> out;
  for (const auto& p : ps_.params())
    if (p.name.rfind("baseline", 0) == 0) out.push_back(p);
  return out;
}

Tensor AirModel::image_tensor(const Img& img) const {
  if (img.h != cfg_.canvas_h || img.w != cfg_.canvas_w)
    throw std::invalid_argument("model: image size does not match canvas");
  return Tensor::from({img.h, img.w}, img.p);
}

StepParams AirModel::air_step(const Tensor& x, Tensor& h,
                              const StepLatent* prev) const {
  Tensor prev_pres = Tensor::scalar(prev ? prev->pres : 0.0);
  Tensor prev_where = (prev && prev->pres)
                          ? prev->z_where
                          : Tensor::zeros({3});
  Tensor prev_what = (prev && prev->pres)
                         ? prev->z_what
                         : Tensor::zeros({cfg_.C});
  Tensor input = concat({flat1d(x), prev_pres, prev_where, prev_what});
  h = core_(input, h);
  Tensor hp = head_pres_(h);
  Tensor hwp = head_where_(h);
  StepParams sp;
  sp.pres_logit = select(hp, 0);
  sp.where.mean = slice1d(flat1d(hwp), 0, 3);
  sp.where.log_std = slice1d(flat1d(hwp), 3, 3);
  return sp;
}

StepParams AirModel::dair_step(const Tensor& x, const Tensor& partial_canvas,
                               Tensor& h) const {
  // Error canvas: partial reconstruction minus the image, reconstruction
  // detached so inference conditions on it without backprop through it.
  Tensor delta = stop_gradient(flat1d(partial_canvas)) - flat1d(x);
  h = core_(delta, h);
  Tensor hp = head_pres_(h);
  Tensor hwp = head_where_(h);
  StepParams sp;
  sp.pres_logit = select(hp, 0);
  sp.where.mean = slice1d(flat1d(hwp), 0, 3);
  sp.where.log_std = slice1d(flat1d(hwp), 3, 3);
  return sp;
}

GaussianParams AirModel::encode_patch(const Tensor& glimpse) const {
  Tensor e = flat1d(encoder_(flat1d(glimpse)));
  GaussianParams q;
  q.mean = slice1d(e, 0, cfg_.C);
  q.log_std = slice1d(e, cfg_.C, cfg_.C);
  return q;
}

Tensor AirModel::decode_patch(const Tensor& z_what) const {
  Tensor p = sigmoid(decoder_(z_what));
  return reshape(p, {cfg_.glimpse_h, cfg_.glimpse_w});
}

Tensor AirModel::baseline_input(const Tensor& x_flat,
                                const std::vector<StepLatent>& steps) const {
  // Image plus a fixed-width summary of latents sampled so far; values only,
  // the baseline detaches its input anyway.
  std::vector<double> summary(static_cast<size_t>(cfg_.N) * 4, 0.0);
  for (size_t j = 0; j < steps.size(); ++j) {
    const StepLatent& st = steps[j];
    summary[j * 4] = st.pres;
    if (st.pres) {
      summary[j * 4 + 1] = st.z_where.at(0);
      summary[j * 4 + 2] = st.z_where.at(1);
      summary[j * 4 + 3] = st.z_where.at(2);
    }
  }
  return concat({x_flat, Tensor::from({cfg_.N * 4}, std::move(summary))});
}

SceneLatent AirModel::run(const Img& img, Rng* rng) const {
  Tensor x = image_tensor(img);
  Tensor x_flat = flat1d(x);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SceneLatent out;
  Tensor canvas = Tensor::zeros({cfg_.canvas_h, cfg_.canvas_w});
  Tensor h = core_.initial_state();
  bool active = true;

  for (int i = 0; i < cfg_.N; ++i) {
    StepLatent st;
    st.active = active;
    if (!active) {
      // Terminated: later steps are masked out and contribute nothing.
      out.steps.push_back(std::move(st));
      continue;
    }
    const StepLatent* prev = i > 0 ? &out.steps[i - 1] : nullptr;
    StepParams sp = cfg_.variant == Variant::Air ? air_step(x, h, prev)
                                                 : dair_step(x, canvas, h);
    st.pres_logit = sp.pres_logit;
    if (rng) {
      st.pres = bernoulli_sample({sp.pres_logit}, u01(*rng));
      st.baseline = baseline_(baseline_input(x_flat, out.steps));
    } else {
      st.pres = sp.pres_logit.item() > 0.0 ? 1 : 0;
    }
    st.log_q_pres = discrete_log_pmf(st.pres, BernoulliParams{sp.pres_logit});

    if (st.pres) {
      Tensor where_noise = Tensor::zeros({3});
      Tensor what_noise = Tensor::zeros({cfg_.C});
      if (rng) {
        for (auto& v : where_noise.data()) v = gauss(*rng);
        for (auto& v : what_noise.data()) v = gauss(*rng);
      }
      st.z_where = gaussian_sample_reparam(sp.where, where_noise);
      st.log_q_where = gaussian_log_pdf(st.z_where, sp.where);
      Tensor pose = concat({exp(select(st.z_where, 0)),
                            slice1d(st.z_where, 1, 2)});
      st.pose = {pose.at(0), pose.at(1), pose.at(2)};
      Tensor glimpse = attend(x, pose, cfg_.glimpse_h, cfg_.glimpse_w);
      GaussianParams qw = encode_patch(glimpse);
      st.z_what = gaussian_sample_reparam(qw, what_noise);
      st.log_q_what = gaussian_log_pdf(st.z_what, qw);
      Tensor patch = decode_patch(st.z_what);
      canvas = canvas + write(patch, pose, cfg_.canvas_h, cfg_.canvas_w);
      out.n += 1;
    } else {
      active = false;
    }
    out.steps.push_back(std::move(st));
  }
  out.canvas = canvas;
  return out;
}

SceneLatent AirModel::infer(const Img& img, Rng& rng) const {
  return run(img, &rng);
}

SceneLatent AirModel::infer_map(const Img& img) const {
  return run(img, nullptr);
}

Tensor AirModel::compose_scene(const SceneLatent& latents) const {
  Tensor canvas = Tensor::zeros({cfg_.canvas_h, cfg_.canvas_w});
  for (const auto& st : latents.steps) {
    if (!st.pres) continue;
    Tensor pose = concat({exp(select(st.z_where, 0)),
                          slice1d(st.z_where, 1, 2)});
    Tensor patch = decode_patch(st.z_what);
    canvas = canvas + write(patch, pose, cfg_.canvas_h, cfg_.canvas_w);
  }
  return canvas;
}

Tensor AirModel::log_joint(const Tensor& x, const SceneLatent& latents) const {
  Tensor lj = Tensor::scalar(log_prob_count(latents.n, cfg_.N, prior_));
  GaussianParams what_prior{Tensor::zeros({cfg_.C}), Tensor::zeros({cfg_.C})};
  GaussianParams where_prior{where_prior_mean_, where_prior_log_std_};
  for (const auto& st : latents.steps) {
    if (!st.pres) continue;
    lj = lj + gaussian_log_pdf(st.z_where, where_prior) +
         gaussian_log_pdf(st.z_what, what_prior);
  }
  Tensor canvas = latents.canvas.defined() ? latents.canvas
                                           : compose_scene(latents);
  int hw = cfg_.canvas_h * cfg_.canvas_w;
  double var = cfg_.sigma_x * cfg_.sigma_x;
  Tensor const_term = Tensor::scalar(
      -0.5 * hw * (kLogTwoPi + std::log(var)));
  Tensor quad = sum(square(x - canvas)) * Tensor::scalar(-0.5 / var);
  return lj + const_term + quad;
}

Tensor AirModel::log_q(const SceneLatent& latents) const {
  Tensor lq = Tensor::scalar(0.0);
  for (const auto& st : latents.steps) {
    if (!st.active) continue;
    lq = lq + st.log_q_pres;
    if (st.pres) lq = lq + st.log_q_where + st.log_q_what;
  }
  return lq;
}

ElboResult AirModel::elbo_and_surrogate(const Img& img, Rng& rng) const {
  ElboResult res;
  res.latents = infer(img, rng);
  Tensor x = image_tensor(img);
  res.elbo_node = log_joint(x, res.latents) - log_q(res.latents);
  res.elbo = res.elbo_node.item();

  // Minimizing this ascends the bound: pathwise gradients through -elbo,
  // likelihood-ratio gradients through the presence log-masses with the
  // baseline-centered bound sample as learning signal.
  Tensor surrogate = neg(res.elbo_node);
  Tensor btotal = Tensor::scalar(0.0);
  for (const auto& st : res.latents.steps) {
    if (!st.active) continue;
    surrogate = surrogate - score_function_surrogate(st.log_q_pres, res.elbo,
                                                     st.baseline.item());
    btotal = btotal + baseline_loss(st.baseline, res.elbo);
  }
  res.surrogate_loss = surrogate;
  res.baseline_total = btotal;
  return res;
}

std::string AirModel::latents_csv(const SceneLatent& latents) const {
  std::ostringstream os;
  os << "step,active,pres,scale,tx,ty";
  for (int c = 0; c < cfg_.C; ++c) os << ",what" << c;
  os << "\n";
  for (size_t i = 0; i < latents.steps.size(); ++i) {
    const StepLatent& st = latents.steps[i];
    os << i << "," << (st.active ? 1 : 0) << "," << st.pres;
    if (st.pres) {
      os << "," << st.pose.s << "," << st.pose.tx << "," << st.pose.ty;
      for (int c = 0; c < cfg_.C; ++c) os << "," << st.z_what.at(c);
    } else {
      os << ",0,0,0";
      for (int c = 0; c < cfg_.C; ++c) os << ",0";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace air
