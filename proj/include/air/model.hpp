#pragma once

// The 2D generative model (patch decoder + additive composition + Gaussian
// likelihood) and the AIR / DAIR recurrent inference networks producing
// variable-length latent scenes.

#include <optional>
#include <string>
#include <vector>

#include "air/count_prior.hpp"
#include "air/distributions.hpp"
#include "air/io.hpp"
#include "air/nn.hpp"
#include "air/stn.hpp"
#include "air/tensor.hpp"

namespace air {

enum class Variant { Air, Dair };

struct ModelConfig {
  int N = 3;                  // max inference steps
  int C = 50;                 // appearance code size
  int canvas_h = 50, canvas_w = 50;
  int glimpse_h = 12, glimpse_w = 12;
  double sigma_x = 0.3;       // likelihood std
  double rho = 0.5;           // count-prior parameter
  Variant variant = Variant::Air;
  int hidden = 256;           // recurrent core width
  int enc_hidden = 256, dec_hidden = 256;
  int baseline_hidden = 128;
  // z_where = (log s, tx, ty) prior, diagonal Gaussian
  double where_prior_mean[3] = {0.0, 0.0, 0.0};
  double where_prior_std[3] = {0.2, 0.6, 0.6};

  void validate() const;
};

struct StepLatent {
  bool active = false;   // all previous presence bits were 1
  int pres = 0;          // sampled bit; 0 when inactive
  Tensor pres_logit;
  Tensor log_q_pres;     // defined when active
  Tensor z_where;        // [3] = (log s, tx, ty), defined when pres == 1
  Tensor z_what;         // [C]
  Tensor log_q_where, log_q_what;
  Pose2D pose;           // decoded pose values
  Tensor baseline;       // baseline output, defined when active
};

struct SceneLatent {
  std::vector<StepLatent> steps;
  int n = 0;       // inferred object count
  Tensor canvas;   // composed likelihood mean
};

struct StepParams {
  Tensor pres_logit;
  GaussianParams where;
};

struct ElboResult {
  double elbo = 0.0;
  Tensor elbo_node;       // the bound sample as a graph node (pathwise part)
  Tensor surrogate_loss;  // minimize to ascend the bound
  Tensor baseline_total;  // baseline regression loss
  SceneLatent latents;
};

class AirModel {
 public:
  AirModel(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const CountPrior& count_prior() const { return prior_; }

  // Trainer param groups (the baseline uses its own learning rate).
  std::vector<Parameter> model_params() const;
  std::vector<Parameter> baseline_params() const;

  Tensor image_tensor(const Img& img) const;

  // One inference step: recurrent core -> presence logit + pose params.
  // AIR conditions on (x, previous latents); DAIR on the error canvas.
  StepParams air_step(const Tensor& x, Tensor& h,
                      const StepLatent* prev) const;
  StepParams dair_step(const Tensor& x, const Tensor& partial_canvas,
                       Tensor& h) const;

  GaussianParams encode_patch(const Tensor& glimpse) const;
  Tensor decode_patch(const Tensor& z_what) const;  // values in (0,1)

  // Full sampled forward pass (graph construction included).
  SceneLatent infer(const Img& img, Rng& rng) const;

  // Deterministic posterior-mode pass used by evaluation: presence
  // thresholded at 0.5, continuous latents at their means.
  SceneLatent infer_map(const Img& img) const;

  Tensor compose_scene(const SceneLatent& latents) const;

  Tensor log_joint(const Tensor& x, const SceneLatent& latents) const;
  Tensor log_q(const SceneLatent& latents) const;

  ElboResult elbo_and_surrogate(const Img& img, Rng& rng) const;

  void save(const std::string& path) const { ps_.save_file(path); }
  void load(const std::string& path) { ps_.load_file(path); }

  // One CSV row per step: pres, where triple, what code.
  std::string latents_csv(const SceneLatent& latents) const;

 private:
  // rng == nullptr selects the deterministic posterior-mode pass.
  SceneLatent run(const Img& img, Rng* rng) const;
  Tensor baseline_input(const Tensor& x_flat,
                        const std::vector<StepLatent>& steps) const;

  ModelConfig cfg_;
  CountPrior prior_;
  ParamStore ps_;
  GruCell core_;
  Linear head_pres_, head_where_;
  Mlp encoder_, decoder_;
  Baseline baseline_;
  Tensor where_prior_mean_, where_prior_log_std_;
};

}  // namespace air
