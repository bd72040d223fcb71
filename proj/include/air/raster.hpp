#pragma once

// Inverse-graphics mode: a fixed (non-learned) rasterizer of parameterized
// primitives, finite-difference gradients through it, a blurred Gaussian
// likelihood, recurrent amortized inference with discrete identities, and the
// direct-optimization / supervised baselines.

#include <array>
#include <string>
#include <vector>

#include "air/distributions.hpp"
#include "air/io.hpp"
#include "air/nn.hpp"
#include "air/tensor.hpp"

namespace air {

enum class ShapeId { Disc = 0, Square = 1, Triangle = 2 };

struct SceneSpec {
  std::vector<int> present;                   // 0/1 per slot
  std::vector<int> identity;                  // ShapeId per slot
  std::vector<std::array<double, 3>> pose;    // (x px, y px, theta rad)

  int slots() const { return static_cast<int>(present.size()); }
  int count() const;
  void validate(int H, int W) const;
};

struct RenderConfig {
  int H = 32, W = 32;
  int max_objects = 3;
  double shape_radius = 6.0;  // primitive size in px
  double edge = 1.0;          // soft boundary width in px
  int blur_width = 5;         // odd gaussian kernel side
  double sigma_x = 0.3;       // likelihood std
  double fd_eps = 1e-4;       // finite-difference step
  double alpha = 0.5;         // presence prior

  void validate() const;
};

// Deterministic render; absent slots contribute nothing; overlaps take the
// per-pixel max. The square's angle is folded mod pi/2 before rasterizing so
// its 4-fold symmetry holds exactly.
Img rasterize(const SceneSpec& scene, const RenderConfig& cfg);

// Normalized isotropic gaussian taps, row-major width x width.
std::vector<double> gaussian_kernel(int width);
Img blur(const Img& img, const RenderConfig& cfg);

// Gaussian log-density of blur(x) under mean blur(rasterize(scene)).
double renderer_log_likelihood(const Img& x, const SceneSpec& scene,
                               const RenderConfig& cfg);

// Forward differences [L(pose + eps e_k) - L(pose)] / eps per coordinate of
// each present object's (x, y, theta); absent slots are exactly zero.
std::vector<std::array<double, 3>> fd_pose_grad(const Img& x,
                                                const SceneSpec& scene,
                                                const RenderConfig& cfg);

// Autodiff bridge: scalar log-likelihood node over a rank-1 pose tensor with
// 4 entries per slot (x px, y px, u, v), theta = atan2(v, u). Backward
// injects forward-difference gradients for present slots.
Tensor loglik_node(const Img& x, const std::vector<int>& present,
                   const std::vector<int>& identity, const Tensor& poses4,
                   const RenderConfig& cfg);

SceneSpec scene_from_poses4(const std::vector<int>& present,
                            const std::vector<int>& identity,
                            const std::vector<double>& poses4);

// One JSON object per scene: {"present":[...],"identity":[...],"pose":[[x,y,theta],...]}
std::string scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const std::string& line);

// Smallest absolute angular difference modulo the given period.
double angle_error_mod(double a, double b, double period);

struct RasterModelConfig {
  RenderConfig render;
  int hidden = 64;
  int baseline_hidden = 64;
  // raw pose latents: position N(0, pos_prior_std^2) in [-1,1] canvas
  // units, rotation pair (u, v) standard normal
  double pos_prior_std = 0.5;
};

struct RasterStep {
  int pres = 0;
  int identity = 0;  // argmax class, used for recurrence and the scene
  Tensor pres_raw;   // unbounded presence logit (decayed in the loss)
  Tensor pres_logit, id_logits;
  Tensor log_q_pres;
  Tensor z_pose;  // [4] raw (x, y, u, v), defined when pres == 1
  Tensor log_q_pose;
  Tensor baseline;  // presence learning-signal baseline
};

struct RasterLatent {
  std::vector<RasterStep> steps;
  Tensor poses_px;  // rank-1 [4 * slots], pixel-space poses (zeros if absent)
  SceneSpec scene;
};

struct RasterElbo {
  double elbo = 0.0;
  Tensor elbo_node;
  Tensor surrogate_loss;
  Tensor baseline_total;
  RasterLatent latents;
};

// Plain tanh recurrent inference network over the fixed renderer: presence
// via a likelihood-ratio estimator, pose via reparameterization with finite
// differences supplying the renderer gradient. The 3-way identity of each
// present slot is marginalized out of the bound in closed form, and the
// amortized identity head is trained by distilling the exact per-slot
// posterior responsibilities.
class RasterModel {
 public:
  RasterModel(const RasterModelConfig& cfg, uint64_t seed);

  const RasterModelConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  std::vector<Parameter> model_params() const;
  std::vector<Parameter> baseline_params() const;

  RasterLatent infer(const Img& img, Rng& rng) const;
  SceneSpec infer_map(const Img& img) const;  // thresholds / argmax / means

  RasterElbo elbo_and_surrogate(const Img& img, Rng& rng) const;

  // Teacher-forced conditional negative log-likelihood of the ground-truth
  // scene under the inference heads (the supervised baseline's objective).
  Tensor supervised_loss(const Img& img, const SceneSpec& truth) const;

  void save(const std::string& path) const { ps_.save_file(path); }
  void load(const std::string& path) { ps_.load_file(path); }

  // pixel-space <-> raw latent pose mapping used by the heads
  std::array<double, 4> pose_to_raw(const std::array<double, 3>& pose) const;
  std::array<double, 3> raw_to_pose(const std::array<double, 4>& raw) const;

 private:
  struct StepOut {
    Tensor pres_raw;  // unbounded presence logit, regularized during training
    Tensor pres_logit, id_logits;
    GaussianParams pose;
  };
  StepOut step(const Tensor& x_flat, Tensor& h, const RasterStep* prev) const;
  Tensor baseline_input(const Tensor& x_flat,
                        const std::vector<RasterStep>& steps) const;
  RasterLatent run(const Img& img, Rng* rng) const;

  RasterModelConfig cfg_;
  ParamStore ps_;
  RnnCell core_;
  Linear head_pres_, head_id_, head_pose_;
  Baseline baseline_;
};

// Per-image search baseline: enumerate presence/identity configurations,
// ascend the pose likelihood with finite-difference gradients, keep the best.
// If init is given it seeds the first candidate. Returns the best scene and
// writes its log-likelihood to best_ll when non-null.
SceneSpec direct_optimize(const Img& x, const RenderConfig& cfg, int restarts,
                          Rng& rng, const SceneSpec* init = nullptr,
                          double* best_ll = nullptr);

}  // namespace air
