#pragma once

// Small MLP / recurrent building blocks on top of the tensor core, the Adam
// optimizer, and the flat binary checkpoint format ("AIRT").

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "air/tensor.hpp"

namespace air {

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Named parameter collection; names must be unique.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor t);
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Tensor get(const std::string& name) const;
  void zero_grad();

  void save(std::ostream& os) const;
  void save_file(const std::string& path) const;
  // Loads values into the existing parameters; shapes must match.
  void load(std::istream& is);
  void load_file(const std::string& path);

  // FNV-1a over parameter payloads, for change-detection in tests.
  uint64_t checksum() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, int> index_;
};

using Rng = std::mt19937_64;

Tensor glorot(ParamStore& ps, const std::string& name, int rows, int cols,
              Rng& rng);

struct Linear {
  Tensor w;  // [in x out]
  Tensor b;  // [1 x out]
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const;  // x: [1 x in] or rank-1 [in]
};

// Fully connected net with relu hidden activations and a linear output.
struct Mlp {
  std::vector<Linear> layers;
  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& prefix,
      const std::vector<int>& dims, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Gated recurrent cell (update/reset gates, tanh candidate).
struct GruCell {
  Linear update, reset, candidate;
  int hidden = 0;
  GruCell() = default;
  GruCell(ParamStore& ps, const std::string& prefix, int input, int hidden,
          Rng& rng);
  Tensor initial_state() const;
  Tensor operator()(const Tensor& x, const Tensor& h) const;
};

// Plain tanh recurrence (the renderer-mode inference core uses no gating).
struct RnnCell {
  Linear lin;
  int hidden = 0;
  RnnCell() = default;
  RnnCell(ParamStore& ps, const std::string& prefix, int input, int hidden,
          Rng& rng);
  Tensor initial_state() const;
  Tensor operator()(const Tensor& x, const Tensor& h) const;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 10.0;  // global gradient-norm clip; <=0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // Applies one update from the accumulated grads, then leaves them intact
  // (callers zero explicitly).
  void step(std::vector<Parameter>& params);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::unordered_map<TensorImpl*, std::pair<std::vector<double>,
                                            std::vector<double>>> state_;
};

}  // namespace air
