#include "air/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace air {

Tensor ParamStore::add(const std::string& name, Tensor t) {
  if (index_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  t.impl()->requires_grad = true;
  index_[name] = static_cast<int>(params_.size());
  params_.push_back({name, t});
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw std::invalid_argument("unknown parameter: " + name);
  return params_[it->second].tensor;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

namespace {
constexpr char kMagic[4] = {'A', 'I', 'R', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated stream");
  return v;
}
}  // namespace

void ParamStore::save(std::ostream& os) const {
  os.write(kMagic, 4);
  write_pod<uint32_t>(os, kVersion);
  write_pod<uint32_t>(os, static_cast<uint32_t>(params_.size()));
  for (const auto& p : params_) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(p.tensor.shape().size()));
    for (int e : p.tensor.shape()) write_pod<uint32_t>(os, static_cast<uint32_t>(e));
    os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
             static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
  }
}

void ParamStore::load(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  uint32_t version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  uint32_t count = read_pod<uint32_t>(is);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t rank = read_pod<uint32_t>(is);
    Shape shape(rank);
    int n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<int>(read_pod<uint32_t>(is));
      n *= shape[r];
    }
    Tensor t = get(name);
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated payload");
  }
}

void ParamStore::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save(os);
}

void ParamStore::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  load(is);
}

uint64_t ParamStore::checksum() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.tensor.data().data(), p.tensor.size() * sizeof(double));
  }
  return h;
}

Tensor glorot(ParamStore& ps, const std::string& name, int rows, int cols,
              Rng& rng) {
  double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> data(static_cast<size_t>(rows) * cols);
  for (auto& v : data) v = u(rng);
  return ps.add(name, Tensor::from({rows, cols}, std::move(data)));
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int in, int out,
               Rng& rng) {
  w = glorot(ps, prefix + ".w", in, out, rng);
  b = ps.add(prefix + ".b", Tensor::zeros({1, out}));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor row = x.shape().size() == 1 ? reshape(x, {1, x.size()}) : x;
  return matmul(row, w) + b;
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix,
         const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("mlp: need >= 2 dims");
  for (size_t i = 0; i + 1 < dims.size(); ++i)
    layers.emplace_back(ps, prefix + ".l" + std::to_string(i), dims[i],
                        dims[i + 1], rng);
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

GruCell::GruCell(ParamStore& ps, const std::string& prefix, int input,
                 int hidden_units, Rng& rng)
    : update(ps, prefix + ".z", input + hidden_units, hidden_units, rng),
      reset(ps, prefix + ".r", input + hidden_units, hidden_units, rng),
      candidate(ps, prefix + ".c", input + hidden_units, hidden_units, rng),
      hidden(hidden_units) {}

Tensor GruCell::initial_state() const { return Tensor::zeros({1, hidden}); }

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  Tensor row = x.shape().size() == 1 ? reshape(x, {1, x.size()}) : x;
  Tensor xh = reshape(concat({row, h}), {1, row.size() + h.size()});
  Tensor z = sigmoid(update(xh));
  Tensor r = sigmoid(reset(xh));
  Tensor xrh = reshape(concat({row, r * h}), {1, row.size() + h.size()});
  Tensor c = tanh(candidate(xrh));
  Tensor one = Tensor::scalar(1.0);
  return (one - z) * h + z * c;
}

RnnCell::RnnCell(ParamStore& ps, const std::string& prefix, int input,
                 int hidden_units, Rng& rng)
    : lin(ps, prefix + ".h", input + hidden_units, hidden_units, rng),
      hidden(hidden_units) {}

Tensor RnnCell::initial_state() const { return Tensor::zeros({1, hidden}); }

Tensor RnnCell::operator()(const Tensor& x, const Tensor& h) const {
  Tensor row = x.shape().size() == 1 ? reshape(x, {1, x.size()}) : x;
  Tensor xh = reshape(concat({row, h}), {1, row.size() + h.size()});
  return tanh(lin(xh));
}

void Adam::step(std::vector<Parameter>& params) {
  ++t_;
  double scale = 1.0;
  if (cfg_.clip_norm > 0) {
    double sq = 0.0;
    for (auto& p : params) {
      const auto& g = p.tensor.grad();
      for (double v : g) sq += v * v;
    }
    double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params) {
    auto& g = p.tensor.grad();
    if (g.empty()) continue;
    auto& [m, v] = state_[p.tensor.impl().get()];
    if (m.size() != g.size()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    auto& data = p.tensor.data();
    for (size_t i = 0; i < g.size(); ++i) {
      double gi = g[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      data[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
}

}  // namespace air
