#include "air/tensor.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "air/kernels.hpp"

namespace air {

namespace {

int shape_size(const Shape& s) {
  int n = 1;
  for (int e : s) {
    if (e <= 0) throw std::invalid_argument("tensor: nonpositive extent");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  int n = shape_size(shape);
  impl->shape = std::move(shape);
  impl->data.assign(n, value);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != static_cast<int>(data.size()))
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(data.size()));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(impl);
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor");
  return impl_->data[0];
}

void Tensor::zero_grad() {
  impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> parents, BackwardFn backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    out.impl()->requires_grad = true;
    out.impl()->backward = std::move(backward);
    for (auto& p : parents) out.impl()->parents.push_back(p.impl());
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

// Broadcast layout of a binary op: equal shapes, or one side scalar.
struct Bcast {
  int n;        // output size
  bool a_scalar, b_scalar;
};

Bcast bcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {a.size(), false, false};
  if (a.size() == 1) return {b.size(), true, false};
  if (b.size() == 1) return {a.size(), false, true};
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
}

Shape out_shape(const Tensor& a, const Tensor& b) {
  return a.size() >= b.size() ? a.shape() : b.shape();
}

void axpy(double* dst, const std::vector<double>& g,
          const std::function<double(int)>& coeff, bool scalar_dst) {
  if (scalar_dst) {
    double acc = 0.0;
    for (size_t i = 0; i < g.size(); ++i) acc += g[i] * coeff(static_cast<int>(i));
    dst[0] += acc;
  } else {
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * coeff(static_cast<int>(i));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast(a, b, "add");
  std::vector<double> out(bc.n);
  for (int i = 0; i < bc.n; ++i)
    out[i] = a.data()[bc.a_scalar ? 0 : i] + b.data()[bc.b_scalar ? 0 : i];
  return make_op(out_shape(a, b), std::move(out), {a, b},
                 [bc](const std::vector<double>& g,
                      const std::vector<double*>& pg) {
                   if (pg[0]) axpy(pg[0], g, [](int) { return 1.0; }, bc.a_scalar);
                   if (pg[1]) axpy(pg[1], g, [](int) { return 1.0; }, bc.b_scalar);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast(a, b, "sub");
  std::vector<double> out(bc.n);
  for (int i = 0; i < bc.n; ++i)
    out[i] = a.data()[bc.a_scalar ? 0 : i] - b.data()[bc.b_scalar ? 0 : i];
  return make_op(out_shape(a, b), std::move(out), {a, b},
                 [bc](const std::vector<double>& g,
                      const std::vector<double*>& pg) {
                   if (pg[0]) axpy(pg[0], g, [](int) { return 1.0; }, bc.a_scalar);
                   if (pg[1]) axpy(pg[1], g, [](int) { return -1.0; }, bc.b_scalar);
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast(a, b, "mul");
  std::vector<double> out(bc.n);
  for (int i = 0; i < bc.n; ++i)
    out[i] = a.data()[bc.a_scalar ? 0 : i] * b.data()[bc.b_scalar ? 0 : i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(out_shape(a, b), std::move(out), {a, b},
                 [bc, ai, bi](const std::vector<double>& g,
                              const std::vector<double*>& pg) {
                   if (pg[0])
                     axpy(pg[0], g,
                          [&](int i) { return bi->data[bc.b_scalar ? 0 : i]; },
                          bc.a_scalar);
                   if (pg[1])
                     axpy(pg[1], g,
                          [&](int i) { return ai->data[bc.a_scalar ? 0 : i]; },
                          bc.b_scalar);
                 });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast(a, b, "div");
  std::vector<double> out(bc.n);
  for (int i = 0; i < bc.n; ++i)
    out[i] = a.data()[bc.a_scalar ? 0 : i] / b.data()[bc.b_scalar ? 0 : i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(out_shape(a, b), std::move(out), {a, b},
                 [bc, ai, bi](const std::vector<double>& g,
                              const std::vector<double*>& pg) {
                   if (pg[0])
                     axpy(pg[0], g,
                          [&](int i) { return 1.0 / bi->data[bc.b_scalar ? 0 : i]; },
                          bc.a_scalar);
                   if (pg[1])
                     axpy(pg[1], g,
                          [&](int i) {
                            double bv = bi->data[bc.b_scalar ? 0 : i];
                            return -ai->data[bc.a_scalar ? 0 : i] / (bv * bv);
                          },
                          bc.b_scalar);
                 });
}

namespace {

Tensor unary(const Tensor& x, const std::function<double(double)>& f,
             const std::function<double(double, double)>& df_from_xy) {
  std::vector<double> out(x.size());
  for (int i = 0; i < x.size(); ++i) out[i] = f(x.data()[i]);
  auto xi = x.impl();
  std::vector<double> y = out;
  return make_op(x.shape(), std::move(out), {x},
                 [xi, y = std::move(y), df_from_xy](
                     const std::vector<double>& g,
                     const std::vector<double*>& pg) {
                   if (!pg[0]) return;
                   for (size_t i = 0; i < g.size(); ++i)
                     pg[0][i] += g[i] * df_from_xy(xi->data[i], y[i]);
                 });
}

}  // namespace

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x,
               [](double v) {
                 return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                               : std::exp(v) / (1.0 + std::exp(v));
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; },
               [](double, double) { return -1.0; });
}

Tensor softplus(const Tensor& x) {
  return unary(x,
               [](double v) {
                 return v > 30 ? v : (v < -30 ? std::exp(v) : std::log1p(std::exp(v)));
               },
               [](double v, double) {
                 return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                               : std::exp(v) / (1.0 + std::exp(v));
               });
}

// ---------------------------------------------------------------------------
// matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw std::invalid_argument("matmul: rank-2 tensors required");
  int m = a.shape()[0], k = a.shape()[1];
  int k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimensions disagree (" +
                                std::to_string(k) + " vs " + std::to_string(k2) +
                                ")");
  std::vector<double> out(static_cast<size_t>(m) * n);
  kern::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto ai = a.impl(), bi = b.impl();
  return make_op({m, n}, std::move(out), {a, b},
                 [ai, bi, m, k, n](const std::vector<double>& g,
                                   const std::vector<double*>& pg) {
                   if (pg[0])  // dA = g * B^T  : [m x n][n x k]
                     kern::matmul_nt(g.data(), bi->data.data(), pg[0], m, n, k,
                                     /*accumulate=*/true);
                   if (pg[1])  // dB = A^T * g  : [k x m][m x n]
                     kern::matmul_tn(ai->data.data(), g.data(), pg[1], k, m, n,
                                     /*accumulate=*/true);
                 });
}

// ---------------------------------------------------------------------------
// reductions & structure

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op({1}, {acc}, {x},
                 [n = x.size()](const std::vector<double>& g,
                                const std::vector<double*>& pg) {
                   if (!pg[0]) return;
                   for (int i = 0; i < n; ++i) pg[0][i] += g[0];
                 });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  int n = x.size();
  return make_op({1}, {acc / n}, {x},
                 [n](const std::vector<double>& g,
                     const std::vector<double*>& pg) {
                   if (!pg[0]) return;
                   for (int i = 0; i < n; ++i) pg[0][i] += g[0] / n;
                 });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<double> out;
  std::vector<int> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.size());
  }
  int n = static_cast<int>(out.size());
  return make_op({n}, std::move(out), parts,
                 [sizes](const std::vector<double>& g,
                         const std::vector<double*>& pg) {
                   int off = 0;
                   for (size_t p = 0; p < sizes.size(); ++p) {
                     if (pg[p])
                       for (int i = 0; i < sizes[p]; ++i) pg[p][i] += g[off + i];
                     off += sizes[p];
                   }
                 });
}

Tensor select(const Tensor& x, int flat_index) {
  if (flat_index < 0 || flat_index >= x.size())
    throw std::invalid_argument("select: index out of range");
  return make_op({1}, {x.data()[flat_index]}, {x},
                 [flat_index](const std::vector<double>& g,
                              const std::vector<double*>& pg) {
                   if (pg[0]) pg[0][flat_index] += g[0];
                 });
}

Tensor reshape(const Tensor& x, Shape shape) {
  int n = 1;
  for (int e : shape) n *= e;
  if (n != x.size()) throw std::invalid_argument("reshape: size mismatch");
  return make_op(std::move(shape), x.data(), {x},
                 [](const std::vector<double>& g,
                    const std::vector<double*>& pg) {
                   if (!pg[0]) return;
                   for (size_t i = 0; i < g.size(); ++i) pg[0][i] += g[i];
                 });
}

Tensor stop_gradient(const Tensor& x) {
  return Tensor::from(x.shape(), x.data());
}

// ---------------------------------------------------------------------------
// backward engine

namespace {

struct DefaultSink : GradSink {
  void accumulate(TensorImpl* leaf, const std::vector<double>& g) override {
    if (leaf->grad.size() != leaf->data.size())
      leaf->grad.assign(leaf->data.size(), 0.0);
    for (size_t i = 0; i < g.size(); ++i) leaf->grad[i] += g[i];
  }
};

}  // namespace

void backward(const Tensor& loss, GradSink* sink) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Iterative topological order over grad-requiring nodes.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.push_back({loss.impl().get(), 0});
  visited.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorImpl* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<TensorImpl*, std::vector<double>> gmap;
  gmap[loss.impl().get()] = {1.0};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    auto git = gmap.find(node);
    if (git == gmap.end()) continue;  // not reachable from the loss
    if (!node->backward) continue;    // leaf
    std::vector<double*> pgrads(node->parents.size(), nullptr);
    for (size_t i = 0; i < node->parents.size(); ++i) {
      TensorImpl* p = node->parents[i].get();
      if (!p->requires_grad) continue;
      auto& buf = gmap[p];
      if (buf.size() != p->data.size()) buf.assign(p->data.size(), 0.0);
      pgrads[i] = buf.data();
    }
    node->backward(git->second, pgrads);
  }

  for (TensorImpl* node : order) {
    if (node->backward || !node->requires_grad) continue;
    auto git = gmap.find(node);
    if (git == gmap.end()) continue;
    sink->accumulate(node, git->second);
  }
}

void backward(const Tensor& loss) {
  DefaultSink sink;
  backward(loss, &sink);
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  Tensor x, double eps) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  x.impl()->requires_grad = true;
  x.zero_grad();
  Tensor y = f(x);
  backward(y);
  std::vector<double> analytic = x.grad();
  if (analytic.empty()) analytic.assign(x.size(), 0.0);

  double max_err = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    double saved = x.data()[i];
    x.data()[i] = saved + eps;
    double fp = f(x).item();
    x.data()[i] = saved - eps;
    double fm = f(x).item();
    x.data()[i] = saved;
    double fd = (fp - fm) / (2.0 * eps);
    double err = std::abs(analytic[i] - fd) /
                 (std::abs(analytic[i]) + std::abs(fd) + 1e-10);
    if (std::abs(analytic[i]) < 1e-12 && std::abs(fd) < 1e-12) err = 0.0;
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace air
