#pragma once

// Dense f64 tensor with a dynamic reverse-mode tape. The graph is rebuilt on
// every forward pass (step counts vary per datapoint) and one graph is
// confined to a single thread; distinct graphs may live on distinct threads.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace air {

using Shape = std::vector<int>;

class Tensor;

// gout: gradient of the loss w.r.t. this node's output (flat).
// pgrads[i]: buffer to accumulate into for parent i, or nullptr if that
// parent does not require gradients.
using BackwardFn =
    std::function<void(const std::vector<double>& gout,
                       const std::vector<double*>& pgrads)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // leaf accumulator, allocated on first backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;  // empty for leaves
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int size() const { return static_cast<int>(impl_->data.size()); }
  bool requires_grad() const { return impl_->requires_grad; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }

  double item() const;
  double at(int i) const { return impl_->data.at(i); }

  void zero_grad();

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Builds a graph node from precomputed forward data. Used by all ops and by
// custom ops (spatial transformer, renderer likelihood).
Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<Tensor> parents, BackwardFn backward);

// Elementwise; broadcasting limited to equal shapes and scalar-with-tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor softplus(const Tensor& x);  // log(1 + exp(x)), numerically stable

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor concat(const std::vector<Tensor>& parts);  // rank-1 result
Tensor select(const Tensor& x, int flat_index);   // scalar
Tensor reshape(const Tensor& x, Shape shape);
Tensor stop_gradient(const Tensor& x);

// Accumulates d(loss)/d(leaf) into each reachable leaf's grad. Repeated calls
// accumulate until zero_grad.
void backward(const Tensor& loss);

// Variant used by the batched trainer: leaf gradients are delivered to the
// sink instead of the shared leaf accumulators.
struct GradSink {
  virtual ~GradSink() = default;
  virtual void accumulate(TensorImpl* leaf, const std::vector<double>& g) = 0;
};
void backward(const Tensor& loss, GradSink* sink);

// Max relative error between reverse-mode and central-difference gradients.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  Tensor x, double eps);

}  // namespace air
