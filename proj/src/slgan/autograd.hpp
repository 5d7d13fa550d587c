#pragma once

// Minimal reverse-mode automatic differentiation over double tensors.
//
// Every op returns a Var whose node records its parents and a backward
// closure when gradient recording is enabled and at least one input requires
// a gradient. Otherwise the node is a plain value and the graph is not kept.

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "slgan/tensor.hpp"

namespace slgan::ag {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
  Tensor& grad_ref();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_->grad.numel() > 0; }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

Var constant(Tensor t);
Var leaf(Tensor t, bool requires_grad);
Var detach(const Var& v);

/// Runs reverse accumulation from a scalar. Gradients land in `grad()` of every
/// node that requires one.
void backward(const Var& root);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var leaky_relu(const Var& a, double slope = 0.2);
Var tanh(const Var& a);
Var softplus(const Var& a);

/// a * m with m constant. m may be N×1×H×W against an N×C×H×W input.
Var mul_const(const Var& a, const Tensor& m);
/// a + m with m constant, same broadcast rule as mul_const.
Var add_const(const Var& a, const Tensor& m);

// Layers.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample2(const Var& x);
/// (x − mean)/(std + eps) per sample and channel over spatial positions.
Var instance_norm(const Var& x, double eps);
/// x·gamma + beta with gamma, beta of shape N×C broadcast over H×W.
Var channel_affine(const Var& x, const Var& gamma, const Var& beta);
Var add_scalar_const(const Var& a, double k);
Var linear(const Var& x, const Var& w, const Var& b);
Var global_avg_pool(const Var& x);
/// Row n of the result is row n of heads[index[n]].
Var select_rows(const std::vector<Var>& heads, const std::vector<int>& index);
/// Splits a N×2C tensor into its first and second C columns.
std::pair<Var, Var> split_cols(const Var& x);

// Reductions to shape [1].
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_abs_diff(const Var& a, const Var& b);
/// Mean over the leading dimension of the per-sample root mean square.
Var rms_per_sample(const Var& a);
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

}  // namespace slgan::ag
