// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a handle to a node in a dynamically built graph. Leaf parameters
// persist across steps; intermediate nodes are released together with the
// last handle to the loss. Tensors are row-major with an explicit shape;
// image tensors use N x C x H x W.
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmdyn::ad {

using Shape = std::vector<int>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Leaves.
Var constant(Shape shape, std::vector<double> values);
Var filled(Shape shape, double v);
Var parameter(Shape shape, std::vector<double> values);

// Propagates d(root)/d(node) into every reachable node with requires_grad.
// `root` must be a scalar.
void backward(const Var& root);
void zero_grad(const Var& leaf);

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var square(const Var& a);
Var abs(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);

// x viewed as [N, G, K] times s viewed as [N, K]: out[n,g,k] = x[n,g,k]*s[n,k].
// Covers row scaling ([N,L] by [N,1]) and channel broadcast
// ([N,C,H,W] by [N,1,H,W]).
Var mul_broadcast(const Var& x, const Var& s);

// Reductions.
Var sum(const Var& a);

// [N,in] x [in,out] + [out] -> [N,out]
Var affine(const Var& x, const Var& weight, const Var& bias);
// Row-wise softmax of [N,C].
Var softmax(const Var& logits);
// Per-row -log(max(p[n, label[n]], floor)) summed over rows.
Var nll_sum(const Var& probs, std::span<const int> labels, double floor);
// p[n, label[n]] -> [N,1]
Var gather_rows(const Var& probs, std::span<const int> labels);
// Concatenate [N,a_i] along columns.
Var concat_cols(const std::vector<Var>& parts);
// Concatenate [N,C_i,H,W] along channels.
Var concat_channels(const std::vector<Var>& parts);
Var reshape(const Var& a, Shape shape);

// 3x3 convolution, stride 1, zero padding 1. x [N,C,H,W], weight [O,C,3,3],
// bias [O] -> [N,O,H,W].
Var conv3x3(const Var& x, const Var& weight, const Var& bias);
// 2x2 max pooling, stride 2. H and W must be even.
Var maxpool2(const Var& x);
// Nearest-neighbour replication by `factor` along H and W.
Var upsample_nearest(const Var& x, int factor);

}  // namespace mmdyn::ad
