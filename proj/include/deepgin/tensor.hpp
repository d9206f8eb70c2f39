#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deepgin::nn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into `inputs`. The node is passed
  // in rather than captured so closures never own their result.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Reference-semantics handle to a dense double-precision array that records
// the operations producing it, for reverse-mode differentiation. Copies of a
// Tensor alias the same storage; parameters rely on this for in-place updates.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  // Negative axes count from the end.
  int dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  double item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  // Reverse pass from a single-element tensor. Interior graph nodes are
  // released afterwards; leaves keep their accumulated gradients.
  void backward() const;

  // Fresh leaf holding a copy of the values and no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled() noexcept;

// Disables graph recording for its lifetime (evaluation/inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Wraps `value` as an op output. History is kept only when recording is on
// and some input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace deepgin::nn
