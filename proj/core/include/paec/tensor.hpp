#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "paec/audio.hpp"

namespace paec::ag {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  bool released = false;  // set once a backward pass has consumed the graph
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  Real* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad.data();
  }
};

// Handle to a value in the reverse-mode graph. Copies share the node.
//
// Every op that sees an input with requires_grad (while gradient recording
// is enabled on the calling thread) links its output to the inputs. Calling
// backward() on a scalar walks the linked graph once and then releases it;
// leaves keep accumulated gradients until zero_grad().
template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<Real>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<Real> data() { return node_->value; }
  std::span<const Real> data() const { return node_->value; }
  Real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // Populates gradients of every requires_grad leaf reachable from this
  // scalar, then frees the graph. A second call throws.
  void backward();

  // Same values, no graph linkage.
  Tensor detach() const;

  Node<Real>* node() const { return node_.get(); }
  const std::shared_ptr<Node<Real>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

// Thread-local switch; recording is on by default.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op output. When any input requires a gradient (and recording is
// on) the output is linked to `inputs` and `make_backward` is invoked with the
// output node to produce its gradient closure.
template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> values,
                         std::initializer_list<const Tensor<Real>*> inputs,
                         const std::function<std::function<void()>(Node<Real>&)>& make_backward);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace paec::ag
