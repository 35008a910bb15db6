#include "paec/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace paec::ag {
namespace {
thread_local bool t_grad_enabled = true;
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw Error("tensor: " + std::to_string(values.size()) + " values for shape " +
                shape_string(shape));
  }
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw Error("item() on a tensor with " + std::to_string(size()) + " values");
  return node_->value[0];
}

template <typename Real>
Tensor<Real> Tensor<Real>::detach() const {
  return from(node_->shape, node_->value, false);
}

template <typename Real>
void Tensor<Real>::backward() {
  if (size() != 1) throw Error("backward: loss must be a scalar, got " + shape_string(shape()));
  if (node_->released) throw Error("backward: graph already consumed; run forward again");
  if (!node_->requires_grad) throw Error("backward: loss does not depend on any parameter");

  // Post-order DFS gives a topological order; walk it in reverse.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<Real>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
  for (Node<Real>* n : order) {
    if (!n->backward) continue;  // leaf: keep its gradient
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
}

template <typename Real>
Tensor<Real> make_result(Shape shape, std::vector<Real> values,
                         std::initializer_list<const Tensor<Real>*> inputs,
                         const std::function<std::function<void()>(Node<Real>&)>& make_backward) {
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool link = false;
  if (t_grad_enabled) {
    for (const auto* in : inputs) {
      if (in && in->defined() && in->requires_grad()) link = true;
    }
  }
  if (link) {
    node->requires_grad = true;
    for (const auto* in : inputs) {
      if (in && in->defined()) node->parents.push_back(in->node_ptr());
    }
    node->backward = make_backward(*node);
  }
  return Tensor<Real>(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result<float>(
    Shape, std::vector<float>, std::initializer_list<const Tensor<float>*>,
    const std::function<std::function<void()>(Node<float>&)>&);
template Tensor<double> make_result<double>(
    Shape, std::vector<double>, std::initializer_list<const Tensor<double>*>,
    const std::function<std::function<void()>(Node<double>&)>&);

}  // namespace paec::ag
