#include "paec/adam.hpp"

#include <cmath>

namespace paec::ag {

template <typename Real>
Adam<Real>::Adam(const ParameterSet<Real>& params, AdamOptions options) : options_(options) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.tensor.size(), Real(0));
    v_.emplace_back(p.tensor.size(), Real(0));
  }
}

template <typename Real>
void Adam<Real>::step(ParameterSet<Real>& params) {
  if (params.size() != m_.size()) throw Error("adam: parameter set changed since construction");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < m_.size(); ++k) {
    auto& tensor = params.items()[k].tensor;
    if (tensor.size() != m_[k].size()) {
      throw Error("adam: shape mismatch for " + params.items()[k].name);
    }
    if (!tensor.has_grad()) {
      // Zero gradient: moments still decay.
      for (std::size_t i = 0; i < m_[k].size(); ++i) {
        m_[k][i] = static_cast<Real>(b1 * m_[k][i]);
        v_[k][i] = static_cast<Real>(b2 * v_[k][i]);
      }
    }
    auto value = tensor.data();
    const auto grad = tensor.grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (tensor.has_grad()) {
        const double g = grad[i];
        m_[k][i] = static_cast<Real>(b1 * m_[k][i] + (1.0 - b1) * g);
        v_[k][i] = static_cast<Real>(b2 * v_[k][i] + (1.0 - b2) * g * g);
      }
      const double m_hat = m_[k][i] / c1;
      const double v_hat = v_[k][i] / c2;
      value[i] = static_cast<Real>(value[i] - options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace paec::ag
