#pragma once

#include <cstdint>
#include <vector>

#include "paec/parameters.hpp"

namespace paec::ag {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// Parameters without a gradient are treated as having a zero gradient.
template <typename Real>
class Adam {
 public:
  explicit Adam(const ParameterSet<Real>& params, AdamOptions options = {});

  void step(ParameterSet<Real>& params);

  std::int64_t step_count() const { return step_; }
  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  const AdamOptions& options() const { return options_; }
  const std::vector<std::vector<Real>>& first_moment() const { return m_; }
  const std::vector<std::vector<Real>>& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace paec::ag
