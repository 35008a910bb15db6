#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "paec/random.hpp"
#include "paec/tensor.hpp"

namespace paec::ag {

template <typename Real>
struct Parameter {
  std::string name;  // dotted module path, e.g. "encoder.2.gate.weight"
  Tensor<Real> tensor;
};

// Ordered, uniquely named collection of trainable tensors.
template <typename Real>
class ParameterSet {
 public:
  Tensor<Real> add(const std::string& name, Shape shape, std::vector<Real> values);

  // Uniform(-b, b) with b = sqrt(3 / fan_in).
  Tensor<Real> add_kaiming(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor<Real> add_constant(const std::string& name, Shape shape, Real value);

  const std::vector<Parameter<Real>>& items() const { return items_; }
  std::vector<Parameter<Real>>& items() { return items_; }
  std::size_t size() const { return items_.size(); }
  const Parameter<Real>* find(const std::string& name) const;
  Tensor<Real> at(const std::string& name) const;

  std::size_t scalar_count() const;
  // Scalars grouped by the leading `depth` dotted name components.
  std::map<std::string, std::size_t> breakdown(std::size_t depth = 1) const;

  void zero_grad();

 private:
  std::vector<Parameter<Real>> items_;
  std::map<std::string, std::size_t> index_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace paec::ag
