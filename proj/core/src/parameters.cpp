#include "paec/parameters.hpp"

#include <cmath>

namespace paec::ag {

template <typename Real>
Tensor<Real> ParameterSet<Real>::add(const std::string& name, Shape shape,
                                     std::vector<Real> values) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  auto t = Tensor<Real>::from(std::move(shape), std::move(values), true);
  index_[name] = items_.size();
  items_.push_back({name, t});
  return t;
}

template <typename Real>
Tensor<Real> ParameterSet<Real>::add_kaiming(const std::string& name, Shape shape,
                                             std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::vector<Real> values(shape_size(shape));
  for (auto& v : values) v = static_cast<Real>(rng.uniform(-bound, bound));
  return add(name, std::move(shape), std::move(values));
}

template <typename Real>
Tensor<Real> ParameterSet<Real>::add_constant(const std::string& name, Shape shape, Real value) {
  const std::size_t n = shape_size(shape);
  return add(name, std::move(shape), std::vector<Real>(n, value));
}

template <typename Real>
const Parameter<Real>* ParameterSet<Real>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second];
}

template <typename Real>
Tensor<Real> ParameterSet<Real>::at(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw Error("no parameter named " + name);
  return p->tensor;
}

template <typename Real>
std::size_t ParameterSet<Real>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.size();
  return n;
}

template <typename Real>
std::map<std::string, std::size_t> ParameterSet<Real>::breakdown(std::size_t depth) const {
  std::map<std::string, std::size_t> out;
  for (const auto& p : items_) {
    std::size_t end = 0;
    for (std::size_t d = 0; d < depth; ++d) {
      end = p.name.find('.', d == 0 ? 0 : end + 1);
      if (end == std::string::npos) break;
    }
    out[p.name.substr(0, end)] += p.tensor.size();
  }
  return out;
}

template <typename Real>
void ParameterSet<Real>::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace paec::ag
