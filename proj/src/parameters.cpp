#include "mmdyn/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "mmdyn/error.hpp"

namespace mmdyn {

ad::Var ParameterStore::add(const std::string& name, ad::Shape shape, std::vector<double> values) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  auto v = ad::parameter(std::move(shape), std::move(values));
  entries_.emplace_back(name, v);
  return v;
}

ad::Var ParameterStore::add_uniform(const std::string& name, ad::Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::vector<double> values(ad::element_count(shape));
  for (double& v : values) v = uniform(rng, -bound, bound);
  return add(name, std::move(shape), std::move(values));
}

ad::Var ParameterStore::add_zeros(const std::string& name, ad::Shape shape) {
  const auto n = ad::element_count(shape);
  return add(name, std::move(shape), std::vector<double>(n, 0.0));
}

const ad::Var& ParameterStore::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw Error("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : entries_) n += v.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : entries_) ad::zero_grad(v);
}

void ParameterStore::assign(const ParameterStore& other) {
  if (other.entries_.size() != entries_.size()) throw Error("parameter store layout mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& [name, v] = entries_[i];
    const auto& [oname, ov] = other.entries_[i];
    if (name != oname || v.shape() != ov.shape())
      throw Error("parameter store layout mismatch at '" + name + "'");
    std::copy(ov.value().begin(), ov.value().end(), v.mutable_value().begin());
  }
}

ParameterStore::ParameterStore(const ParameterStore& other) {
  for (const auto& [name, v] : other.entries_)
    add(name, v.shape(), std::vector<double>(v.value().begin(), v.value().end()));
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

}  // namespace mmdyn
