// Named parameter blocks and their initialization.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmdyn/autodiff.hpp"
#include "mmdyn/random.hpp"

namespace mmdyn {

// Ordered registry of trainable tensors keyed by "<module>/<modality>/<name>".
// Copies are deep: a copied store owns independent tensors.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  ad::Var add(const std::string& name, ad::Shape shape, std::vector<double> values);
  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  ad::Var add_uniform(const std::string& name, ad::Shape shape, int fan_in, Rng& rng);
  ad::Var add_zeros(const std::string& name, ad::Shape shape);

  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  void zero_grad();
  // Copies values from another store with identical names and shapes.
  void assign(const ParameterStore& other);

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

}  // namespace mmdyn
