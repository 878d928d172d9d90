#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "contir/autodiff/tensor.hpp"

namespace contir::ad {

/// Named trainable tensors. Iteration is in lexicographic name order, which
/// also fixes the layout of the flattened vector.
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }
  /// Total number of scalar entries across all tensors.
  std::size_t total_size() const noexcept;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

  std::vector<double> flatten() const;
  /// Overwrites every entry from a vector laid out as flatten() produces.
  void unflatten(std::span<const double> flat);

  ParameterSet zeros_like() const;
  /// Throws ShapeError unless both sets have the same names and shapes.
  void require_same_layout(const ParameterSet& other, const char* context) const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  Map tensors_;
};

/// Gradients share the parameter layout.
using GradientMap = ParameterSet;

}  // namespace contir::ad
