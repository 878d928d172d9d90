#include "contir/autodiff/parameters.hpp"

#include <algorithm>

#include "contir/error.hpp"

namespace contir::ad {

void ParameterSet::add(const std::string& name, Tensor value) {
  if (!tensors_.emplace(name, std::move(value)).second) {
    throw StateError("ParameterSet: duplicate parameter name '" + name + "'");
  }
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw StateError("ParameterSet: unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw StateError("ParameterSet: unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& [name, t] : tensors_) {
    flat.insert(flat.end(), t.values().begin(), t.values().end());
  }
  return flat;
}

void ParameterSet::unflatten(std::span<const double> flat) {
  if (flat.size() != total_size()) {
    throw ShapeError("ParameterSet::unflatten: expected " + std::to_string(total_size()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (auto& [name, t] : tensors_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.values().begin());
    offset += t.size();
  }
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, t] : tensors_) out.add(name, Tensor::zeros_like(t));
  return out;
}

void ParameterSet::require_same_layout(const ParameterSet& other, const char* context) const {
  if (tensors_.size() != other.tensors_.size()) {
    throw ShapeError(std::string(context) + ": parameter sets differ in size");
  }
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) {
      throw ShapeError(std::string(context) + ": parameter '" + a->first +
                       "' does not match '" + b->first + "' " +
                       shape_string(b->second.shape()));
    }
  }
}

}  // namespace contir::ad
