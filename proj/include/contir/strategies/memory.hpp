#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "contir/error.hpp"
#include "contir/log.hpp"
#include "contir/random.hpp"

namespace contir::strat {

/// Splits `capacity` over slices with the given sizes: every slice gets an
/// equal share, capped by its size, and what small slices leave unused is
/// shared among the rest. Integer remainders go to the earliest slices.
std::vector<std::size_t> water_fill_quotas(std::span<const std::size_t> sizes,
                                           std::size_t capacity);

/// Per-task replay memory with a global capacity. Slices only shrink once
/// their task has ended.
template <typename T>
class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t tasks() const noexcept { return slices_.size(); }
  std::size_t size() const noexcept {
    std::size_t n = 0;
    for (const auto& s : slices_) n += s.size();
    return n;
  }
  std::span<const T> slice(std::size_t task) const {
    if (task >= slices_.size()) throw StateError("memory: no slice for task " + std::to_string(task));
    return slices_[task];
  }

  /// Stores a uniform sample of the finished task's training set and
  /// rebalances all slices to their water-filled quotas.
  void add_task(std::span<const T> samples, Rng& rng) {
    if (capacity_ == 0) {
      log_warning("memory capacity is 0; replay degenerates to the baseline");
    }
    slices_.push_back(subsample(samples, std::min(samples.size(), capacity_), rng));
    std::vector<std::size_t> sizes;
    for (const auto& s : slices_) sizes.push_back(s.size());
    std::vector<std::size_t> quota = water_fill_quotas(sizes, capacity_);
    for (std::size_t i = 0; i < slices_.size(); ++i) {
      if (slices_[i].size() > quota[i]) slices_[i] = subsample<T>(slices_[i], quota[i], rng);
    }
  }

 private:
  // k items chosen uniformly without replacement, kept in source order.
  template <typename U>
  static std::vector<U> subsample(std::span<const U> items, std::size_t k, Rng& rng) {
    std::vector<std::size_t> idx = rng.sample_indices(items.size(), k);
    std::sort(idx.begin(), idx.end());
    std::vector<U> out;
    out.reserve(k);
    for (std::size_t i : idx) out.push_back(items[i]);
    return out;
  }

  std::size_t capacity_;
  std::vector<std::vector<T>> slices_;
};

/// Current training set plus every memory slice, shuffled by `rng`.
template <typename T>
std::vector<T> nr_merge(std::span<const T> current, const MemoryBuffer<T>& memory, Rng& rng) {
  std::vector<T> out(current.begin(), current.end());
  for (std::size_t s = 0; s < memory.tasks(); ++s) {
    auto slice = memory.slice(s);
    out.insert(out.end(), slice.begin(), slice.end());
  }
  rng.shuffle(out);
  return out;
}

}  // namespace contir::strat
