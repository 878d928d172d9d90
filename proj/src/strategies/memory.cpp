#include "contir/strategies/memory.hpp"

namespace contir::strat {

std::vector<std::size_t> water_fill_quotas(std::span<const std::size_t> sizes,
                                           std::size_t capacity) {
  const std::size_t n = sizes.size();
  std::vector<std::size_t> quota(n, 0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] < sizes[b]; });
  std::size_t remaining = capacity;
  std::size_t left = n;
  std::size_t pos = 0;
  // Slices no larger than the current fair share keep everything.
  for (; pos < n; ++pos) {
    const std::size_t share = remaining / left;
    if (sizes[order[pos]] > share) break;
    quota[order[pos]] = sizes[order[pos]];
    remaining -= sizes[order[pos]];
    --left;
  }
  if (left == 0) return quota;
  std::vector<std::size_t> capped(order.begin() + static_cast<std::ptrdiff_t>(pos), order.end());
  std::sort(capped.begin(), capped.end());
  const std::size_t share = remaining / left;
  std::size_t extra = remaining % left;
  for (std::size_t i : capped) {
    quota[i] = share + (extra > 0 ? 1 : 0);
    if (extra > 0) --extra;
  }
  return quota;
}

}  // namespace contir::strat
