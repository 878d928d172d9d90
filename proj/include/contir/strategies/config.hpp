#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace contir::strat {

enum class StrategyTag { none, l2, ewc, ewcol, si, mas, nr, gem };

/// Throws ConfigError on an unknown tag.
StrategyTag parse_strategy(std::string_view tag);
std::string_view strategy_name(StrategyTag tag);

/// l2 0.01, ewc/ewcol 100, si 1, mas 1, others 0.
double default_lambda(StrategyTag tag);

bool uses_penalty(StrategyTag tag);
bool uses_memory(StrategyTag tag);

struct StrategyConfig {
  StrategyTag tag = StrategyTag::none;
  std::optional<double> lambda;     // unset: default_lambda(tag)
  std::size_t fisher_samples = 1024;
  double si_damping = 1e-3;         // xi
  std::size_t memory_capacity = 0;
  double gem_ridge = 1e-3;          // gamma

  double effective_lambda() const { return lambda.value_or(default_lambda(tag)); }
  /// Throws ConfigError.
  void validate() const;
};

}  // namespace contir::strat
