#include "contir/strategies/config.hpp"

#include <cmath>

#include "contir/error.hpp"

namespace contir::strat {

namespace {

constexpr std::string_view kNames[] = {"none", "l2", "ewc", "ewcol", "si", "mas", "nr", "gem"};

}  // namespace

StrategyTag parse_strategy(std::string_view tag) {
  for (std::size_t i = 0; i < std::size(kNames); ++i) {
    if (kNames[i] == tag) return static_cast<StrategyTag>(i);
  }
  throw ConfigError("unknown strategy '" + std::string(tag) +
                    "' (expected none, l2, ewc, ewcol, si, mas, nr or gem)");
}

std::string_view strategy_name(StrategyTag tag) { return kNames[static_cast<std::size_t>(tag)]; }

double default_lambda(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::l2: return 0.01;
    case StrategyTag::ewc:
    case StrategyTag::ewcol: return 100.0;
    case StrategyTag::si:
    case StrategyTag::mas: return 1.0;
    default: return 0.0;
  }
}

bool uses_penalty(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::l2:
    case StrategyTag::ewc:
    case StrategyTag::ewcol:
    case StrategyTag::si:
    case StrategyTag::mas: return true;
    default: return false;
  }
}

bool uses_memory(StrategyTag tag) { return tag == StrategyTag::nr || tag == StrategyTag::gem; }

void StrategyConfig::validate() const {
  const double l = effective_lambda();
  if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("strategy: lambda must be finite and >= 0");
  if (fisher_samples == 0) throw ConfigError("strategy: fisher_samples must be >= 1");
  if (!(si_damping > 0.0)) throw ConfigError("strategy: si_damping must be > 0");
  if (!(gem_ridge >= 0.0)) throw ConfigError("strategy: gem_ridge must be >= 0");
  if (tag == StrategyTag::gem && memory_capacity == 0) {
    throw ConfigError("strategy: gem needs memory_capacity >= 1");
  }
}

}  // namespace contir::strat
