#include "ncache/ledger.hpp"

#include <stdexcept>
#include <string>

namespace ncache {

BudgetLedger::BudgetLedger(double budget, CostFunction cost)
    : initial_(budget), remaining_(budget), cost_(std::move(cost)) {
  if (!(budget >= 0.0)) throw std::invalid_argument("BudgetLedger: budget must be >= 0");
}

void BudgetLedger::charge(std::size_t position, const Instance& instance) {
  const double c = cost_(instance);
  if (!(c >= 0.0)) throw std::logic_error("BudgetLedger: negative cost for '" + instance.id + "'");
  if (remaining_ < c) throw std::logic_error("BudgetLedger: charge exceeds remaining budget");
  remaining_ -= c;
  log_.push_back({position, c});
}

}  // namespace ncache
