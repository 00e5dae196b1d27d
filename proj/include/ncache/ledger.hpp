#pragma once

#include "ncache/dataset.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace ncache {

using CostFunction = std::function<double(const Instance&)>;

inline CostFunction constant_cost(double c) {
  return [c](const Instance&) { return c; };
}

/// Remaining teacher budget and the record of every charge against it.
class BudgetLedger {
 public:
  struct Charge {
    std::size_t position;
    double cost;
  };

  explicit BudgetLedger(double budget, CostFunction cost = constant_cost(1.0));

  double initial() const { return initial_; }
  double remaining() const { return remaining_; }
  double spent() const { return initial_ - remaining_; }
  const std::vector<Charge>& spend_log() const { return log_; }

  double cost(const Instance& instance) const { return cost_(instance); }
  bool can_afford(const Instance& instance) const { return remaining_ >= cost_(instance); }

  /// Records a charge at stream position `position`. Throws std::logic_error
  /// when the budget cannot cover it.
  void charge(std::size_t position, const Instance& instance);

 private:
  double initial_;
  double remaining_;
  CostFunction cost_;
  std::vector<Charge> log_;
};

}  // namespace ncache
