#pragma once

#include "ncache/dataset.hpp"
#include "ncache/metrics.hpp"
#include "ncache/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ncache {

/// A grid of runs: every policy x budget x seed, optionally paired with
/// oracle-filtered twins.
struct ExperimentConfig {
  std::filesystem::path dataset;
  std::vector<double> budgets{1000, 2000, 3000};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<PolicyConfig> policies{PolicyConfig{}};
  /// Template for every cell; budget, seed and policy are overwritten.
  RunConfig base;
  /// Also run each cell with oracle_filter flipped and report the deltas.
  bool oracle_analysis = false;

  RunConfig cell(const PolicyConfig& policy, double budget, std::uint64_t seed) const;
  void validate() const;
};

struct SweepCell {
  RunConfig config;
  RunRecord record;
  RunMetrics metrics;

  std::string key() const;
};

/// Executes the full cross product on up to `jobs` threads. Output order is
/// (policy, budget, seed, oracle_filter) regardless of scheduling.
std::vector<SweepCell> run_sweep(const Dataset& dataset, const ExperimentConfig& config,
                                 unsigned jobs);

SweepReport build_report(const Dataset& dataset, const ExperimentConfig& config,
                         std::span<const SweepCell> cells);

}  // namespace ncache
