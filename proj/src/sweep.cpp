#include "ncache/sweep.hpp"

#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace ncache {

RunConfig ExperimentConfig::cell(const PolicyConfig& policy, double budget, std::uint64_t seed) const {
  RunConfig c = base;
  c.policy = policy;
  c.budget = budget;
  c.seed = seed;
  return c;
}

void ExperimentConfig::validate() const {
  if (budgets.empty()) throw ValidationError("budgets: the budget grid is empty");
  if (seeds.empty()) throw ValidationError("seeds: at least one seed is required");
  if (policies.empty()) throw ValidationError("policy: at least one policy is required");
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    for (std::size_t j = i + 1; j < budgets.size(); ++j) {
      if (budgets[i] == budgets[j]) throw ValidationError("budgets: duplicate budget");
    }
  }
  std::map<std::string, int> labels;
  for (const auto& p : policies) {
    if (++labels[p.label()] > 1) throw ValidationError("policies: duplicate policy name '" + p.label() + "'");
    for (const double b : budgets) cell(p, b, seeds.front()).validate();
  }
}

std::string SweepCell::key() const {
  std::ostringstream s;
  s << config.policy.label() << '-' << config.budget << '-' << config.seed;
  if (config.oracle_filter) s << "-oracle";
  return s.str();
}

std::vector<SweepCell> run_sweep(const Dataset& dataset, const ExperimentConfig& config, unsigned jobs) {
  config.validate();
  std::vector<RunConfig> plan;
  for (const auto& policy : config.policies) {
    for (const double budget : config.budgets) {
      for (const auto seed : config.seeds) {
        RunConfig c = config.cell(policy, budget, seed);
        if (config.oracle_analysis) {
          c.oracle_filter = false;
          plan.push_back(c);
          c.oracle_filter = true;
        }
        plan.push_back(c);
      }
    }
  }

  std::vector<SweepCell> cells(plan.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      try {
        RunRecord record = run_experiment(dataset, plan[i]);
        RunMetrics metrics = compute_metrics(record, dataset);
        cells[i] = SweepCell{plan[i], std::move(record), metrics};
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(plan.size())));
  std::vector<std::jthread> threads;
  for (unsigned t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  threads.clear();
  if (error) std::rethrow_exception(error);
  return cells;
}

SweepReport build_report(const Dataset& dataset, const ExperimentConfig& config, std::span<const SweepCell> cells) {
  SweepReport report;
  report.dataset = dataset.manifest.name;
  report.regime = to_string(config.base.regime);
  const bool baseline_filter = config.oracle_analysis ? false : config.base.oracle_filter;
  for (const auto& c : cells) {
    report.cells.push_back({c.config.policy.label(), c.config.budget, c.config.seed, c.config.oracle_filter, c.metrics});
  }
  for (const auto& policy : config.policies) {
    PolicyReport p;
    p.policy = policy.label();
    std::vector<std::pair<double, double>> online_pts;
    std::vector<std::pair<double, double>> final_pts;
    std::vector<std::pair<double, double>> wrong_pts;
    std::vector<PairedRun> pairs;
    for (const double budget : config.budgets) {
      std::vector<RunMetrics> group;
      for (const auto& c : cells) {
        if (c.config.policy.label() != p.policy || c.config.budget != budget) continue;
        if (c.config.oracle_filter != baseline_filter) continue;
        group.push_back(c.metrics);
        p.degenerate_committee_decisions += c.record.degenerate_committee_decisions;
        if (config.oracle_analysis) {
          for (const auto& twin : cells) {
            if (twin.config.policy.label() == p.policy && twin.config.budget == budget &&
                twin.config.seed == c.config.seed && twin.config.oracle_filter) {
              pairs.push_back({twin.config, twin.metrics, c.config, c.metrics});
            }
          }
        }
      }
      if (group.empty()) continue;
      const MetricsSummary s = aggregate_seeds(group);
      p.curve.push_back({budget, s});
      online_pts.emplace_back(budget, s.online_accuracy.mean);
      final_pts.emplace_back(budget, s.final_accuracy.mean);
      if (s.teacher_wrong_subset_accuracy) wrong_pts.emplace_back(budget, s.teacher_wrong_subset_accuracy->mean);
    }
    if (!online_pts.empty()) {
      p.online_auc = auc_over_budgets(online_pts);
      p.final_auc = auc_over_budgets(final_pts);
    }
    if (!wrong_pts.empty() && wrong_pts.size() == online_pts.size()) p.teacher_wrong_auc = auc_over_budgets(wrong_pts);
    if (!pairs.empty()) p.oracle = oracle_delta(pairs);
    report.policies.push_back(std::move(p));
  }
  return report;
}

}  // namespace ncache
