#pragma once

#include "ncache/dataset.hpp"
#include "ncache/simulator.hpp"
#include "ncache/student.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ncache {

struct RunMetrics {
  double online_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::size_t teacher_calls = 0;
  double spent = 0.0;
  /// Absent when the teacher was never called.
  std::optional<double> teacher_label_accuracy_on_called;
  std::size_t retrain_count = 0;
  /// Final-student accuracy on test items the teacher gets wrong.
  std::optional<double> teacher_wrong_subset_accuracy;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

/// Accuracy of emitted labels over the scored window (post-warmup unless the
/// run config includes warmup). Throws on an empty window.
double online_accuracy(const RunRecord& record);

RunMetrics compute_metrics(const RunRecord& record, const Dataset& dataset);

/// Trapezoid area of accuracy over budget divided by the budget range. A
/// single point returns its accuracy. Points may be given in any order;
/// duplicate budgets throw.
double auc_over_budgets(std::span<const std::pair<double, double>> points);

std::optional<double> teacher_wrong_subset_accuracy(const StudentModel& model,
                                                    std::span<const Instance> test);

struct Summary {
  double mean = 0.0;
  double variance = 0.0;  // population

  friend bool operator==(const Summary&, const Summary&) = default;
};

Summary summarize(std::span<const double> values);

struct MetricsSummary {
  std::size_t cells = 0;
  Summary online_accuracy;
  Summary final_accuracy;
  Summary teacher_calls;
  std::optional<Summary> teacher_wrong_subset_accuracy;

  friend bool operator==(const MetricsSummary&, const MetricsSummary&) = default;
};

MetricsSummary aggregate_seeds(std::span<const RunMetrics> cells);

struct PairedRun {
  RunConfig filtered_config;
  RunMetrics filtered;
  RunConfig baseline_config;
  RunMetrics baseline;
};

struct OracleDelta {
  double online = 0.0;
  double final_accuracy = 0.0;

  friend bool operator==(const OracleDelta&, const OracleDelta&) = default;
};

/// Mean (filtered - baseline) accuracy differences. Each pair must differ
/// only in the oracle_filter flag.
OracleDelta oracle_delta(std::span<const PairedRun> pairs);

struct CurvePoint {
  double budget = 0.0;
  MetricsSummary summary;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct PolicyReport {
  std::string policy;
  std::vector<CurvePoint> curve;
  double online_auc = 0.0;
  double final_auc = 0.0;
  std::optional<double> teacher_wrong_auc;
  std::optional<OracleDelta> oracle;
  std::size_t degenerate_committee_decisions = 0;

  friend bool operator==(const PolicyReport&, const PolicyReport&) = default;
};

struct CellRow {
  std::string policy;
  double budget = 0.0;
  std::uint64_t seed = 0;
  bool oracle_filter = false;
  RunMetrics metrics;

  friend bool operator==(const CellRow&, const CellRow&) = default;
};

struct SweepReport {
  std::string dataset;
  std::string regime;
  std::vector<PolicyReport> policies;
  std::vector<CellRow> cells;

  friend bool operator==(const SweepReport&, const SweepReport&) = default;
};

nlohmann::json metrics_to_json(const RunMetrics& m);
RunMetrics metrics_from_json(const nlohmann::json& j);
nlohmann::json report_to_json(const SweepReport& report);
SweepReport report_from_json(const nlohmann::json& j);

/// policy,budget,mean/variance of online and final accuracy and calls.
std::string curves_csv(const SweepReport& report);
/// One row per (policy, budget, seed, oracle_filter) cell.
std::string cells_csv(const SweepReport& report);

/// Fixed-precision decimal used in CSV output.
std::string format_real(double v);

}  // namespace ncache
