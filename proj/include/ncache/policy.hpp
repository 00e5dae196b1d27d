#pragma once

// Selection policies: decide, per streamed instance, whether to pay for a
// teacher label.

#include "ncache/criteria.hpp"
#include "ncache/dataset.hpp"
#include "ncache/ledger.hpp"
#include "ncache/rng.hpp"
#include "ncache/student.hpp"

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncache {

enum class PolicyKind { FrontLoading, Random, Margin, Entropy, Committee, Coreset };
enum class ThresholdMode { Fixed, Adaptive };
enum class Orientation { HigherIsUncertain, LowerIsUncertain };

std::string to_string(PolicyKind kind);
std::string to_string(ThresholdMode mode);
PolicyKind policy_kind_from_string(const std::string& s);
ThresholdMode threshold_mode_from_string(const std::string& s);

/// A criterion value together with the direction in which it signals
/// uncertainty. Comparisons always go through uncertainty().
struct CriterionScore {
  double value = 0.0;
  Orientation orientation = Orientation::HigherIsUncertain;

  /// Larger is more uncertain, whatever the native orientation.
  double uncertainty() const {
    return orientation == Orientation::HigherIsUncertain ? value : -value;
  }
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::Margin;
  ThresholdMode mode = ThresholdMode::Fixed;
  /// Native units of the criterion. Unset means the per-kind default.
  std::optional<double> fixed_threshold;
  int committee_size = 4;
  /// Coreset similarity threshold s; also the fixed threshold for Coreset.
  double coreset_threshold = 0.9;
  /// Treat high margin as uncertain (ablation of the margin direction).
  bool invert_margin = false;
  /// Report label; defaults to the kind name.
  std::string name;

  std::string label() const { return name.empty() ? to_string(kind) : name; }
  /// Threshold in native units: margin 5, entropy 0.5, committee 0.25, coreset s.
  double effective_fixed_threshold() const;
  Orientation orientation() const;
  void validate() const;

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

struct PolicyState {
  PolicyState(PolicyConfig config, std::uint64_t rng_seed);

  PolicyConfig config;
  std::vector<CriterionScore> history;
  /// history uncertainties in descending order
  std::vector<double> ranked;
  /// Previous students, oldest first; at most config.committee_size.
  std::deque<StudentModel> committee;
  CoresetStore coreset;
  Rng rng;
  /// Committee decisions taken in fixed mode with an empty committee.
  std::size_t degenerate_committee_decisions = 0;
};

struct Decision {
  bool call_teacher = false;
  CriterionScore score;
  /// Threshold in uncertainty orientation; absent for FR and Random.
  std::optional<double> threshold_used;
};

/// Percentile threshold over the history, in uncertainty orientation.
/// `tie_probability` is the chance of selecting a score exactly equal to
/// `value`, so that discrete criteria still hit the target rate.
struct AdaptiveThreshold {
  double value = 0.0;
  double tie_probability = 1.0;

  bool admits(double uncertainty, Rng& rng) const;
};

/// Threshold selecting the most-uncertain fraction q = min(1, b/n) of the
/// history (nearest rank). Empty history or q = 1 admits everything.
/// Same over uncertainties already sorted in descending order.
AdaptiveThreshold adaptive_threshold_ranked(std::span<const double> descending, double remaining_budget,
                                            std::size_t remaining_instances);

AdaptiveThreshold adaptive_threshold(std::span<const CriterionScore> history, double remaining_budget,
                                     std::size_t remaining_instances);

/// Criterion score for `instance`; FR and Random have no score.
CriterionScore score_instance(const PolicyState& state, const Instance& instance,
                              const VectorXd& student_logprobs);

/// `remaining_instances` counts the current instance.
Decision decide(PolicyState& state, const Instance& instance, const VectorXd& student_logprobs,
                const BudgetLedger& ledger, std::size_t remaining_instances);

/// Appends a model to the committee, evicting the oldest beyond committee_size.
void snapshot_committee(PolicyState& state, const StudentModel& model);

/// Records a teacher-annotated input for the coreset criterion.
void record_annotation(PolicyState& state, const Instance& instance);

}  // namespace ncache
