#include "ncache/policy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace ncache {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fixed thresholds chosen to spend early in the retraining regime. The
// committee value is a disagreement fraction: the published value "QBC=4"
// has no reading as a proportion, so 0.25 (one of four members disagrees)
// stands in for it.
constexpr double kMarginThreshold = 5.0;
constexpr double kEntropyThreshold = 0.5;
constexpr double kCommitteeThreshold = 0.25;

double calls_affordable(const BudgetLedger& ledger, const Instance& instance) {
  const double c = ledger.cost(instance);
  return c > 0.0 ? ledger.remaining() / c : kInf;
}

}  // namespace

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FrontLoading: return "front_loading";
    case PolicyKind::Random: return "random";
    case PolicyKind::Margin: return "margin";
    case PolicyKind::Entropy: return "entropy";
    case PolicyKind::Committee: return "qbc";
    case PolicyKind::Coreset: return "coreset";
  }
  return "unknown";
}

std::string to_string(ThresholdMode mode) { return mode == ThresholdMode::Fixed ? "fixed" : "adaptive"; }

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "front_loading" || s == "fr") return PolicyKind::FrontLoading;
  if (s == "random") return PolicyKind::Random;
  if (s == "margin" || s == "ms") return PolicyKind::Margin;
  if (s == "entropy" || s == "pe") return PolicyKind::Entropy;
  if (s == "qbc" || s == "committee") return PolicyKind::Committee;
  if (s == "coreset" || s == "cs") return PolicyKind::Coreset;
  throw ValidationError("policy.kind: unknown policy '" + s +
                        "' (expected front_loading, random, margin, entropy, qbc or coreset)");
}

ThresholdMode threshold_mode_from_string(const std::string& s) {
  if (s == "fixed") return ThresholdMode::Fixed;
  if (s == "adaptive") return ThresholdMode::Adaptive;
  throw ValidationError("policy.mode: expected 'fixed' or 'adaptive', got '" + s + "'");
}

double PolicyConfig::effective_fixed_threshold() const {
  if (fixed_threshold) return *fixed_threshold;
  switch (kind) {
    case PolicyKind::Margin: return kMarginThreshold;
    case PolicyKind::Entropy: return kEntropyThreshold;
    case PolicyKind::Committee: return kCommitteeThreshold;
    case PolicyKind::Coreset: return coreset_threshold;
    default: return 0.0;
  }
}

Orientation PolicyConfig::orientation() const {
  switch (kind) {
    case PolicyKind::Margin:
      return invert_margin ? Orientation::HigherIsUncertain : Orientation::LowerIsUncertain;
    case PolicyKind::Coreset: return Orientation::LowerIsUncertain;
    default: return Orientation::HigherIsUncertain;
  }
}

void PolicyConfig::validate() const {
  if (committee_size < 1) throw ValidationError("policy.committee_size must be >= 1");
  if (!(coreset_threshold >= -1.0 && coreset_threshold <= 1.0)) {
    throw ValidationError("policy.coreset_threshold must lie in [-1, 1]");
  }
  if (fixed_threshold && !std::isfinite(*fixed_threshold)) throw ValidationError("policy.fixed_threshold must be finite");
}

PolicyState::PolicyState(PolicyConfig cfg, std::uint64_t rng_seed) : config(std::move(cfg)), rng(rng_seed) {}

bool AdaptiveThreshold::admits(double uncertainty, Rng& rng) const {
  if (uncertainty > value) return true;
  if (uncertainty < value) return false;
  if (tie_probability >= 1.0) return true;
  if (tie_probability <= 0.0) return false;
  return uniform01(rng) < tie_probability;
}

AdaptiveThreshold adaptive_threshold_ranked(std::span<const double> u, double remaining_budget,
                                            std::size_t remaining_instances) {
  if (remaining_instances == 0) throw std::invalid_argument("adaptive_threshold: no remaining instances");
  if (u.empty()) return {-kInf, 1.0};
  const double q = std::min(1.0, std::max(0.0, remaining_budget) / static_cast<double>(remaining_instances));
  if (q >= 1.0) return {-kInf, 1.0};
  if (q <= 0.0) return {kInf, 0.0};
  const double target = q * static_cast<double>(u.size());
  const auto rank = static_cast<std::size_t>(std::ceil(target));  // nearest rank, >= 1
  const double value = u[rank - 1];
  const auto [lo, hi] = std::equal_range(u.begin(), u.end(), value, std::greater<>());
  const auto above = static_cast<double>(lo - u.begin());
  const auto equal = static_cast<double>(hi - lo);
  return {value, std::clamp((target - above) / equal, 0.0, 1.0)};
}

AdaptiveThreshold adaptive_threshold(std::span<const CriterionScore> history, double remaining_budget,
                                     std::size_t remaining_instances) {
  std::vector<double> u;
  u.reserve(history.size());
  for (const auto& s : history) u.push_back(s.uncertainty());
  std::sort(u.begin(), u.end(), std::greater<>());
  return adaptive_threshold_ranked(u, remaining_budget, remaining_instances);
}

CriterionScore score_instance(const PolicyState& state, const Instance& instance, const VectorXd& student_logprobs) {
  const Orientation o = state.config.orientation();
  switch (state.config.kind) {
    case PolicyKind::Margin: return {margin(student_logprobs), o};
    case PolicyKind::Entropy: return {entropy(student_logprobs), o};
    case PolicyKind::Committee: {
      std::vector<ClassLabel> labels;
      labels.reserve(state.committee.size());
      for (const auto& member : state.committee) labels.push_back(predict_label(member, instance.features));
      return {qbc_disagreement(argmax(student_logprobs), labels), o};
    }
    case PolicyKind::Coreset: return {coreset_max_similarity(instance.embedding, state.coreset), o};
    default: return {0.0, o};
  }
}

Decision decide(PolicyState& state, const Instance& instance, const VectorXd& student_logprobs,
                const BudgetLedger& ledger, std::size_t remaining_instances) {
  Decision d;
  const bool affordable = ledger.can_afford(instance);
  const auto& cfg = state.config;

  switch (cfg.kind) {
    case PolicyKind::FrontLoading:
      d.call_teacher = affordable;
      return d;
    case PolicyKind::Random: {
      const double rate = std::min(1.0, calls_affordable(ledger, instance) /
                                            static_cast<double>(std::max<std::size_t>(1, remaining_instances)));
      d.score = {rate, Orientation::HigherIsUncertain};
      // draw unconditionally so the RNG stream does not depend on the budget
      d.call_teacher = uniform01(state.rng) < rate && affordable;
      return d;
    }
    default: break;
  }

  d.score = score_instance(state, instance, student_logprobs);
  const double u = d.score.uncertainty();
  if (cfg.mode == ThresholdMode::Adaptive) {
    const auto t = adaptive_threshold_ranked(state.ranked, calls_affordable(ledger, instance),
                                      std::max<std::size_t>(1, remaining_instances));
    d.threshold_used = t.value;
    d.call_teacher = t.admits(u, state.rng);
  } else {
    const double native = cfg.effective_fixed_threshold();
    const double t = cfg.orientation() == Orientation::HigherIsUncertain ? native : -native;
    d.threshold_used = t;
    if (cfg.kind == PolicyKind::Coreset) {
      d.call_teacher = u > t;  // similarity strictly below s
    } else {
      d.call_teacher = u >= t;
    }
    if (cfg.kind == PolicyKind::Committee && state.committee.empty()) {
      ++state.degenerate_committee_decisions;
      d.call_teacher = false;
    }
  }
  state.history.push_back(d.score);
  state.ranked.insert(std::upper_bound(state.ranked.begin(), state.ranked.end(), u, std::greater<>()), u);
  d.call_teacher = d.call_teacher && affordable;
  return d;
}

void snapshot_committee(PolicyState& state, const StudentModel& model) {
  state.committee.push_back(model);
  while (state.committee.size() > static_cast<std::size_t>(state.config.committee_size)) state.committee.pop_front();
}

void record_annotation(PolicyState& state, const Instance& instance) {
  if (state.config.kind == PolicyKind::Coreset) state.coreset.add(instance.embedding);
}

}  // namespace ncache
