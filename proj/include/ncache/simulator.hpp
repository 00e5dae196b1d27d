#pragma once

// Replay of the student/teacher routing loop: warmup, streamed routing decisions,
// budget accounting and periodic retraining of the student.

#include "ncache/dataset.hpp"
#include "ncache/ledger.hpp"
#include "ncache/policy.hpp"
#include "ncache/student.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ncache {

enum class Regime { Retrain, NoRetrain };

std::string to_string(Regime regime);
Regime regime_from_string(const std::string& s);

/// Everything needed for one (policy, budget, seed) cell.
struct RunConfig {
  Regime regime = Regime::Retrain;
  double budget = 0.0;
  std::size_t retrain_frequency = 1000;
  std::size_t warmup_size = 100;
  double cost_per_query = 1.0;
  bool oracle_filter = false;
  /// Score warmup entries as part of online accuracy.
  bool include_warmup_in_scoring = false;
  /// Prior committee students are trained on warmup prefixes of N - k * step.
  std::size_t committee_prefill_step = 100;
  /// Prefill the committee before streaming in the retraining regime too.
  bool prefill_committee_when_retraining = false;
  PolicyConfig policy;
  TrainConfig train;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Seeds derived from the single run seed.
struct RunSeeds {
  std::uint64_t stream;
  std::uint64_t policy;
  std::uint64_t train_base;

  static RunSeeds derive(std::uint64_t run_seed);
  /// Training seed for a given training-set size; identical data and seed
  /// reproduce the identical model.
  std::uint64_t train(std::size_t training_size) const;
};

struct Warmup {
  StudentModel student;
  std::vector<TrainingExample> llm_data;
  std::size_t cursor = 0;
};

/// Teacher-annotates the first N stream instances and trains the initial
/// student on them. Warmup labels are not charged to the budget. N below 2
/// yields a zero-weight student.
Warmup run_warmup(const Dataset& dataset, const StreamOrder& stream, std::size_t warmup_size,
                  const TrainConfig& train, const RunSeeds& seeds);

struct TraceEntry {
  std::size_t position = 0;
  std::string id;
  ClassLabel gold;
  ClassLabel student;
  bool warmup = false;
  bool teacher_called = false;
  ClassLabel emitted;
  bool correct = false;
};

struct RetrainEvent {
  std::size_t position = 0;
  std::size_t training_size = 0;
  std::uint64_t seed = 0;
};

struct RunRecord {
  RunConfig config;
  std::vector<TraceEntry> trace;
  std::vector<RetrainEvent> retrains;
  std::vector<BudgetLedger::Charge> spend_log;
  double spent = 0.0;
  std::size_t llm_data_size = 0;
  std::size_t oracle_dropped = 0;
  std::size_t degenerate_committee_decisions = 0;
  StudentModel initial_student;
  StudentModel final_student;
};

/// Full run with periodic retraining every `retrain_frequency` streamed
/// instances, anchored at the first post-warmup position.
RunRecord run_stream(const Dataset& dataset, const StreamOrder& stream, const RunConfig& config);

/// Frozen initial student; adaptive thresholds; prefilled committee.
RunRecord run_no_retrain(const Dataset& dataset, const StreamOrder& stream, const RunConfig& config);

/// Builds the stream from the config seed and dispatches on the regime.
RunRecord run_experiment(const Dataset& dataset, const RunConfig& config);

/// Students trained on warmup prefixes of size N - k * step, k = 1..d,
/// clipped at 2 examples; oldest (smallest) first.
std::vector<StudentModel> prefill_committee(const Warmup& warmup, const RunConfig& config,
                                            const RunSeeds& seeds);

void write_trace_jsonl(const RunRecord& record, const std::filesystem::path& path);
std::string trace_to_jsonl(const RunRecord& record);

}  // namespace ncache
