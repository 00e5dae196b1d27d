#include "ncache/simulator.hpp"

#include "ncache/io.hpp"
#include "ncache/rng.hpp"

#include <algorithm>

namespace ncache {

namespace {

// Child-seed streams of the run seed.
constexpr std::uint64_t kStreamSeed = 1;
constexpr std::uint64_t kPolicySeed = 2;
constexpr std::uint64_t kTrainSeed = 3;

StudentModel train_or_zero(std::span<const TrainingExample> data, const TrainConfig& train, const RunSeeds& seeds,
                           int num_classes, Eigen::Index feature_dim) {
  if (data.size() < 2) return StudentModel::zero(num_classes, feature_dim);
  TrainConfig cfg = train;
  cfg.seed = seeds.train(data.size());
  return train_student(data, cfg);
}

bool is_trained(const StudentModel& m) { return m.meta.epochs_run > 0; }

TraceEntry warmup_entry(std::size_t position, const Instance& inst) {
  TraceEntry e;
  e.position = position;
  e.id = inst.id;
  e.gold = inst.gold;
  e.student = ClassLabel{-1};  // no student exists yet
  e.warmup = true;
  e.teacher_called = true;
  e.emitted = inst.teacher.label();
  e.correct = e.emitted == inst.gold;
  return e;
}

struct StreamLoop {
  const Dataset& dataset;
  const StreamOrder& stream;
  const RunConfig& config;
  RunSeeds seeds;
  Warmup warmup;
  RunRecord record;
  PolicyState state;
  BudgetLedger ledger;

  StreamLoop(const Dataset& d, const StreamOrder& s, const RunConfig& c)
      : dataset(d),
        stream(s),
        config(c),
        seeds(RunSeeds::derive(c.seed)),
        warmup(run_warmup(d, s, c.warmup_size, c.train, seeds)),
        state(c.policy, seeds.policy),
        ledger(c.budget, constant_cost(c.cost_per_query)) {
    record.config = c;
    record.initial_student = warmup.student;
    record.trace.reserve(stream.size());
    for (std::size_t pos = 0; pos < warmup.cursor; ++pos) {
      const Instance& inst = dataset.online[stream.order[pos]];
      record.trace.push_back(warmup_entry(pos, inst));
      record_annotation(state, inst);
    }
  }

  /// Processes one streamed instance with the given student.
  void step(std::size_t pos, const StudentModel& student, std::vector<TrainingExample>* llm_data) {
    const Instance& inst = dataset.online[stream.order[pos]];
    const VectorXd logp = predict(student, inst.features);
    const Decision d = decide(state, inst, logp, ledger, stream.size() - pos);

    TraceEntry e;
    e.position = pos;
    e.id = inst.id;
    e.gold = inst.gold;
    e.student = argmax(logp);
    e.emitted = e.student;
    if (d.call_teacher && ledger.can_afford(inst)) {
      ledger.charge(pos, inst);
      e.teacher_called = true;
      e.emitted = inst.teacher.label();
      record_annotation(state, inst);
      if (llm_data != nullptr) {
        if (config.oracle_filter && !inst.teacher_correct()) {
          ++record.oracle_dropped;
        } else {
          llm_data->push_back(make_training_example(inst, config.train.label_mode));
        }
      }
    }
    e.correct = e.emitted == inst.gold;
    record.trace.push_back(std::move(e));
  }

  RunRecord finish(StudentModel final_student, std::size_t llm_size) {
    record.final_student = std::move(final_student);
    record.spend_log = ledger.spend_log();
    record.spent = ledger.spent();
    record.llm_data_size = llm_size;
    record.degenerate_committee_decisions = state.degenerate_committee_decisions;
    return std::move(record);
  }
};

}  // namespace

std::string to_string(Regime regime) { return regime == Regime::Retrain ? "retrain" : "no_retrain"; }

Regime regime_from_string(const std::string& s) {
  if (s == "retrain") return Regime::Retrain;
  if (s == "no_retrain") return Regime::NoRetrain;
  throw ValidationError("regime: expected 'retrain' or 'no_retrain', got '" + s + "'");
}

void RunConfig::validate() const {
  if (retrain_frequency < 1) throw ValidationError("retrain_frequency must be >= 1");
  if (!(budget >= 0.0)) throw ValidationError("budget must be >= 0");
  if (!(cost_per_query > 0.0)) throw ValidationError("cost_per_query must be > 0");
  if (committee_prefill_step < 1) throw ValidationError("committee_prefill_step must be >= 1");
  policy.validate();
  train.validate();
  const bool thresholded = policy.kind != PolicyKind::FrontLoading && policy.kind != PolicyKind::Random;
  if (regime == Regime::NoRetrain && thresholded && policy.mode != ThresholdMode::Adaptive) {
    throw ValidationError("regime: no_retrain requires policy.mode = adaptive for policy '" + policy.label() + "'");
  }
}

RunSeeds RunSeeds::derive(std::uint64_t run_seed) {
  return {mix_seed(run_seed, kStreamSeed), mix_seed(run_seed, kPolicySeed), mix_seed(run_seed, kTrainSeed)};
}

std::uint64_t RunSeeds::train(std::size_t training_size) const { return mix_seed(train_base, training_size); }

Warmup run_warmup(const Dataset& dataset, const StreamOrder& stream, std::size_t warmup_size,
                  const TrainConfig& train, const RunSeeds& seeds) {
  if (warmup_size > stream.size()) {
    throw ValidationError("warmup_size (" + std::to_string(warmup_size) + ") exceeds the stream length (" +
                          std::to_string(stream.size()) + ")");
  }
  Warmup w;
  w.llm_data.reserve(warmup_size);
  for (std::size_t pos = 0; pos < warmup_size; ++pos) {
    w.llm_data.push_back(make_training_example(dataset.online[stream.order[pos]], train.label_mode));
  }
  w.student = train_or_zero(w.llm_data, train, seeds, dataset.num_classes(), dataset.manifest.feature_dim);
  w.cursor = warmup_size;
  return w;
}

std::vector<StudentModel> prefill_committee(const Warmup& warmup, const RunConfig& config, const RunSeeds& seeds) {
  std::vector<StudentModel> members;
  const std::size_t n = warmup.llm_data.size();
  if (n < 2) return members;
  const int num_classes = static_cast<int>(warmup.llm_data.front().target.size());
  const Eigen::Index dim = warmup.llm_data.front().features.size();
  for (int k = config.policy.committee_size; k >= 1; --k) {
    const std::size_t drop = config.committee_prefill_step * static_cast<std::size_t>(k);
    const std::size_t size = drop + 2 <= n ? n - drop : 2;
    members.push_back(train_or_zero(std::span(warmup.llm_data).first(size), config.train, seeds, num_classes, dim));
  }
  return members;
}

RunRecord run_stream(const Dataset& dataset, const StreamOrder& stream, const RunConfig& config) {
  config.validate();
  if (config.regime != Regime::Retrain) throw ValidationError("run_stream: regime must be 'retrain'");
  StreamLoop loop(dataset, stream, config);
  auto& state = loop.state;
  const bool committee = config.policy.kind == PolicyKind::Committee;
  if (committee && config.prefill_committee_when_retraining) {
    for (auto& m : prefill_committee(loop.warmup, config, loop.seeds)) snapshot_committee(state, m);
  }

  std::vector<TrainingExample> llm_data = std::move(loop.warmup.llm_data);
  StudentModel student = loop.warmup.student;
  const std::size_t start = loop.warmup.cursor;
  for (std::size_t pos = start; pos < stream.size(); ++pos) {
    if ((pos - start) % config.retrain_frequency == 0) {
      StudentModel next = train_or_zero(llm_data, config.train, loop.seeds, dataset.num_classes(),
                                        dataset.manifest.feature_dim);
      // the committee keeps distinct previous students only
      if (committee && is_trained(student) && next.weights != student.weights) snapshot_committee(state, student);
      loop.record.retrains.push_back({pos, llm_data.size(), next.meta.seed});
      student = std::move(next);
    }
    loop.step(pos, student, &llm_data);
  }
  const std::size_t llm_size = llm_data.size();
  return loop.finish(std::move(student), llm_size);
}

RunRecord run_no_retrain(const Dataset& dataset, const StreamOrder& stream, const RunConfig& config) {
  config.validate();
  if (config.regime != Regime::NoRetrain) throw ValidationError("run_no_retrain: regime must be 'no_retrain'");
  StreamLoop loop(dataset, stream, config);
  if (config.policy.kind == PolicyKind::Committee) {
    for (auto& m : prefill_committee(loop.warmup, config, loop.seeds)) snapshot_committee(loop.state, m);
  }
  const StudentModel student = loop.warmup.student;
  std::size_t llm_size = loop.warmup.llm_data.size();
  for (std::size_t pos = loop.warmup.cursor; pos < stream.size(); ++pos) {
    loop.step(pos, student, nullptr);
    if (loop.record.trace.back().teacher_called) ++llm_size;
  }
  return loop.finish(student, llm_size);
}

RunRecord run_experiment(const Dataset& dataset, const RunConfig& config) {
  config.validate();
  const StreamOrder stream = make_stream(dataset, RunSeeds::derive(config.seed).stream);
  return config.regime == Regime::Retrain ? run_stream(dataset, stream, config)
                                          : run_no_retrain(dataset, stream, config);
}

std::string trace_to_jsonl(const RunRecord& record) {
  std::string out;
  for (const auto& e : record.trace) {
    nlohmann::ordered_json j;
    j["position"] = e.position;
    j["id"] = e.id;
    j["gold"] = e.gold.index;
    j["student"] = e.student.index >= 0 ? nlohmann::ordered_json(e.student.index) : nlohmann::ordered_json();
    j["warmup"] = e.warmup;
    j["teacher_called"] = e.teacher_called;
    j["emitted"] = e.emitted.index;
    j["correct"] = e.correct;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_trace_jsonl(const RunRecord& record, const std::filesystem::path& path) {
  write_file_atomic(path, trace_to_jsonl(record));
}

}  // namespace ncache
