#include "ncache/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ncache {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::json summary_to_json(const Summary& s) { return {{"mean", s.mean}, {"variance", s.variance}}; }

Summary summary_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("variance").get<double>()};
}

nlohmann::json metrics_summary_to_json(const MetricsSummary& m) {
  nlohmann::json j{{"cells", m.cells},
                   {"online_accuracy", summary_to_json(m.online_accuracy)},
                   {"final_accuracy", summary_to_json(m.final_accuracy)},
                   {"teacher_calls", summary_to_json(m.teacher_calls)}};
  j["teacher_wrong_subset_accuracy"] =
      m.teacher_wrong_subset_accuracy ? summary_to_json(*m.teacher_wrong_subset_accuracy) : nlohmann::json();
  return j;
}

MetricsSummary metrics_summary_from_json(const nlohmann::json& j) {
  MetricsSummary m;
  m.cells = j.at("cells").get<std::size_t>();
  m.online_accuracy = summary_from_json(j.at("online_accuracy"));
  m.final_accuracy = summary_from_json(j.at("final_accuracy"));
  m.teacher_calls = summary_from_json(j.at("teacher_calls"));
  if (const auto& w = j.at("teacher_wrong_subset_accuracy"); !w.is_null()) {
    m.teacher_wrong_subset_accuracy = summary_from_json(w);
  }
  return m;
}

bool same_except_filter(RunConfig a, RunConfig b) {
  a.oracle_filter = false;
  b.oracle_filter = false;
  return a == b;
}

}  // namespace

double online_accuracy(const RunRecord& record) {
  const bool with_warmup = record.config.include_warmup_in_scoring;
  std::size_t scored = 0;
  std::size_t correct = 0;
  for (const auto& e : record.trace) {
    if (e.warmup && !with_warmup) continue;
    ++scored;
    correct += e.correct ? 1 : 0;
  }
  if (scored == 0) throw std::invalid_argument("online_accuracy: empty scored window");
  return static_cast<double>(correct) / static_cast<double>(scored);
}

std::optional<double> teacher_wrong_subset_accuracy(const StudentModel& model, std::span<const Instance> test) {
  std::size_t n = 0;
  std::size_t correct = 0;
  for (const auto& inst : test) {
    if (inst.teacher_correct()) continue;
    ++n;
    correct += predict_label(model, inst.features) == inst.gold ? 1 : 0;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(n);
}

RunMetrics compute_metrics(const RunRecord& record, const Dataset& dataset) {
  RunMetrics m;
  m.online_accuracy = online_accuracy(record);
  m.final_accuracy = dataset.test.empty() ? 0.0 : evaluate(record.final_student, dataset.test);
  m.spent = record.spent;
  m.retrain_count = record.retrains.size();
  std::size_t called_correct = 0;
  for (const auto& e : record.trace) {
    if (e.warmup || !e.teacher_called) continue;
    ++m.teacher_calls;
    called_correct += e.emitted == e.gold ? 1 : 0;
  }
  if (m.teacher_calls > 0) {
    m.teacher_label_accuracy_on_called = static_cast<double>(called_correct) / static_cast<double>(m.teacher_calls);
  }
  m.teacher_wrong_subset_accuracy = teacher_wrong_subset_accuracy(record.final_student, dataset.test);
  return m;
}

double auc_over_budgets(std::span<const std::pair<double, double>> points) {
  if (points.empty()) throw std::invalid_argument("auc_over_budgets: no points");
  std::vector<std::pair<double, double>> p(points.begin(), points.end());
  std::sort(p.begin(), p.end());
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i].first == p[i - 1].first) throw std::invalid_argument("auc_over_budgets: duplicate budget");
  }
  if (p.size() == 1) return p.front().second;
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    area += 0.5 * (p[i].second + p[i - 1].second) * (p[i].first - p[i - 1].first);
  }
  return area / (p.back().first - p.front().first);
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  // sorted so the result does not depend on input order
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (const double x : v) ss += (x - mean) * (x - mean);
  return {mean, ss / n};
}

MetricsSummary aggregate_seeds(std::span<const RunMetrics> cells) {
  if (cells.empty()) throw std::invalid_argument("aggregate_seeds: no cells");
  std::vector<double> online;
  std::vector<double> final_acc;
  std::vector<double> calls;
  std::vector<double> wrong;
  for (const auto& c : cells) {
    online.push_back(c.online_accuracy);
    final_acc.push_back(c.final_accuracy);
    calls.push_back(static_cast<double>(c.teacher_calls));
    if (c.teacher_wrong_subset_accuracy) wrong.push_back(*c.teacher_wrong_subset_accuracy);
  }
  MetricsSummary s;
  s.cells = cells.size();
  s.online_accuracy = summarize(online);
  s.final_accuracy = summarize(final_acc);
  s.teacher_calls = summarize(calls);
  if (!wrong.empty()) s.teacher_wrong_subset_accuracy = summarize(wrong);
  return s;
}

OracleDelta oracle_delta(std::span<const PairedRun> pairs) {
  if (pairs.empty()) throw std::invalid_argument("oracle_delta: no pairs");
  OracleDelta d;
  for (const auto& p : pairs) {
    if (!p.filtered_config.oracle_filter || p.baseline_config.oracle_filter ||
        !same_except_filter(p.filtered_config, p.baseline_config)) {
      throw ValidationError("oracle_delta: paired runs must differ only in oracle_filter");
    }
    d.online += p.filtered.online_accuracy - p.baseline.online_accuracy;
    d.final_accuracy += p.filtered.final_accuracy - p.baseline.final_accuracy;
  }
  d.online /= static_cast<double>(pairs.size());
  d.final_accuracy /= static_cast<double>(pairs.size());
  return d;
}

nlohmann::json metrics_to_json(const RunMetrics& m) {
  return {{"online_accuracy", m.online_accuracy},
          {"final_accuracy", m.final_accuracy},
          {"teacher_calls", m.teacher_calls},
          {"spent", m.spent},
          {"teacher_label_accuracy_on_called", optional_json(m.teacher_label_accuracy_on_called)},
          {"retrain_count", m.retrain_count},
          {"teacher_wrong_subset_accuracy", optional_json(m.teacher_wrong_subset_accuracy)}};
}

RunMetrics metrics_from_json(const nlohmann::json& j) {
  RunMetrics m;
  m.online_accuracy = j.at("online_accuracy").get<double>();
  m.final_accuracy = j.at("final_accuracy").get<double>();
  m.teacher_calls = j.at("teacher_calls").get<std::size_t>();
  m.spent = j.at("spent").get<double>();
  m.teacher_label_accuracy_on_called = optional_from(j.at("teacher_label_accuracy_on_called"));
  m.retrain_count = j.at("retrain_count").get<std::size_t>();
  m.teacher_wrong_subset_accuracy = optional_from(j.at("teacher_wrong_subset_accuracy"));
  return m;
}

nlohmann::json report_to_json(const SweepReport& r) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& p : r.policies) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& c : p.curve) curve.push_back({{"budget", c.budget}, {"summary", metrics_summary_to_json(c.summary)}});
    nlohmann::json pj{{"policy", p.policy},
                      {"curve", curve},
                      {"online_auc", p.online_auc},
                      {"final_auc", p.final_auc},
                      {"teacher_wrong_auc", optional_json(p.teacher_wrong_auc)},
                      {"degenerate_committee_decisions", p.degenerate_committee_decisions}};
    pj["oracle_delta"] =
        p.oracle ? nlohmann::json{{"online", p.oracle->online}, {"final", p.oracle->final_accuracy}} : nlohmann::json();
    policies.push_back(std::move(pj));
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"policy", c.policy},
                     {"budget", c.budget},
                     {"seed", c.seed},
                     {"oracle_filter", c.oracle_filter},
                     {"metrics", metrics_to_json(c.metrics)}});
  }
  return {{"format", "ncache.report"}, {"version", 1}, {"dataset", r.dataset},
          {"regime", r.regime},        {"policies", policies}, {"cells", cells}};
}

SweepReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "ncache.report") throw ValidationError("report: unknown format");
    SweepReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.regime = j.at("regime").get<std::string>();
    for (const auto& pj : j.at("policies")) {
      PolicyReport p;
      p.policy = pj.at("policy").get<std::string>();
      for (const auto& c : pj.at("curve")) {
        p.curve.push_back({c.at("budget").get<double>(), metrics_summary_from_json(c.at("summary"))});
      }
      p.online_auc = pj.at("online_auc").get<double>();
      p.final_auc = pj.at("final_auc").get<double>();
      p.teacher_wrong_auc = optional_from(pj.at("teacher_wrong_auc"));
      p.degenerate_committee_decisions = pj.at("degenerate_committee_decisions").get<std::size_t>();
      if (const auto& o = pj.at("oracle_delta"); !o.is_null()) {
        p.oracle = OracleDelta{o.at("online").get<double>(), o.at("final").get<double>()};
      }
      r.policies.push_back(std::move(p));
    }
    for (const auto& c : j.at("cells")) {
      r.cells.push_back({c.at("policy").get<std::string>(), c.at("budget").get<double>(),
                         c.at("seed").get<std::uint64_t>(), c.at("oracle_filter").get<bool>(),
                         metrics_from_json(c.at("metrics"))});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string curves_csv(const SweepReport& r) {
  std::ostringstream out;
  out << "policy,budget,cells,online_mean,online_variance,final_mean,final_variance,calls_mean\n";
  for (const auto& p : r.policies) {
    for (const auto& c : p.curve) {
      const auto& s = c.summary;
      out << p.policy << ',' << format_real(c.budget) << ',' << s.cells << ',' << format_real(s.online_accuracy.mean)
          << ',' << format_real(s.online_accuracy.variance) << ',' << format_real(s.final_accuracy.mean) << ','
          << format_real(s.final_accuracy.variance) << ',' << format_real(s.teacher_calls.mean) << '\n';
    }
  }
  return out.str();
}

std::string cells_csv(const SweepReport& r) {
  std::ostringstream out;
  out << "policy,budget,seed,oracle_filter,online_accuracy,final_accuracy,teacher_calls,retrain_count\n";
  for (const auto& c : r.cells) {
    out << c.policy << ',' << format_real(c.budget) << ',' << c.seed << ',' << (c.oracle_filter ? 1 : 0) << ','
        << format_real(c.metrics.online_accuracy) << ',' << format_real(c.metrics.final_accuracy) << ','
        << c.metrics.teacher_calls << ',' << c.metrics.retrain_count << '\n';
  }
  return out.str();
}

}  // namespace ncache
