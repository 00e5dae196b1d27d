// Acceptance suite: one line per primary criterion. Exit status is nonzero
// when any criterion fails; skipped criteria do not fail the run.

#include "ncache/cli.hpp"
#include "ncache/criteria.hpp"
#include "ncache/dataset.hpp"
#include "ncache/metrics.hpp"
#include "ncache/rng.hpp"
#include "ncache/simulator.hpp"
#include "ncache/sweep.hpp"
#include "ncache/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace ncache;
namespace fs = std::filesystem;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Dataset synthetic(double teacher_accuracy, std::uint64_t seed, std::size_t online = 5000,
                  TeacherNoise noise = TeacherNoise::Uniform) {
  SyntheticSpec s;
  s.num_classes = 3;
  s.teacher_accuracy = teacher_accuracy;
  s.online_count = online;
  s.test_count = 1000;
  s.noise = noise;
  s.seed = seed;
  return generate_synthetic(s);
}

std::vector<Instance> scored_window(const Dataset& ds, const RunConfig& c) {
  const auto stream = make_stream(ds, RunSeeds::derive(c.seed).stream);
  std::vector<Instance> out;
  for (std::size_t pos = c.warmup_size; pos < stream.size(); ++pos) out.push_back(ds.online[stream.order[pos]]);
  return out;
}

Verdict stats_sample_slice() {
  // hand-derived: 7 of 10 correct; margins 12 11 10 13 9 12 10 (correct), 4 5 3 (wrong)
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = load_dataset(fs::path(NCACHE_FIXTURES) / "sample_slice");
  const auto s = dataset_stats(ds);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = std::abs(s.teacher_accuracy - 0.7) < 1e-12 && std::abs(s.avg_margin - 8.9) < 1e-9 &&
                  s.avg_margin_when_wrong && std::abs(*s.avg_margin_when_wrong - 4.0) < 1e-9 && secs < 10.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "accuracy " + fmt("%.3f", s.teacher_accuracy) + ", margin " + fmt("%.2f", s.avg_margin) +
              ", margin when wrong " + fmt("%.2f", s.avg_margin_when_wrong.value_or(NAN)) + " (expected 0.700/8.90/4.00)"};
}

Verdict budget_endpoints() {
  int checks = 0;
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dataset ds = synthetic(0.85, 100 + seed, 1200);
    for (double cost : {1.0, 2.5}) {
      for (auto regime : {Regime::Retrain, Regime::NoRetrain}) {
        for (auto kind : {PolicyKind::FrontLoading, PolicyKind::Random, PolicyKind::Margin, PolicyKind::Committee}) {
          RunConfig c;
          c.regime = regime;
          c.retrain_frequency = 250;
          c.warmup_size = 100;
          c.cost_per_query = cost;
          c.policy.kind = kind;
          c.policy.mode = ThresholdMode::Adaptive;
          c.seed = seed;
          c.budget = 0.0;
          const auto zero = run_experiment(ds, c);
          const auto window = scored_window(ds, c);
          ++checks;
          if (online_accuracy(zero) != evaluate(zero.initial_student, window)) ++failures;
          if (kind != PolicyKind::FrontLoading) continue;
          c.budget = static_cast<double>(window.size()) * cost;
          const auto full = run_experiment(ds, c);
          ++checks;
          if (online_accuracy(full) != instance_stats(window, ds.num_classes()).teacher_accuracy) ++failures;
        }
      }
    }
  }
  return {failures == 0 ? Outcome::Pass : Outcome::Fail,
          std::to_string(checks - failures) + "/" + std::to_string(checks) + " exact equalities hold"};
}

Verdict ledger_safety() {
  const Dataset ds = synthetic(0.8, 7, 500);
  Rng rng(2024);
  const PolicyKind kinds[] = {PolicyKind::FrontLoading, PolicyKind::Random,    PolicyKind::Margin,
                              PolicyKind::Entropy,      PolicyKind::Committee, PolicyKind::Coreset};
  int cells = 0;
  int violations = 0;
  for (; cells < 120; ++cells) {
    RunConfig c;
    c.policy.kind = kinds[uniform_index(rng, 6)];
    c.regime = uniform01(rng) < 0.5 ? Regime::Retrain : Regime::NoRetrain;
    c.policy.mode = c.regime == Regime::NoRetrain || uniform01(rng) < 0.5 ? ThresholdMode::Adaptive
                                                                          : ThresholdMode::Fixed;
    c.cost_per_query = 0.5 + 2.0 * uniform01(rng);
    c.budget = std::floor(600.0 * uniform01(rng) * 100.0) / 100.0;
    c.retrain_frequency = 25 + uniform_index(rng, 200);
    c.warmup_size = 20 + uniform_index(rng, 80);
    c.seed = uniform_index(rng, 1000);
    const auto r = run_experiment(ds, c);
    double logged = 0.0;
    for (const auto& ch : r.spend_log) logged += ch.cost;
    std::size_t calls = 0;
    for (const auto& e : r.trace) calls += !e.warmup && e.teacher_called;
    if (!(r.spent <= c.budget) || std::abs(logged - r.spent) > 1e-9 || calls != r.spend_log.size()) ++violations;
  }
  return {violations == 0 ? Outcome::Pass : Outcome::Fail,
          std::to_string(cells) + " randomized cells, " + std::to_string(violations) + " violations"};
}

Verdict adaptive_spend() {
  std::vector<Dataset> data;
  for (std::uint64_t s = 0; s < 5; ++s) data.push_back(synthetic(0.9, 300 + s));
  std::string detail;
  bool ok = true;
  for (auto kind : {PolicyKind::Margin, PolicyKind::Entropy}) {
    for (double ratio : {0.1, 0.3, 0.5}) {
      double calls = 0.0;
      double target = 0.0;
      for (std::uint64_t s = 0; s < 5; ++s) {
        RunConfig c;
        c.regime = Regime::NoRetrain;
        c.warmup_size = 200;
        c.policy.kind = kind;
        c.policy.mode = ThresholdMode::Adaptive;
        c.seed = s;
        c.budget = ratio * static_cast<double>(data[s].online.size() - c.warmup_size);
        target = c.budget / c.cost_per_query;
        calls += static_cast<double>(run_experiment(data[s], c).spend_log.size()) / 5.0;
      }
      const double rel = calls / target - 1.0;
      ok = ok && std::abs(rel) <= 0.05;
      detail += to_string(kind) + "@" + fmt("%.1f", ratio) + " " + fmt("%+.1f%%", 100.0 * rel) + " ";
    }
  }
  detail.pop_back();
  return {ok ? Outcome::Pass : Outcome::Fail, "mean calls vs b/c: " + detail};
}

Verdict policy_ordering() {
  std::vector<Dataset> data;
  for (std::uint64_t s = 0; s < 5; ++s) data.push_back(synthetic(0.9, 500 + s));
  std::string detail;
  bool ok = true;
  for (auto regime : {Regime::Retrain, Regime::NoRetrain}) {
    double mean[3] = {0, 0, 0};
    const PolicyKind kinds[] = {PolicyKind::Random, PolicyKind::Margin, PolicyKind::Committee};
    for (std::uint64_t s = 0; s < 5; ++s) {
      ExperimentConfig cfg;
      cfg.budgets = {480, 960, 1440};
      cfg.seeds = {s};
      cfg.base.regime = regime;
      cfg.base.retrain_frequency = 500;
      cfg.base.warmup_size = 200;
      cfg.base.committee_prefill_step = 20;
      cfg.policies.clear();
      for (auto k : kinds) {
        PolicyConfig p;
        p.kind = k;
        p.mode = ThresholdMode::Adaptive;
        cfg.policies.push_back(p);
      }
      const auto report = build_report(data[s], cfg, run_sweep(data[s], cfg, 0));
      for (int i = 0; i < 3; ++i) mean[i] += report.policies[static_cast<std::size_t>(i)].online_auc / 5.0;
    }
    const bool regime_ok = mean[1] >= mean[0] + 0.01 && mean[2] >= mean[0] + 0.01;
    ok = ok && regime_ok;
    detail += to_string(regime) + ": random " + fmt("%.4f", mean[0]) + " margin " + fmt("%.4f", mean[1]) + " qbc " +
              fmt("%.4f", mean[2]) + "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok ? Outcome::Pass : Outcome::Fail, detail};
}

double brute_entropy(const std::vector<double>& lp) {
  long double z = 0;
  for (double x : lp) z += std::exp(static_cast<long double>(x));
  long double h = 0;
  for (double x : lp) {
    const long double p = std::exp(static_cast<long double>(x)) / z;
    if (p > 0) h -= p * std::log(p);
  }
  return static_cast<double>(h);
}

Verdict criterion_oracles() {
  Rng rng(99);
  double worst_m = 0.0;
  double worst_h = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto k = 2 + uniform_index(rng, 9);
    std::vector<double> lp(k);
    double z = 0.0;
    for (auto& x : lp) {
      x = 3.0 * standard_normal(rng);
      z += std::exp(x);
    }
    for (auto& x : lp) x -= std::log(z);
    std::vector<double> sorted = lp;
    std::sort(sorted.rbegin(), sorted.rend());
    const VectorXd e = Eigen::Map<const VectorXd>(lp.data(), static_cast<Eigen::Index>(k));
    worst_m = std::max(worst_m, std::abs(margin(e) - (sorted[0] - sorted[1])));
    worst_h = std::max(worst_h, std::abs(entropy(e) - brute_entropy(lp)));
  }

  std::vector<TrainingExample> data;
  for (int i = 0; i < 60; ++i) {
    TrainingExample ex;
    ex.features = VectorXd::NullaryExpr(6, [&] { return standard_normal(rng); });
    ex.target = softmax(VectorXd(VectorXd::NullaryExpr(4, [&] { return 2.0 * standard_normal(rng); })));
    data.push_back(ex);
  }
  const MatrixXd w = MatrixXd::NullaryExpr(4, 7, [&] { return 0.5 * standard_normal(rng); });
  const MatrixXd g = cross_entropy_gradient(w, data, 1e-3);
  MatrixXd fd(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      MatrixXd a = w;
      MatrixXd b = w;
      a(i, j) += 1e-5;
      b(i, j) -= 1e-5;
      fd(i, j) = (cross_entropy_loss(a, data, 1e-3) - cross_entropy_loss(b, data, 1e-3)) / 2e-5;
    }
  }
  const double rel = (g - fd).norm() / fd.norm();
  const bool ok = worst_m <= 1e-9 && worst_h <= 1e-9 && rel <= 1e-4;
  return {ok ? Outcome::Pass : Outcome::Fail, "max margin error " + fmt("%.1e", worst_m) + ", max entropy error " +
                                                  fmt("%.1e", worst_h) + ", gradient relative error " + fmt("%.1e", rel)};
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "ncache-acceptance-determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  save_dataset(synthetic(0.85, 42, 1500), root / "data");
  {
    std::ofstream cfg(root / "cfg.json");
    cfg << R"({"dataset": "data", "budgets": [100, 300], "seeds": [0, 1], "retrain_frequency": 300,
  "warmup_size": 100, "oracle_analysis": true,
  "policies": [{"kind": "random"}, {"kind": "margin", "mode": "adaptive"}, {"kind": "entropy"},
               {"kind": "qbc", "mode": "adaptive"}, {"kind": "coreset"}, {"kind": "front_loading"}]})";
  }
  std::ostringstream sink;
  const int a = run_cli({"sweep", "-c", (root / "cfg.json").string(), "-o", (root / "a").string(), "-j", "4"}, sink, sink);
  const int b = run_cli({"sweep", "-c", (root / "cfg.json").string(), "-o", (root / "b").string(), "-j", "1"}, sink, sink);
  if (a != 0 || b != 0) return {Outcome::Fail, "sweep exited with " + std::to_string(a) + "/" + std::to_string(b)};
  std::size_t files = 0;
  std::size_t differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    if (slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"))) ++differing;
  }
  const bool ok = differing == 0 && files > 40;
  return {ok ? Outcome::Pass : Outcome::Fail,
          std::to_string(files) + " trace and report files, " + std::to_string(differing) + " differ"};
}

Verdict oracle_filter_direction() {
  double delta_final = 0.0;
  double delta_online = 0.0;
  int pairs = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Dataset ds = synthetic(0.7, 700 + s, 5000, TeacherNoise::Cyclic);
    ExperimentConfig cfg;
    cfg.budgets = {480, 960, 1440};
    cfg.seeds = {s};
    cfg.base.retrain_frequency = 500;
    cfg.base.warmup_size = 200;
    cfg.oracle_analysis = true;
    cfg.policies = {PolicyConfig{}};
    cfg.policies[0].kind = PolicyKind::FrontLoading;
    const auto report = build_report(ds, cfg, run_sweep(ds, cfg, 0));
    const auto& o = report.policies.front().oracle;
    if (!o) return {Outcome::Fail, "no paired runs"};
    delta_final += o->final_accuracy / 5.0;
    delta_online += o->online / 5.0;
    ++pairs;
  }
  return {delta_final > 0.0 ? Outcome::Pass : Outcome::Fail,
          "mean delta final " + fmt("%+.4f", delta_final) + ", online " + fmt("%+.4f", delta_online) + " over " +
              std::to_string(pairs) + " seeds"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {"teacher-statistics/sample-slice", stats_sample_slice},
      {"teacher-statistics/released-data",
       [] { return Verdict{Outcome::Skip, "released annotations not checked in; run by the acceptance_released test"}; }},
      {"budget-limit-endpoints", budget_endpoints},
      {"ledger-safety", ledger_safety},
      {"adaptive-spend", adaptive_spend},
      {"policy-ordering/synthetic", policy_ordering},
      {"policy-ordering/released-isear",
       [] { return Verdict{Outcome::Skip, "released data required; run by the acceptance_released test"}; }},
      {"criterion-oracles", criterion_oracles},
      {"determinism", determinism},
      {"oracle-filter-direction", oracle_filter_direction},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::printf("%s %-34s %s [%.1fs]\n", tag, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += v.outcome == Outcome::Fail;
  }
  return failed == 0 ? 0 : 1;
}
