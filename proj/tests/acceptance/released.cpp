// Checks against the released benchmark annotations. Looks for dataset
// directories under $NCACHE_DATA_DIR and exits 77 (skipped) when none exist.

#include "ncache/config.hpp"
#include "ncache/dataset.hpp"
#include "ncache/metrics.hpp"
#include "ncache/sweep.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

using namespace ncache;
namespace fs = std::filesystem;

namespace {

constexpr int kSkipped = 77;

struct Reference {
  const char* dir;
  double accuracy;
  double margin;
  std::optional<double> margin_when_wrong;
};

const Reference kReferences[] = {
    {"isear", 0.68, 10.0, 4.2},
    {"rt-polarity", 0.91, 15.4, std::nullopt},
    {"fever", 0.78, 9.2, std::nullopt},
    {"openbook", 0.80, 10.3, std::nullopt},
};

}  // namespace

int main() {
  const char* root = std::getenv(kDataDirEnv);
  if (root == nullptr || *root == '\0') {
    std::printf("SKIP released-data checks: $%s is not set\n", kDataDirEnv);
    return kSkipped;
  }
  int found = 0;
  int failed = 0;
  for (const auto& ref : kReferences) {
    const fs::path dir = fs::path(root) / ref.dir;
    if (!fs::exists(dir / "manifest.json")) {
      std::printf("SKIP teacher-statistics/%s: %s not found\n", ref.dir, dir.c_str());
      continue;
    }
    ++found;
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = dataset_stats(load_dataset(dir));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = std::abs(s.teacher_accuracy - ref.accuracy) <= 0.01 && std::abs(s.avg_margin - ref.margin) <= 0.3 &&
              secs < 10.0;
    if (ref.margin_when_wrong && s.avg_margin_when_wrong) {
      ok = ok && std::abs(*s.avg_margin_when_wrong - *ref.margin_when_wrong) <= 0.3;
    }
    failed += !ok;
    std::printf("%s teacher-statistics/%s accuracy %.3f (ref %.2f), margin %.2f (ref %.1f) [%.1fs]\n",
                ok ? "PASS" : "FAIL", ref.dir, s.teacher_accuracy, ref.accuracy, s.avg_margin, ref.margin, secs);
  }

  const fs::path isear = fs::path(root) / "isear";
  if (fs::exists(isear / "manifest.json")) {
    const Dataset ds = load_dataset(isear);
    ExperimentConfig cfg;
    cfg.budgets = {1000, 2000, 3000};
    cfg.seeds = {0, 1, 2};
    cfg.base.regime = Regime::NoRetrain;
    cfg.base.warmup_size = 100;
    cfg.policies.assign(2, PolicyConfig{});
    cfg.policies[0].kind = PolicyKind::Random;
    cfg.policies[1].kind = PolicyKind::Margin;
    cfg.policies[1].mode = ThresholdMode::Adaptive;
    const auto report = build_report(ds, cfg, run_sweep(ds, cfg, 0));
    const double random = report.policies[0].online_auc;
    const double ms = report.policies[1].online_auc;
    const bool ok = ms >= random;
    failed += !ok;
    std::printf("%s policy-ordering/released-isear no_retrain margin %.4f vs random %.4f\n", ok ? "PASS" : "FAIL", ms,
                random);
  } else {
    std::printf("SKIP policy-ordering/released-isear: %s not found\n", isear.c_str());
  }
  if (found == 0) return kSkipped;
  return failed == 0 ? 0 : 1;
}
