#include "ncache/synth.hpp"

#include "ncache/criteria.hpp"
#include "ncache/rng.hpp"

#include <cmath>
#include <cstdio>
#include <set>

namespace ncache {

namespace {

// Providers return at most this many ranked classes; the rest get the filler.
constexpr Eigen::Index kTopLogprobs = 5;

VectorXd gaussian_vector(Eigen::Index n, Rng& rng) {
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = standard_normal(rng);
  return v;
}

VectorXd teacher_logprobs(int k, ClassLabel predicted, double margin, Rng& rng) {
  VectorXd logits = gaussian_vector(k, rng);
  logits(predicted.index) = -std::numeric_limits<double>::infinity();
  logits(predicted.index) = logits.maxCoeff() + margin;
  VectorXd logp = log_softmax(logits);
  if (k > kTopLogprobs) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return logp(a) > logp(b); });
    for (std::size_t r = kTopLogprobs; r < order.size(); ++r) logp(order[r]) = kTeacherFiller;
  }
  return logp;
}

std::string noise_name(TeacherNoise n) { return n == TeacherNoise::Uniform ? "uniform" : "cyclic"; }

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ValidationError("synthetic: num_classes must be >= 2");
  if (feature_dim < 1 || embedding_dim < 1) throw ValidationError("synthetic: dimensions must be >= 1");
  if (!(separation >= 0.0)) throw ValidationError("synthetic: separation must be >= 0");
  if (!(teacher_accuracy > 0.0 && teacher_accuracy <= 1.0)) {
    throw ValidationError("synthetic: teacher_accuracy must lie in (0, 1]");
  }
  if (!(correct_margin > 0.0) || !(wrong_margin > 0.0)) throw ValidationError("synthetic: margins must be > 0");
  if (teacher_accuracy < 1.0 && !(wrong_margin < correct_margin)) {
    throw ValidationError("synthetic: wrong_margin must be below correct_margin");
  }
  if (online_count < 1) throw ValidationError("synthetic: online_count must be >= 1");
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys{"name",          "num_classes",      "feature_dim",    "embedding_dim",
                                           "separation",    "teacher_accuracy", "correct_margin", "wrong_margin",
                                           "noise",         "online_count",     "test_count",     "seed"};
  if (!j.is_object()) throw ValidationError("synthetic spec: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ValidationError("synthetic spec: unknown key '" + key + "'");
  }
  SyntheticSpec s;
  try {
    s.name = j.value("name", s.name);
    s.num_classes = j.value("num_classes", s.num_classes);
    s.feature_dim = j.value("feature_dim", s.feature_dim);
    s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
    s.separation = j.value("separation", s.separation);
    s.teacher_accuracy = j.value("teacher_accuracy", s.teacher_accuracy);
    s.correct_margin = j.value("correct_margin", s.correct_margin);
    s.wrong_margin = j.value("wrong_margin", s.wrong_margin);
    const std::string noise = j.value("noise", noise_name(s.noise));
    if (noise == "uniform") {
      s.noise = TeacherNoise::Uniform;
    } else if (noise == "cyclic") {
      s.noise = TeacherNoise::Cyclic;
    } else {
      throw ValidationError("synthetic spec: noise must be 'uniform' or 'cyclic'");
    }
    s.online_count = j.value("online_count", s.online_count);
    s.test_count = j.value("test_count", s.test_count);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json synthetic_spec_to_json(const SyntheticSpec& s) {
  return {{"name", s.name},
          {"num_classes", s.num_classes},
          {"feature_dim", s.feature_dim},
          {"embedding_dim", s.embedding_dim},
          {"separation", s.separation},
          {"teacher_accuracy", s.teacher_accuracy},
          {"correct_margin", s.correct_margin},
          {"wrong_margin", s.wrong_margin},
          {"noise", noise_name(s.noise)},
          {"online_count", s.online_count},
          {"test_count", s.test_count},
          {"seed", s.seed}};
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int k = spec.num_classes;
  const Eigen::Index d = spec.feature_dim;

  MatrixXd means(d, k);
  for (int c = 0; c < k; ++c) {
    VectorXd dir = gaussian_vector(d, rng);
    means.col(c) = spec.separation * dir / dir.norm();
  }
  const MatrixXd projection = MatrixXd::NullaryExpr(spec.embedding_dim, d, [&] { return standard_normal(rng); }) /
                              std::sqrt(static_cast<double>(d));

  const std::size_t total = spec.online_count + spec.test_count;
  const auto n_correct = static_cast<std::size_t>(std::llround(spec.teacher_accuracy * static_cast<double>(total)));
  const auto order = random_permutation(total, rng);
  std::vector<bool> correct(total, false);
  for (std::size_t i = 0; i < n_correct; ++i) correct[order[i]] = true;

  std::vector<Instance> all;
  all.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Instance inst;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%06zu", spec.name.c_str(), i);
    inst.id = id;
    inst.gold = ClassLabel{static_cast<int>(i % static_cast<std::size_t>(k))};
    inst.features = means.col(inst.gold.index) + gaussian_vector(d, rng);
    do {
      inst.embedding = projection * inst.features + 0.1 * gaussian_vector(spec.embedding_dim, rng);
    } while (!(inst.embedding.norm() > 0.0));

    ClassLabel predicted = inst.gold;
    double mean_margin = spec.correct_margin;
    if (!correct[i]) {
      mean_margin = spec.wrong_margin;
      if (spec.noise == TeacherNoise::Cyclic) {
        predicted = ClassLabel{(inst.gold.index + 1) % k};
      } else {
        const auto offset = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(k - 1))) + 1;
        predicted = ClassLabel{(inst.gold.index + offset) % k};
      }
    }
    const double m = mean_margin * (0.5 + uniform01(rng));
    inst.teacher.logprobs = teacher_logprobs(k, predicted, m, rng);
    all.push_back(std::move(inst));
  }

  Dataset ds;
  ds.manifest.name = spec.name;
  for (int c = 0; c < k; ++c) ds.manifest.class_names.push_back("class" + std::to_string(c));
  ds.manifest.feature_dim = d;
  ds.manifest.embedding_dim = spec.embedding_dim;
  ds.manifest.counts = {spec.online_count, spec.test_count};
  ds.manifest.extra["generator"] = synthetic_spec_to_json(spec);
  auto [online, test] = split_online_test(all, spec.online_count, mix_seed(spec.seed, 7));
  ds.online = std::move(online);
  ds.test = std::move(test);
  return ds;
}

SynthCheck check_synthetic(const Dataset& dataset, double target_accuracy) {
  SynthCheck c;
  c.target_accuracy = target_accuracy;
  double sum_correct = 0.0;
  double sum_wrong = 0.0;
  std::size_t n_correct = 0;
  std::size_t n_wrong = 0;
  for (const auto* part : {&dataset.online, &dataset.test}) {
    for (const auto& inst : *part) {
      const double m = margin(inst.teacher.logprobs);
      if (inst.teacher_correct()) {
        sum_correct += m;
        ++n_correct;
      } else {
        sum_wrong += m;
        ++n_wrong;
      }
    }
  }
  const std::size_t n = n_correct + n_wrong;
  c.realized_accuracy = n == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n);
  c.mean_margin_correct = n_correct == 0 ? 0.0 : sum_correct / static_cast<double>(n_correct);
  if (n_wrong > 0) c.mean_margin_wrong = sum_wrong / static_cast<double>(n_wrong);
  c.accuracy_ok = std::abs(c.realized_accuracy - target_accuracy) <= 0.01;
  c.calibration_ok = !c.mean_margin_wrong || *c.mean_margin_wrong < c.mean_margin_correct;
  return c;
}

}  // namespace ncache
