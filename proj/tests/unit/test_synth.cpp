#include "helpers.hpp"
#include "ncache/student.hpp"

#include <doctest.h>

#include <cmath>

using namespace ncache;

TEST_SUITE("synth") {
  TEST_CASE("realised teacher accuracy hits the target") {
    SyntheticSpec spec;
    spec.num_classes = 5;
    spec.online_count = 8000;
    spec.test_count = 2000;
    spec.teacher_accuracy = 0.9;
    const Dataset ds = generate_synthetic(spec);
    // count argmax matches directly
    std::size_t hits = 0;
    for (const auto* part : {&ds.online, &ds.test}) {
      for (const auto& i : *part) {
        Eigen::Index best = 0;
        i.teacher.logprobs.maxCoeff(&best);
        hits += best == i.gold.index;
      }
    }
    CHECK(std::abs(hits / 10000.0 - 0.9) <= 0.01);
    const auto check = check_synthetic(ds, 0.9);
    CHECK(check.passed());
    REQUIRE(check.mean_margin_wrong);
    CHECK(*check.mean_margin_wrong < check.mean_margin_correct);
  }

  TEST_CASE("indistinguishable clusters are learned at chance") {
    SyntheticSpec spec;
    spec.num_classes = 4;
    spec.separation = 0.0;
    spec.online_count = 3000;
    spec.test_count = 2000;
    const Dataset ds = generate_synthetic(spec);
    std::vector<TrainingExample> data;
    for (const auto& i : ds.online) {
      auto ex = make_training_example(i, LabelMode::Hard);
      ex.target.setZero();
      ex.target(i.gold.index) = 1.0;
      data.push_back(std::move(ex));
    }
    const double acc = evaluate(train_student(data, TrainConfig{}), ds.test);
    CHECK(std::abs(acc - 0.25) < 0.05);
  }

  TEST_CASE("same spec and seed give identical files") {
    SyntheticSpec spec;
    spec.online_count = 200;
    spec.test_count = 50;
    spec.seed = 17;
    const auto dir = testing::scratch("synth-det");
    save_dataset(generate_synthetic(spec), dir / "a");
    save_dataset(generate_synthetic(spec), dir / "b");
    for (const char* f : {"manifest.json", "online.jsonl", "test.jsonl"}) {
      CHECK(testing::slurp(dir / "a" / f) == testing::slurp(dir / "b" / f));
    }
    spec.seed = 18;
    save_dataset(generate_synthetic(spec), dir / "c");
    CHECK(testing::slurp(dir / "a" / "online.jsonl") != testing::slurp(dir / "c" / "online.jsonl"));
  }

  TEST_CASE("classes outside the top five get the filler") {
    SyntheticSpec spec;
    spec.num_classes = 8;
    spec.online_count = 50;
    spec.test_count = 10;
    const Dataset ds = generate_synthetic(spec);
    for (const auto& i : ds.online) CHECK((i.teacher.logprobs.array() == kTeacherFiller).count() == 3);
  }

  TEST_CASE("cyclic noise shifts wrong labels by one") {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.noise = TeacherNoise::Cyclic;
    spec.teacher_accuracy = 0.7;
    spec.online_count = 300;
    spec.test_count = 0;
    for (const auto& i : generate_synthetic(spec).online) {
      if (!i.teacher_correct()) CHECK(i.teacher.label().index == (i.gold.index + 1) % 3);
    }
  }

  TEST_CASE("infeasible specs are rejected") {
    SyntheticSpec spec;
    spec.teacher_accuracy = 1.2;
    CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
    spec = SyntheticSpec{};
    spec.num_classes = 1;
    CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);
    CHECK_THROWS_AS(synthetic_spec_from_json(nlohmann::json{{"noise", "pink"}}), ValidationError);
  }
}
