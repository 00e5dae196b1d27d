#include "helpers.hpp"
#include "ncache/criteria.hpp"

#include <doctest.h>

#include <set>

using namespace ncache;
using testing::fixture;

namespace {

std::vector<Instance> numbered(int n) {
  std::vector<Instance> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(testing::make_instance("n" + std::to_string(i), VectorXd::Constant(1, i), i % 2,
                                         log_softmax(VectorXd((VectorXd(2) << 1.0, 0.0).finished()))));
  }
  return out;
}

std::vector<std::string> ids(const std::vector<Instance>& v) {
  std::vector<std::string> out;
  for (const auto& i : v) out.push_back(i.id);
  return out;
}

void copy_fixture(const std::string& name, const std::filesystem::path& dst) {
  std::filesystem::copy(fixture(name), dst, std::filesystem::copy_options::recursive);
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("well-formed two-class file loads") {
    const Dataset ds = load_dataset(fixture("tiny"));
    CHECK(ds.num_classes() == 2);
    CHECK(ds.online.size() + ds.test.size() == 4);
    CHECK(ds.online[0].id == "t0");
    CHECK(ds.online[0].text == "a fine film");
    CHECK(ds.online[2].teacher.label() == ClassLabel{0});
  }

  TEST_CASE("wrong logprob count names the instance") {
    CHECK_THROWS_WITH_AS(load_dataset(fixture("bad_logprobs")), doctest::Contains("t2"), ValidationError);
  }

  TEST_CASE("invalid records are rejected with a location") {
    const auto dir = testing::scratch("invalid");
    const auto broken = [&](const std::string& line, const std::string& expect) {
      const auto d = dir / std::to_string(std::hash<std::string>{}(line));
      copy_fixture("tiny", d);
      auto text = testing::slurp(d / "online.jsonl");
      text = text.substr(0, text.rfind('\n', text.size() - 2) + 1) + line + "\n";
      testing::spit(d / "online.jsonl", text);
      CHECK_THROWS_WITH_AS(load_dataset(d), doctest::Contains(expect.c_str()), ValidationError);
    };
    broken(R"({"id":"t3","features":[1,2],"embedding":[1,0],"gold":0,"teacher_logprobs":[-0.1,-2],"x":1})", "x");
    broken(R"({"id":"t3","features":[1],"embedding":[1,0],"gold":0,"teacher_logprobs":[-0.1,-2]})", "features");
    broken(R"({"id":"t3","features":[1,2],"embedding":[0,0],"gold":0,"teacher_logprobs":[-0.1,-2]})", "embedding");
    broken(R"({"id":"t3","features":[1,2],"embedding":[1,0],"gold":5,"teacher_logprobs":[-0.1,-2]})", "gold");
    broken(R"({"id":"t3","features":[1,2],"embedding":[1,0],"gold":0,"teacher_logprobs":[0.5,-2]})", "teacher_logprobs");
    broken(R"({"id":"t0","features":[1,2],"embedding":[1,0],"gold":0,"teacher_logprobs":[-0.1,-2]})", "t0");
    broken(R"({"id":"t3", "features":)", "online.jsonl:4");
  }

  TEST_CASE("manifest counts must match") {
    const auto d = testing::scratch("counts") / "ds";
    copy_fixture("tiny", d);
    auto m = testing::slurp(d / "manifest.json");
    m.replace(m.find("\"online\": 4"), 11, "\"online\": 5");
    testing::spit(d / "manifest.json", m);
    CHECK_THROWS_AS(load_dataset(d), ValidationError);
  }

  TEST_CASE("save and load round-trip byte for byte") {
    const auto dir = testing::scratch("roundtrip");
    const Dataset a = testing::small_synthetic(40, 10);
    save_dataset(a, dir / "a");
    const Dataset b = load_dataset(dir / "a");
    save_dataset(b, dir / "b");
    for (const char* f : {"manifest.json", "online.jsonl", "test.jsonl"}) {
      CHECK(testing::slurp(dir / "a" / f) == testing::slurp(dir / "b" / f));
    }
    REQUIRE(b.online.size() == a.online.size());
    CHECK(b.online[7].features == a.online[7].features);
    CHECK(b.online[7].teacher.logprobs == a.online[7].teacher.logprobs);
  }

  TEST_CASE("split sizes and determinism") {
    const auto all = numbered(10);
    const auto [online, test] = split_online_test(all, 0.8, 3);
    CHECK(online.size() == 8);
    CHECK(test.size() == 2);
    CHECK_THROWS_AS(split_online_test(all, 1.0, 3), ValidationError);
    const auto again = split_online_test(all, 0.8, 3);
    CHECK(ids(again.first) == ids(online));
    CHECK(ids(again.second) == ids(test));
    std::set<std::string> seen;
    for (const auto& v : {online, test}) {
      for (const auto& i : v) seen.insert(i.id);
    }
    CHECK(seen.size() == 10);
  }

  TEST_CASE("stream permutation") {
    Dataset ds;
    ds.manifest.class_names = {"a", "b"};
    ds.online = numbered(12);
    CHECK(make_stream(ds, 1).order == make_stream(ds, 1).order);
    CHECK(make_stream(ds, 1).order != make_stream(ds, 2).order);
    auto sorted = make_stream(ds, 5).order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
    ds.online = numbered(1);
    CHECK(make_stream(ds, 9).order == std::vector<std::size_t>{0});
  }

  TEST_CASE("teacher statistics on the sample slice") {
    // hand-built: 7 of 10 correct, correct margins 12 11 10 13 9 12 10, wrong 4 5 3
    const Dataset ds = load_dataset(fixture("sample_slice"));
    CHECK(ds.num_classes() == 7);
    const auto s = dataset_stats(ds);
    CHECK(s.instances == 10);
    CHECK(s.teacher_accuracy == doctest::Approx(0.7));
    CHECK(s.avg_margin == doctest::Approx(8.9));
    REQUIRE(s.avg_margin_when_wrong);
    CHECK(*s.avg_margin_when_wrong == doctest::Approx(4.0));
    std::size_t gold_total = 0;
    for (auto c : s.gold_counts) gold_total += c;
    CHECK(gold_total == 10);
  }

  TEST_CASE("perfect teacher has no wrong-margin statistic") {
    auto all = numbered(6);
    for (auto& i : all) i.gold = i.teacher.label();
    const auto s = instance_stats(all, 2);
    CHECK(s.teacher_accuracy == 1.0);
    CHECK_FALSE(s.avg_margin_when_wrong.has_value());
    CHECK(stats_to_json(s, {"a", "b"})["avg_margin_when_wrong"].is_null());
  }
}
