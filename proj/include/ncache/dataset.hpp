#pragma once

#include "ncache/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ncache {

/// Recorded teacher soft label. Values are natural-log probabilities, with
/// kTeacherFiller for classes outside the provider's top-5. Stored verbatim.
struct TeacherDistribution {
  VectorXd logprobs;

  ClassLabel label() const { return argmax(logprobs); }
};

/// One stream item.
struct Instance {
  std::string id;
  std::optional<std::string> text;
  VectorXd features;
  VectorXd embedding;
  ClassLabel gold;
  TeacherDistribution teacher;

  bool teacher_correct() const { return teacher.label() == gold; }
};

struct SplitCounts {
  std::size_t online = 0;
  std::size_t test = 0;
};

struct Manifest {
  std::string name;
  std::vector<std::string> class_names;
  Eigen::Index feature_dim = 0;
  Eigen::Index embedding_dim = 0;
  SplitCounts counts;
  /// Fixed split membership. When present the files must agree with it.
  std::optional<std::pair<std::vector<std::string>, std::vector<std::string>>> split_ids;
  /// Additional manifest keys (encoder id, generator settings), kept as-is.
  nlohmann::json extra = nlohmann::json::object();
};

struct Dataset {
  Manifest manifest;
  std::vector<Instance> online;
  std::vector<Instance> test;

  int num_classes() const { return static_cast<int>(manifest.class_names.size()); }
  const std::vector<std::string>& class_names() const { return manifest.class_names; }
};

/// Seeded visiting order over the online portion.
struct StreamOrder {
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;

  std::size_t size() const { return order.size(); }
};

/// Loads `manifest.json`, `online.jsonl` and `test.jsonl` from `dir` and
/// validates every invariant. Throws ValidationError with `file:line` context.
Dataset load_dataset(const std::filesystem::path& dir);

/// Canonical serialization; the three files are written atomically.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

nlohmann::ordered_json instance_to_json(const Instance& instance);
std::string manifest_to_string(const Manifest& manifest);

/// Checks every dataset invariant; throws ValidationError on the first failure.
void validate(const Dataset& dataset);

/// Seeded split with |online| = round(ratio * total).
std::pair<std::vector<Instance>, std::vector<Instance>> split_online_test(
    std::span<const Instance> instances, double ratio, std::uint64_t seed);

/// Seeded split with an explicit online count (custom split sizes).
std::pair<std::vector<Instance>, std::vector<Instance>> split_online_test(
    std::span<const Instance> instances, std::size_t online_count, std::uint64_t seed);

StreamOrder make_stream(const Dataset& dataset, std::uint64_t seed);

struct DatasetStats {
  std::size_t instances = 0;
  double teacher_accuracy = 0.0;
  double avg_margin = 0.0;
  /// Absent when the teacher is never wrong.
  std::optional<double> avg_margin_when_wrong;
  std::vector<std::size_t> gold_counts;
  std::vector<std::size_t> teacher_counts;
};

/// Teacher statistics over online and test together.
DatasetStats dataset_stats(const Dataset& dataset);

/// Same statistics over an arbitrary instance list.
DatasetStats instance_stats(std::span<const Instance> instances, int num_classes);

nlohmann::json stats_to_json(const DatasetStats& stats,
                             const std::vector<std::string>& class_names);

}  // namespace ncache
