#pragma once

// Synthetic annotated datasets for desk-scale experiments: Gaussian class
// clusters and a simulated teacher with a configured accuracy whose wrong
// labels carry smaller margins than its correct ones.

#include "ncache/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace ncache {

enum class TeacherNoise {
  Uniform,  // wrong label drawn uniformly from the other classes
  Cyclic,   // wrong label is (gold + 1) mod K
};

struct SyntheticSpec {
  std::string name = "synthetic";
  int num_classes = 2;
  Eigen::Index feature_dim = 8;
  Eigen::Index embedding_dim = 16;
  /// Distance of each class mean from the origin, in noise standard deviations.
  double separation = 2.0;
  double teacher_accuracy = 0.9;
  /// Mean teacher margin (nats) on correct and on wrong labels.
  double correct_margin = 8.0;
  double wrong_margin = 3.0;
  TeacherNoise noise = TeacherNoise::Uniform;
  std::size_t online_count = 4000;
  std::size_t test_count = 1000;
  std::uint64_t seed = 0;

  /// Throws ValidationError for infeasible specs.
  void validate() const;
};

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);

Dataset generate_synthetic(const SyntheticSpec& spec);

struct SynthCheck {
  double target_accuracy = 0.0;
  double realized_accuracy = 0.0;
  double mean_margin_correct = 0.0;
  std::optional<double> mean_margin_wrong;
  bool accuracy_ok = false;
  bool calibration_ok = false;

  bool passed() const { return accuracy_ok && calibration_ok; }
};

/// Realized teacher accuracy within +/-0.01 of target; wrong-label mean
/// margin strictly below correct-label mean margin (or no wrong labels).
SynthCheck check_synthetic(const Dataset& dataset, double target_accuracy);

}  // namespace ncache
