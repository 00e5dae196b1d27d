#pragma once

// Reference student: a linear softmax classifier over precomputed feature
// vectors, retrained from zero weights on every call.

#include "ncache/dataset.hpp"
#include "ncache/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ncache {

enum class LabelMode { Soft, Hard };

std::string to_string(LabelMode mode);
LabelMode label_mode_from_string(const std::string& s);

struct TrainConfig {
  int max_epochs = 30;
  int patience = 5;
  double validation_fraction = 0.1;
  LabelMode label_mode = LabelMode::Soft;
  double learning_rate = 0.1;
  int batch_size = 32;
  double l2_penalty = 1e-4;
  std::uint64_t seed = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One accumulated teacher label. `target` is a probability vector over K
/// classes: softmax of the teacher log probs (soft) or one-hot (hard).
struct TrainingExample {
  VectorXd features;
  VectorXd target;
  double weight = 1.0;
};

TrainingExample make_training_example(const Instance& instance, LabelMode mode);

struct TrainMeta {
  int epochs_run = 0;
  double best_validation_loss = 0.0;
  double first_epoch_validation_loss = 0.0;
  std::uint64_t seed = 0;
  std::size_t training_size = 0;
  std::size_t validation_size = 0;
  /// Validation split floored to zero; early stopping used training loss.
  bool train_loss_fallback = false;

  friend bool operator==(const TrainMeta&, const TrainMeta&) = default;
};

struct StudentModel {
  /// K x (feature_dim + 1); the last column is the bias.
  MatrixXd weights;
  TrainMeta meta;

  static StudentModel zero(int num_classes, Eigen::Index feature_dim);

  int num_classes() const { return static_cast<int>(weights.rows()); }
  Eigen::Index feature_dim() const { return weights.cols() - 1; }
};

StudentModel train_student(std::span<const TrainingExample> data, const TrainConfig& config);

/// log softmax(W [x; 1]).
VectorXd predict(const StudentModel& model, const VectorXdRef& features);

inline ClassLabel predict_label(const StudentModel& model, const VectorXdRef& features) {
  return argmax(predict(model, features));
}

/// Fraction of instances whose predicted label equals gold.
double evaluate(const StudentModel& model, std::span<const Instance> instances);

/// Weighted mean cross-entropy plus 0.5 * l2 * ||W without bias||^2.
double cross_entropy_loss(const MatrixXd& weights, std::span<const TrainingExample> data, double l2_penalty);

/// Analytic gradient of cross_entropy_loss with respect to the weights.
MatrixXd cross_entropy_gradient(const MatrixXd& weights, std::span<const TrainingExample> data,
                                double l2_penalty);

nlohmann::json model_to_json(const StudentModel& model);
StudentModel model_from_json(const nlohmann::json& j);
void save_model(const StudentModel& model, const std::filesystem::path& path);
StudentModel load_model(const std::filesystem::path& path);

}  // namespace ncache
