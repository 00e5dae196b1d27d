#include "ncache/student.hpp"

#include "ncache/io.hpp"
#include "ncache/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace ncache {

namespace {

struct DesignMatrix {
  MatrixXd x;        // n x (d + 1), last column ones
  MatrixXd targets;  // n x K
  VectorXd weights;  // n
};

DesignMatrix design(std::span<const TrainingExample> data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const Eigen::Index d = data.front().features.size();
  const Eigen::Index k = data.front().target.size();
  DesignMatrix m{MatrixXd(n, d + 1), MatrixXd(n, k), VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& ex = data[static_cast<std::size_t>(i)];
    m.x.row(i).head(d) = ex.features.transpose();
    m.x(i, d) = 1.0;
    m.targets.row(i) = ex.target.transpose();
    m.weights(i) = ex.weight;
  }
  return m;
}

MatrixXd row_log_softmax(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out.row(i) = log_softmax(logits.row(i).transpose()).transpose();
  return out;
}

double penalty(const MatrixXd& w, double l2) {
  return 0.5 * l2 * w.leftCols(w.cols() - 1).squaredNorm();
}

/// Weighted mean cross-entropy over the rows in `rows`, without penalty.
double data_loss(const MatrixXd& w, const DesignMatrix& m, std::span<const std::size_t> rows) {
  double total = 0.0;
  double weight_sum = 0.0;
  for (const auto r : rows) {
    const auto i = static_cast<Eigen::Index>(r);
    const VectorXd logp = log_softmax(w * m.x.row(i).transpose());
    total -= m.weights(i) * m.targets.row(i).dot(logp);
    weight_sum += m.weights(i);
  }
  return total / weight_sum;
}

MatrixXd batch_gradient(const MatrixXd& w, const DesignMatrix& m, std::span<const std::size_t> rows, double l2) {
  const auto b = static_cast<Eigen::Index>(rows.size());
  MatrixXd x(b, m.x.cols());
  MatrixXd t(b, m.targets.cols());
  VectorXd sw(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(j)]);
    x.row(j) = m.x.row(i);
    t.row(j) = m.targets.row(i);
    sw(j) = m.weights(i);
  }
  const MatrixXd p = row_log_softmax(x * w.transpose()).array().exp().matrix();
  MatrixXd grad = ((p - t).array().colwise() * sw.array()).matrix().transpose() * x / sw.sum();
  grad.leftCols(grad.cols() - 1) += l2 * w.leftCols(w.cols() - 1);
  return grad;
}

void check_examples(std::span<const TrainingExample> data) {
  const Eigen::Index d = data.front().features.size();
  const Eigen::Index k = data.front().target.size();
  if (k < 2) throw ValidationError("train_student: targets need at least two classes");
  for (const auto& ex : data) {
    if (ex.features.size() != d) throw ValidationError("train_student: inconsistent feature dimension");
    if (ex.target.size() != k) throw ValidationError("train_student: inconsistent target dimension");
    if (!(ex.weight > 0.0)) throw ValidationError("train_student: example weight must be > 0");
  }
}

}  // namespace

std::string to_string(LabelMode mode) { return mode == LabelMode::Soft ? "soft" : "hard"; }

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "soft") return LabelMode::Soft;
  if (s == "hard") return LabelMode::Hard;
  throw ValidationError("label_mode: expected 'soft' or 'hard', got '" + s + "'");
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ValidationError("training.max_epochs must be >= 1");
  if (patience < 1) throw ValidationError("training.patience must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
    throw ValidationError("training.validation_fraction must lie in (0, 0.5)");
  }
  if (!(learning_rate > 0.0)) throw ValidationError("training.learning_rate must be > 0");
  if (batch_size < 1) throw ValidationError("training.batch_size must be >= 1");
  if (!(l2_penalty >= 0.0)) throw ValidationError("training.l2_penalty must be >= 0");
}

TrainingExample make_training_example(const Instance& instance, LabelMode mode) {
  TrainingExample ex;
  ex.features = instance.features;
  if (mode == LabelMode::Soft) {
    ex.target = softmax(instance.teacher.logprobs);
  } else {
    ex.target = VectorXd::Zero(instance.teacher.logprobs.size());
    ex.target(instance.teacher.label().index) = 1.0;
  }
  return ex;
}

StudentModel StudentModel::zero(int num_classes, Eigen::Index feature_dim) {
  return StudentModel{MatrixXd::Zero(num_classes, feature_dim + 1), TrainMeta{}};
}

StudentModel train_student(std::span<const TrainingExample> data, const TrainConfig& config) {
  config.validate();
  if (data.size() < 2) throw ValidationError("train_student: need at least 2 examples");
  check_examples(data);

  const DesignMatrix m = design(data);
  Rng rng(config.seed);
  const auto perm = random_permutation(data.size(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * static_cast<double>(data.size())));

  std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
  const bool fallback = val.empty();
  const std::span<const std::size_t> monitor = fallback ? std::span<const std::size_t>(train) : val;

  StudentModel model = StudentModel::zero(static_cast<int>(m.targets.cols()), m.x.cols() - 1);
  MatrixXd w = model.weights;
  MatrixXd best_w = w;
  double best = std::numeric_limits<double>::infinity();
  double first = best;
  int since_best = 0;
  int epochs = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    epochs = epoch;
    shuffle(train, rng);
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t len = std::min(batch, train.size() - start);
      w -= config.learning_rate *
           batch_gradient(w, m, std::span<const std::size_t>(train).subspan(start, len), config.l2_penalty);
    }
    const double loss = data_loss(w, m, monitor);
    if (epoch == 1) first = loss;
    if (loss < best) {
      best = loss;
      best_w = w;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  model.weights = best_w;
  model.meta.epochs_run = epochs;
  model.meta.best_validation_loss = best;
  model.meta.first_epoch_validation_loss = first;
  model.meta.seed = config.seed;
  model.meta.training_size = train.size();
  model.meta.validation_size = val.size();
  model.meta.train_loss_fallback = fallback;
  return model;
}

VectorXd predict(const StudentModel& model, const VectorXdRef& features) {
  if (features.size() != model.feature_dim()) {
    throw std::invalid_argument("predict: feature dimension " + std::to_string(features.size()) + " != model " +
                                std::to_string(model.feature_dim()));
  }
  const Eigen::Index d = model.feature_dim();
  return log_softmax(model.weights.leftCols(d) * features + model.weights.col(d));
}

double evaluate(const StudentModel& model, std::span<const Instance> instances) {
  if (instances.empty()) throw std::invalid_argument("evaluate: empty instance list");
  std::size_t correct = 0;
  for (const auto& inst : instances) correct += predict_label(model, inst.features) == inst.gold ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

double cross_entropy_loss(const MatrixXd& weights, std::span<const TrainingExample> data, double l2_penalty) {
  const DesignMatrix m = design(data);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return data_loss(weights, m, rows) + penalty(weights, l2_penalty);
}

MatrixXd cross_entropy_gradient(const MatrixXd& weights, std::span<const TrainingExample> data, double l2_penalty) {
  const DesignMatrix m = design(data);
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return batch_gradient(weights, m, rows, l2_penalty);
}

nlohmann::json model_to_json(const StudentModel& model) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.weights.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < model.weights.cols(); ++j) row.push_back(model.weights(i, j));
    rows.push_back(std::move(row));
  }
  const auto& meta = model.meta;
  const auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {{"format", "ncache.student"},
          {"version", 1},
          {"num_classes", model.num_classes()},
          {"feature_dim", model.feature_dim()},
          {"weights", rows},
          {"train_meta",
           {{"epochs_run", meta.epochs_run},
            {"best_validation_loss", finite_or_null(meta.best_validation_loss)},
            {"first_epoch_validation_loss", finite_or_null(meta.first_epoch_validation_loss)},
            {"seed", meta.seed},
            {"training_size", meta.training_size},
            {"validation_size", meta.validation_size},
            {"train_loss_fallback", meta.train_loss_fallback}}}};
}

StudentModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "ncache.student" || j.at("version") != 1) {
      throw ValidationError("student model: unsupported format or version");
    }
    const auto k = j.at("num_classes").get<Eigen::Index>();
    const auto d = j.at("feature_dim").get<Eigen::Index>();
    const auto& rows = j.at("weights");
    if (static_cast<Eigen::Index>(rows.size()) != k) throw ValidationError("student model: weight rows != num_classes");
    StudentModel model{MatrixXd(k, d + 1), TrainMeta{}};
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& row = rows.at(static_cast<std::size_t>(i));
      if (static_cast<Eigen::Index>(row.size()) != d + 1) {
        throw ValidationError("student model: weight row length != feature_dim + 1");
      }
      for (Eigen::Index c = 0; c <= d; ++c) model.weights(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    const auto& meta = j.at("train_meta");
    const auto real_or_inf = [](const nlohmann::json& v) {
      return v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
    };
    model.meta.epochs_run = meta.at("epochs_run").get<int>();
    model.meta.best_validation_loss = real_or_inf(meta.at("best_validation_loss"));
    model.meta.first_epoch_validation_loss = real_or_inf(meta.at("first_epoch_validation_loss"));
    model.meta.seed = meta.at("seed").get<std::uint64_t>();
    model.meta.training_size = meta.at("training_size").get<std::size_t>();
    model.meta.validation_size = meta.at("validation_size").get<std::size_t>();
    model.meta.train_loss_fallback = meta.at("train_loss_fallback").get<bool>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("student model: ") + e.what());
  }
}

void save_model(const StudentModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(model).dump(2) + "\n");
}

StudentModel load_model(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  try {
    return model_from_json(nlohmann::json::parse(raw));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ":" + std::to_string(line_of_offset(raw, e.byte)) + ": " + e.what());
  }
}

}  // namespace ncache
