#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace luskin {

enum class ModelKind { logistic, mlp, linear_svm };

std::string_view to_string(ModelKind kind);
/// Accepts "logistic"/"lr", "mlp", "linear_svm"/"svm".
ModelKind parse_model_kind(std::string_view text);

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::size_t iterations = 2000;
  std::vector<std::size_t> hidden_layers = {32};
  double l2 = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
  bool operator==(const TrainConfig&) const = default;
};

/// Affine map `weights * x + bias`; weights are outputs x inputs.
struct DenseLayer {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

/// Trained risk-assignment model.
///
/// All three variants are stacks of dense layers: hidden layers use tanh, the
/// output layer has one unit passed through a sigmoid (logistic, mlp) or left
/// as a raw margin (linear_svm).
class RiskScorer {
 public:
  RiskScorer() = default;
  RiskScorer(ModelKind kind, std::vector<DenseLayer> layers, TrainConfig config = {});

  static RiskScorer linear(ModelKind kind, Eigen::VectorXd weights, double bias);
  /// Zero-initialized linear models; Glorot-uniform hidden layers for mlp.
  static RiskScorer initial(ModelKind kind, std::size_t input_dimension, const TrainConfig& config);

  ModelKind kind() const noexcept { return kind_; }
  std::size_t input_dimension() const;
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  const TrainConfig& config() const noexcept { return config_; }
  double default_threshold() const noexcept { return kind_ == ModelKind::linear_svm ? 0.0 : 0.5; }

  double score(std::span<const double> row) const;
  Eigen::VectorXd score_all(const Eigen::MatrixXd& features) const;
  /// 1 iff score >= threshold.
  int classify(std::span<const double> row, double threshold) const;

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  nlohmann::json to_json() const;
  static RiskScorer from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static RiskScorer load(const std::filesystem::path& path);

  bool operator==(const RiskScorer& other) const;

 private:
  /// Pre-activation output for every row.
  Eigen::VectorXd logits(const Eigen::MatrixXd& features) const;

  ModelKind kind_ = ModelKind::logistic;
  std::vector<DenseLayer> layers_;
  TrainConfig config_;
};

struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

/// Forward pass keeping every layer activation, for backpropagation.
struct ForwardPass {
  std::vector<Eigen::MatrixXd> activations;  // activations[0] is the input
  Eigen::VectorXd logits;
  Eigen::VectorXd scores;

  ForwardPass(const RiskScorer& model, const Eigen::MatrixXd& features);
  /// Parameter gradient given d(loss)/d(logit) per row, in parameters() order.
  Eigen::VectorXd backward(const RiskScorer& model, const Eigen::VectorXd& logit_gradient) const;
};

/// Mean negative log-likelihood (logistic, mlp) or mean hinge loss
/// (linear_svm), plus (l2 / 2) * sum of squared weights (biases excluded).
LossGradient training_objective(const RiskScorer& model, const Eigen::MatrixXd& features,
                                std::span<const int> labels, double l2);

/// Mean negative log-likelihood of a sigmoid-output model with its gradient
/// with respect to the logits.
double mean_nll(const Eigen::VectorXd& logits, std::span<const int> labels,
                Eigen::VectorXd* logit_gradient);

/// Adds (l2 / 2) * ||W||^2 to `lg` for every weight matrix.
void add_weight_decay(const RiskScorer& model, double l2, LossGradient& lg);

using Objective = std::function<LossGradient(const RiskScorer&)>;

/// Full-batch heavy-ball descent: v <- momentum * v - lr * g; theta <- theta + v.
/// Throws NonFiniteLoss naming the first iteration whose loss is not finite.
RiskScorer gradient_descent(RiskScorer model, const Objective& objective, const TrainConfig& config);

RiskScorer train_logistic(const Eigen::MatrixXd& features, std::span<const int> labels,
                          const TrainConfig& config = {});
RiskScorer train_mlp(const Eigen::MatrixXd& features, std::span<const int> labels,
                     const TrainConfig& config = {});
RiskScorer train_linear_svm(const Eigen::MatrixXd& features, std::span<const int> labels,
                            const TrainConfig& config = {});
RiskScorer train(ModelKind kind, const Eigen::MatrixXd& features, std::span<const int> labels,
                 const TrainConfig& config = {});

/// Throws InvalidInput unless rows match labels, there are at least two rows,
/// labels are 0/1 and both classes occur.
void check_training_data(const Eigen::MatrixXd& features, std::span<const int> labels);

}  // namespace luskin
