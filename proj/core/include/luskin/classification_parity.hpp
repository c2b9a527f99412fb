#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "luskin/models.hpp"
#include "luskin/tabular.hpp"

namespace luskin {

/// Exhaustive, mutually exclusive row groups. Group 0 is the reference
/// group every other group is compared against.
struct GroupPartition {
  std::vector<std::size_t> group_of;
  std::vector<std::string> names;

  std::size_t group_count() const noexcept { return names.size(); }
  std::size_t size() const noexcept { return group_of.size(); }
  std::vector<std::vector<std::size_t>> members() const;
  void validate() const;

  /// One group per distinct value of `column`, in sorted order, except that
  /// `reference` (when given) becomes group 0.
  static GroupPartition from_column(const Table& table, std::string_view column,
                                    std::optional<std::string> reference = std::nullopt);
  /// Groups given by a condition: rows matching it form group 0.
  static GroupPartition from_condition(const Table& table, const FilterCondition& cond);
};

/// Scores and labels of one group.
struct GroupScores {
  std::string name;
  std::vector<double> scores;
  std::vector<int> labels;
};

std::vector<GroupScores> group_scores(std::span<const double> scores, std::span<const int> labels,
                                      const GroupPartition& groups);

struct ThresholdSet {
  std::vector<double> thresholds;
  double objective = 0.0;
  double lambda = 1.0;

  nlohmann::json to_json() const;
  static ThresholdSet from_json(const nlohmann::json& doc);
  bool operator==(const ThresholdSet&) const = default;
};

struct OddsBreakdown {
  /// Correct predictions over all rows.
  double accuracy = 0.0;
  /// Sum over k >= 2 of |TPR_1 - TPR_k| + |FPR_1 - FPR_k|.
  double disparity = 0.0;
  double value = 0.0;
};

/// accuracy - lambda * disparity with group k classified at thresholds[k].
/// Throws unless there are at least two groups and each has both classes.
OddsBreakdown equalized_odds(std::span<const GroupScores> groups, std::span<const double> thresholds, double lambda);
double equalized_odds_objective(std::span<const GroupScores> groups, std::span<const double> thresholds,
                                double lambda);

struct PsoConfig {
  std::size_t particles = 40;
  std::size_t iterations = 200;
  double inertia = 0.729;
  double cognitive = 1.494;
  double social = 1.494;
  /// Box bounds per dimension. Left empty, tuning derives them from the
  /// scores as [min - margin, max + margin].
  std::vector<double> lower;
  std::vector<double> upper;
  /// Fraction of the score range added on each side of derived bounds.
  double margin = 0.05;
  std::uint64_t seed = 0;
  /// Starting points for the first particles (clamped to the box); the rest
  /// start uniformly at random.
  std::vector<std::vector<double>> initial_positions;

  void validate(std::size_t dimension) const;
  nlohmann::json to_json() const;
};

struct PsoResult {
  std::vector<double> best_position;
  double best_value = 0.0;
  /// Global best after initialization and after every iteration.
  std::vector<double> history;
};

/// Maximizes `objective` over the box in `config` with a global-best swarm.
/// Personal bests also move on ties so particles keep drifting across the
/// plateaus of piecewise-constant objectives.
PsoResult particle_swarm_maximize(const std::function<double(std::span<const double>)>& objective,
                                  const PsoConfig& config);

/// Per-group thresholds maximizing the equalized-odds objective. The swarm
/// result is refined by an exact search over score breakpoints: every
/// disparity term pairs group 0 with one other group, so once group 0's
/// threshold is fixed the others can be chosen one at a time. Each tuned
/// threshold is moved to the middle of its gap between adjacent scores, which
/// leaves every prediction (and the objective) unchanged.
ThresholdSet tune_thresholds_pso(std::span<const GroupScores> groups, double lambda, const PsoConfig& config);
ThresholdSet tune_thresholds_pso(const RiskScorer& model, const Eigen::MatrixXd& features,
                                 std::span<const int> labels, const GroupPartition& groups, double lambda,
                                 const PsoConfig& config);

enum class HistogramKernel { gaussian, rect };

/// Centers (2i + 1) / (2 bins) of `bins` equal bins over [0, 1].
std::vector<double> uniform_bin_centers(std::size_t bins);

struct HistogramConfig {
  std::vector<double> centers = uniform_bin_centers(50);
  double bin_width = 0.02;
  double sigma = 0.01;
  HistogramKernel kernel = HistogramKernel::gaussian;

  /// `bins` equal bins over [0, 1]; sigma defaults to half the bin width.
  static HistogramConfig uniform(std::size_t bins, std::optional<double> sigma = std::nullopt);
  void validate() const;
  nlohmann::json to_json() const;
};

struct ScoreHistogram {
  std::vector<double> counts;
  bool normalized = false;
  std::string group;
  /// 1, 0, or -1 for "both classes".
  int label_class = -1;

  nlohmann::json to_json() const;
};

/// n_c = sum_i K(s_i, c). The Gaussian kernel is exp(-(s - c)^2 / (2 sigma^2));
/// the rect kernel counts scores inside the bin (bins are half-open, the last
/// one closed). Normalizing divides by the number of scores.
ScoreHistogram soft_histogram(std::span<const double> scores, const HistogramConfig& config, bool normalize);

/// Sum over k >= 2 and both classes of ||nh(D_1, y) - nh(D_k, y)||^2 using
/// normalized histograms. When `score_gradient` is given it receives
/// dE/ds for every row (Gaussian kernel only).
double distribution_distance(std::span<const double> scores, std::span<const int> labels,
                             const GroupPartition& groups, const HistogramConfig& config,
                             std::vector<double>* score_gradient = nullptr);
double distribution_distance(const RiskScorer& model, const Eigen::MatrixXd& features,
                             std::span<const int> labels, const GroupPartition& groups,
                             const HistogramConfig& config);

struct FairTrainConfig {
  /// Weight of the likelihood term; 1 - alpha weights the distribution term.
  double alpha = 0.2;
  HistogramConfig histogram;
  TrainConfig optimizer = default_optimizer();

  static TrainConfig default_optimizer();
  void validate() const;
  nlohmann::json to_json() const;
};

/// alpha * mean NLL + (1 - alpha) * distribution_distance + weight decay, with
/// its gradient in parameters() order.
LossGradient equalized_distribution_objective(const RiskScorer& model, const Eigen::MatrixXd& features,
                                              std::span<const int> labels, const GroupPartition& groups,
                                              const FairTrainConfig& config);

/// Logistic model trained on the objective above by momentum descent. Group
/// membership is used only while training.
RiskScorer train_equalized_distribution(const Eigen::MatrixXd& features, std::span<const int> labels,
                                        const GroupPartition& groups, const FairTrainConfig& config);

}  // namespace luskin
