#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "luskin/models.hpp"
#include "luskin/preprocess.hpp"
#include "luskin/tabular.hpp"

namespace luskin {

/// Protected split, unprotected filter and parity tolerance.
struct FairnessSpec {
  /// Single clause on a protected column.
  FilterCondition protected_condition;
  /// Clauses on unprotected columns; empty means "every row".
  FilterCondition unprotected_filter;
  double epsilon = 0.05;

  void validate(const Schema& schema) const;
  nlohmann::json to_json() const;
};

struct RatioReport {
  std::size_t count_p = 0;
  std::size_t positives_p = 0;
  std::size_t count_not_p = 0;
  std::size_t positives_not_p = 0;
  double ratio_p = 0.0;
  double ratio_not_p = 0.0;
  double epsilon = 0.0;
  bool fair = false;

  double gap() const noexcept { return ratio_p - ratio_not_p; }
  nlohmann::json to_json() const;
};

/// Share of rows labeled 1. Throws for an empty table.
double ratio(const Table& labeled);

/// Compares ratio(filter AND protected) against ratio(filter AND NOT protected).
/// Throws EmptyGroup naming the group that came out empty.
RatioReport check_fair(const Table& labeled, const FairnessSpec& spec);

/// Appends (or replaces) the score column with model scores.
Table attach_scores(const Table& table, const RiskScorer& model, const Preprocessor& prep);
/// attach_scores, then sets label = 1 iff score >= threshold.
Table label_with_model(const Table& table, const RiskScorer& model, double threshold, const Preprocessor& prep);

/// |dnp| * (positives in not_dnp) / |not_dnp|: the positive count that gives
/// dnp the same ratio as not_dnp.
double compute_alpha(const Table& dnp, const Table& not_dnp);
double compute_alpha(std::size_t dnp_rows, std::size_t not_dnp_positives, std::size_t not_dnp_rows);

/// round(x) with halves rounded up.
std::size_t round_half_up(double x);

/// Risk shift for the advantaged group: with scores sorted descending,
/// threshold' is the score at 1-based rank round(alpha) and the result is
/// threshold' - threshold. For round(alpha) == 0 the shift clears every score:
/// (max score - threshold) + 1e-12.
double compute_delta(std::span<const double> scores, double alpha, double threshold);

enum class AdvantagedGroup { protected_true, protected_false };
std::string_view to_string(AdvantagedGroup group);

struct SyntheticResult {
  /// advantaged group (relabeled) | disadvantaged group | rows outside the filter
  Table synthetic;
  /// For each synthetic row, its index in the input table.
  std::vector<std::size_t> source_rows;
  bool adjusted = false;
  AdvantagedGroup advantaged = AdvantagedGroup::protected_true;
  std::size_t advantaged_rows = 0;
  std::size_t disadvantaged_rows = 0;
  double alpha = 0.0;
  /// Risk adjustment only.
  double delta = 0.0;
  /// threshold + delta as applied: advantaged rows are positive iff score >= this.
  double adjusted_threshold = 0.0;
  /// Flipping only.
  std::size_t beta = 0;
  RatioReport before;

  nlohmann::json summary() const;
};

/// Selective risk adjustment. Input rows carry model labels and scores (see
/// label_with_model). When the groups already pass the ratio test the input is
/// returned unchanged with delta 0.
SyntheticResult synth_risk_adjust(const Table& scored_model_labeled, const FairnessSpec& spec, double threshold);

/// Risk-based flipping. Input rows carry true labels and scores (see
/// attach_scores). The beta lowest-scored positives of the advantaged group
/// are flipped to 0, beta = positives - round(alpha).
SyntheticResult synth_risk_flip(const Table& scored_true_labeled, const FairnessSpec& spec);

SyntheticResult synth_risk_adjust(const Table& d2, const RiskScorer& model, const Preprocessor& prep,
                                  const FairnessSpec& spec, double threshold);
SyntheticResult synth_risk_flip(const Table& d2, const RiskScorer& model, const Preprocessor& prep,
                                const FairnessSpec& spec);

enum class RepairAlgorithm { risk_adjust = 1, risk_flip = 2 };
std::string_view to_string(RepairAlgorithm algorithm);

struct PipelineConfig {
  ModelKind first_model = ModelKind::logistic;
  ModelKind second_model = ModelKind::mlp;
  RepairAlgorithm algorithm = RepairAlgorithm::risk_flip;
  double threshold = 0.5;
  FairnessSpec spec;
  /// D1 (first model), D2 (synthesis), D4 (evaluation).
  SplitSpec split{{0.4, 0.4, 0.2}, 0};
  TrainConfig first_train;
  TrainConfig second_train;
  /// Columns excluded from the feature matrix.
  std::vector<std::string> drops;

  void validate(const Schema& schema) const;
  nlohmann::json to_json() const;
};

enum class LabelSource { original, first_model, second_model };
std::string_view to_string(LabelSource source);

/// One cell of the source x protected-group x filter ratio table.
struct RatioCell {
  LabelSource source = LabelSource::original;
  bool protected_group = true;
  bool filtered = true;
  std::size_t rows = 0;
  std::size_t positives = 0;
  /// Empty when the cell has no rows.
  std::optional<double> ratio;
};

struct PipelineReport {
  double auc_first = 0.0;
  double auc_second = 0.0;
  /// 12 cells ordered source-major, then group (P, notP), then filter (N, notN).
  std::vector<RatioCell> cells;
  SyntheticResult synthesis;
  RiskScorer first_model;
  RiskScorer second_model;
  Preprocessor preprocessor;
  std::size_t rows_d1 = 0;
  std::size_t rows_d2 = 0;
  std::size_t rows_d4 = 0;

  const RatioCell& cell(LabelSource source, bool protected_group, bool filtered) const;
  /// ratio(P, N) - ratio(notP, N) for one label source.
  double filtered_gap(LabelSource source) const;
};

/// Trains the first model on D1, builds the synthetic set from D2, trains the
/// second model on it and measures both on D4 against the original labels.
PipelineReport run_pipeline(const Table& data, const PipelineConfig& config);

/// Ratio cells for one set of labels over `table`.
std::vector<RatioCell> ratio_cells(const Table& labeled, const FairnessSpec& spec, LabelSource source);

}  // namespace luskin
