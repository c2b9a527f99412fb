#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace luskin {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricReport {
  double auc = 0.0;
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  ConfusionCounts counts;

  nlohmann::json to_json() const;
};

/// Confusion counts with the ">= threshold is positive" rule.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Fraction of correct predictions at `threshold`.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Mann-Whitney statistic: share of (positive, negative) pairs ranked
/// correctly, ties counting one half. Throws unless both classes occur.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Counts, rates, accuracy and AUC at one threshold. Throws unless both
/// classes occur.
MetricReport tpr_fpr(std::span<const double> scores, std::span<const int> labels, double threshold);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

/// ROC points from threshold +inf down through every distinct score.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> curve);

}  // namespace luskin
