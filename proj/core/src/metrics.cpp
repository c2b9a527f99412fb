#include "luskin/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>

#include "luskin/error.hpp"

namespace luskin {
namespace {

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("scores and labels differ in length");
}

void require_both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) {
    throw InvalidInput("metric needs both classes present");
  }
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  return {{"auc", auc},
          {"accuracy", accuracy},
          {"tpr", tpr},
          {"fpr", fpr},
          {"tp", counts.tp},
          {"fp", counts.fp},
          {"tn", counts.tn},
          {"fn", counts.fn}};
}

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_lengths(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.empty()) throw InvalidInput("accuracy of an empty set");
  const auto c = confusion(scores, labels, threshold);
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  require_both_classes(labels);
  // Walk tie blocks in descending score order. `twice_u` counts each correctly
  // ordered pair as 2 and each tie as 1, so it stays an exact integer.
  const auto idx = order_descending(scores);
  std::uint64_t negatives_below = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 0));
  const std::uint64_t total_neg = negatives_below;
  const std::uint64_t total_pos = labels.size() - total_neg;
  std::uint64_t twice_u = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::uint64_t block_pos = 0;
    std::uint64_t block_neg = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]] == 1) ++block_pos;
      else ++block_neg;
      ++j;
    }
    negatives_below -= block_neg;
    twice_u += block_pos * (2 * negatives_below + block_neg);
    i = j;
  }
  const double u = static_cast<double>(twice_u) / 2.0;
  return u / (static_cast<double>(total_pos) * static_cast<double>(total_neg));
}

MetricReport tpr_fpr(std::span<const double> scores, std::span<const int> labels, double threshold) {
  MetricReport r;
  r.auc = auc(scores, labels);
  r.counts = confusion(scores, labels, threshold);
  const auto& c = r.counts;
  r.tpr = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.fpr = static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return r;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  require_both_classes(labels);
  const auto idx = order_descending(scores);
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double neg = static_cast<double>(labels.size()) - pos;
  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < idx.size()) {
    const double t = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == t) {
      if (labels[idx[i]] == 1) ++tp;
      else ++fp;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, t});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

}  // namespace luskin
