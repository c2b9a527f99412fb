#include "luskin/classification_parity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "luskin/error.hpp"

namespace luskin {
namespace {

std::string cell_text(const Table& table, std::size_t row, std::size_t column) {
  const auto& v = table.rows()[row][column];
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

struct Rates {
  std::size_t correct = 0;
  double tpr = 0.0;
  double fpr = 0.0;
};

Rates rates_at(const GroupScores& g, double t) {
  std::size_t tp = 0, fp = 0, pos = 0;
  for (std::size_t i = 0; i < g.scores.size(); ++i) {
    const bool predicted = g.scores[i] >= t;
    if (g.labels[i] == 1) {
      ++pos;
      tp += predicted ? 1 : 0;
    } else {
      fp += predicted ? 1 : 0;
    }
  }
  const std::size_t neg = g.scores.size() - pos;
  Rates r;
  r.correct = tp + (neg - fp);
  r.tpr = static_cast<double>(tp) / static_cast<double>(pos);
  r.fpr = static_cast<double>(fp) / static_cast<double>(neg);
  return r;
}

void check_groups(std::span<const GroupScores> groups) {
  if (groups.size() < 2) throw InvalidInput("equalized odds needs at least two groups");
  for (const auto& g : groups) {
    if (g.scores.size() != g.labels.size()) throw InvalidInput("group '" + g.name + "' scores and labels differ");
    const auto pos = std::count(g.labels.begin(), g.labels.end(), 1);
    if (pos == 0) throw EmptyGroup(g.name + " (label 1)");
    if (static_cast<std::size_t>(pos) == g.labels.size()) throw EmptyGroup(g.name + " (label 0)");
  }
}

/// Bin edges shared by neighbouring bins so the rect kernel partitions the
/// covered interval.
std::vector<double> bin_edges(const HistogramConfig& cfg) {
  const auto& c = cfg.centers;
  std::vector<double> e(c.size() + 1);
  e.front() = c.front() - cfg.bin_width / 2;
  for (std::size_t i = 1; i < c.size(); ++i) e[i] = (c[i - 1] + c[i]) / 2;
  e.back() = c.back() + cfg.bin_width / 2;
  return e;
}

void add_rect(std::span<const double> scores, const HistogramConfig& cfg, std::vector<double>& counts) {
  const auto e = bin_edges(cfg);
  for (double s : scores) {
    if (s < e.front() || s > e.back()) continue;
    auto it = std::upper_bound(e.begin(), e.end(), s);
    std::size_t bin = static_cast<std::size_t>(it - e.begin());
    bin = bin == 0 ? 0 : bin - 1;
    if (bin >= counts.size()) bin = counts.size() - 1;  // s == last edge
    counts[bin] += 1.0;
  }
}

}  // namespace

// ------------------------------------------------------------- partitions

std::vector<std::vector<std::size_t>> GroupPartition::members() const {
  std::vector<std::vector<std::size_t>> out(group_count());
  for (std::size_t i = 0; i < group_of.size(); ++i) out.at(group_of[i]).push_back(i);
  return out;
}

void GroupPartition::validate() const {
  if (names.size() < 2) throw InvalidInput("need at least two groups");
  std::vector<std::size_t> seen(names.size(), 0);
  for (auto g : group_of) {
    if (g >= names.size()) throw InvalidInput("group index out of range");
    ++seen[g];
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (seen[k] == 0) throw EmptyGroup(names[k]);
  }
}

GroupPartition GroupPartition::from_column(const Table& table, std::string_view column,
                                           std::optional<std::string> reference) {
  const auto col = table.schema().index_of(column);
  GroupPartition p;
  std::vector<std::string> values;
  values.reserve(table.row_count());
  for (std::size_t r = 0; r < table.row_count(); ++r) values.push_back(cell_text(table, r, col));
  p.names = values;
  std::sort(p.names.begin(), p.names.end());
  p.names.erase(std::unique(p.names.begin(), p.names.end()), p.names.end());
  if (reference) {
    auto it = std::find(p.names.begin(), p.names.end(), *reference);
    if (it == p.names.end()) throw EmptyGroup(std::string(column) + " = " + *reference);
    std::rotate(p.names.begin(), it, it + 1);
  }
  p.group_of.reserve(values.size());
  for (const auto& v : values) {
    p.group_of.push_back(static_cast<std::size_t>(std::find(p.names.begin(), p.names.end(), v) - p.names.begin()));
  }
  p.validate();
  return p;
}

GroupPartition GroupPartition::from_condition(const Table& table, const FilterCondition& cond) {
  RowPredicate pred(table.schema(), cond);
  GroupPartition p;
  p.names = {cond.describe(), "not (" + cond.describe() + ")"};
  for (const auto& row : table.rows()) p.group_of.push_back(pred(row) ? 0 : 1);
  p.validate();
  return p;
}

std::vector<GroupScores> group_scores(std::span<const double> scores, std::span<const int> labels,
                                      const GroupPartition& groups) {
  if (scores.size() != labels.size() || scores.size() != groups.size()) {
    throw InvalidInput("scores, labels and groups differ in length");
  }
  std::vector<GroupScores> out(groups.group_count());
  for (std::size_t k = 0; k < out.size(); ++k) out[k].name = groups.names[k];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& g = out[groups.group_of[i]];
    g.scores.push_back(scores[i]);
    g.labels.push_back(labels[i]);
  }
  return out;
}

// ---------------------------------------------------------- equalized odds

nlohmann::json ThresholdSet::to_json() const {
  return {{"thresholds", thresholds}, {"objective", objective}, {"lambda", lambda}};
}

ThresholdSet ThresholdSet::from_json(const nlohmann::json& doc) {
  ThresholdSet t;
  t.thresholds = doc.at("thresholds").get<std::vector<double>>();
  t.objective = doc.at("objective").get<double>();
  t.lambda = doc.at("lambda").get<double>();
  return t;
}

OddsBreakdown equalized_odds(std::span<const GroupScores> groups, std::span<const double> thresholds, double lambda) {
  check_groups(groups);
  if (thresholds.size() != groups.size()) {
    throw InvalidInput("expected " + std::to_string(groups.size()) + " thresholds, got " +
                       std::to_string(thresholds.size()));
  }
  std::size_t correct = 0;
  std::size_t total = 0;
  const Rates first = rates_at(groups[0], thresholds[0]);
  correct += first.correct;
  total += groups[0].scores.size();
  double disparity = 0.0;
  for (std::size_t k = 1; k < groups.size(); ++k) {
    const Rates r = rates_at(groups[k], thresholds[k]);
    correct += r.correct;
    total += groups[k].scores.size();
    disparity += std::abs(first.tpr - r.tpr) + std::abs(first.fpr - r.fpr);
  }
  OddsBreakdown out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  out.disparity = disparity;
  out.value = out.accuracy - lambda * disparity;
  return out;
}

double equalized_odds_objective(std::span<const GroupScores> groups, std::span<const double> thresholds,
                                double lambda) {
  return equalized_odds(groups, thresholds, lambda).value;
}

// --------------------------------------------------------------------- PSO

void PsoConfig::validate(std::size_t dimension) const {
  if (particles < 2) throw InvalidInput("pso needs at least two particles");
  if (iterations < 1) throw InvalidInput("pso needs at least one iteration");
  if (lower.size() != dimension || upper.size() != dimension) {
    throw InvalidInput("pso bounds do not match the search dimension");
  }
  for (std::size_t d = 0; d < dimension; ++d) {
    if (!std::isfinite(lower[d]) || !std::isfinite(upper[d]) || lower[d] > upper[d]) {
      throw InvalidInput("pso bounds must be finite with lower <= upper");
    }
  }
  if (!(inertia >= 0.0) || !(cognitive >= 0.0) || !(social >= 0.0)) {
    throw InvalidInput("pso coefficients must be non-negative");
  }
  if (initial_positions.size() > particles) throw InvalidInput("more initial positions than particles");
  for (const auto& p : initial_positions) {
    if (p.size() != dimension) throw InvalidInput("initial position does not match the search dimension");
  }
}

nlohmann::json PsoConfig::to_json() const {
  return {{"particles", particles}, {"iterations", iterations}, {"inertia", inertia},
          {"cognitive", cognitive}, {"social", social},         {"lower", lower},
          {"upper", upper},         {"margin", margin},         {"seed", seed},
          {"initial_positions", initial_positions.size()}};
}

PsoResult particle_swarm_maximize(const std::function<double(std::span<const double>)>& objective,
                                  const PsoConfig& config) {
  const std::size_t dim = config.lower.size();
  if (dim == 0) throw InvalidInput("pso needs at least one dimension");
  config.validate(dim);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> span(dim);
  for (std::size_t d = 0; d < dim; ++d) span[d] = config.upper[d] - config.lower[d];

  const std::size_t n = config.particles;
  std::vector<std::vector<double>> x(n, std::vector<double>(dim));
  std::vector<std::vector<double>> v(n, std::vector<double>(dim));
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t d = 0; d < dim; ++d) {
      x[p][d] = config.lower[d] + unit(rng) * span[d];
      v[p][d] = (2.0 * unit(rng) - 1.0) * 0.1 * span[d];
    }
    if (p < config.initial_positions.size()) {
      for (std::size_t d = 0; d < dim; ++d) {
        x[p][d] = std::clamp(config.initial_positions[p][d], config.lower[d], config.upper[d]);
      }
    }
  }
  auto pbest = x;
  std::vector<double> pbest_value(n);
  PsoResult result;
  result.best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < n; ++p) {
    pbest_value[p] = objective(x[p]);
    if (pbest_value[p] > result.best_value) {
      result.best_value = pbest_value[p];
      result.best_position = x[p];
    }
  }
  result.history.push_back(result.best_value);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t d = 0; d < dim; ++d) {
        const double r1 = unit(rng);
        const double r2 = unit(rng);
        double vel = config.inertia * v[p][d] + config.cognitive * r1 * (pbest[p][d] - x[p][d]) +
                     config.social * r2 * (result.best_position[d] - x[p][d]);
        vel = std::clamp(vel, -span[d], span[d]);
        double pos = x[p][d] + vel;
        if (pos < config.lower[d] || pos > config.upper[d]) {
          pos = std::clamp(pos, config.lower[d], config.upper[d]);
          vel = 0.0;
        }
        v[p][d] = vel;
        x[p][d] = pos;
      }
      const double value = objective(x[p]);
      if (value >= pbest_value[p]) {
        pbest_value[p] = value;
        pbest[p] = x[p];
        if (value > result.best_value) {
          result.best_value = value;
          result.best_position = x[p];
        }
      }
    }
    result.history.push_back(result.best_value);
  }
  return result;
}

ThresholdSet tune_thresholds_pso(std::span<const GroupScores> groups, double lambda, const PsoConfig& config) {
  check_groups(groups);
  const std::size_t k = groups.size();
  PsoConfig cfg = config;
  if (cfg.lower.empty() && cfg.upper.empty()) {
    for (const auto& g : groups) {
      const auto [lo, hi] = std::minmax_element(g.scores.begin(), g.scores.end());
      const double pad = cfg.margin * (*hi - *lo) + 1e-6;
      cfg.lower.push_back(*lo - pad);
      cfg.upper.push_back(*hi + pad);
    }
  }
  auto f = [&](std::span<const double> t) { return equalized_odds_objective(groups, t, lambda); };
  const PsoResult swarm = particle_swarm_maximize(f, cfg);

  // Breakpoints per group: distinct scores plus one above the maximum. Any
  // threshold classifies like the smallest breakpoint at or above it.
  std::vector<std::vector<double>> candidates(k);
  // Per breakpoint: correct predictions, TPR and FPR.
  struct Cell {
    double correct, tpr, fpr;
  };
  std::vector<std::vector<Cell>> cells(k);
  double total_rows = 0.0;
  for (std::size_t g = 0; g < k; ++g) {
    auto& c = candidates[g];
    c = groups[g].scores;
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    c.push_back(std::max(cfg.upper[g], std::nextafter(c.back(), std::numeric_limits<double>::infinity())));
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < groups[g].scores.size(); ++i) {
      (groups[g].labels[i] == 1 ? pos : neg).push_back(groups[g].scores[i]);
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    total_rows += static_cast<double>(pos.size() + neg.size());
    for (double t : c) {
      const auto tp = static_cast<double>(pos.end() - std::lower_bound(pos.begin(), pos.end(), t));
      const auto fp = static_cast<double>(neg.end() - std::lower_bound(neg.begin(), neg.end(), t));
      const auto n_pos = static_cast<double>(pos.size());
      const auto n_neg = static_cast<double>(neg.size());
      cells[g].push_back({tp + (n_neg - fp), tp / n_pos, fp / n_neg});
    }
  }

  std::vector<double> best = swarm.best_position;
  double best_value = swarm.best_value;
  std::vector<double> point(k);
  for (std::size_t i = 0; i < candidates[0].size(); ++i) {
    const Cell& ref = cells[0][i];
    point[0] = candidates[0][i];
    double value = ref.correct / total_rows;
    for (std::size_t g = 1; g < k; ++g) {
      double term = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < candidates[g].size(); ++j) {
        const Cell& c = cells[g][j];
        const double v = c.correct / total_rows - lambda * (std::abs(ref.tpr - c.tpr) + std::abs(ref.fpr - c.fpr));
        if (v > term) {
          term = v;
          point[g] = candidates[g][j];
        }
      }
      value += term;
    }
    if (value > best_value + 1e-12) {
      best_value = value;
      best = point;
    }
  }

  // Centre each threshold in its gap: (largest score below, smallest score at or above].
  for (std::size_t g = 0; g < k; ++g) {
    const auto& c = candidates[g];
    const auto distinct_end = c.end() - 1;  // last entry is the above-max sentinel
    auto hi = std::lower_bound(c.begin(), distinct_end, best[g]);
    if (hi == c.begin() || hi == distinct_end) continue;
    const double mid = *(hi - 1) + (*hi - *(hi - 1)) / 2;
    if (mid > *(hi - 1) && mid <= *hi) best[g] = mid;
  }

  ThresholdSet out;
  out.thresholds = best;
  out.lambda = lambda;
  out.objective = f(best);
  return out;
}

ThresholdSet tune_thresholds_pso(const RiskScorer& model, const Eigen::MatrixXd& features,
                                 std::span<const int> labels, const GroupPartition& groups, double lambda,
                                 const PsoConfig& config) {
  const Eigen::VectorXd s = model.score_all(features);
  const auto gs = group_scores(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), labels, groups);
  return tune_thresholds_pso(gs, lambda, config);
}

// -------------------------------------------------------------- histograms

std::vector<double> uniform_bin_centers(std::size_t bins) {
  if (bins == 0) throw InvalidInput("histogram needs at least one bin");
  std::vector<double> c(bins);
  for (std::size_t i = 0; i < bins; ++i) c[i] = static_cast<double>(2 * i + 1) / static_cast<double>(2 * bins);
  return c;
}

HistogramConfig HistogramConfig::uniform(std::size_t bins, std::optional<double> sigma) {
  HistogramConfig cfg;
  cfg.centers = uniform_bin_centers(bins);
  cfg.bin_width = 1.0 / static_cast<double>(bins);
  cfg.sigma = sigma.value_or(cfg.bin_width / 2);
  cfg.validate();
  return cfg;
}

void HistogramConfig::validate() const {
  if (centers.empty()) throw InvalidInput("histogram needs at least one bin");
  for (std::size_t i = 1; i < centers.size(); ++i) {
    if (!(centers[i] > centers[i - 1])) throw InvalidInput("histogram centers must be strictly increasing");
  }
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw InvalidInput("bin width must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("sigma must be positive");
}

nlohmann::json HistogramConfig::to_json() const {
  return {{"bins", centers.size()},
          {"first_center", centers.front()},
          {"last_center", centers.back()},
          {"bin_width", bin_width},
          {"sigma", sigma},
          {"kernel", kernel == HistogramKernel::gaussian ? "gaussian" : "rect"}};
}

nlohmann::json ScoreHistogram::to_json() const {
  return {{"group", group}, {"class", label_class}, {"normalized", normalized}, {"counts", counts}};
}

ScoreHistogram soft_histogram(std::span<const double> scores, const HistogramConfig& config, bool normalize) {
  config.validate();
  if (normalize && scores.empty()) throw InvalidInput("cannot normalize a histogram of no scores");
  ScoreHistogram h;
  h.counts.assign(config.centers.size(), 0.0);
  if (config.kernel == HistogramKernel::rect) {
    add_rect(scores, config, h.counts);
  } else {
    const double inv = 1.0 / (2.0 * config.sigma * config.sigma);
    for (std::size_t c = 0; c < config.centers.size(); ++c) {
      double n = 0.0;
      for (double s : scores) {
        const double d = s - config.centers[c];
        n += std::exp(-d * d * inv);
      }
      h.counts[c] = n;
    }
  }
  if (normalize) {
    for (auto& n : h.counts) n /= static_cast<double>(scores.size());
  }
  h.normalized = normalize;
  return h;
}

double distribution_distance(std::span<const double> scores, std::span<const int> labels,
                             const GroupPartition& groups, const HistogramConfig& config,
                             std::vector<double>* score_gradient) {
  config.validate();
  if (scores.size() != labels.size() || scores.size() != groups.size()) {
    throw InvalidInput("scores, labels and groups differ in length");
  }
  if (score_gradient && config.kernel != HistogramKernel::gaussian) {
    throw InvalidInput("the rect kernel has no useful gradient");
  }
  const std::size_t k = groups.group_count();
  if (k < 2) throw InvalidInput("distribution distance needs at least two groups");
  const std::size_t bins = config.centers.size();

  // members[g][y]
  std::vector<std::array<std::vector<std::size_t>, 2>> members(k);
  for (std::size_t i = 0; i < scores.size(); ++i) members[groups.group_of[i]][labels[i] == 1 ? 1 : 0].push_back(i);
  std::vector<std::array<std::vector<double>, 2>> hist(k);
  for (std::size_t g = 0; g < k; ++g) {
    for (int y = 0; y < 2; ++y) {
      const auto& idx = members[g][y];
      if (idx.empty()) throw EmptyGroup(groups.names[g] + " (label " + std::to_string(y) + ")");
      std::vector<double> s;
      s.reserve(idx.size());
      for (auto i : idx) s.push_back(scores[i]);
      hist[g][y] = soft_histogram(s, config, true).counts;
    }
  }

  double loss = 0.0;
  // dE/d(normalized count) per group, class and bin
  std::vector<std::array<std::vector<double>, 2>> upstream(k);
  for (std::size_t g = 0; g < k; ++g) upstream[g] = {std::vector<double>(bins, 0.0), std::vector<double>(bins, 0.0)};
  for (std::size_t g = 1; g < k; ++g) {
    for (int y = 0; y < 2; ++y) {
      for (std::size_t c = 0; c < bins; ++c) {
        const double diff = hist[0][y][c] - hist[g][y][c];
        loss += diff * diff;
        upstream[0][y][c] += 2.0 * diff;
        upstream[g][y][c] -= 2.0 * diff;
      }
    }
  }

  if (score_gradient) {
    score_gradient->assign(scores.size(), 0.0);
    const double inv_var = 1.0 / (config.sigma * config.sigma);
    for (std::size_t g = 0; g < k; ++g) {
      for (int y = 0; y < 2; ++y) {
        const auto& idx = members[g][y];
        const double inv_n = 1.0 / static_cast<double>(idx.size());
        const auto& up = upstream[g][y];
        for (auto i : idx) {
          double d = 0.0;
          for (std::size_t c = 0; c < bins; ++c) {
            const double off = scores[i] - config.centers[c];
            d += up[c] * std::exp(-0.5 * off * off * inv_var) * (-off * inv_var);
          }
          (*score_gradient)[i] = d * inv_n;
        }
      }
    }
  }
  return loss;
}

double distribution_distance(const RiskScorer& model, const Eigen::MatrixXd& features,
                             std::span<const int> labels, const GroupPartition& groups,
                             const HistogramConfig& config) {
  const Eigen::VectorXd s = model.score_all(features);
  return distribution_distance(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), labels,
                               groups, config);
}

// ------------------------------------------------------------ fair training

TrainConfig FairTrainConfig::default_optimizer() {
  TrainConfig t;
  t.learning_rate = 1.0;
  t.momentum = 0.9;
  t.iterations = 2000;
  t.hidden_layers = {};
  return t;
}

void FairTrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in [0, 1]");
  histogram.validate();
  optimizer.validate();
}

nlohmann::json FairTrainConfig::to_json() const {
  return {{"alpha", alpha}, {"histogram", histogram.to_json()}, {"optimizer", optimizer.to_json()}};
}

LossGradient equalized_distribution_objective(const RiskScorer& model, const Eigen::MatrixXd& features,
                                              std::span<const int> labels, const GroupPartition& groups,
                                              const FairTrainConfig& config) {
  if (model.kind() != ModelKind::logistic) throw InvalidInput("equalized-distribution training is logistic only");
  ForwardPass pass(model, features);
  Eigen::VectorXd dz;
  const double nll = mean_nll(pass.logits, labels, &dz);
  LossGradient lg;
  lg.loss = config.alpha * nll;
  dz *= config.alpha;
  if (config.alpha < 1.0) {
    std::vector<double> ds;
    const double ef = distribution_distance(
        std::span<const double>(pass.scores.data(), static_cast<std::size_t>(pass.scores.size())), labels, groups,
        config.histogram, &ds);
    const double w = 1.0 - config.alpha;
    lg.loss += w * ef;
    for (Eigen::Index i = 0; i < dz.size(); ++i) {
      const double s = pass.scores(i);
      dz(i) += w * ds[static_cast<std::size_t>(i)] * s * (1.0 - s);
    }
  }
  lg.gradient = pass.backward(model, dz);
  add_weight_decay(model, config.optimizer.l2, lg);
  return lg;
}

RiskScorer train_equalized_distribution(const Eigen::MatrixXd& features, std::span<const int> labels,
                                        const GroupPartition& groups, const FairTrainConfig& config) {
  check_training_data(features, labels);
  config.validate();
  if (groups.size() != labels.size()) throw InvalidInput("group assignment and labels differ in length");
  groups.validate();
  RiskScorer init = RiskScorer::initial(ModelKind::logistic, static_cast<std::size_t>(features.cols()),
                                        config.optimizer);
  return gradient_descent(
      std::move(init),
      [&](const RiskScorer& m) { return equalized_distribution_objective(m, features, labels, groups, config); },
      config.optimizer);
}

}  // namespace luskin
