#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "luskin/classification_parity.hpp"
#include "luskin/error.hpp"
#include "luskin/metrics.hpp"

using namespace luskin;

namespace {

GroupPartition partition_of(std::vector<std::size_t> group_of, std::size_t groups) {
  GroupPartition p;
  p.group_of = std::move(group_of);
  for (std::size_t g = 0; g < groups; ++g) p.names.push_back("g" + std::to_string(g));
  return p;
}

/// Direct Gaussian histogram distance used as the oracle.
double oracle_distance(const std::vector<double>& s, const std::vector<int>& y, const GroupPartition& p,
                       const std::vector<double>& centers, double sigma) {
  auto hist = [&](std::size_t g, int cls) {
    std::vector<double> h(centers.size(), 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (p.group_of[i] != g || y[i] != cls) continue;
      n += 1.0;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        h[c] += std::exp(-(s[i] - centers[c]) * (s[i] - centers[c]) / (2 * sigma * sigma));
      }
    }
    for (auto& v : h) v /= n;
    return h;
  };
  double total = 0.0;
  for (std::size_t g = 1; g < p.group_count(); ++g) {
    for (int cls = 0; cls < 2; ++cls) {
      const auto a = hist(0, cls);
      const auto b = hist(g, cls);
      for (std::size_t c = 0; c < a.size(); ++c) total += (a[c] - b[c]) * (a[c] - b[c]);
    }
  }
  return total;
}

struct Fixture {
  Eigen::MatrixXd x;
  std::vector<int> y;
  GroupPartition groups;
};

/// Group 1 is shifted along the first feature so an unconstrained model
/// scores the groups differently.
Fixture shifted_fixture(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Fixture f;
  f.x.resize(rows, cols);
  std::vector<std::size_t> g;
  for (int i = 0; i < rows; ++i) {
    const std::size_t grp = static_cast<std::size_t>(i % 2);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      f.x(i, j) = n(rng) + (j == 0 && grp == 1 ? 1.0 : 0.0);
      z += f.x(i, j) * (j == 0 ? 1.5 : 0.5);
    }
    f.y.push_back(z + n(rng) > 0.5 ? 1 : 0);
    g.push_back(grp);
  }
  // both classes in both groups
  f.y[0] = 0;
  f.y[1] = 0;
  f.y[2] = 1;
  f.y[3] = 1;
  f.groups = partition_of(g, 2);
  return f;
}

std::vector<GroupScores> random_groups(std::mt19937_64& rng, std::size_t per_group, std::size_t count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GroupScores> out;
  for (std::size_t g = 0; g < count; ++g) {
    GroupScores gs;
    gs.name = "g" + std::to_string(g);
    for (std::size_t i = 0; i < per_group; ++i) {
      const double s = std::round(u(rng) * 100.0) / 100.0;
      gs.scores.push_back(s);
      gs.labels.push_back(u(rng) < s + (g == 0 ? 0.15 : -0.15) ? 1 : 0);
    }
    gs.labels[0] = 0;
    gs.labels[1] = 1;
    out.push_back(gs);
  }
  return out;
}

}  // namespace

TEST(Partition, FromColumnWithReference) {
  Schema s({{"race", ColumnKind::categorical, ColumnRole::protected_feature},
            {"label", ColumnKind::binary, ColumnRole::label}});
  const Table t(s, {{std::string("B"), std::string("1")},
                    {std::string("W"), std::string("0")},
                    {std::string("H"), std::string("1")},
                    {std::string("W"), std::string("1")}});
  const auto p = GroupPartition::from_column(t, "race", std::string("W"));
  EXPECT_EQ(p.names, (std::vector<std::string>{"W", "B", "H"}));
  EXPECT_EQ(p.group_of, (std::vector<std::size_t>{1, 0, 2, 0}));
  EXPECT_THROW(GroupPartition::from_column(t, "race", std::string("X")), EmptyGroup);
  const auto c = GroupPartition::from_condition(t, {parse_equality("race=B")});
  EXPECT_EQ(c.group_of, (std::vector<std::size_t>{0, 1, 1, 1}));
}

TEST(SoftHistogram, ScoreOnACenterCountsOne) {
  HistogramConfig cfg;
  cfg.centers = {0.5};
  cfg.sigma = 0.1;
  const std::vector<double> at{0.5};
  EXPECT_EQ(soft_histogram(at, cfg, false).counts[0], 1.0);
  // one sigma away on each side: 1 + exp(-1/2)
  cfg.centers = {0.5, 0.6};
  const std::vector<double> two{0.5, 0.6};
  const auto h = soft_histogram(two, cfg, false);
  EXPECT_NEAR(h.counts[0], 1.6065306597126334, 1e-12);
  EXPECT_NEAR(h.counts[1], 1.6065306597126334, 1e-12);
}

TEST(SoftHistogram, SymmetricAboutCenter) {
  HistogramConfig cfg;
  cfg.centers = {0.5};
  cfg.sigma = 0.03;
  const std::vector<double> lo{0.5 - 0.021};
  const std::vector<double> hi{0.5 + 0.021};
  EXPECT_NEAR(soft_histogram(lo, cfg, false).counts[0], soft_histogram(hi, cfg, false).counts[0], 1e-15);
}

TEST(SoftHistogram, RectNormalizedSumsToOne) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto cfg = HistogramConfig::uniform(10);
  cfg.kernel = HistogramKernel::rect;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(1 + rng() % 200);
    for (auto& v : s) v = u(rng);
    s[0] = 1.0;  // closed last bin
    const auto h = soft_histogram(s, cfg, true);
    EXPECT_NEAR(std::accumulate(h.counts.begin(), h.counts.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(SoftHistogram, GaussianMassIsBounded) {
  // centers 0.02 apart with sigma 0.01: each score adds at most
  // sum_k exp(-(0.02 k)^2 / 2e-4) over k in Z, about 2.5066
  const HistogramConfig cfg;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(1 + rng() % 100);
    for (auto& v : s) v = u(rng);
    const auto h = soft_histogram(s, cfg, true);
    const double mass = std::accumulate(h.counts.begin(), h.counts.end(), 0.0);
    EXPECT_GT(mass, 0.0);
    EXPECT_LE(mass, 2.5066283 + 1e-6);
  }
}

TEST(SoftHistogram, Errors) {
  EXPECT_THROW(soft_histogram({}, HistogramConfig{}, true), InvalidInput);
  HistogramConfig bad;
  bad.sigma = 0.0;
  const std::vector<double> s{0.5};
  EXPECT_THROW(soft_histogram(s, bad, false), InvalidInput);
  bad = {};
  bad.centers = {};
  EXPECT_THROW(soft_histogram(s, bad, false), InvalidInput);
}

TEST(DistributionDistance, ZeroForIdenticalGroups) {
  const std::vector<double> s{0.1, 0.7, 0.1, 0.7, 0.4, 0.4};
  const std::vector<int> y{0, 1, 0, 1, 1, 1};
  const auto p = partition_of({0, 0, 1, 1, 0, 1}, 2);
  EXPECT_EQ(distribution_distance(s, y, p, HistogramConfig{}), 0.0);
}

TEST(DistributionDistance, SixScoreHandCheck) {
  // two centers, sigma 0.25: group 0 has (0.25 | y=0) (0.75 | y=1),
  // group 1 has (0.75 | y=0) (0.25 | y=1)
  HistogramConfig cfg;
  cfg.centers = {0.25, 0.75};
  cfg.sigma = 0.25;
  cfg.bin_width = 0.5;
  const std::vector<double> s{0.25, 0.75, 0.75, 0.25, 0.25, 0.75};
  const std::vector<int> y{0, 1, 0, 1, 0, 1};
  const auto p = partition_of({0, 0, 1, 1, 0, 0}, 2);
  // per class the histograms are (1, e^-2) and (e^-2, 1): squared distance 2 (1 - e^-2)^2
  const double per_class = 2 * std::pow(1 - std::exp(-2.0), 2);
  EXPECT_NEAR(distribution_distance(s, y, p, cfg), 2 * per_class, 1e-12);
}

TEST(DistributionDistance, MatchesOracleAndIsNonNegative) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const HistogramConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = 2 + rng() % 3;
    const std::size_t n = 4 * k + rng() % 50;
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::vector<std::size_t> g(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = u(rng);
      g[i] = i < 2 * k ? i / 2 : rng() % k;
      y[i] = i < 2 * k ? static_cast<int>(i % 2) : static_cast<int>(rng() % 2);
    }
    const auto p = partition_of(g, k);
    const double d = distribution_distance(s, y, p, cfg);
    EXPECT_GE(d, 0.0);
    EXPECT_NEAR(d, oracle_distance(s, y, p, cfg.centers, cfg.sigma), 1e-10);
  }
}

TEST(DistributionDistance, ScoreGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  const auto cfg = HistogramConfig::uniform(10, 0.08);
  std::vector<double> s(12);
  for (auto& v : s) v = u(rng);
  const std::vector<int> y{0, 1, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0};
  const auto p = partition_of({0, 0, 1, 1, 2, 2, 0, 1, 2, 0, 1, 2}, 3);
  std::vector<double> grad;
  distribution_distance(s, y, p, cfg, &grad);
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto up = s, down = s;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double numeric =
        (distribution_distance(up, y, p, cfg) - distribution_distance(down, y, p, cfg)) / 2e-6;
    EXPECT_NEAR(grad[i], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
  }
}

TEST(DistributionDistance, MissingClassThrows) {
  const std::vector<double> s{0.1, 0.2, 0.3};
  const std::vector<int> y{0, 1, 0};
  EXPECT_THROW(distribution_distance(s, y, partition_of({0, 0, 1}, 2), HistogramConfig{}), EmptyGroup);
}

TEST(EqualizedOdds, EightRowHandComputation) {
  // group 0: TPR 1/2, FPR 1/2; group 1: TPR 1, FPR 0
  std::vector<GroupScores> g(2);
  g[0] = {"a", {0.9, 0.2, 0.7, 0.1}, {1, 1, 0, 0}};
  g[1] = {"b", {0.8, 0.6, 0.3, 0.4}, {1, 1, 0, 0}};
  const std::vector<double> t{0.5, 0.5};
  const auto r = equalized_odds(g, t, 1.0);
  EXPECT_DOUBLE_EQ(r.accuracy, 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(r.disparity, 0.5 + 0.5);
  EXPECT_DOUBLE_EQ(r.value, 0.75 - 1.0);
  EXPECT_DOUBLE_EQ(equalized_odds_objective(g, t, 2.0), 0.75 - 2.0);
}

TEST(EqualizedOdds, LambdaZeroIsAccuracy) {
  std::mt19937_64 rng(10);
  const auto g = random_groups(rng, 30, 3);
  const std::vector<double> t{0.4, 0.5, 0.6};
  std::vector<double> all_s;
  std::vector<int> all_y;
  std::size_t correct = 0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    for (std::size_t i = 0; i < g[k].scores.size(); ++i) {
      correct += (g[k].scores[i] >= t[k] ? 1 : 0) == g[k].labels[i];
    }
  }
  EXPECT_DOUBLE_EQ(equalized_odds_objective(g, t, 0.0), static_cast<double>(correct) / 90.0);
}

TEST(EqualizedOdds, Errors) {
  std::vector<GroupScores> one{{"a", {0.1, 0.9}, {0, 1}}};
  const std::vector<double> t{0.5};
  EXPECT_THROW(equalized_odds(one, t, 1.0), InvalidInput);
  std::vector<GroupScores> g{{"a", {0.1, 0.9}, {0, 1}}, {"b", {0.1, 0.9}, {1, 1}}};
  const std::vector<double> t2{0.5, 0.5};
  EXPECT_THROW(equalized_odds(g, t2, 1.0), Error);
  const std::vector<double> wrong{0.5};
  std::vector<GroupScores> ok{{"a", {0.1, 0.9}, {0, 1}}, {"b", {0.1, 0.9}, {0, 1}}};
  EXPECT_THROW(equalized_odds(ok, wrong, 1.0), InvalidInput);
}

TEST(Pso, MaximizesASmoothBowl) {
  PsoConfig cfg;
  cfg.lower = {-5, -5, -5};
  cfg.upper = {5, 5, 5};
  cfg.seed = 3;
  const auto r = particle_swarm_maximize(
      [](std::span<const double> x) { return -(x[0] - 1) * (x[0] - 1) - (x[1] + 2) * (x[1] + 2) - x[2] * x[2]; },
      cfg);
  EXPECT_NEAR(r.best_position[0], 1.0, 1e-3);
  EXPECT_NEAR(r.best_position[1], -2.0, 1e-3);
  EXPECT_NEAR(r.best_value, 0.0, 1e-6);
  EXPECT_EQ(r.history.size(), cfg.iterations + 1);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_GE(r.history[i], r.history[i - 1]);
}

TEST(Pso, DeterministicPerSeed) {
  PsoConfig cfg;
  cfg.lower = {0, 0};
  cfg.upper = {1, 1};
  cfg.iterations = 30;
  const auto f = [](std::span<const double> x) { return std::sin(7 * x[0]) * std::cos(5 * x[1]); };
  const auto a = particle_swarm_maximize(f, cfg);
  const auto b = particle_swarm_maximize(f, cfg);
  EXPECT_EQ(a.best_position, b.best_position);
  EXPECT_EQ(a.history, b.history);
}

TEST(Pso, ConfigValidation) {
  PsoConfig cfg;
  EXPECT_THROW(cfg.validate(2), InvalidInput);  // no bounds
  cfg.lower = {0, 0};
  cfg.upper = {1, -1};
  EXPECT_THROW(cfg.validate(2), InvalidInput);
  cfg.upper = {1, 1};
  cfg.particles = 0;
  EXPECT_THROW(cfg.validate(2), InvalidInput);
}

TEST(TuneThresholds, AtLeastTheGridOptimum) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_groups(rng, 10, 2);
    PsoConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto tuned = tune_thresholds_pso(g, 1.0, cfg);
    double grid_best = -1e300;
    std::vector<double> t(2);
    for (int a = 0; a <= 1000; ++a) {
      t[0] = a * 1e-3;
      for (int b = 0; b <= 1000; ++b) {
        t[1] = b * 1e-3;
        grid_best = std::max(grid_best, equalized_odds_objective(g, t, 1.0));
      }
    }
    EXPECT_GE(tuned.objective, grid_best - 1e-6) << "trial " << trial;
    EXPECT_DOUBLE_EQ(tuned.objective, equalized_odds_objective(g, tuned.thresholds, 1.0));
  }
}

TEST(TuneThresholds, ThresholdsSitBetweenScores) {
  std::mt19937_64 rng(12);
  const auto g = random_groups(rng, 40, 3);
  const auto tuned = tune_thresholds_pso(g, 1.0, PsoConfig{});
  ASSERT_EQ(tuned.thresholds.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    for (double s : g[k].scores) EXPECT_NE(s, tuned.thresholds[k]);
  }
  EXPECT_EQ(ThresholdSet::from_json(tuned.to_json()), tuned);
}

TEST(TuneThresholds, EqualizedOddsImprovesOnCommonThreshold) {
  std::mt19937_64 rng(13);
  const auto g = random_groups(rng, 200, 2);
  const std::vector<double> common{0.5, 0.5};
  const auto tuned = tune_thresholds_pso(g, 1.0, PsoConfig{});
  EXPECT_GE(tuned.objective, equalized_odds_objective(g, common, 1.0));
  EXPECT_LE(equalized_odds(g, tuned.thresholds, 1.0).disparity, equalized_odds(g, common, 1.0).disparity);
}

TEST(FairLoss, GradientMatchesFiniteDifferences) {
  const auto f = shifted_fixture(12, 3, 14);
  FairTrainConfig cfg;
  cfg.alpha = 0.3;
  cfg.histogram = HistogramConfig::uniform(10, 0.1);
  auto m = RiskScorer::initial(ModelKind::logistic, 3, cfg.optimizer);
  std::mt19937_64 rng(15);
  std::normal_distribution<double> n(0.0, 0.5);
  for (int rep = 0; rep < 3; ++rep) {
    Eigen::VectorXd theta(static_cast<Eigen::Index>(m.parameter_count()));
    for (auto& v : theta) v = n(rng);
    m.set_parameters(theta);
    const auto lg = equalized_distribution_objective(m, f.x, f.y, f.groups, cfg);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      Eigen::VectorXd up = theta, down = theta;
      up(i) += 1e-6;
      down(i) -= 1e-6;
      m.set_parameters(up);
      const double lu = equalized_distribution_objective(m, f.x, f.y, f.groups, cfg).loss;
      m.set_parameters(down);
      const double ld = equalized_distribution_objective(m, f.x, f.y, f.groups, cfg).loss;
      const double numeric = (lu - ld) / 2e-6;
      EXPECT_NEAR(lg.gradient(i), numeric, 1e-5 * std::max(1.0, std::abs(numeric)));
    }
    m.set_parameters(theta);
  }
}

TEST(FairLoss, AlphaOneMatchesPlainLogistic) {
  const auto f = shifted_fixture(200, 4, 16);
  FairTrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.optimizer.iterations = 300;
  const auto fair = train_equalized_distribution(f.x, f.y, f.groups, cfg);
  const auto plain = train_logistic(f.x, f.y, cfg.optimizer);
  EXPECT_LE((fair.parameters() - plain.parameters()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(FairLoss, SmallerAlphaTradesAccuracyForDistance) {
  const auto f = shifted_fixture(600, 4, 17);
  FairTrainConfig hi;
  hi.alpha = 1.0;
  hi.optimizer.iterations = 500;
  FairTrainConfig lo = hi;
  lo.alpha = 0.01;
  const auto a = train_equalized_distribution(f.x, f.y, f.groups, hi);
  const auto b = train_equalized_distribution(f.x, f.y, f.groups, lo);
  const Eigen::VectorXd sa = a.score_all(f.x);
  const Eigen::VectorXd sb = b.score_all(f.x);
  const std::span<const double> va(sa.data(), static_cast<std::size_t>(sa.size()));
  const std::span<const double> vb(sb.data(), static_cast<std::size_t>(sb.size()));
  EXPECT_GE(accuracy(va, f.y, 0.5), accuracy(vb, f.y, 0.5));
  EXPECT_LT(distribution_distance(b, f.x, f.y, f.groups, lo.histogram),
            distribution_distance(a, f.x, f.y, f.groups, hi.histogram));
}

TEST(FairLoss, RejectsNonLogistic) {
  const auto f = shifted_fixture(12, 3, 18);
  TrainConfig t;
  t.hidden_layers = {2};
  const auto m = RiskScorer::initial(ModelKind::mlp, 3, t);
  EXPECT_THROW(equalized_distribution_objective(m, f.x, f.y, f.groups, FairTrainConfig{}), InvalidInput);
  FairTrainConfig bad;
  bad.alpha = 1.5;
  EXPECT_THROW(train_equalized_distribution(f.x, f.y, f.groups, bad), InvalidInput);
}

TEST(TuneThresholds, ThreeGroupsMatchBruteForceLattice) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = random_groups(rng, 6, 3);
    const auto tuned = tune_thresholds_pso(g, 1.0, PsoConfig{});
    std::vector<std::vector<double>> c(3);
    for (std::size_t k = 0; k < 3; ++k) {
      c[k] = g[k].scores;
      c[k].push_back(2.0);
    }
    double best = -1e300;
    std::vector<double> t(3);
    for (double a : c[0])
      for (double b : c[1])
        for (double d : c[2]) {
          t = {a, b, d};
          best = std::max(best, equalized_odds_objective(g, t, 1.0));
        }
    EXPECT_NEAR(tuned.objective, best, 1e-12) << "trial " << trial;
  }
}
