#include "luskin/controlled_fairness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "luskin/error.hpp"
#include "luskin/metrics.hpp"

namespace luskin {
namespace {

nlohmann::json condition_json(const FilterCondition& cond) {
  auto out = nlohmann::json::array();
  for (const auto& c : cond.clauses) out.push_back(c.describe());
  return out;
}

double safe_ratio(std::size_t positives, std::size_t rows) {
  return static_cast<double>(positives) / static_cast<double>(rows);
}

/// Row indices of the filtered protected group, the filtered unprotected
/// group and everything outside the filter.
struct Partition {
  std::vector<std::size_t> dnp;
  std::vector<std::size_t> not_dnp;
  std::vector<std::size_t> outside;
};

Partition partition_rows(const Table& table, const FairnessSpec& spec) {
  spec.validate(table.schema());
  RowPredicate in_filter(table.schema(), spec.unprotected_filter);
  RowPredicate in_protected(table.schema(), spec.protected_condition);
  Partition p;
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    const auto& row = table.rows()[r];
    if (!in_filter(row)) p.outside.push_back(r);
    else if (in_protected(row)) p.dnp.push_back(r);
    else p.not_dnp.push_back(r);
  }
  return p;
}

std::size_t count_positive(const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
  std::size_t n = 0;
  for (auto i : idx) n += labels[i] == 1 ? 1 : 0;
  return n;
}

RatioReport make_report(const std::vector<int>& labels, const Partition& p, const FairnessSpec& spec) {
  if (p.dnp.empty()) {
    throw EmptyGroup("(" + spec.unprotected_filter.describe() + ") and (" + spec.protected_condition.describe() + ")");
  }
  if (p.not_dnp.empty()) {
    throw EmptyGroup("(" + spec.unprotected_filter.describe() + ") and not (" +
                     spec.protected_condition.describe() + ")");
  }
  RatioReport r;
  r.count_p = p.dnp.size();
  r.positives_p = count_positive(labels, p.dnp);
  r.count_not_p = p.not_dnp.size();
  r.positives_not_p = count_positive(labels, p.not_dnp);
  r.ratio_p = safe_ratio(r.positives_p, r.count_p);
  r.ratio_not_p = safe_ratio(r.positives_not_p, r.count_not_p);
  r.epsilon = spec.epsilon;
  r.fair = std::abs(r.ratio_p - r.ratio_not_p) <= spec.epsilon;
  return r;
}

/// threshold' such that round(alpha) scores are >= it.
double adjusted_threshold(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw InvalidInput("risk adjustment needs at least one score");
  if (!(alpha >= 0.0) || alpha > static_cast<double>(scores.size())) {
    throw InvalidInput("alpha " + std::to_string(alpha) + " outside [0, " + std::to_string(scores.size()) + "]");
  }
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t rank = round_half_up(alpha);
  if (rank == 0) {
    const double top = sorted.front();
    return std::max(top + 1e-12, std::nextafter(top, std::numeric_limits<double>::infinity()));
  }
  return sorted[rank - 1];
}

struct Direction {
  const std::vector<std::size_t>* advantaged;
  const std::vector<std::size_t>* disadvantaged;
  AdvantagedGroup group;
};

Direction pick_direction(const Partition& p, const RatioReport& r) {
  if (r.ratio_p >= r.ratio_not_p) return {&p.dnp, &p.not_dnp, AdvantagedGroup::protected_true};
  return {&p.not_dnp, &p.dnp, AdvantagedGroup::protected_false};
}

SyntheticResult unchanged(const Table& table, const RatioReport& before, double threshold) {
  SyntheticResult out;
  out.synthetic = table;
  out.source_rows.resize(table.row_count());
  std::iota(out.source_rows.begin(), out.source_rows.end(), 0);
  out.adjusted = false;
  out.advantaged = before.ratio_p >= before.ratio_not_p ? AdvantagedGroup::protected_true
                                                         : AdvantagedGroup::protected_false;
  out.advantaged_rows = out.advantaged == AdvantagedGroup::protected_true ? before.count_p : before.count_not_p;
  out.disadvantaged_rows = out.advantaged == AdvantagedGroup::protected_true ? before.count_not_p : before.count_p;
  out.adjusted_threshold = threshold;
  out.before = before;
  return out;
}

Table assemble(const Table& table, const std::vector<std::size_t>& order, const std::vector<int>& labels,
               std::size_t label_column) {
  std::vector<Row> rows;
  rows.reserve(order.size());
  for (auto i : order) {
    rows.push_back(table.rows()[i]);
    rows.back()[label_column] = std::string(labels[i] != 0 ? "1" : "0");
  }
  return table.with_rows(std::move(rows));
}

}  // namespace

void FairnessSpec::validate(const Schema& schema) const {
  if (protected_condition.clauses.size() != 1) {
    throw InvalidInput("protected condition must be a single clause");
  }
  protected_condition.validate(schema);
  unprotected_filter.validate(schema);
  const auto& pcol = schema[schema.index_of(protected_condition.clauses.front().column)];
  if (pcol.role != ColumnRole::protected_feature) {
    throw InvalidInput("column '" + pcol.name + "' is not a protected column");
  }
  for (const auto& c : unprotected_filter.clauses) {
    const auto& col = schema[schema.index_of(c.column)];
    if (col.role != ColumnRole::unprotected) {
      throw InvalidInput("filter column '" + col.name + "' is not an unprotected column");
    }
  }
  if (!(epsilon >= 0.0)) throw InvalidInput("epsilon must be non-negative");
}

nlohmann::json FairnessSpec::to_json() const {
  return {{"protected", condition_json(protected_condition)},
          {"filter", condition_json(unprotected_filter)},
          {"epsilon", epsilon}};
}

nlohmann::json RatioReport::to_json() const {
  return {{"count_p", count_p},         {"positives_p", positives_p}, {"ratio_p", ratio_p},
          {"count_not_p", count_not_p}, {"positives_not_p", positives_not_p},
          {"ratio_not_p", ratio_not_p}, {"epsilon", epsilon},         {"fair", fair}};
}

double ratio(const Table& labeled) {
  if (labeled.empty()) throw InvalidInput("ratio of an empty table");
  return safe_ratio(labeled.positive_count(), labeled.row_count());
}

RatioReport check_fair(const Table& labeled, const FairnessSpec& spec) {
  const auto p = partition_rows(labeled, spec);
  return make_report(labeled.labels(), p, spec);
}

Table attach_scores(const Table& table, const RiskScorer& model, const Preprocessor& prep) {
  const Eigen::VectorXd s = model.score_all(prep.transform(table));
  return table.with_scores(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

Table label_with_model(const Table& table, const RiskScorer& model, double threshold, const Preprocessor& prep) {
  Table scored = attach_scores(table, model, prep);
  const auto scores = scored.scores();
  std::vector<int> labels(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) labels[i] = scores[i] >= threshold ? 1 : 0;
  return scored.with_labels(labels);
}

double compute_alpha(std::size_t dnp_rows, std::size_t not_dnp_positives, std::size_t not_dnp_rows) {
  if (not_dnp_rows == 0) throw EmptyGroup("not DNP");
  return static_cast<double>(dnp_rows) * static_cast<double>(not_dnp_positives) /
         static_cast<double>(not_dnp_rows);
}

double compute_alpha(const Table& dnp, const Table& not_dnp) {
  return compute_alpha(dnp.row_count(), not_dnp.empty() ? 0 : not_dnp.positive_count(), not_dnp.row_count());
}

std::size_t round_half_up(double x) {
  if (!(x >= 0.0)) throw InvalidInput("cannot round a negative count");
  return static_cast<std::size_t>(std::floor(x + 0.5));
}

double compute_delta(std::span<const double> scores, double alpha, double threshold) {
  return adjusted_threshold(scores, alpha) - threshold;
}

std::string_view to_string(AdvantagedGroup group) {
  return group == AdvantagedGroup::protected_true ? "protected" : "not_protected";
}

nlohmann::json SyntheticResult::summary() const {
  return {{"adjusted", adjusted},
          {"advantaged_group", std::string(to_string(advantaged))},
          {"advantaged_rows", advantaged_rows},
          {"disadvantaged_rows", disadvantaged_rows},
          {"alpha", alpha},
          {"delta", delta},
          {"adjusted_threshold", adjusted_threshold},
          {"beta", beta},
          {"rows", synthetic.row_count()},
          {"before", before.to_json()}};
}

SyntheticResult synth_risk_adjust(const Table& table, const FairnessSpec& spec, double threshold) {
  const auto label_col = table.schema().require_label();
  const auto scores = table.scores();
  auto labels = table.labels();
  const auto p = partition_rows(table, spec);
  const auto before = make_report(labels, p, spec);
  if (before.fair) return unchanged(table, before, threshold);

  const auto dir = pick_direction(p, before);
  const auto& adv = *dir.advantaged;
  const auto& dis = *dir.disadvantaged;

  SyntheticResult out;
  out.adjusted = true;
  out.advantaged = dir.group;
  out.advantaged_rows = adv.size();
  out.disadvantaged_rows = dis.size();
  out.before = before;
  out.alpha = compute_alpha(adv.size(), count_positive(labels, dis), dis.size());

  std::vector<double> adv_scores;
  adv_scores.reserve(adv.size());
  for (auto i : adv) adv_scores.push_back(scores[i]);
  out.adjusted_threshold = adjusted_threshold(adv_scores, out.alpha);
  out.delta = out.adjusted_threshold - threshold;
  // Comparing against threshold' avoids the rounding in (score - delta).
  for (auto i : adv) labels[i] = scores[i] >= out.adjusted_threshold ? 1 : 0;

  out.source_rows = adv;
  out.source_rows.insert(out.source_rows.end(), dis.begin(), dis.end());
  out.source_rows.insert(out.source_rows.end(), p.outside.begin(), p.outside.end());
  out.synthetic = assemble(table, out.source_rows, labels, label_col);
  return out;
}

SyntheticResult synth_risk_flip(const Table& table, const FairnessSpec& spec) {
  const auto label_col = table.schema().require_label();
  const auto scores = table.scores();
  auto labels = table.labels();
  const auto p = partition_rows(table, spec);
  const auto before = make_report(labels, p, spec);
  if (before.fair) return unchanged(table, before, 0.0);

  const auto dir = pick_direction(p, before);
  const auto& adv = *dir.advantaged;
  const auto& dis = *dir.disadvantaged;

  SyntheticResult out;
  out.adjusted = true;
  out.advantaged = dir.group;
  out.advantaged_rows = adv.size();
  out.disadvantaged_rows = dis.size();
  out.before = before;
  out.alpha = compute_alpha(adv.size(), count_positive(labels, dis), dis.size());

  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  for (auto i : adv) (labels[i] == 1 ? positives : negatives).push_back(i);
  std::stable_sort(positives.begin(), positives.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const std::size_t target = round_half_up(out.alpha);
  out.beta = positives.size() > target ? positives.size() - target : 0;
  for (std::size_t k = 0; k < out.beta; ++k) labels[positives[k]] = 0;

  out.source_rows = positives;
  out.source_rows.insert(out.source_rows.end(), negatives.begin(), negatives.end());
  out.source_rows.insert(out.source_rows.end(), dis.begin(), dis.end());
  out.source_rows.insert(out.source_rows.end(), p.outside.begin(), p.outside.end());
  out.synthetic = assemble(table, out.source_rows, labels, label_col);
  return out;
}

SyntheticResult synth_risk_adjust(const Table& d2, const RiskScorer& model, const Preprocessor& prep,
                                  const FairnessSpec& spec, double threshold) {
  return synth_risk_adjust(label_with_model(d2, model, threshold, prep), spec, threshold);
}

SyntheticResult synth_risk_flip(const Table& d2, const RiskScorer& model, const Preprocessor& prep,
                                const FairnessSpec& spec) {
  return synth_risk_flip(attach_scores(d2, model, prep), spec);
}

// ---------------------------------------------------------------- pipeline

std::string_view to_string(RepairAlgorithm algorithm) {
  return algorithm == RepairAlgorithm::risk_adjust ? "risk_adjust" : "risk_flip";
}

std::string_view to_string(LabelSource source) {
  switch (source) {
    case LabelSource::original: return "original";
    case LabelSource::first_model: return "first_model";
    case LabelSource::second_model: return "second_model";
  }
  return "?";
}

void PipelineConfig::validate(const Schema& schema) const {
  spec.validate(schema);
  split.validate();
  if (split.fractions.size() != 3) throw InvalidInput("pipeline split needs exactly three fractions");
  for (auto kind : {first_model, second_model}) {
    if (kind != ModelKind::logistic && kind != ModelKind::mlp) {
      throw InvalidInput("pipeline models must be logistic or mlp");
    }
  }
  first_train.validate();
  second_train.validate();
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"first_model", std::string(to_string(first_model))},
          {"second_model", std::string(to_string(second_model))},
          {"algorithm", static_cast<int>(algorithm)},
          {"threshold", threshold},
          {"spec", spec.to_json()},
          {"split", split.fractions},
          {"seed", split.seed},
          {"first_train", first_train.to_json()},
          {"second_train", second_train.to_json()},
          {"drops", drops}};
}

std::vector<RatioCell> ratio_cells(const Table& labeled, const FairnessSpec& spec, LabelSource source) {
  spec.validate(labeled.schema());
  RowPredicate in_filter(labeled.schema(), spec.unprotected_filter);
  RowPredicate in_protected(labeled.schema(), spec.protected_condition);
  const auto labels = labeled.labels();
  // index: group (0 = P, 1 = notP) * 2 + filter (0 = N, 1 = notN)
  std::size_t rows[4] = {0, 0, 0, 0};
  std::size_t pos[4] = {0, 0, 0, 0};
  for (std::size_t r = 0; r < labeled.row_count(); ++r) {
    const auto& row = labeled.rows()[r];
    const std::size_t k = (in_protected(row) ? 0 : 2) + (in_filter(row) ? 0 : 1);
    ++rows[k];
    pos[k] += labels[r] == 1 ? 1 : 0;
  }
  std::vector<RatioCell> cells;
  for (std::size_t k = 0; k < 4; ++k) {
    RatioCell c;
    c.source = source;
    c.protected_group = k < 2;
    c.filtered = k % 2 == 0;
    c.rows = rows[k];
    c.positives = pos[k];
    if (rows[k] > 0) c.ratio = safe_ratio(pos[k], rows[k]);
    cells.push_back(c);
  }
  return cells;
}

const RatioCell& PipelineReport::cell(LabelSource source, bool protected_group, bool filtered) const {
  for (const auto& c : cells) {
    if (c.source == source && c.protected_group == protected_group && c.filtered == filtered) return c;
  }
  throw InvalidInput("ratio cell not present in report");
}

double PipelineReport::filtered_gap(LabelSource source) const {
  const auto& p = cell(source, true, true);
  const auto& q = cell(source, false, true);
  if (!p.ratio || !q.ratio) throw EmptyGroup("filtered evaluation group");
  return *p.ratio - *q.ratio;
}

PipelineReport run_pipeline(const Table& data, const PipelineConfig& config) {
  config.validate(data.schema());
  const auto parts = split(data, config.split);
  const Table& d1 = parts[0];
  const Table& d2 = parts[1];
  const Table& d4 = parts[2];

  PipelineReport report;
  report.rows_d1 = d1.row_count();
  report.rows_d2 = d2.row_count();
  report.rows_d4 = d4.row_count();
  report.preprocessor = Preprocessor::fit(d1, config.drops);
  const auto& prep = report.preprocessor;

  const auto x1 = prep.apply(d1);
  report.first_model = train(config.first_model, x1.features, x1.labels, config.first_train);

  if (config.algorithm == RepairAlgorithm::risk_adjust) {
    report.synthesis = synth_risk_adjust(label_with_model(d2, report.first_model, config.threshold, prep),
                                         config.spec, config.threshold);
  } else {
    report.synthesis = synth_risk_flip(attach_scores(d2, report.first_model, prep), config.spec);
  }

  const auto x3 = prep.apply(report.synthesis.synthetic);
  report.second_model = train(config.second_model, x3.features, x3.labels, config.second_train);

  const auto x4 = prep.apply(d4);
  const Eigen::VectorXd s1 = report.first_model.score_all(x4.features);
  const Eigen::VectorXd s2 = report.second_model.score_all(x4.features);
  const std::span<const double> span1(s1.data(), static_cast<std::size_t>(s1.size()));
  const std::span<const double> span2(s2.data(), static_cast<std::size_t>(s2.size()));
  report.auc_first = auc(span1, x4.labels);
  report.auc_second = auc(span2, x4.labels);

  auto thresholded = [&](std::span<const double> s) {
    std::vector<int> y(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i] >= config.threshold ? 1 : 0;
    return y;
  };
  for (auto [source, table] : {std::pair{LabelSource::original, d4},
                               std::pair{LabelSource::first_model, d4.with_labels(thresholded(span1))},
                               std::pair{LabelSource::second_model, d4.with_labels(thresholded(span2))}}) {
    auto cells = ratio_cells(table, config.spec, source);
    report.cells.insert(report.cells.end(), cells.begin(), cells.end());
  }
  if (report.cell(LabelSource::original, true, true).rows == 0) {
    throw EmptyGroup("evaluation split: filter and protected");
  }
  if (report.cell(LabelSource::original, false, true).rows == 0) {
    throw EmptyGroup("evaluation split: filter and not protected");
  }
  return report;
}

}  // namespace luskin
