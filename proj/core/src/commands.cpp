#include "luskin/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <ostream>

#include "luskin/classification_parity.hpp"
#include "luskin/controlled_fairness.hpp"
#include "luskin/demo.hpp"
#include "luskin/error.hpp"
#include "luskin/metrics.hpp"
#include "luskin/models.hpp"
#include "luskin/preprocess.hpp"
#include "luskin/tabular.hpp"

namespace luskin {
namespace {

const std::vector<double> kDefaultAlphas = {0.01, 0.1, 0.2, 1.0};

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct LoadedData {
  Table table;
  nlohmann::json info;
};

LoadedData load_data(const RunConfig& cfg) {
  LoadedData d;
  if (cfg.demo) {
    d.table = make_demo_table({cfg.demo_rows, cfg.demo_bias, cfg.resolved_seed()});
    d.info = {{"source", "demo"}, {"rows", d.table.row_count()}, {"rows_dropped", 0}};
    return d;
  }
  if (cfg.data.empty() || cfg.schema.empty()) throw InvalidInput("--data and --schema are required (or use --demo)");
  CsvLoadStats stats;
  d.table = load_csv(cfg.data, load_schema(cfg.schema), &stats);
  d.info = {{"source", cfg.data.filename().string()}, {"rows", d.table.row_count()},
            {"rows_dropped", stats.rows_dropped}};
  return d;
}

FairnessSpec make_spec(const RunConfig& cfg) {
  if (cfg.protected_condition.empty()) throw InvalidInput("--protected COL=VAL is required");
  FairnessSpec spec;
  spec.protected_condition = FilterCondition{parse_equality(cfg.protected_condition)};
  for (const auto& f : cfg.filters) spec.unprotected_filter.clauses.push_back(parse_clause(f[0], f[1], f[2]));
  spec.epsilon = cfg.epsilon;
  return spec;
}

SplitSpec make_split(const RunConfig& cfg, std::vector<double> fallback) {
  SplitSpec s{cfg.split.empty() ? std::move(fallback) : cfg.split, cfg.resolved_seed()};
  s.validate();
  if (s.fractions.size() != 3) throw InvalidInput("--split needs three fractions");
  return s;
}

TrainConfig make_train(const RunConfig& cfg, TrainConfig base = {}) {
  base.seed = cfg.resolved_seed();
  if (cfg.iterations) base.iterations = *cfg.iterations;
  return base;
}

ModelKind pipeline_model(const std::string& name) {
  const auto kind = parse_model_kind(name);
  if (kind == ModelKind::linear_svm) throw InvalidInput("pipeline models are lr or mlp");
  return kind;
}

void add_ratio_rows(TableBlock& block, const std::vector<RatioCell>& cells) {
  for (const auto& c : cells) {
    block.add_row({std::string(to_string(c.source)), c.protected_group ? "P" : "notP", c.filtered ? "N" : "notN",
                   c.rows, c.positives, c.ratio ? nlohmann::json(*c.ratio) : nlohmann::json()});
  }
}

const std::vector<std::string> kRatioColumns = {"source", "group", "filter", "rows", "positives", "ratio"};

// ----------------------------------------------- parity command plumbing

/// Train/validation/test features with group labels for the parity commands.
struct ParityData {
  std::string group_column;
  std::vector<std::string> group_names;
  Preprocessor prep;
  std::optional<PcaModel> pca;
  std::array<Eigen::MatrixXd, 3> x;
  std::array<std::vector<int>, 3> y;
  std::array<GroupPartition, 3> groups;
  nlohmann::json info;
};

GroupPartition partition_with(const Table& t, std::size_t column, const std::vector<std::string>& names) {
  GroupPartition p;
  p.names = names;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    const auto& v = t.rows()[r][column];
    const std::string key = std::holds_alternative<double>(v) ? format_number(std::get<double>(v))
                                                              : std::get<std::string>(v);
    p.group_of.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), key) - names.begin()));
  }
  p.validate();
  return p;
}

ParityData prepare_parity(const RunConfig& cfg, const Table& table) {
  if (cfg.protected_condition.empty()) throw InvalidInput("--protected COL=VAL is required");
  const Clause ref = parse_equality(cfg.protected_condition);
  ParityData d;
  d.group_column = ref.column;
  const auto col = table.schema().index_of(ref.column);
  if (table.schema()[col].role != ColumnRole::protected_feature) {
    throw InvalidInput("column '" + ref.column + "' is not a protected column");
  }
  d.group_names = GroupPartition::from_column(table, ref.column, std::get<std::string>(ref.operands.front())).names;

  const auto parts = split(table, make_split(cfg, {0.6, 0.2, 0.2}));
  d.prep = Preprocessor::fit(parts[0], {ref.column});
  for (std::size_t i = 0; i < 3; ++i) {
    auto fm = d.prep.apply(parts[i]);
    d.x[i] = std::move(fm.features);
    d.y[i] = std::move(fm.labels);
    d.groups[i] = partition_with(parts[i], col, d.group_names);
  }
  const std::size_t dim = d.prep.output_dimension();
  d.info = {{"group_column", ref.column}, {"groups", d.group_names}, {"feature_dimension", dim},
            {"rows", {parts[0].row_count(), parts[1].row_count(), parts[2].row_count()}}};
  if (cfg.pca > 0 && cfg.pca < dim) {
    d.pca = PcaModel::fit(d.x[0], cfg.pca);
    for (auto& m : d.x) m = d.pca->apply(m);
    d.info["pca_dimension"] = cfg.pca;
  }
  return d;
}

struct GroupRates {
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t rows = 0;
};

std::vector<GroupRates> rates_by_group(std::span<const double> scores, std::span<const int> labels,
                                       const GroupPartition& groups, std::span<const double> thresholds) {
  const auto gs = group_scores(scores, labels, groups);
  std::vector<GroupRates> out;
  for (std::size_t k = 0; k < gs.size(); ++k) {
    const auto m = tpr_fpr(gs[k].scores, gs[k].labels, thresholds[k]);
    out.push_back({m.accuracy, m.tpr, m.fpr, gs[k].scores.size()});
  }
  return out;
}

double overall_accuracy(const std::vector<GroupRates>& r) {
  double correct = 0.0;
  double rows = 0.0;
  for (const auto& g : r) {
    correct += g.accuracy * static_cast<double>(g.rows);
    rows += static_cast<double>(g.rows);
  }
  return correct / rows;
}

/// Largest |rate_0 - rate_k| over k >= 1.
double max_gap(const std::vector<GroupRates>& r, double GroupRates::*rate) {
  double gap = 0.0;
  for (std::size_t k = 1; k < r.size(); ++k) gap = std::max(gap, std::abs(r[0].*rate - r[k].*rate));
  return gap;
}

}  // namespace

// ---------------------------------------------------------------- config

std::uint64_t RunConfig::resolved_seed() const {
  if (seed) return *seed;
  if (const char* env = std::getenv("LUSKIN_SEED"); env && *env) {
    std::uint64_t v = 0;
    const auto* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || ptr != end) throw InvalidInput("LUSKIN_SEED is not an unsigned integer");
    return v;
  }
  return 0;
}

nlohmann::json RunConfig::to_json() const {
  auto filter_json = nlohmann::json::array();
  for (const auto& f : filters) filter_json.push_back({f[0], f[1], f[2]});
  nlohmann::json j = {{"command", command},
                      {"data", data.string()},
                      {"schema", schema.string()},
                      {"demo", demo},
                      {"protected", protected_condition},
                      {"filters", filter_json},
                      {"epsilon", epsilon},
                      {"seed", resolved_seed()}};
  if (demo) j["demo_options"] = {{"rows", demo_rows}, {"bias", demo_bias}};
  if (command == "retrain") {
    j["algo"] = algo;
    j["first_model"] = first_model;
    j["second_model"] = second_model;
    j["drop"] = drops;
  }
  if (command == "tune-thresholds") {
    j["model"] = model;
    j["lambda"] = lambda;
  }
  if (command == "train-fair") {
    j["alpha"] = alphas.empty() ? kDefaultAlphas : alphas;
    j["bins"] = bins;
    j["sigma"] = sigma ? nlohmann::json(*sigma) : nlohmann::json();
  }
  if (command == "tune-thresholds" || command == "train-fair") j["pca"] = pca;
  j["threshold"] = threshold ? nlohmann::json(*threshold) : nlohmann::json();
  j["split"] = split;
  j["iterations"] = iterations ? nlohmann::json(*iterations) : nlohmann::json();
  return j;
}

// ------------------------------------------------------------------ audit

CommandResult cmd_audit(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto spec = make_spec(cfg);
  spec.validate(data.table.schema());

  CommandResult res;
  auto& doc = res.report;
  doc.command = "audit";
  doc.config = cfg.to_json();
  doc.metrics["data"] = data.info;
  doc.metrics["spec"] = spec.to_json();

  const auto verdict = check_fair(data.table, spec);
  doc.metrics["filtered"] = verdict.to_json();
  // The complement of the filter is reported when both groups occur there.
  FairnessSpec outside = spec;
  if (!spec.unprotected_filter.empty()) {
    const auto rest = exclude(data.table, spec.unprotected_filter);
    const auto p = filter(rest, spec.protected_condition);
    if (!p.empty() && p.row_count() < rest.row_count()) {
      outside.unprotected_filter = {};
      doc.metrics["outside_filter"] = check_fair(rest, outside).to_json();
    }
  }
  auto& ratios = doc.add_table("ratios", kRatioColumns);
  add_ratio_rows(ratios, ratio_cells(data.table, spec, LabelSource::original));
  doc.metrics["fair"] = verdict.fair;
  res.exit_code = verdict.fair ? exit_ok : exit_unfair;
  return res;
}

// ---------------------------------------------------------------- retrain

CommandResult cmd_retrain(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  PipelineConfig pc;
  pc.first_model = pipeline_model(cfg.first_model);
  pc.second_model = pipeline_model(cfg.second_model);
  if (cfg.algo != 1 && cfg.algo != 2) throw InvalidInput("--algo must be 1 or 2");
  pc.algorithm = static_cast<RepairAlgorithm>(cfg.algo);
  pc.threshold = cfg.threshold.value_or(0.5);
  pc.spec = make_spec(cfg);
  pc.split = make_split(cfg, {0.4, 0.4, 0.2});
  pc.first_train = make_train(cfg);
  pc.second_train = make_train(cfg);
  pc.drops = cfg.drops;

  const auto rep = run_pipeline(data.table, pc);

  CommandResult res;
  auto& doc = res.report;
  doc.command = "retrain";
  doc.config = cfg.to_json();
  doc.metrics["data"] = data.info;
  doc.metrics["pipeline"] = pc.to_json();
  doc.metrics["model_accuracy"] = {{"auc_first", rep.auc_first}, {"auc_second", rep.auc_second}, {"metric", "auc"}};
  doc.metrics["synthesis"] = rep.synthesis.summary();
  doc.metrics["rows"] = {{"d1", rep.rows_d1}, {"d2", rep.rows_d2}, {"d4", rep.rows_d4}};
  nlohmann::json gaps;
  for (auto s : {LabelSource::original, LabelSource::first_model, LabelSource::second_model}) {
    gaps[std::string(to_string(s))] = rep.filtered_gap(s);
  }
  doc.metrics["filtered_gap"] = gaps;

  {
    auto& acc = doc.add_table("model_accuracy", {"stage", "model", "auc"});
    acc.add_row({"first", cfg.first_model, rep.auc_first});
    acc.add_row({"second", cfg.second_model, rep.auc_second});
  }
  add_ratio_rows(doc.add_table("ratios", kRatioColumns), rep.cells);

  res.attachments.emplace_back("first_model.json", rep.first_model.to_json().dump(2) + "\n");
  res.attachments.emplace_back("second_model.json", rep.second_model.to_json().dump(2) + "\n");
  res.attachments.emplace_back("preprocessor.json", rep.preprocessor.to_json().dump(2) + "\n");
  res.attachments.emplace_back("synthetic.csv", format_csv(rep.synthesis.synthetic));
  return res;
}

// ------------------------------------------------------- tune-thresholds

CommandResult cmd_tune_thresholds(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto kind = parse_model_kind(cfg.model);
  if (kind == ModelKind::mlp) throw InvalidInput("--model must be lr or svm");
  const auto pd = prepare_parity(cfg, data.table);

  const RiskScorer model = train(kind, pd.x[0], pd.y[0], make_train(cfg));
  const double base = cfg.threshold.value_or(model.default_threshold());
  PsoConfig pso;
  pso.seed = cfg.resolved_seed();
  const ThresholdSet tuned = tune_thresholds_pso(model, pd.x[1], pd.y[1], pd.groups[1], cfg.lambda, pso);

  const Eigen::VectorXd val_scores = model.score_all(pd.x[1]);
  const Eigen::VectorXd test_scores = model.score_all(pd.x[2]);
  const std::vector<double> before_t(pd.group_names.size(), base);
  const auto val_groups = group_scores(as_span(val_scores), pd.y[1], pd.groups[1]);
  const auto before = rates_by_group(as_span(test_scores), pd.y[2], pd.groups[2], before_t);
  const auto after = rates_by_group(as_span(test_scores), pd.y[2], pd.groups[2], tuned.thresholds);

  CommandResult res;
  auto& doc = res.report;
  doc.command = "tune-thresholds";
  doc.config = cfg.to_json();
  doc.metrics["data"] = data.info;
  doc.metrics["features"] = pd.info;
  doc.metrics["model"] = {{"kind", std::string(to_string(kind))},
                          {"default_threshold", model.default_threshold()},
                          {"test_auc", auc(as_span(test_scores), pd.y[2])}};
  doc.metrics["threshold_set"] = tuned.to_json();
  doc.metrics["pso"] = pso.to_json();
  doc.metrics["validation_objective"] = {
      {"before", equalized_odds_objective(val_groups, before_t, cfg.lambda)}, {"after", tuned.objective}};
  const double acc_before = overall_accuracy(before);
  const double acc_after = overall_accuracy(after);
  doc.metrics["summary"] = {{"accuracy_before", acc_before},
                            {"accuracy_after", acc_after},
                            {"accuracy_drop_points", 100.0 * (acc_before - acc_after)},
                            {"tpr_gap_before", max_gap(before, &GroupRates::tpr)},
                            {"tpr_gap_after", max_gap(after, &GroupRates::tpr)},
                            {"fpr_gap_before", max_gap(before, &GroupRates::fpr)},
                            {"fpr_gap_after", max_gap(after, &GroupRates::fpr)},
                            {"metric", "accuracy"}};

  auto& t = doc.add_table("thresholds", {"stage", "group", "threshold", "rows", "accuracy", "tpr", "fpr"});
  for (std::size_t k = 0; k < pd.group_names.size(); ++k) {
    t.add_row({"before", pd.group_names[k], before_t[k], before[k].rows, before[k].accuracy, before[k].tpr,
               before[k].fpr});
  }
  for (std::size_t k = 0; k < pd.group_names.size(); ++k) {
    t.add_row({"after", pd.group_names[k], tuned.thresholds[k], after[k].rows, after[k].accuracy, after[k].tpr,
               after[k].fpr});
  }
  res.attachments.emplace_back("model.json", model.to_json().dump(2) + "\n");
  return res;
}

// ------------------------------------------------------------ train-fair

CommandResult cmd_train_fair(const RunConfig& cfg) {
  const auto data = load_data(cfg);
  const auto alphas = cfg.alphas.empty() ? kDefaultAlphas : cfg.alphas;
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidInput("--alpha values must lie in [0, 1]");
  }
  const auto pd = prepare_parity(cfg, data.table);
  const double threshold = cfg.threshold.value_or(0.5);

  FairTrainConfig base;
  base.histogram = HistogramConfig::uniform(cfg.bins, cfg.sigma);
  base.optimizer = make_train(cfg, FairTrainConfig::default_optimizer());

  CommandResult res;
  auto& doc = res.report;
  doc.command = "train-fair";
  doc.config = cfg.to_json();
  doc.metrics["data"] = data.info;
  doc.metrics["features"] = pd.info;
  doc.metrics["histogram"] = base.histogram.to_json();
  doc.metrics["optimizer"] = base.optimizer.to_json();
  doc.metrics["recommended_alpha_range"] = {0.1, 0.2};

  TableBlock sweep{"alpha_sweep",
                   {"alpha", "accuracy", "auc", "tpr_gap", "fpr_gap", "distance_test", "distance_train",
                    "recommended"},
                   {}};
  TableBlock group_block{"group_rates", {"alpha", "group", "rows", "accuracy", "tpr", "fpr"}, {}};
  TableBlock hist_block{"histograms", {"alpha", "bin_center", "group", "class", "normalized_count"}, {}};

  const std::vector<double> thresholds(pd.group_names.size(), threshold);
  auto evaluate = [&](const RiskScorer& model, nlohmann::json alpha_key) {
    const Eigen::VectorXd s_test = model.score_all(pd.x[2]);
    const Eigen::VectorXd s_train = model.score_all(pd.x[0]);
    const auto rates = rates_by_group(as_span(s_test), pd.y[2], pd.groups[2], thresholds);
    const double ef_test = distribution_distance(as_span(s_test), pd.y[2], pd.groups[2], base.histogram);
    const double ef_train = distribution_distance(as_span(s_train), pd.y[0], pd.groups[0], base.histogram);
    const bool recommended = alpha_key.is_number() && alpha_key.get<double>() >= 0.1 && alpha_key.get<double>() <= 0.2;
    sweep.add_row({alpha_key, overall_accuracy(rates), auc(as_span(s_test), pd.y[2]), max_gap(rates, &GroupRates::tpr),
                   max_gap(rates, &GroupRates::fpr), ef_test, ef_train, recommended});
    for (std::size_t k = 0; k < rates.size(); ++k) {
      group_block.add_row({alpha_key, pd.group_names[k], rates[k].rows, rates[k].accuracy, rates[k].tpr, rates[k].fpr});
    }
    if (!alpha_key.is_number()) return;
    const auto gs = group_scores(as_span(s_test), pd.y[2], pd.groups[2]);
    for (std::size_t k = 0; k < gs.size(); ++k) {
      for (int y : {1, 0}) {
        std::vector<double> s;
        for (std::size_t i = 0; i < gs[k].scores.size(); ++i) {
          if (gs[k].labels[i] == y) s.push_back(gs[k].scores[i]);
        }
        if (s.empty()) continue;
        const auto h = soft_histogram(s, base.histogram, true);
        for (std::size_t c = 0; c < h.counts.size(); ++c) {
          hist_block.add_row({alpha_key, base.histogram.centers[c], gs[k].name, y == 1 ? "pos" : "neg", h.counts[c]});
        }
      }
    }
  };

  const RiskScorer baseline = train_logistic(pd.x[0], pd.y[0], base.optimizer);
  evaluate(baseline, "baseline");
  nlohmann::json models = nlohmann::json::object();
  for (double a : alphas) {
    FairTrainConfig fc = base;
    fc.alpha = a;
    const RiskScorer m = train_equalized_distribution(pd.x[0], pd.y[0], pd.groups[0], fc);
    evaluate(m, a);
    models[format_number(a)] = m.to_json();
  }
  doc.tables.push_back(std::move(sweep));
  doc.tables.push_back(std::move(group_block));
  doc.tables.push_back(std::move(hist_block));
  res.attachments.emplace_back("models.json", models.dump(2) + "\n");
  return res;
}

// -------------------------------------------------------------- dispatch

int run_command(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    CommandResult res;
    if (config.command == "audit") res = cmd_audit(config);
    else if (config.command == "retrain") res = cmd_retrain(config);
    else if (config.command == "tune-thresholds") res = cmd_tune_thresholds(config);
    else if (config.command == "train-fair") res = cmd_train_fair(config);
    else throw InvalidInput("unknown command '" + config.command + "'");

    if (!config.out.empty()) {
      emit_report(res.report, config.out);
      for (const auto& [name, text] : res.attachments) write_text_file(config.out / name, text);
    }
    for (const auto& t : res.report.tables) {
      if (t.name == "histograms") continue;
      out << "# " << t.name << '\n' << t.to_csv();
    }
    if (res.report.command == "audit") {
      out << "verdict: " << (res.exit_code == exit_ok ? "fair" : "unfair") << " (epsilon "
          << format_number(config.epsilon) << ")\n";
    }
    return res.exit_code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_error;
  }
}

}  // namespace luskin
