// Command-line front end: audit, retrain, tune-thresholds, train-fair.
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "luskin/commands.hpp"

namespace {

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected comma-separated numbers, got '" + text + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"luskin: controlled-fairness audits, relabeling repair and group threshold tuning"};
  app.require_subcommand(1);

  luskin::RunConfig cfg;
  std::string split_text;
  std::string alpha_text;
  std::vector<std::string> filter_tokens;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  double threshold = 0.0;
  double sigma = 0.0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--data", cfg.data, "CSV file with a header row");
    sub->add_option("--schema", cfg.schema, "JSON schema: [{name, kind, role}, ...]");
    sub->add_flag("--demo", cfg.demo, "use the built-in synthetic-bias dataset");
    sub->add_option("--demo-rows", cfg.demo_rows, "rows generated by --demo")->capture_default_str();
    sub->add_option("--demo-bias", cfg.demo_bias, "group bias of --demo data")->capture_default_str();
    sub->add_option("--protected", cfg.protected_condition, "protected condition COL=VAL")->required();
    sub->add_option("--seed", seed, "random seed (falls back to LUSKIN_SEED, then 0)");
    sub->add_option("--split", split_text, "split fractions F,F,F");
    sub->add_option("--threshold", threshold, "decision threshold");
    sub->add_option("--iterations", iterations, "training iterations for every model");
    sub->add_option("--out", cfg.out, "directory for report.json and CSV tables");
  };

  auto* audit = app.add_subcommand("audit", "ratio test on the dataset labels");
  auto* retrain = app.add_subcommand("retrain", "two-stage retraining on a relabeled synthetic set");
  auto* tune = app.add_subcommand("tune-thresholds", "per-group thresholds under an equalized-odds objective");
  auto* fair = app.add_subcommand("train-fair", "logistic training with a score-distribution penalty");
  for (auto* sub : {audit, retrain, tune, fair}) common(sub);

  for (auto* sub : {audit, retrain}) {
    sub->add_option("--filter", filter_tokens, "unprotected filter clause COL OP VAL (repeatable)")
        ->expected(3)
        ->allow_extra_args(false)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    sub->add_option("--epsilon", cfg.epsilon, "parity tolerance")->capture_default_str();
  }
  retrain->add_option("--algo", cfg.algo, "1 = risk adjustment, 2 = risk-based flipping")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  retrain->add_option("--first-model", cfg.first_model, "lr or mlp")
      ->check(CLI::IsMember({"lr", "mlp"}))
      ->capture_default_str();
  retrain->add_option("--second-model", cfg.second_model, "lr or mlp")
      ->check(CLI::IsMember({"lr", "mlp"}))
      ->capture_default_str();
  retrain->add_option("--drop", cfg.drops, "column left out of the features (repeatable)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  for (auto* sub : {tune, fair}) {
    sub->add_option("--pca", cfg.pca, "PCA dimension, 0 to disable")->capture_default_str();
  }
  tune->add_option("--model", cfg.model, "lr or svm")->check(CLI::IsMember({"lr", "svm"}))->capture_default_str();
  tune->add_option("--lambda", cfg.lambda, "fairness weight")->capture_default_str();
  fair->add_option("--alpha", alpha_text, "accuracy weight(s), comma-separated (default 0.01,0.1,0.2,1)");
  fair->add_option("--bins", cfg.bins, "histogram bins over [0, 1]")->check(CLI::PositiveNumber)->capture_default_str();
  fair->add_option("--sigma", sigma, "Gaussian kernel width (default half a bin)");

  try {
    app.parse(argc, argv);
    auto* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();
    if (sub->count("--seed")) cfg.seed = seed;
    if (sub->count("--threshold")) cfg.threshold = threshold;
    if (sub->count("--iterations")) cfg.iterations = iterations;
    if (sub->get_option_no_throw("--sigma") && sub->count("--sigma")) cfg.sigma = sigma;
    if (!split_text.empty()) cfg.split = parse_list(split_text, "--split");
    if (!alpha_text.empty()) cfg.alphas = parse_list(alpha_text, "--alpha");
    for (std::size_t i = 0; i + 2 < filter_tokens.size(); i += 3) {
      cfg.filters.push_back({filter_tokens[i], filter_tokens[i + 1], filter_tokens[i + 2]});
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : luskin::exit_error;
  }
  return luskin::run_command(cfg, std::cout, std::cerr);
}
