#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "luskin/report.hpp"

namespace luskin {

/// Everything a command needs besides its input files.
struct RunConfig {
  std::string command;
  std::filesystem::path data;
  std::filesystem::path schema;
  /// Use the bundled synthetic-bias generator instead of --data/--schema.
  bool demo = false;
  std::size_t demo_rows = 2000;
  double demo_bias = 0.2;

  /// "COL=VAL". For audit and retrain this is the protected condition; for
  /// tune-thresholds and train-fair COL is the group column and VAL the
  /// reference group.
  std::string protected_condition;
  /// (column, operator, value) clauses on unprotected columns.
  std::vector<std::array<std::string, 3>> filters;
  double epsilon = 0.05;
  int algo = 2;
  std::string first_model = "lr";
  std::string second_model = "mlp";
  std::string model = "lr";
  std::optional<double> threshold;
  double lambda = 1.0;
  /// Empty means the sweep {0.01, 0.1, 0.2, 1}.
  std::vector<double> alphas;
  std::size_t bins = 50;
  std::optional<double> sigma;
  /// Empty means 0.4,0.4,0.2 for retrain and 0.6,0.2,0.2 otherwise.
  std::vector<double> split;
  /// Falls back to LUSKIN_SEED, then 0.
  std::optional<std::uint64_t> seed;
  /// PCA dimension for tune-thresholds and train-fair; 0 disables it.
  std::size_t pca = 20;
  /// Columns left out of the feature matrix (retrain only; the parity
  /// commands always leave out the group column).
  std::vector<std::string> drops;
  /// Overrides the training iteration count of every model.
  std::optional<std::size_t> iterations;
  std::filesystem::path out;

  std::uint64_t resolved_seed() const;
  nlohmann::json to_json() const;
};

enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_unfair = 2 };

struct CommandResult {
  ReportDocument report;
  int exit_code = exit_ok;
  /// Extra files (name, contents) written next to the report: models,
  /// synthetic data.
  std::vector<std::pair<std::string, std::string>> attachments;
};

CommandResult cmd_audit(const RunConfig& config);
CommandResult cmd_retrain(const RunConfig& config);
CommandResult cmd_tune_thresholds(const RunConfig& config);
CommandResult cmd_train_fair(const RunConfig& config);

/// Dispatches on config.command, writes the report when config.out is set
/// and prints a summary to `out`. Errors go to `err` and give exit code 1.
int run_command(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace luskin
