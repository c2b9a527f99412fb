#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace luskin {

/// Tool version recorded in every report.
std::string tool_version();

/// A rectangular block written both into report.json and as <name>.csv.
struct TableBlock {
  std::string name;
  std::vector<std::string> columns;
  /// Cells are JSON scalars (number, string, bool or null).
  std::vector<std::vector<nlohmann::json>> rows;

  void add_row(std::vector<nlohmann::json> row);
  std::string to_csv() const;
  bool operator==(const TableBlock&) const = default;
};

struct ReportDocument {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  /// Free-form metric blocks keyed by name.
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<TableBlock> tables;
  std::string version = tool_version();

  /// Appends an empty block; names must be unique.
  TableBlock& add_table(std::string name, std::vector<std::string> columns);
  const TableBlock& table(std::string_view name) const;
  nlohmann::json to_json() const;
  static ReportDocument from_json(const nlohmann::json& doc);
  /// Table order is not significant (report.json keys are sorted).
  bool operator==(const ReportDocument& other) const;
};

/// Writes `dir`/report.json (sorted keys, two-space indent) and one CSV per
/// table block. Creates `dir` when missing.
void emit_report(const ReportDocument& doc, const std::filesystem::path& dir);
ReportDocument read_report(const std::filesystem::path& report_json);

/// Writes `text` to `path`, throwing Error on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace luskin
