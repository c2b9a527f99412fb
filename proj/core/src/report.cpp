#include "luskin/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "luskin/error.hpp"
#include "luskin/tabular.hpp"

#ifndef LUSKIN_VERSION
#define LUSKIN_VERSION "0.0.0"
#endif

namespace luskin {
namespace {

std::string csv_cell(const nlohmann::json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_number()) return format_number(v.get<double>());
  if (v.is_string()) return quote_csv_field(v.get<std::string>());
  throw InvalidInput("table cells must be scalars");
}

}  // namespace

std::string tool_version() { return LUSKIN_VERSION; }

void TableBlock::add_row(std::vector<nlohmann::json> row) {
  if (row.size() != columns.size()) {
    throw InvalidInput("row of width " + std::to_string(row.size()) + " added to table '" + name + "' of width " +
                       std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string TableBlock::to_csv() const {
  std::ostringstream out;
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << quote_csv_field(columns[c]);
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_cell(row[c]);
    out << '\n';
  }
  return out.str();
}

TableBlock& ReportDocument::add_table(std::string name, std::vector<std::string> columns) {
  for (const auto& t : tables) {
    if (t.name == name) throw InvalidInput("duplicate report table '" + name + "'");
  }
  tables.push_back(TableBlock{std::move(name), std::move(columns), {}});
  return tables.back();
}

bool ReportDocument::operator==(const ReportDocument& other) const {
  auto sorted = [](std::vector<TableBlock> t) {
    std::sort(t.begin(), t.end(), [](const TableBlock& a, const TableBlock& b) { return a.name < b.name; });
    return t;
  };
  return command == other.command && config == other.config && metrics == other.metrics &&
         version == other.version && sorted(tables) == sorted(other.tables);
}

const TableBlock& ReportDocument::table(std::string_view name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t;
  }
  throw InvalidInput("report has no table '" + std::string(name) + "'");
}

nlohmann::json ReportDocument::to_json() const {
  auto blocks = nlohmann::json::object();
  for (const auto& t : tables) blocks[t.name] = {{"columns", t.columns}, {"rows", t.rows}};
  return {{"command", command}, {"config", config}, {"metrics", metrics}, {"tables", blocks}, {"version", version}};
}

ReportDocument ReportDocument::from_json(const nlohmann::json& doc) {
  ReportDocument r;
  r.command = doc.at("command").get<std::string>();
  r.config = doc.at("config");
  r.metrics = doc.at("metrics");
  r.version = doc.at("version").get<std::string>();
  for (const auto& [name, block] : doc.at("tables").items()) {
    TableBlock t;
    t.name = name;
    t.columns = block.at("columns").get<std::vector<std::string>>();
    for (const auto& row : block.at("rows")) t.rows.push_back(row.get<std::vector<nlohmann::json>>());
    r.tables.push_back(std::move(t));
  }
  return r;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

void emit_report(const ReportDocument& doc, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  write_text_file(dir / "report.json", doc.to_json().dump(2) + "\n");
  for (const auto& t : doc.tables) write_text_file(dir / (t.name + ".csv"), t.to_csv());
}

ReportDocument read_report(const std::filesystem::path& report_json) {
  std::ifstream in(report_json, std::ios::binary);
  if (!in) throw Error("cannot open '" + report_json.string() + "'");
  return ReportDocument::from_json(nlohmann::json::parse(in));
}

}  // namespace luskin
