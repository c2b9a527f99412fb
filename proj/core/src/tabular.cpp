#include "luskin/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "luskin/error.hpp"

namespace luskin {
namespace {

bool is_missing_token(std::string_view cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan" ||
         cell == "null" || cell == "NULL";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::optional<std::string> normalize_label(std::string_view text) {
  text = trim(text);
  if (text == "0" || text == "1") return std::string(text);
  if (auto v = parse_double(text)) {
    if (*v == 0.0) return std::string("0");
    if (*v == 1.0) return std::string("1");
  }
  return std::nullopt;
}

bool stores_number(const ColumnSchema& col) {
  return col.kind == ColumnKind::numeric && col.role != ColumnRole::ignore;
}

std::string value_text(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_number(*d);
  return std::get<std::string>(v);
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::binary: return "binary";
  }
  return "?";
}

std::string_view to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::protected_feature: return "protected";
    case ColumnRole::unprotected: return "unprotected";
    case ColumnRole::label: return "label";
    case ColumnRole::ignore: return "ignore";
  }
  return "?";
}

ColumnKind parse_column_kind(std::string_view text) {
  if (text == "numeric") return ColumnKind::numeric;
  if (text == "categorical") return ColumnKind::categorical;
  if (text == "binary") return ColumnKind::binary;
  throw InvalidInput("unknown column kind '" + std::string(text) + "'");
}

ColumnRole parse_column_role(std::string_view text) {
  if (text == "protected") return ColumnRole::protected_feature;
  if (text == "unprotected") return ColumnRole::unprotected;
  if (text == "label") return ColumnRole::label;
  if (text == "ignore") return ColumnRole::ignore;
  throw InvalidInput("unknown column role '" + std::string(text) + "'");
}

// ---------------------------------------------------------------- Schema

Schema::Schema(std::vector<ColumnSchema> columns) : columns_(std::move(columns)) {
  std::set<std::string_view> seen;
  std::size_t labels = 0;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw InvalidInput("column with empty name");
    if (!seen.insert(c.name).second) throw InvalidInput("duplicate column name '" + c.name + "'");
    if (c.role == ColumnRole::label) {
      ++labels;
      if (c.kind != ColumnKind::binary) {
        throw InvalidInput("label column '" + c.name + "' must be binary");
      }
    }
  }
  if (labels > 1) throw InvalidInput("schema has more than one label column");
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw InvalidInput("unknown column '" + std::string(name) + "'");
}

std::optional<std::size_t> Schema::label_index() const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].role == ColumnRole::label) return i;
  }
  return std::nullopt;
}

std::size_t Schema::require_label() const {
  if (auto i = label_index()) return *i;
  throw InvalidInput("schema has no label column");
}

Schema Schema::with_column(ColumnSchema column) const {
  auto cols = columns_;
  cols.push_back(std::move(column));
  return Schema(std::move(cols));
}

nlohmann::json to_json(const Schema& schema) {
  auto doc = nlohmann::json::array();
  for (const auto& c : schema) {
    doc.push_back({{"name", c.name},
                   {"kind", std::string(to_string(c.kind))},
                   {"role", std::string(to_string(c.role))}});
  }
  return doc;
}

Schema schema_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw InvalidInput("schema must be a JSON array");
  std::vector<ColumnSchema> cols;
  for (const auto& entry : doc) {
    if (!entry.contains("name") || !entry.contains("kind") || !entry.contains("role")) {
      throw InvalidInput("schema entry needs name, kind and role");
    }
    cols.push_back({entry.at("name").get<std::string>(),
                    parse_column_kind(entry.at("kind").get<std::string>()),
                    parse_column_role(entry.at("role").get<std::string>())});
  }
  return Schema(std::move(cols));
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open schema file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed schema file " + path.string() + ": " + e.what());
  }
  return schema_from_json(doc);
}

// ---------------------------------------------------------------- Table

Table::Table(Schema schema, std::vector<Row> rows) : schema_(std::move(schema)), rows_(std::move(rows)) {
  const auto label = schema_.label_index();
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const auto& row = rows_[r];
    if (row.size() != schema_.size()) {
      throw InvalidInput("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                         " cells, schema has " + std::to_string(schema_.size()));
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto& col = schema_[c];
      if (stores_number(col)) {
        const auto* d = std::get_if<double>(&row[c]);
        if (d == nullptr || !std::isfinite(*d)) {
          throw InvalidInput("column '" + col.name + "' needs a finite number in row " +
                             std::to_string(r));
        }
      } else if (!std::holds_alternative<std::string>(row[c])) {
        throw InvalidInput("column '" + col.name + "' needs a symbol in row " + std::to_string(r));
      }
    }
    if (label) {
      const auto& s = std::get<std::string>(row[*label]);
      if (s != "0" && s != "1") {
        throw InvalidInput("label in row " + std::to_string(r) + " must be 0 or 1");
      }
    }
  }
}

double Table::number(std::size_t row, std::size_t column) const {
  return std::get<double>(rows_.at(row).at(column));
}

const std::string& Table::symbol(std::size_t row, std::size_t column) const {
  return std::get<std::string>(rows_.at(row).at(column));
}

int Table::label(std::size_t row) const {
  return symbol(row, schema_.require_label()) == "1" ? 1 : 0;
}

std::vector<int> Table::labels() const {
  const auto li = schema_.require_label();
  std::vector<int> out;
  out.reserve(rows_.size());
  for (const auto& row : rows_) out.push_back(std::get<std::string>(row[li]) == "1" ? 1 : 0);
  return out;
}

std::size_t Table::positive_count() const {
  const auto li = schema_.require_label();
  return static_cast<std::size_t>(std::count_if(rows_.begin(), rows_.end(), [li](const Row& row) {
    return std::get<std::string>(row[li]) == "1";
  }));
}

Table Table::with_rows(std::vector<Row> rows) const {
  Table out;
  out.schema_ = schema_;
  out.rows_ = std::move(rows);
  return out;
}

Table Table::with_labels(std::span<const int> labels) const {
  if (labels.size() != rows_.size()) throw InvalidInput("label count does not match row count");
  Table out;
  std::size_t li = 0;
  if (auto existing = schema_.label_index()) {
    out.schema_ = schema_;
    li = *existing;
    out.rows_ = rows_;
  } else {
    out.schema_ = schema_.with_column({"label", ColumnKind::binary, ColumnRole::label});
    li = schema_.size();
    out.rows_ = rows_;
    for (auto& row : out.rows_) row.emplace_back(std::string("0"));
  }
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out.rows_[r][li] = std::string(labels[r] != 0 ? "1" : "0");
  }
  return out;
}

Table Table::with_scores(std::span<const double> scores) const {
  if (scores.size() != rows_.size()) throw InvalidInput("score count does not match row count");
  Table out;
  std::size_t si = 0;
  if (auto existing = schema_.find(kScoreColumn)) {
    if (schema_[*existing].kind != ColumnKind::numeric) {
      throw InvalidInput("existing score column is not numeric");
    }
    out.schema_ = schema_;
    si = *existing;
    out.rows_ = rows_;
  } else {
    out.schema_ = schema_.with_column({std::string(kScoreColumn), ColumnKind::numeric, ColumnRole::ignore});
    si = schema_.size();
    out.rows_ = rows_;
    for (auto& row : out.rows_) row.emplace_back(std::string());
  }
  // The score column is ignored for features, so it is stored as text like any
  // ignored column; scores() parses it back losslessly.
  for (std::size_t r = 0; r < scores.size(); ++r) out.rows_[r][si] = format_number(scores[r]);
  return out;
}

std::vector<double> Table::scores() const {
  const auto si = schema_.find(kScoreColumn);
  if (!si) throw InvalidInput("table has no score column");
  std::vector<double> out;
  out.reserve(rows_.size());
  for (const auto& row : rows_) {
    const auto& cell = row[*si];
    if (const auto* d = std::get_if<double>(&cell)) {
      out.push_back(*d);
    } else {
      auto v = parse_double(std::get<std::string>(cell));
      if (!v) throw InvalidInput("unparseable score cell");
      out.push_back(*v);
    }
  }
  return out;
}

// ---------------------------------------------------------------- filters

std::string_view to_string(Comparator op) {
  switch (op) {
    case Comparator::eq: return "=";
    case Comparator::ne: return "!=";
    case Comparator::lt: return "<";
    case Comparator::le: return "<=";
    case Comparator::gt: return ">";
    case Comparator::ge: return ">=";
    case Comparator::in: return "in";
    case Comparator::not_in: return "not_in";
  }
  return "?";
}

Comparator parse_comparator(std::string_view text) {
  if (text == "=" || text == "==" || text == "eq") return Comparator::eq;
  if (text == "!=" || text == "ne") return Comparator::ne;
  if (text == "<" || text == "lt") return Comparator::lt;
  if (text == "<=" || text == "le") return Comparator::le;
  if (text == ">" || text == "gt") return Comparator::gt;
  if (text == ">=" || text == "ge") return Comparator::ge;
  if (text == "in") return Comparator::in;
  if (text == "not_in" || text == "notin") return Comparator::not_in;
  throw InvalidInput("unknown comparator '" + std::string(text) + "'");
}

Clause Clause::negated() const {
  Clause out = *this;
  switch (op) {
    case Comparator::eq: out.op = Comparator::ne; break;
    case Comparator::ne: out.op = Comparator::eq; break;
    case Comparator::lt: out.op = Comparator::ge; break;
    case Comparator::le: out.op = Comparator::gt; break;
    case Comparator::gt: out.op = Comparator::le; break;
    case Comparator::ge: out.op = Comparator::lt; break;
    case Comparator::in: out.op = Comparator::not_in; break;
    case Comparator::not_in: out.op = Comparator::in; break;
  }
  return out;
}

std::string Clause::describe() const {
  std::string out = column + " " + std::string(to_string(op)) + " ";
  for (std::size_t i = 0; i < operands.size(); ++i) {
    if (i) out += ",";
    out += value_text(operands[i]);
  }
  return out;
}

FilterCondition FilterCondition::negated() const {
  if (clauses.size() != 1) {
    throw InvalidInput("only single-clause conditions have a negation");
  }
  return FilterCondition{clauses.front().negated()};
}

FilterCondition FilterCondition::conjoined(const FilterCondition& other) const {
  FilterCondition out = *this;
  out.clauses.insert(out.clauses.end(), other.clauses.begin(), other.clauses.end());
  return out;
}

void FilterCondition::validate(const Schema& schema) const { RowPredicate(schema, *this); }

std::string FilterCondition::describe() const {
  if (clauses.empty()) return "true";
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i) out += " and ";
    out += clauses[i].describe();
  }
  return out;
}

RowPredicate::RowPredicate(const Schema& schema, const FilterCondition& cond) {
  for (const auto& clause : cond.clauses) {
    Bound b;
    b.column = schema.index_of(clause.column);
    b.op = clause.op;
    b.numeric = stores_number(schema[b.column]);
    const bool set_op = clause.op == Comparator::in || clause.op == Comparator::not_in;
    if (!set_op && clause.operands.size() != 1) {
      throw InvalidInput("clause on '" + clause.column + "' needs exactly one operand");
    }
    if (!b.numeric && !set_op && clause.op != Comparator::eq && clause.op != Comparator::ne) {
      throw InvalidInput("ordering comparator on non-numeric column '" + clause.column + "'");
    }
    for (const auto& operand : clause.operands) {
      if (b.numeric) {
        if (const auto* d = std::get_if<double>(&operand)) {
          b.numbers.push_back(*d);
        } else if (auto v = parse_double(std::get<std::string>(operand))) {
          b.numbers.push_back(*v);
        } else {
          throw InvalidInput("non-numeric operand for numeric column '" + clause.column + "'");
        }
      } else {
        b.symbols.push_back(value_text(operand));
      }
    }
    bound_.push_back(std::move(b));
  }
}

bool RowPredicate::operator()(const Row& row) const {
  for (const auto& b : bound_) {
    bool ok = false;
    if (b.numeric) {
      const double x = std::get<double>(row[b.column]);
      const double v = b.numbers.empty() ? 0.0 : b.numbers.front();
      switch (b.op) {
        case Comparator::eq: ok = x == v; break;
        case Comparator::ne: ok = x != v; break;
        case Comparator::lt: ok = x < v; break;
        case Comparator::le: ok = x <= v; break;
        case Comparator::gt: ok = x > v; break;
        case Comparator::ge: ok = x >= v; break;
        case Comparator::in:
        case Comparator::not_in: {
          const bool member = std::find(b.numbers.begin(), b.numbers.end(), x) != b.numbers.end();
          ok = (b.op == Comparator::in) == member;
          break;
        }
      }
    } else {
      const auto& x = std::get<std::string>(row[b.column]);
      switch (b.op) {
        case Comparator::eq: ok = x == b.symbols.front(); break;
        case Comparator::ne: ok = x != b.symbols.front(); break;
        case Comparator::in:
        case Comparator::not_in: {
          const bool member = std::find(b.symbols.begin(), b.symbols.end(), x) != b.symbols.end();
          ok = (b.op == Comparator::in) == member;
          break;
        }
        default: break;
      }
    }
    if (!ok) return false;
  }
  return true;
}

Clause parse_clause(std::string_view column, std::string_view op, std::string_view operand) {
  Clause c;
  c.column = std::string(trim(column));
  c.op = parse_comparator(trim(op));
  if (c.op == Comparator::in || c.op == Comparator::not_in) {
    std::string_view rest = operand;
    while (true) {
      const auto comma = rest.find(',');
      c.operands.emplace_back(std::string(trim(rest.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  } else {
    c.operands.emplace_back(std::string(trim(operand)));
  }
  return c;
}

Clause parse_equality(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw InvalidInput("expected COL=VAL, got '" + std::string(text) + "'");
  }
  return parse_clause(text.substr(0, eq), "=", text.substr(eq + 1));
}

Table filter(const Table& table, const FilterCondition& cond) {
  RowPredicate pred(table.schema(), cond);
  std::vector<Row> rows;
  for (const auto& row : table.rows()) {
    if (pred(row)) rows.push_back(row);
  }
  return table.with_rows(std::move(rows));
}

Table exclude(const Table& table, const FilterCondition& cond) {
  RowPredicate pred(table.schema(), cond);
  std::vector<Row> rows;
  for (const auto& row : table.rows()) {
    if (!pred(row)) rows.push_back(row);
  }
  return table.with_rows(std::move(rows));
}

Table concatenate(std::span<const Table> parts) {
  if (parts.empty()) throw InvalidInput("concatenate needs at least one part");
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (!(p.schema() == parts.front().schema())) throw InvalidInput("concatenate: schema mismatch");
    total += p.row_count();
  }
  std::vector<Row> rows;
  rows.reserve(total);
  for (const auto& p : parts) rows.insert(rows.end(), p.rows().begin(), p.rows().end());
  return parts.front().with_rows(std::move(rows));
}

// ---------------------------------------------------------------- split

void SplitSpec::validate() const {
  if (fractions.empty()) throw InvalidInput("split needs at least one fraction");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw InvalidInput("split fractions must lie in (0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("split fractions must sum to 1");
}

std::vector<Table> split(const Table& table, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = table.row_count();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates on raw engine output keeps the permutation identical across
  // standard library implementations.
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  std::vector<Table> parts;
  std::size_t start = 0;
  for (std::size_t p = 0; p < spec.fractions.size(); ++p) {
    std::size_t size = 0;
    if (p + 1 == spec.fractions.size()) {
      size = n - start;
    } else {
      size = static_cast<std::size_t>(std::llround(spec.fractions[p] * static_cast<double>(n)));
      size = std::min(size, n - start);
    }
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::sort(idx.begin(), idx.end());
    std::vector<Row> rows;
    rows.reserve(idx.size());
    for (auto i : idx) rows.push_back(table.rows()[i]);
    parts.push_back(table.with_rows(std::move(rows)));
    start += size;
  }
  return parts;
}

// ---------------------------------------------------------------- CSV

std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r' && ch != '\n') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string quote_csv_field(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

Table parse_csv(std::string_view text, const Schema& schema, CsvLoadStats* stats) {
  std::vector<std::string_view> lines;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    if (!trim(line).empty()) lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  if (lines.empty()) throw InvalidInput("CSV input has no header row");

  auto header = split_csv_record(lines.front());
  if (header.size() != schema.size()) {
    throw InvalidInput("CSV header has " + std::to_string(header.size()) + " columns, schema has " +
                       std::to_string(schema.size()));
  }
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) != schema[c].name) {
      throw InvalidInput("CSV header column " + std::to_string(c) + " is '" + header[c] +
                         "', schema expects '" + schema[c].name + "'");
    }
  }

  std::vector<Row> rows;
  std::size_t dropped = 0;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    auto cells = split_csv_record(lines[l]);
    if (cells.size() != schema.size()) {
      ++dropped;
      continue;
    }
    Row row;
    row.reserve(cells.size());
    bool ok = true;
    for (std::size_t c = 0; c < cells.size() && ok; ++c) {
      const auto& col = schema[c];
      const std::string_view cell = trim(cells[c]);
      if (col.role == ColumnRole::ignore) {
        row.emplace_back(std::string(cell));
        continue;
      }
      if (is_missing_token(cell)) {
        ok = false;
      } else if (col.role == ColumnRole::label) {
        auto label = normalize_label(cell);
        if (label) row.emplace_back(std::move(*label));
        else ok = false;
      } else if (col.kind == ColumnKind::numeric) {
        auto v = parse_double(cell);
        if (v) row.emplace_back(*v);
        else ok = false;
      } else {
        row.emplace_back(std::string(cell));
      }
    }
    if (ok) rows.push_back(std::move(row));
    else ++dropped;
  }
  if (stats) {
    stats->rows_read = lines.size() - 1;
    stats->rows_dropped = dropped;
  }
  if (rows.empty()) throw InvalidInput("no rows left after cleaning");
  return Table(schema, std::move(rows));
}

Table load_csv(const std::filesystem::path& path, const Schema& schema, CsvLoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open data file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), schema, stats);
}

std::string format_csv(const Table& table) {
  std::string out;
  const auto& schema = table.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out.push_back(',');
    out += quote_csv_field(schema[c].name);
  }
  out.push_back('\n');
  for (const auto& row : table.rows()) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out.push_back(',');
      out += quote_csv_field(value_text(row[c]));
    }
    out.push_back('\n');
  }
  return out;
}

void write_csv(const Table& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << format_csv(table);
  if (!out) throw Error("write failed for " + path.string());
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_number17(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

}  // namespace luskin
