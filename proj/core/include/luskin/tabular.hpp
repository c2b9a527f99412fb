#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace luskin {

enum class ColumnKind { numeric, categorical, binary };
enum class ColumnRole { protected_feature, unprotected, label, ignore };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(ColumnRole role);
ColumnKind parse_column_kind(std::string_view text);
ColumnRole parse_column_role(std::string_view text);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  ColumnRole role = ColumnRole::unprotected;

  bool operator==(const ColumnSchema&) const = default;
};

/// Ordered column list with unique names and at most one label column.
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSchema> columns);

  std::size_t size() const noexcept { return columns_.size(); }
  const ColumnSchema& operator[](std::size_t i) const { return columns_[i]; }
  auto begin() const noexcept { return columns_.begin(); }
  auto end() const noexcept { return columns_.end(); }
  const std::vector<ColumnSchema>& columns() const noexcept { return columns_; }

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws InvalidInput for an unknown column.
  std::size_t index_of(std::string_view name) const;
  std::optional<std::size_t> label_index() const;
  std::size_t require_label() const;

  Schema with_column(ColumnSchema column) const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<ColumnSchema> columns_;
};

nlohmann::json to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& doc);
Schema load_schema(const std::filesystem::path& path);

/// Numeric columns hold doubles; categorical, binary and ignored columns hold
/// symbols. Label cells are the symbols "0" and "1".
using Value = std::variant<double, std::string>;
using Row = std::vector<Value>;

inline constexpr std::string_view kScoreColumn = "score";

class Table {
 public:
  Table() = default;
  /// Validates row width, cell types and label symbols.
  Table(Schema schema, std::vector<Row> rows);

  const Schema& schema() const noexcept { return schema_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  std::size_t row_count() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  double number(std::size_t row, std::size_t column) const;
  const std::string& symbol(std::size_t row, std::size_t column) const;

  bool has_label() const { return schema_.label_index().has_value(); }
  int label(std::size_t row) const;
  std::vector<int> labels() const;
  std::size_t positive_count() const;

  /// Same schema, different rows. Rows are assumed valid for the schema.
  Table with_rows(std::vector<Row> rows) const;
  /// Replaces the label column; appends one named "label" if absent.
  Table with_labels(std::span<const int> labels) const;
  /// Replaces or appends the numeric, ignored "score" column.
  Table with_scores(std::span<const double> scores) const;
  std::vector<double> scores() const;

  bool operator==(const Table&) const = default;

 private:
  Schema schema_;
  std::vector<Row> rows_;
};

enum class Comparator { eq, ne, lt, le, gt, ge, in, not_in };

std::string_view to_string(Comparator op);
/// Accepts symbolic (=, !=, <, <=, >, >=) and word (eq, ne, ..., in, not_in) forms.
Comparator parse_comparator(std::string_view text);

struct Clause {
  std::string column;
  Comparator op = Comparator::eq;
  /// One operand for scalar comparators, any number for set membership.
  std::vector<Value> operands;

  Clause negated() const;
  std::string describe() const;
  bool operator==(const Clause&) const = default;
};

/// Conjunction of clauses. An empty condition matches every row.
struct FilterCondition {
  std::vector<Clause> clauses;

  FilterCondition() = default;
  FilterCondition(std::initializer_list<Clause> list) : clauses(list) {}
  explicit FilterCondition(std::vector<Clause> list) : clauses(std::move(list)) {}

  bool empty() const noexcept { return clauses.empty(); }
  /// Defined for single-clause conditions only.
  FilterCondition negated() const;
  FilterCondition conjoined(const FilterCondition& other) const;
  void validate(const Schema& schema) const;
  std::string describe() const;
  bool operator==(const FilterCondition&) const = default;
};

/// Condition compiled against a schema for repeated row tests.
class RowPredicate {
 public:
  RowPredicate(const Schema& schema, const FilterCondition& cond);
  bool operator()(const Row& row) const;

 private:
  struct Bound {
    std::size_t column;
    Comparator op;
    bool numeric;
    std::vector<double> numbers;
    std::vector<std::string> symbols;
  };
  std::vector<Bound> bound_;
};

Clause parse_clause(std::string_view column, std::string_view op, std::string_view operand);
/// Parses "COL=VAL".
Clause parse_equality(std::string_view text);

/// Rows satisfying every clause. The input is not modified.
Table filter(const Table& table, const FilterCondition& cond);
/// Rows failing at least one clause, i.e. the complement of filter().
Table exclude(const Table& table, const FilterCondition& cond);

Table concatenate(std::span<const Table> parts);

struct SplitSpec {
  std::vector<double> fractions;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Seeded random partition. Part i gets round(fraction_i * N) rows, the last
/// part takes the remainder. Rows keep their original relative order.
std::vector<Table> split(const Table& table, const SplitSpec& spec);

struct CsvLoadStats {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
};

/// Reads a headed CSV whose header equals the schema names in order. Rows with
/// a missing or unparseable cell in a non-ignored column are dropped.
Table load_csv(const std::filesystem::path& path, const Schema& schema,
               CsvLoadStats* stats = nullptr);
Table parse_csv(std::string_view text, const Schema& schema, CsvLoadStats* stats = nullptr);
void write_csv(const Table& table, const std::filesystem::path& path);
std::string format_csv(const Table& table);

/// Splits one CSV record (RFC 4180 quoting).
std::vector<std::string> split_csv_record(std::string_view line);
std::string quote_csv_field(std::string_view field);

/// Shortest round-trip decimal.
std::string format_number(double value);
/// 17 significant digits.
std::string format_number17(double value);

}  // namespace luskin
