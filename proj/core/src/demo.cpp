#include "luskin/demo.hpp"

#include <cmath>
#include <random>

#include "luskin/error.hpp"

namespace luskin {

Schema demo_schema() {
  return Schema({{"group", ColumnKind::categorical, ColumnRole::protected_feature},
                 {"educated", ColumnKind::binary, ColumnRole::unprotected},
                 {"skill", ColumnKind::numeric, ColumnRole::unprotected},
                 {"hours", ColumnKind::numeric, ColumnRole::unprotected},
                 {"sector", ColumnKind::categorical, ColumnRole::unprotected},
                 {"label", ColumnKind::binary, ColumnRole::label}});
}

Table make_demo_table(const DemoConfig& config) {
  if (config.rows < 4) throw InvalidInput("demo data needs at least 4 rows");
  if (!(config.bias >= 0.0 && config.bias < 1.0)) throw InvalidInput("demo bias must lie in [0, 1)");
  static const char* sectors[] = {"public", "private", "self"};

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> sector(0, 2);

  const bool paired = config.bias == 0.0;
  std::vector<Row> rows;
  rows.reserve(config.rows);
  while (rows.size() < config.rows) {
    const bool a = paired ? true : unit(rng) < 0.5;
    const bool educated = unit(rng) < 0.45;
    const double skill = std::round(normal(rng) * 1000.0) / 1000.0;
    const double hours = std::round((40.0 + 8.0 * normal(rng)) * 10.0) / 10.0;
    const int s = sector(rng);
    const double z = 1.4 * skill + (educated ? 0.9 : -0.6) + 0.02 * (hours - 40.0) + (s == 2 ? 0.3 : 0.0);
    double p = 1.0 / (1.0 + std::exp(-z));
    if (!paired) p = std::clamp(p + (a ? config.bias / 2 : -config.bias / 2), 0.0, 1.0);
    const bool label = unit(rng) < p;
    Row row{std::string(a ? "A" : "B"), std::string(educated ? "yes" : "no"), skill, hours,
            std::string(sectors[s]), std::string(label ? "1" : "0")};
    rows.push_back(row);
    if (paired && rows.size() < config.rows) {
      row[0] = std::string("B");
      rows.push_back(std::move(row));
    }
  }
  return Table(demo_schema(), std::move(rows));
}

}  // namespace luskin
