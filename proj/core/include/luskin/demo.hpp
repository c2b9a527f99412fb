#pragma once

#include <cstddef>
#include <cstdint>

#include "luskin/tabular.hpp"

namespace luskin {

/// Settings for the bundled synthetic-bias dataset.
///
/// Columns: group (protected, "A"/"B"), educated (binary, "no"/"yes"),
/// skill and hours (numeric), sector (categorical) and label. Group A gets a
/// positive label more often by `bias` in probability.
struct DemoConfig {
  std::size_t rows = 2000;
  double bias = 0.2;
  std::uint64_t seed = 0;
};

Schema demo_schema();

/// With bias == 0 every generated record is emitted once per group, so both
/// groups have identical label ratios under any filter on other columns.
Table make_demo_table(const DemoConfig& config);

}  // namespace luskin
