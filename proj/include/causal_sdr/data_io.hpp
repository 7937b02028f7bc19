#pragma once

#include <map>
#include <string>
#include <vector>

#include "causal_sdr/types.hpp"

namespace causal_sdr {

// One column of an ingested table. Numeric columns carry parsed values with
// NaN marking missing cells; raw always holds the cell text (integer-valued
// numerics render without a decimal point so they can serve as map keys).
struct Column {
  std::string name;
  bool numeric = false;
  std::vector<double> values;
  std::vector<std::string> raw;
};

struct ColumnTable {
  std::vector<Column> columns;
  std::size_t rows = 0;

  const Column* find(const std::string& name) const;
};

struct ColumnSchema {
  std::string treatment_column;
  std::map<std::string, int> treatment_encoding;  // raw value -> 0 or 1
  std::string outcome_column;
  std::vector<std::string> covariates;  // ordered; defines dataset layout
  // categorical column -> observed levels; the first level is the reference
  // and is dropped from the one-hot expansion
  std::map<std::string, std::vector<std::string>> categoricals;

  static ColumnSchema from_json(const std::string& text);
  static ColumnSchema from_json_file(const std::string& path);
  void validate() const;
};

struct LoadResult {
  ObservationalDataset dataset;
  Eigen::Index dropped_rows = 0;  // complete-case deletions
};

// RFC 4180 CSV with a mandatory header row.
ColumnTable read_csv_table(const std::string& path);

// Stata .dta, releases 117 and 118. String variables are carried as
// non-numeric columns; strL variables are rejected.
ColumnTable read_dta(const std::string& path);

LoadResult to_dataset(const ColumnTable& table, const ColumnSchema& schema);
LoadResult read_csv(const std::string& path, const ColumnSchema& schema);

}  // namespace causal_sdr
