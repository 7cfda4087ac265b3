#pragma once

// Result tables: rows are methods, columns are held-out function classes (or
// any other condition) plus an average; cells are mean and std over runs in
// percent, kept at two decimals.

#include <nci/common.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace nci {

struct Cell {
  double mean = 0.0;
  double std = 0.0;
  bool failed() const { return std::isnan(mean); }
};

struct ResultTable {
  std::vector<std::string> columns;  // the last one is "Average"
  std::vector<std::string> methods;
  std::vector<std::vector<Cell>> cells;  // methods x columns

  const Cell& at(const std::string& method, const std::string& column) const;
  bool operator==(const ResultTable& other) const;
};

/// runs[method][condition][run] are accuracies in [0, 1]; a NaN run marks a
/// failed cell. Cells hold mean and unbiased std in percent, rounded to two
/// decimals; the Average column averages the per-condition means of each
/// run.
ResultTable make_table(const std::vector<std::string>& methods, const std::vector<std::string>& conditions,
                       const std::vector<std::vector<std::vector<double>>>& runs);

std::string emit_csv(const ResultTable& t);
ResultTable parse_csv(const std::string& text);
std::string emit_markdown(const ResultTable& t);

double round2(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace nci
