#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moedr {

/// Numeric column, or categorical column storing level indices in `values`.
struct Column {
  std::string name;
  Eigen::VectorXd values;
  std::vector<std::string> levels;  ///< empty for numeric columns

  bool categorical() const { return !levels.empty(); }
};

/// Column-oriented table of named covariates and responses.
class DataTable {
 public:
  DataTable() = default;

  void add_numeric(std::string name, Eigen::VectorXd values);
  /// Levels are the sorted distinct labels; the first level is the reference.
  void add_categorical(std::string name, const std::vector<std::string>& labels);
  void add_column(Column column);

  Eigen::Index rows() const { return rows_; }
  bool has(std::string_view name) const;
  const Column& column(std::string_view name) const;
  const Eigen::VectorXd& numeric(std::string_view name) const;
  const std::vector<Column>& columns() const { return columns_; }

  DataTable subset(std::span<const Eigen::Index> rows) const;

  /// RFC-4180 CSV with a mandatory header row. Columns whose every field
  /// parses as a number are numeric, all others categorical.
  static DataTable read_csv(const std::string& path);
  static DataTable parse_csv(std::string_view text);
  std::string to_csv() const;

 private:
  std::vector<Column> columns_;
  Eigen::Index rows_ = 0;
};

/// Shortest decimal text that is exact at 17 significant digits.
std::string format_double(double value);

/// Quotes a CSV field when it contains a delimiter, quote or line break.
std::string csv_field(std::string_view text);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

}  // namespace moedr
