#include "moedr/data_table.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "moedr/error.hpp"

namespace moedr {

void DataTable::add_column(Column column) {
  if (has(column.name)) throw SpecError("duplicate column '" + column.name + "'");
  if (!columns_.empty() && column.values.size() != rows_)
    throw ShapeMismatch("column '" + column.name + "' has a different row count");
  rows_ = column.values.size();
  columns_.push_back(std::move(column));
}

void DataTable::add_numeric(std::string name, Eigen::VectorXd values) {
  add_column(Column{std::move(name), std::move(values), {}});
}

void DataTable::add_categorical(std::string name, const std::vector<std::string>& labels) {
  std::vector<std::string> levels(labels);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  Eigen::VectorXd codes(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i)
    codes(static_cast<Eigen::Index>(i)) = static_cast<double>(
        std::lower_bound(levels.begin(), levels.end(), labels[i]) - levels.begin());
  add_column(Column{std::move(name), std::move(codes), std::move(levels)});
}

bool DataTable::has(std::string_view name) const {
  return std::any_of(columns_.begin(), columns_.end(),
                     [&](const Column& c) { return c.name == name; });
}

const Column& DataTable::column(std::string_view name) const {
  for (const auto& c : columns_)
    if (c.name == name) return c;
  throw SpecError("unknown data column '" + std::string(name) + "'");
}

const Eigen::VectorXd& DataTable::numeric(std::string_view name) const {
  const Column& c = column(name);
  if (c.categorical()) throw SpecError("column '" + std::string(name) + "' is not numeric");
  return c.values;
}

DataTable DataTable::subset(std::span<const Eigen::Index> rows) const {
  DataTable out;
  for (const auto& c : columns_) {
    Column sub{c.name, Eigen::VectorXd(static_cast<Eigen::Index>(rows.size())), c.levels};
    for (std::size_t i = 0; i < rows.size(); ++i) sub.values(static_cast<Eigen::Index>(i)) = c.values(rows[i]);
    out.columns_.push_back(std::move(sub));
  }
  out.rows_ = static_cast<Eigen::Index>(rows.size());
  return out;
}

namespace {

std::vector<std::vector<std::string>> parse_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && field.empty()) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (field_started || !field.empty() || !record.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
      }
      record.clear();
      field.clear();
      field_started = false;
    } else {
      field.push_back(ch);
      field_started = true;
    }
  }
  if (quoted) throw SpecError("CSV ends inside a quoted field");
  if (field_started || !field.empty() || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

DataTable DataTable::parse_csv(std::string_view text) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF) text.remove_prefix(3);
  const auto records = parse_records(text);
  if (records.empty()) throw SpecError("CSV has no header row");
  const auto& header = records.front();
  const std::size_t n = records.size() - 1;
  for (std::size_t r = 1; r < records.size(); ++r)
    if (records[r].size() != header.size()) {
      std::ostringstream os;
      os << "CSV row " << r << " has " << records[r].size() << " fields, header has "
         << header.size();
      throw SpecError(os.str());
    }

  DataTable table;
  for (std::size_t c = 0; c < header.size(); ++c) {
    Eigen::VectorXd values(static_cast<Eigen::Index>(n));
    bool numeric = n > 0;
    for (std::size_t r = 0; r < n && numeric; ++r) {
      double v = 0.0;
      numeric = parse_number(records[r + 1][c], v);
      values(static_cast<Eigen::Index>(r)) = v;
    }
    if (numeric || n == 0) {
      table.add_numeric(header[c], std::move(values));
    } else {
      std::vector<std::string> labels(n);
      for (std::size_t r = 0; r < n; ++r) labels[r] = records[r + 1][c];
      table.add_categorical(header[c], labels);
    }
  }
  return table;
}

DataTable DataTable::read_csv(const std::string& path) {
  return parse_csv(read_file(path));
}

std::string DataTable::to_csv() const {
  std::string out;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (c) out += ',';
    out += csv_field(columns_[c].name);
  }
  out += "\r\n";
  for (Eigen::Index i = 0; i < rows_; ++i) {
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (c) out += ',';
      const Column& col = columns_[c];
      if (col.categorical()) {
        out += csv_field(col.levels[static_cast<std::size_t>(col.values(i))]);
      } else {
        out += format_double(col.values(i));
      }
    }
    out += "\r\n";
  }
  return out;
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace moedr
