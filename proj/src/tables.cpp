#include <nci/tables.hpp>

#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace nci {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt2(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double parse_number(const std::string& s) {
  if (s == "nan") return kNaN;
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

Cell summarize(const std::vector<double>& runs) {
  Cell c;
  if (runs.empty()) return {kNaN, kNaN};
  for (double r : runs)
    if (std::isnan(r)) return {kNaN, kNaN};
  const double n = static_cast<double>(runs.size());
  const double mean = std::accumulate(runs.begin(), runs.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : runs) ss += (r - mean) * (r - mean);
  c.mean = round2(100.0 * mean);
  c.std = runs.size() > 1 ? round2(100.0 * std::sqrt(ss / (n - 1.0))) : 0.0;
  return c;
}

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

double round2(double v) { return std::isnan(v) ? v : std::round(v * 100.0) / 100.0; }

const Cell& ResultTable::at(const std::string& method, const std::string& column) const {
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (methods[i] != method) continue;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == column) return cells[i][j];
  }
  throw UsageError("ResultTable: no cell " + method + "/" + column);
}

bool ResultTable::operator==(const ResultTable& o) const {
  if (columns != o.columns || methods != o.methods || cells.size() != o.cells.size()) return false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].size() != o.cells[i].size()) return false;
    for (std::size_t j = 0; j < cells[i].size(); ++j) {
      if (!same(cells[i][j].mean, o.cells[i][j].mean) || !same(cells[i][j].std, o.cells[i][j].std)) return false;
    }
  }
  return true;
}

ResultTable make_table(const std::vector<std::string>& methods, const std::vector<std::string>& conditions,
                       const std::vector<std::vector<std::vector<double>>>& runs) {
  if (runs.size() != methods.size()) throw DimensionError("make_table: one run block per method");
  ResultTable t;
  t.methods = methods;
  t.columns = conditions;
  t.columns.emplace_back("Average");
  for (const auto& per_method : runs) {
    if (per_method.size() != conditions.size()) throw DimensionError("make_table: one run list per condition");
    std::vector<Cell> row;
    std::size_t n_runs = per_method.empty() ? 0 : per_method.front().size();
    for (const auto& r : per_method) {
      if (r.size() != n_runs) throw DimensionError("make_table: run counts differ across conditions");
      row.push_back(summarize(r));
    }
    std::vector<double> avg(n_runs, 0.0);
    for (std::size_t k = 0; k < n_runs; ++k) {
      for (const auto& r : per_method) avg[k] += r[k];
      avg[k] /= static_cast<double>(per_method.size());
    }
    row.push_back(summarize(avg));
    t.cells.push_back(std::move(row));
  }
  return t;
}

std::string emit_csv(const ResultTable& t) {
  std::ostringstream out;
  out << "method";
  for (const auto& c : t.columns) out << ',' << c << "_mean," << c << "_std";
  out << '\n';
  for (std::size_t i = 0; i < t.methods.size(); ++i) {
    out << t.methods[i];
    for (const auto& cell : t.cells[i]) out << ',' << fmt2(cell.mean) << ',' << fmt2(cell.std);
    out << '\n';
  }
  return out.str();
}

ResultTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw UsageError("parse_csv: empty input");
  const auto head = split(line, ',');
  if (head.empty() || head[0] != "method" || head.size() % 2 != 1) throw UsageError("parse_csv: bad header");
  ResultTable t;
  for (std::size_t k = 1; k < head.size(); k += 2) {
    const std::string& a = head[k];
    const std::string& b = head[k + 1];
    if (a.size() < 5 || a.substr(a.size() - 5) != "_mean" || b != a.substr(0, a.size() - 5) + "_std") {
      throw UsageError("parse_csv: bad column pair " + a + "/" + b);
    }
    t.columns.push_back(a.substr(0, a.size() - 5));
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != head.size()) throw UsageError("parse_csv: ragged row");
    t.methods.push_back(f[0]);
    std::vector<Cell> row;
    try {
      for (std::size_t k = 1; k < f.size(); k += 2) row.push_back({parse_number(f[k]), parse_number(f[k + 1])});
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("parse_csv: ") + e.what());
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

std::string emit_markdown(const ResultTable& t) {
  std::ostringstream out;
  out << "| Method |";
  for (const auto& c : t.columns) out << ' ' << c << " |";
  out << "\n|---|";
  for (std::size_t j = 0; j < t.columns.size(); ++j) out << "---|";
  out << '\n';
  for (std::size_t i = 0; i < t.methods.size(); ++i) {
    out << "| " << t.methods[i] << " |";
    for (const auto& cell : t.cells[i]) {
      if (cell.failed()) {
        out << " failed |";
      } else {
        out << ' ' << fmt2(cell.mean) << " ± " << fmt2(cell.std) << " |";
      }
    }
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace nci
