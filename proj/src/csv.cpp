#include "flatmin/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flatmin {
namespace {

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  // Try the short form first and fall back to full precision when it does
  // not round-trip.
  std::snprintf(buf, sizeof buf, "%.15g", x);
  if (std::strtod(buf, nullptr) != x) std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw std::invalid_argument("CsvTable: empty header");
}

CsvTable::Row& CsvTable::Row::add(const std::string& s) {
  cells_.push_back(quote(s));
  return *this;
}

CsvTable::Row& CsvTable::Row::add(double x) {
  cells_.push_back(format_double(x));
  return *this;
}

CsvTable::Row& CsvTable::Row::add(long long x) {
  cells_.push_back(std::to_string(x));
  return *this;
}

CsvTable::Row& CsvTable::Row::add(std::uint64_t x) {
  cells_.push_back(std::to_string(x));
  return *this;
}

void CsvTable::push(Row row) {
  if (row.cells_.size() != header_.size())
    throw std::invalid_argument("CsvTable: row has " + std::to_string(row.cells_.size()) +
                                " cells, header has " + std::to_string(header_.size()));
  rows_.push_back(std::move(row.cells_));
}

void CsvTable::write(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& cells, bool quote_cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << (quote_cells ? quote(cells[i]) : cells[i]);
    }
    out << '\n';
  };
  line(header_, true);
  for (const auto& r : rows_) line(r, false);
}

std::string CsvTable::str() const {
  std::ostringstream os;
  write(os);
  return os.str();
}

void CsvTable::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  write(f);
  if (!f) throw std::runtime_error("failed writing " + path);
}

}  // namespace flatmin
